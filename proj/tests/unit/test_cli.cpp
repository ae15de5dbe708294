#include "catch_amalgamated.hpp"
#include "helpers.hpp"

#include "stockcast/io.hpp"
#include "stockcast/sentiment_hmm.hpp"

#include <httplib.h>

#include <cstdlib>
#include <sys/wait.h>
#include <thread>

namespace fs = std::filesystem;
using namespace stockcast;
using Catch::Matchers::ContainsSubstring;

namespace {

struct Result {
    int code = -1;
    std::string out;
    std::string err;
};

Result run(const fs::path& dir, const std::string& args) {
    const auto out = dir / "stdout.txt";
    const auto err = dir / "stderr.txt";
    const std::string cmd =
        std::string("\"") + STOCKCAST_CLI + "\" " + args + " > \"" + out.string() + "\" 2> \"" + err.string() + "\"";
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = io::read_file(out);
    r.err = io::read_file(err);
    return r;
}

std::size_t lines(const std::string& text) {
    std::size_t n = 0;
    for (char c : text) n += c == '\n';
    return n;
}

std::size_t count_files(const fs::path& dir, const std::string& ext) {
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(dir)) n += e.path().extension() == ext;
    return n;
}

const std::string kLight =
    "data.symbols=SAMPLE\n"
    "window.lookback=10\n"
    "window.horizon=10\n"
    "lstm.hidden=4\n"
    "lstm.epochs=3\n"
    "additive.seasonalities=5:2\n"
    "additive.changepoints=5\n"
    "additive.n_sims=100\n"
    "boost.n_trees=10\n"
    "sarima.order=1,1,1\n"
    "sarima.seasonal=0,0,0,1\n";

fs::path setup(const std::string& name, const std::string& extra = "") {
    const auto dir = testutil::scratch_dir("cli_" + name);
    io::write_file_atomic(dir / "run.conf", kLight + "out=" + (dir / "out").string() + "\n" + extra);
    return dir;
}

std::string ingest_args(const fs::path& dir) {
    return "--config \"" + (dir / "run.conf").string() + "\" ingest --csv \"" +
           (testutil::data_dir() / "sample.csv").string() + "\" --symbol SAMPLE";
}

std::string with_config(const fs::path& dir, const std::string& cmd) {
    return "--config \"" + (dir / "run.conf").string() + "\" " + cmd;
}

}  // namespace

TEST_CASE("ingest stores a validated series", "[cli]") {
    const auto dir = setup("ingest");
    const auto r = run(dir, ingest_args(dir));
    REQUIRE(r.code == 0);
    CHECK_THAT(r.out, ContainsSubstring("SAMPLE: 500 bars, 2022-01-03 to"));
    const auto stored = io::read_file(dir / "out" / "series" / "SAMPLE.csv");
    CHECK(lines(stored) == 501);
    CHECK(fs::exists(dir / "out" / "resolved_config.txt"));

    std::string bad = io::read_file(testutil::data_dir() / "sample.csv");
    const auto second = bad.find('\n', bad.find('\n') + 1);
    bad.insert(second + 1, "2022-01-05,1.0,oops,1.0,1.0,10\n");
    io::write_file_atomic(dir / "bad.csv", bad);
    const auto b = run(dir, with_config(dir, "ingest --csv \"" + (dir / "bad.csv").string() + "\""));
    CHECK(b.code == 3);
    CHECK_THAT(b.err, ContainsSubstring("line 3"));
}

TEST_CASE("ingest --from-url matches the local file", "[cli]") {
    const auto sample = io::read_file(testutil::data_dir() / "sample.csv");
    httplib::Server server;
    server.Get("/prices/SAMPLE.csv", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content(sample, "text/csv");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    const auto local = setup("url_local");
    REQUIRE(run(local, ingest_args(local)).code == 0);

    const auto remote = setup("url_remote", "data.url=http://127.0.0.1:" + std::to_string(port) + "/prices/{symbol}.csv\n");
    const auto r = run(remote, with_config(remote, "ingest --from-url"));
    CHECK(r.code == 0);
    CHECK(io::read_file(remote / "out" / "series" / "SAMPLE.csv") ==
          io::read_file(local / "out" / "series" / "SAMPLE.csv"));

    const auto missing = setup("url_missing", "data.symbols=NOPE\ndata.url=http://127.0.0.1:" +
                                                  std::to_string(port) + "/prices/{symbol}.csv\n");
    const auto m = run(missing, with_config(missing, "ingest --from-url"));
    CHECK(m.code == 3);
    CHECK_THAT(m.err, ContainsSubstring("fetch error"));
    CHECK_THAT(m.err, ContainsSubstring("404"));

    server.stop();
    th.join();
}

TEST_CASE("backtest writes report and plots reproducibly", "[cli]") {
    const auto dir = setup("backtest");
    REQUIRE(run(dir, ingest_args(dir)).code == 0);
    const auto r = run(dir, with_config(dir, "backtest"));
    REQUIRE(r.code == 0);
    const auto out = dir / "out";
    const auto csv = io::read_file(out / "report.csv");
    CHECK(lines(csv) == 5);
    CHECK_THAT(csv, ContainsSubstring("model,SAMPLE\n"));
    CHECK(io::read_file(out / "baseline.csv").rfind("model,SAMPLE\npersistence,", 0) == 0);
    CHECK(count_files(out / "plots", ".svg") == 20);
    CHECK(count_files(out / "plots", ".csv") == 20);
    CHECK(fs::exists(out / "plots" / "sample_sarima_fold5.svg"));
    CHECK_THAT(r.out, ContainsSubstring("persistence"));

    const auto json = io::read_file(out / "report.json");
    REQUIRE(run(dir, with_config(dir, "backtest")).code == 0);
    CHECK(io::read_file(out / "report.json") == json);

    const auto rep = run(dir, with_config(dir, "report"));
    CHECK(rep.code == 0);
    CHECK_THAT(rep.out, ContainsSubstring("seed 42"));
    CHECK_THAT(rep.out, ContainsSubstring("SAMPLE: 500 bars"));

    const auto seeded = run(dir, with_config(dir, "--seed 7 backtest"));
    CHECK(seeded.code == 0);
    CHECK_THAT(io::read_file(out / "report.json"), ContainsSubstring("\"seed\": 7"));
}

TEST_CASE("train then forecast writes one file per model", "[cli]") {
    const auto dir = setup("forecast");
    REQUIRE(run(dir, ingest_args(dir)).code == 0);
    const auto t = run(dir, with_config(dir, "train"));
    REQUIRE(t.code == 0);
    CHECK_THAT(t.out, ContainsSubstring("SAMPLE: trained sarima on 500 bars"));
    const auto f = run(dir, with_config(dir, "forecast"));
    REQUIRE(f.code == 0);
    for (const char* m : {"lstm_univariate", "lstm_multivariate", "sarima", "additive_boosted"}) {
        const auto text = io::read_file(dir / "out" / "forecasts" / ("SAMPLE_" + std::string(m) + ".csv"));
        CHECK(lines(text) == 11);
        CHECK(text.rfind("date,predicted,lower,upper\n", 0) == 0);
    }
}

TEST_CASE("tune logs stepwise and grid evaluations", "[cli]") {
    const auto dir = setup("tune", "models=additive_boosted\nfolds.count=2\n"
                                   "tune.space.boost.n_trees=5,*10,15\n"
                                   "tune.space.boost.learning_rate=0.05,*0.1,0.2,0.3\n");
    REQUIRE(run(dir, ingest_args(dir)).code == 0);
    const auto s = run(dir, with_config(dir, "tune"));
    REQUIRE(s.code == 0);
    CHECK_THAT(s.out, ContainsSubstring("stepwise search: 7 evaluations, 0 failed"));
    CHECK(lines(io::read_file(dir / "out" / "tune_log.csv")) == 8);

    const auto best_line = s.out.substr(s.out.find("best objective ") + 15);
    const double best = std::stod(best_line);

    const auto best_dir = testutil::scratch_dir("cli_tune_best");
    auto best_conf = io::read_file(dir / "out" / "tune_best.conf");
    best_conf = best_conf.substr(0, best_conf.find("out=")) +
                best_conf.substr(best_conf.find('\n', best_conf.find("out=")) + 1);
    io::write_file_atomic(best_dir / "run.conf", best_conf + "out=" + (best_dir / "out").string() + "\n");
    REQUIRE(run(best_dir, ingest_args(best_dir)).code == 0);
    REQUIRE(run(best_dir, with_config(best_dir, "backtest")).code == 0);
    const auto csv = io::read_file(best_dir / "out" / "report.csv");
    const double again = std::stod(csv.substr(csv.find("additive_boosted,") + 17));
    CHECK(again == Catch::Approx(best).epsilon(1e-9));

    const auto g = run(dir, with_config(dir, "tune --grid"));
    REQUIRE(g.code == 0);
    CHECK_THAT(g.out, ContainsSubstring("grid search: 12 evaluations"));
    CHECK(lines(io::read_file(dir / "out" / "tune_log.csv")) == 13);
    const double grid_best = std::stod(g.out.substr(g.out.find("best objective ") + 15));
    CHECK(grid_best <= best + 1e-12);
}

TEST_CASE("sentiment scores documents like the library", "[cli]") {
    const auto data = testutil::data_dir();
    const std::string sconf = "sentiment.lexicon=" + (data / "lexicon.tsv").string() + "\n" +
                              "sentiment.corpus=" + (data / "corpus.txt").string() + "\n";
    const auto dir = setup("sentiment", sconf + "sentiment.documents=" + (data / "documents.tsv").string() + "\n");
    const auto r = run(dir, with_config(dir, "sentiment"));
    REQUIRE(r.code == 0);
    const auto scores = io::read_file(dir / "out" / "sentiment.csv");
    CHECK(lines(scores) == 6);
    CHECK(fs::exists(dir / "out" / "hmm_model.txt"));
    CHECK(fs::exists(dir / "out" / "segments.tsv"));

    const auto lexicon = hmm::parse_lexicon(io::read_file(data / "lexicon.tsv"));
    const std::vector<std::string> labels{"positive", "negative", "neutral"};
    const auto model = hmm::supervised_estimate(
        hmm::parse_labeled_corpus(io::read_file(data / "corpus.txt"), lexicon, labels), labels, lexicon.vocabulary);
    const auto docs = hmm::parse_documents(io::read_file(data / "documents.tsv"), lexicon);
    CHECK(scores == hmm::serialize_scores(hmm::score_documents(model, docs.records)));
    CHECK(io::read_file(dir / "out" / "hmm_model.txt") == hmm::to_text(model));

    const auto empty = setup("sentiment_empty", sconf + "sentiment.documents=" + (dir / "none.tsv").string() + "\n");
    io::write_file_atomic(dir / "none.tsv", "");
    const auto e = run(empty, with_config(empty, "sentiment"));
    CHECK(e.code == 0);
    CHECK(lines(io::read_file(empty / "out" / "sentiment.csv")) == 1);
    CHECK_THAT(e.err, ContainsSubstring("no documents to score"));
}

TEST_CASE("errors map to exit codes", "[cli]") {
    const auto dir = setup("errors");
    io::write_file_atomic(dir / "typo.conf", "lstm.hiden=3\n");
    const auto c = run(dir, "--config \"" + (dir / "typo.conf").string() + "\" backtest");
    CHECK(c.code == 2);
    CHECK_THAT(c.err, ContainsSubstring("config error"));
    CHECK_THAT(c.err, ContainsSubstring("line 1"));

    const auto d = run(dir, with_config(dir, "backtest"));
    CHECK(d.code == 3);
    CHECK_THAT(d.err, ContainsSubstring("run `stockcast ingest` first"));

    CHECK(run(dir, "").code == 2);
    CHECK(run(dir, "frobnicate").code == 2);
    CHECK(run(dir, "--help").code == 0);
}
