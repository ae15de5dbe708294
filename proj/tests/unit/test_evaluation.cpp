#include "catch_amalgamated.hpp"
#include "helpers.hpp"

#include "stockcast/errors.hpp"
#include "stockcast/evaluation.hpp"
#include "stockcast/io.hpp"

#include <cmath>
#include <random>

using namespace stockcast;
using namespace stockcast::eval;
using Catch::Matchers::ContainsSubstring;

namespace {

ModelSpec light(ModelFamily f) {
    ModelSpec s;
    s.family = f;
    s.lookback = 10;
    s.lstm.hidden = 4;
    s.lstm.epochs = 3;
    s.additive.seasonalities = {{5.0, 2}};
    s.additive.n_changepoints = 5;
    s.interval.n_sims = 100;
    s.boost.n_trees = 10;
    s.order = sarima::Order{1, 1, 1, 0, 0, 0, 1};
    return s;
}

ForecastRun run_of(std::string model, std::string symbol, std::vector<double> p, std::vector<double> a) {
    ForecastRun r;
    r.model = std::move(model);
    r.symbol = std::move(symbol);
    r.predicted = std::move(p);
    r.actual = std::move(a);
    return r;
}

}  // namespace

TEST_CASE("rmse examples", "[evaluation]") {
    const std::vector<double> x{1, 2, 3};
    CHECK(rmse(x, x) == 0.0);
    const std::vector<double> a{2, 2, 4};
    CHECK(std::abs(rmse(x, a) - std::sqrt(2.0 / 3.0)) < 1e-12);
    const std::vector<double> shifted{3.5, 4.5, 5.5};
    CHECK(rmse(shifted, x) == Catch::Approx(2.5));
    CHECK_THROWS_AS(rmse(std::vector<double>{}, std::vector<double>{}), DataError);
    CHECK_THROWS_AS(rmse(x, std::vector<double>{1, 2}), DataError);
}

TEST_CASE("rmse properties", "[evaluation][property]") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> z(0.0, 10.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> p(1 + rng() % 20), q(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = z(rng), q[i] = z(rng);
        CHECK(rmse(p, q) == rmse(q, p));
        CHECK(rmse(p, p) == 0.0);
        const double c = z(rng);
        std::vector<double> pc = p;
        for (auto& v : pc) v += c;
        CHECK(rmse(pc, p) == Catch::Approx(std::abs(c)).epsilon(1e-12).margin(1e-12));
    }
}

TEST_CASE("family names round trip", "[evaluation]") {
    for (const auto f : {ModelFamily::Persistence, ModelFamily::LstmUnivariate, ModelFamily::LstmMultivariate,
                         ModelFamily::Sarima, ModelFamily::AdditiveBoosted}) {
        CHECK(parse_family(family_name(f)) == f);
    }
    CHECK(compared_families().size() == 4);
    CHECK_THROWS_AS(parse_family("prophet"), ConfigError);
}

TEST_CASE("persistence on a constant series is exact", "[evaluation]") {
    OhlcvSeries s = testutil::random_series(100, 1, "FLAT");
    for (auto& b : s.bars) b.open = b.high = b.low = b.close = 42.0;
    const auto runs = run_backtest(light(ModelFamily::Persistence), s, rolling_splits(100, 5, 10));
    REQUIRE(runs.size() == 5);
    for (const auto& r : runs) {
        CHECK(r.ok());
        CHECK(r.rmse() == 0.0);
        CHECK(r.predicted.size() == 10);
    }
    CHECK(runs[0].fold == 1);
    CHECK(runs[4].fold == 5);
}

TEST_CASE("backtests never see the test range", "[evaluation][property]") {
    const auto series = testutil::random_series(160, 4, "LEAK");
    const auto folds = rolling_splits(series.size(), 3, 8);
    for (const auto f : {ModelFamily::Persistence, ModelFamily::LstmUnivariate, ModelFamily::LstmMultivariate,
                         ModelFamily::Sarima, ModelFamily::AdditiveBoosted}) {
        const auto spec = light(f);
        const auto clean = run_backtest(spec, series, folds);
        for (std::size_t k = 0; k < folds.size(); ++k) {
            REQUIRE(clean[k].ok());
            OhlcvSeries dirty = series;
            for (std::size_t i = folds[k].test.begin; i < dirty.size(); ++i) {
                auto& b = dirty.bars[i];
                b.open *= 3.0, b.high *= 3.0, b.low *= 3.0, b.close *= 3.0;
                b.volume += 1000000;
            }
            const auto probe = run_backtest(spec, dirty, folds);
            CHECK(probe[k].predicted == clean[k].predicted);
            CHECK(probe[k].lower == clean[k].lower);
            CHECK(probe[k].actual != clean[k].actual);
        }
    }
}

TEST_CASE("backtests are deterministic", "[evaluation]") {
    const auto series = testutil::random_series(150, 5);
    const auto folds = rolling_splits(series.size(), 2, 10);
    for (const auto f : compared_families()) {
        const auto a = run_backtest(light(f), series, folds);
        const auto b = run_backtest(light(f), series, folds);
        for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k].predicted == b[k].predicted);
    }
}

TEST_CASE("fold failures are recorded, not thrown", "[evaluation]") {
    const auto series = testutil::random_series(40, 2);
    auto spec = light(ModelFamily::Sarima);
    spec.order = sarima::Order{1, 1, 1, 1, 1, 1, 15};
    const auto runs = run_backtest(spec, series, rolling_splits(series.size(), 2, 5));
    REQUIRE(runs.size() == 2);
    CHECK(!runs[0].ok());
    CHECK(std::isnan(runs[0].rmse()));
    const auto report = build_report(runs, {});
    CHECK(std::isnan(report.cells[0].mean));
    CHECK_THAT(report_json(report), ContainsSubstring("null"));
}

TEST_CASE("the additive hybrid produces interval bands", "[evaluation]") {
    const auto series = testutil::random_series(200, 6);
    const auto f = forecast_from_train(light(ModelFamily::AdditiveBoosted), series, 12);
    REQUIRE(f.mean.size() == 12);
    REQUIRE(f.lower.size() == 12);
    for (std::size_t h = 0; h < 12; ++h) CHECK(f.lower[h] <= f.upper[h]);
}

TEST_CASE("lstm_frame layouts", "[evaluation]") {
    const auto s = testutil::random_series(30, 1);
    const std::vector<double> none;
    const auto uni = lstm_frame(light(ModelFamily::LstmUnivariate), s, none);
    CHECK(uni.raw.cols() == 1);
    CHECK(uni.inputs == std::vector<std::size_t>{0});
    const auto multi = lstm_frame(light(ModelFamily::LstmMultivariate), s, none);
    CHECK(multi.raw.cols() == 5);
    CHECK(multi.inputs.size() == 4);
    CHECK(std::find(multi.inputs.begin(), multi.inputs.end(), multi.target_col) == multi.inputs.end());

    auto with_sent = light(ModelFamily::LstmMultivariate);
    with_sent.lstm_use_sentiment = true;
    std::vector<double> sent(30, 0.0);
    CHECK(lstm_frame(with_sent, s, sent).raw.cols() == 5);  // constant channel dropped
    sent[3] = 0.5;
    const auto ws = lstm_frame(with_sent, s, sent);
    CHECK(ws.raw.cols() == 6);
    CHECK(ws.inputs.size() == 5);
}

TEST_CASE("build_report grouping and means", "[evaluation]") {
    std::vector<ForecastRun> runs;
    runs.push_back(run_of("sarima", "A", {3}, {0}));
    runs.push_back(run_of("sarima", "A", {5}, {0}));
    runs.push_back(run_of("persistence", "A", {1}, {0}));
    runs.push_back(run_of("persistence", "A", {1}, {0}));
    runs.push_back(run_of("lstm_univariate", "A", {2}, {0}));
    const auto r = build_report(runs, {"abc", 7, {}});
    CHECK(r.models == std::vector<std::string>{"sarima", "lstm_univariate"});
    CHECK(r.cell("sarima", "A")->mean == 4.0);
    CHECK(r.cell("lstm_univariate", "A")->mean == 2.0);
    REQUIRE(r.baseline.size() == 1);
    CHECK(r.baseline[0].mean == 1.0);
    CHECK(r.cell("sarima", "B") == nullptr);
    REQUIRE(r.warnings.size() == 1);
    CHECK_THAT(r.warnings[0], ContainsSubstring("lstm_univariate"));
    CHECK_THROWS_AS(build_report(std::vector<ForecastRun>{}, {}), DataError);
    CHECK(report_csv(r) == "model,A\nsarima,4\nlstm_univariate,2\n");
    CHECK(baseline_csv(r) == "model,A\npersistence,1\n");
}

TEST_CASE("report grid has one row per model and one column per symbol", "[evaluation]") {
    std::vector<ForecastRun> runs;
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    for (const auto f : compared_families()) {
        for (const char* sym : {"S1", "S2", "S3", "S4"}) {
            for (int k = 0; k < 5; ++k) runs.push_back(run_of(std::string(family_name(f)), sym, {u(rng), u(rng)}, {0, 0}));
        }
    }
    const auto r = build_report(runs, {});
    CHECK(r.models.size() == 4);
    CHECK(r.symbols.size() == 4);
    CHECK(r.cells.size() == 16);
    for (const auto& c : r.cells) {
        double sum = 0.0;
        for (double v : c.fold_rmse) sum += v;
        CHECK(std::abs(c.mean - sum / 5.0) <= 1e-12);
    }
    const auto back = parse_report_json(report_json(r));
    CHECK(report_json(back) == report_json(r));
    CHECK(report_csv(back) == report_csv(r));
}

TEST_CASE("fnv1a matches published vectors", "[evaluation]") {
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
    CHECK(fnv1a_hex("foobar") == "85944171f73967e8");
}
