#include "stockcast/config.hpp"
#include "stockcast/errors.hpp"
#include "stockcast/evaluation.hpp"
#include "stockcast/io.hpp"
#include "stockcast/plot.hpp"
#include "stockcast/stepwise_tuner.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace stockcast;

namespace {

enum Exit { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kModel = 4 };

struct Globals {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
};

struct Context {
    config::RunConfig cfg;
    fs::path out;
};

Context load_context(const Globals& g) {
    Context ctx;
    if (!g.config_path.empty()) ctx.cfg = config::RunConfig::parse(io::read_file(g.config_path));
    if (g.seed) ctx.cfg.set("seed", std::to_string(*g.seed));
    if (!g.out.empty()) ctx.cfg.set("out", g.out);
    ctx.out = ctx.cfg.get("out");
    io::write_file_atomic(ctx.out / "resolved_config.txt", ctx.cfg.resolved());
    return ctx;
}

std::vector<std::string> symbols(const Context& ctx) {
    auto s = ctx.cfg.get_list("data.symbols");
    if (s.empty()) throw ConfigError("data.symbols is empty");
    return s;
}

OhlcvSeries load_series(const Context& ctx, const std::string& symbol) {
    const fs::path path = ctx.out / "series" / (symbol + ".csv");
    if (!fs::exists(path)) throw DataError("no ingested series for " + symbol + " (run `stockcast ingest` first)");
    auto series = parse_csv(io::read_file(path), symbol);
    validate(series);
    return series;
}

std::optional<hmm::SentimentSeries> load_sentiment(const Context& ctx) {
    const auto path = ctx.cfg.get("sentiment.file");
    if (path.empty()) return std::nullopt;
    return hmm::parse_scores(io::read_file(path));
}

std::vector<double> aligned(const Context& ctx, const std::optional<hmm::SentimentSeries>& s, const OhlcvSeries& series) {
    if (!s) return {};
    const auto dates = series.dates();
    return hmm::align_sentiment(dates, *s, static_cast<int>(ctx.cfg.get_size("sentiment.lookback_days")));
}

std::size_t horizon(const Context& ctx) {
    const auto h = ctx.cfg.get_size("window.horizon");
    if (h == 0) throw ConfigError("window.horizon must be positive");
    return h;
}

BacktestFolds folds_for(const Context& ctx, std::size_t length) {
    std::size_t test_len = ctx.cfg.get_size("folds.test_len");
    if (test_len == 0) test_len = horizon(ctx);
    return rolling_splits(length, ctx.cfg.get_size("folds.count"), test_len);
}

std::string lowercase(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

int cmd_ingest(const Globals& g, const std::string& csv, const std::string& symbol, bool from_url) {
    auto ctx = load_context(g);
    std::vector<std::pair<std::string, std::string>> inputs;  // symbol, text
    if (!csv.empty()) {
        const std::string sym = symbol.empty() ? fs::path(csv).stem().string() : symbol;
        inputs.emplace_back(sym, io::read_file(csv));
    } else {
        for (const auto& sym : symbols(ctx)) {
            if (from_url) {
                const auto url = ctx.cfg.get("data.url");
                if (url.empty()) throw ConfigError("--from-url needs data.url");
                inputs.emplace_back(sym, fetch_remote({url, sym, ctx.cfg.get("data.start"), ctx.cfg.get("data.end")}));
            } else {
                inputs.emplace_back(sym, io::read_file(fs::path(ctx.cfg.get("data.dir")) / (sym + ".csv")));
            }
        }
    }
    for (const auto& [sym, text] : inputs) {
        OhlcvSeries series;
        try {
            series = parse_csv(text, sym);
            validate(series);
        } catch (const DataError& e) {
            throw DataError(sym + ": " + e.what());
        }
        io::write_file_atomic(ctx.out / "series" / (sym + ".csv"), serialize_csv(series));
        std::cout << sym << ": " << series.size() << " bars, " << format_date(series.bars.front().date) << " to "
                  << format_date(series.bars.back().date) << "\n";
    }
    return kOk;
}

int cmd_sentiment(const Globals& g) {
    auto ctx = load_context(g);
    const auto lexicon_path = ctx.cfg.get("sentiment.lexicon");
    if (lexicon_path.empty()) throw ConfigError("sentiment.lexicon is required");
    const auto docs_path = ctx.cfg.get("sentiment.documents");
    if (docs_path.empty()) throw ConfigError("sentiment.documents is required");
    const auto lexicon = hmm::parse_lexicon(io::read_file(lexicon_path));
    const auto labels = ctx.cfg.get_list("sentiment.labels");

    hmm::HmmModel model;
    if (!ctx.cfg.get("sentiment.model").empty()) {
        model = hmm::from_text(io::read_file(ctx.cfg.get("sentiment.model")));
    } else if (!ctx.cfg.get("sentiment.corpus").empty()) {
        const auto corpus = hmm::parse_labeled_corpus(io::read_file(ctx.cfg.get("sentiment.corpus")), lexicon, labels);
        model = hmm::supervised_estimate(corpus, labels, lexicon.vocabulary);
        io::write_file_atomic(ctx.out / "hmm_model.txt", hmm::to_text(model));
    } else {
        throw ConfigError("either sentiment.model or sentiment.corpus is required");
    }
    model.validate();
    if (model.vocabulary() != lexicon.vocabulary) throw ConfigError("model vocabulary does not match the lexicon");

    const auto parsed = hmm::parse_documents(io::read_file(docs_path), lexicon);
    for (const auto line : parsed.empty_lines) std::cerr << "warning: document on line " << line << " has no tokens\n";
    if (parsed.records.empty()) std::cerr << "warning: no documents to score\n";

    std::vector<std::size_t> failed;
    const auto scores = hmm::score_documents(model, parsed.records, &failed);
    const auto min_run = ctx.cfg.get_size("sentiment.min_run");
    std::string segments = "date\tsource\tstart\tend\tstate\n";
    for (std::size_t i = 0; i < parsed.records.size(); ++i) {
        if (std::find(failed.begin(), failed.end(), i) != failed.end()) continue;
        const auto& doc = parsed.records[i];
        const auto path = hmm::viterbi(model, doc.tokens);
        for (const auto& seg : hmm::extract_segments(path.states, min_run)) {
            segments += format_date(doc.date) + "\t" + doc.source + "\t" + std::to_string(seg.start) + "\t" +
                        std::to_string(seg.end) + "\t" + model.labels[seg.state] + "\n";
        }
    }
    io::write_file_atomic(ctx.out / "sentiment.csv", hmm::serialize_scores(scores));
    io::write_file_atomic(ctx.out / "segments.tsv", segments);
    std::cout << "scored " << parsed.records.size() - failed.size() << " documents over " << scores.size()
              << " dates\n";
    if (!failed.empty()) {
        for (const auto i : failed) {
            std::cerr << "error: document " << i + 1 << " dated " << format_date(parsed.records[i].date)
                      << " has zero probability under the model\n";
        }
        return kData;
    }
    return kOk;
}

fs::path model_path(const Context& ctx, const std::string& symbol, eval::ModelFamily f, const std::string& ext) {
    return ctx.out / "models" / (symbol + "_" + std::string(eval::family_name(f)) + ext);
}

int cmd_train(const Globals& g) {
    auto ctx = load_context(g);
    const auto sentiment = load_sentiment(ctx);
    for (const auto& sym : symbols(ctx)) {
        const auto series = load_series(ctx, sym);
        const auto s = aligned(ctx, sentiment, series);
        for (const auto f : ctx.cfg.models()) {
            const auto spec = ctx.cfg.model_spec(f);
            switch (f) {
                case eval::ModelFamily::Persistence:
                    continue;
                case eval::ModelFamily::LstmUnivariate:
                case eval::ModelFamily::LstmMultivariate: {
                    const auto frame = eval::lstm_frame(spec, series, s);
                    const auto m = lstm::fit_model(frame.raw, frame.inputs, frame.target_col, spec.lookback,
                                                   horizon(ctx), spec.lstm);
                    const auto path = model_path(ctx, sym, f, ".bin");
                    fs::create_directories(path.parent_path());
                    lstm::save(m, path);
                    break;
                }
                case eval::ModelFamily::Sarima: {
                    const auto closes = series.closes();
                    const auto m = sarima::fit(closes, spec.order, spec.sarima);
                    for (const auto& w : m.warnings) std::cerr << "warning: " << sym << " sarima: " << w << "\n";
                    io::write_file_atomic(model_path(ctx, sym, f, ".txt"), sarima::to_text(m));
                    break;
                }
                case eval::ModelFamily::AdditiveBoosted: {
                    const auto m = eval::fit_hybrid(spec, series, s);
                    for (const auto& w : m.warnings) std::cerr << "warning: " << sym << " additive: " << w << "\n";
                    io::write_file_atomic(model_path(ctx, sym, f, ".additive.txt"), additive::to_text(m.additive));
                    io::write_file_atomic(model_path(ctx, sym, f, ".booster.txt"), gbt::to_text(m.booster));
                    break;
                }
            }
            std::cout << sym << ": trained " << eval::family_name(f) << " on " << series.size() << " bars\n";
        }
    }
    return kOk;
}

int cmd_forecast(const Globals& g) {
    auto ctx = load_context(g);
    const auto sentiment = load_sentiment(ctx);
    const auto h = horizon(ctx);
    for (const auto& sym : symbols(ctx)) {
        const auto series = load_series(ctx, sym);
        const auto s = aligned(ctx, sentiment, series);
        for (const auto f : ctx.cfg.models()) {
            const auto spec = ctx.cfg.model_spec(f);
            eval::FoldForecast fc;
            switch (f) {
                case eval::ModelFamily::Persistence:
                    fc.mean.assign(h, series.bars.back().close);
                    break;
                case eval::ModelFamily::LstmUnivariate:
                case eval::ModelFamily::LstmMultivariate: {
                    const auto m = lstm::load(model_path(ctx, sym, f, ".bin"));
                    const auto frame = eval::lstm_frame(spec, series, s);
                    if (static_cast<std::size_t>(frame.raw.cols()) != m.scale.features()) {
                        throw ModelError(sym + ": saved LSTM expects " + std::to_string(m.scale.features()) +
                                         " feature columns; configuration gives " + std::to_string(frame.raw.cols()));
                    }
                    fc.mean = lstm::forecast(m, frame.raw);
                    break;
                }
                case eval::ModelFamily::Sarima: {
                    const auto m = sarima::from_text(io::read_file(model_path(ctx, sym, f, ".txt")));
                    if (m.n_obs != series.size()) throw ModelError(sym + ": SARIMA model was trained on other data");
                    fc.mean = sarima::forecast(m, h);
                    break;
                }
                case eval::ModelFamily::AdditiveBoosted: {
                    eval::HybridModel m;
                    m.additive = additive::from_text(io::read_file(model_path(ctx, sym, f, ".additive.txt")));
                    m.booster = gbt::from_text(io::read_file(model_path(ctx, sym, f, ".booster.txt")));
                    fc = eval::forecast_hybrid(spec, m, series, h, s);
                    break;
                }
            }
            const auto dates = next_trading_dates(series.bars.back().date, fc.mean.size());
            std::string out = "date,predicted,lower,upper\n";
            for (std::size_t i = 0; i < fc.mean.size(); ++i) {
                out += format_date(dates[i]) + "," + io::format_double(fc.mean[i]) + ",";
                if (!fc.lower.empty()) out += io::format_double(fc.lower[i]) + "," + io::format_double(fc.upper[i]);
                else out += ",";
                out += "\n";
            }
            io::write_file_atomic(ctx.out / "forecasts" / (sym + "_" + std::string(eval::family_name(f)) + ".csv"), out);
            std::cout << sym << ": " << eval::family_name(f) << " forecast of " << fc.mean.size() << " steps\n";
        }
    }
    return kOk;
}

std::string cell_text(double v) {
    if (!std::isfinite(v)) return "failed";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

void print_report(const eval::ComparisonReport& r) {
    std::printf("%-20s", "model");
    for (const auto& s : r.symbols) std::printf(" %12s", s.c_str());
    std::printf("\n");
    const auto row = [&](const std::string& m) {
        std::printf("%-20s", m.c_str());
        for (const auto& s : r.symbols) {
            const auto* c = r.cell(m, s);
            if (c == nullptr) {
                for (const auto& b : r.baseline) {
                    if (b.model == m && b.symbol == s) c = &b;
                }
            }
            std::printf(" %12s", c ? cell_text(c->mean).c_str() : "-");
        }
        std::printf("\n");
    };
    for (const auto& m : r.models) row(m);
    if (!r.baseline.empty()) row(r.baseline.front().model);
    for (const auto& w : r.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
}

int cmd_backtest(const Globals& g) {
    auto ctx = load_context(g);
    const auto sentiment = load_sentiment(ctx);
    std::vector<eval::ForecastRun> runs;
    eval::ReportMeta meta;
    meta.config_hash = eval::fnv1a_hex(ctx.cfg.resolved());
    meta.seed = ctx.cfg.seed();
    std::vector<eval::ModelFamily> families{eval::ModelFamily::Persistence};
    for (const auto f : ctx.cfg.models()) {
        if (f != eval::ModelFamily::Persistence) families.push_back(f);
    }
    bool any_failed = false;
    for (const auto& sym : symbols(ctx)) {
        const auto series = load_series(ctx, sym);
        meta.ranges.push_back({sym, format_date(series.bars.front().date), format_date(series.bars.back().date),
                               series.size()});
        const auto folds = folds_for(ctx, series.size());
        for (const auto f : families) {
            const auto spec = ctx.cfg.model_spec(f);
            auto fam_runs = eval::run_backtest(spec, series, folds, sentiment ? &*sentiment : nullptr);
            for (const auto& run : fam_runs) {
                for (const auto& w : run.warnings) {
                    std::cerr << "warning: " << sym << " " << run.model << " fold " << run.fold << ": " << w << "\n";
                }
                if (run.ok()) {
                    std::cerr << sym << " " << run.model << " fold " << run.fold << ": rmse " << cell_text(run.rmse())
                              << " (" << cell_text(run.seconds) << " s)\n";
                } else {
                    any_failed = true;
                    std::cerr << "error: " << sym << " " << run.model << " fold " << run.fold << ": " << run.error
                              << "\n";
                }
                if (f == eval::ModelFamily::Persistence) continue;
                plot::ForecastPlot p{sym + " " + run.model + " fold " + std::to_string(run.fold), run.dates,
                                     run.actual, run.predicted, run.lower, run.upper};
                const std::string stem = lowercase(sym) + "_" + run.model + "_fold" + std::to_string(run.fold);
                io::write_file_atomic(ctx.out / "plots" / (stem + ".svg"), plot::to_svg(p));
                io::write_file_atomic(ctx.out / "plots" / (stem + ".csv"), plot::to_csv(p));
            }
            runs.insert(runs.end(), std::make_move_iterator(fam_runs.begin()), std::make_move_iterator(fam_runs.end()));
        }
    }
    const auto report = eval::build_report(runs, std::move(meta));
    io::write_file_atomic(ctx.out / "report.csv", eval::report_csv(report));
    io::write_file_atomic(ctx.out / "baseline.csv", eval::baseline_csv(report));
    io::write_file_atomic(ctx.out / "report.json", eval::report_json(report));
    print_report(report);
    return any_failed ? kModel : kOk;
}

int cmd_tune(const Globals& g, bool grid) {
    auto ctx = load_context(g);
    const auto family = eval::parse_family(ctx.cfg.get("tune.model"));
    const auto& entries = ctx.cfg.tune_space();
    if (entries.empty()) throw ConfigError("no tune.space.<key> entries configured");
    std::vector<tuner::Parameter> params;
    for (const auto& [key, value] : entries) {
        tuner::Parameter p{key, {}, 0.0};
        std::optional<double> star;
        for (const auto& item : config::split_list(value)) {
            const bool marked = item.front() == '*';
            const double v = io::parse_double(marked ? item.substr(1) : item);
            p.candidates.push_back(v);
            if (marked) star = v;
        }
        if (star) {
            p.default_value = *star;
        } else {
            p.default_value = ctx.cfg.get_double(key);
            if (std::find(p.candidates.begin(), p.candidates.end(), p.default_value) == p.candidates.end()) {
                throw ConfigError("tune.space." + key + ": current value " + ctx.cfg.get(key) +
                                  " is not a candidate; mark a default with '*'");
            }
        }
        params.push_back(std::move(p));
    }
    const tuner::SearchSpace space(std::move(params));

    std::vector<OhlcvSeries> all_series;
    for (const auto& sym : symbols(ctx)) all_series.push_back(load_series(ctx, sym));
    const auto sentiment = load_sentiment(ctx);

    const auto with_values = [&](const std::vector<double>& values) {
        config::RunConfig c = ctx.cfg;
        for (std::size_t i = 0; i < values.size(); ++i) c.set(space.parameters()[i].name, io::format_double(values[i]));
        return c;
    };
    const tuner::Objective objective = [&](const std::vector<double>& values) {
        const auto c = with_values(values);
        const auto spec = c.model_spec(family);
        double sum = 0.0;
        std::size_t count = 0;
        for (const auto& series : all_series) {
            std::size_t test_len = c.get_size("folds.test_len");
            if (test_len == 0) test_len = c.get_size("window.horizon");
            const auto folds = rolling_splits(series.size(), c.get_size("folds.count"), test_len);
            for (const auto& run : eval::run_backtest(spec, series, folds, sentiment ? &*sentiment : nullptr)) {
                if (!run.ok()) throw ModelError(run.error);
                sum += run.rmse();
                ++count;
            }
        }
        return sum / static_cast<double>(count);
    };

    tuner::TunerOptions opts;
    opts.threads = ctx.cfg.get_size("tune.threads");
    opts.grid_budget = ctx.cfg.get_size("tune.budget");
    const auto log = grid ? tuner::grid_optimize(objective, space, opts) : tuner::stepwise_optimize(objective, space, opts);
    io::write_file_atomic(ctx.out / "tune_log.csv", tuner::to_csv(log));
    io::write_file_atomic(ctx.out / "tune_best.conf", with_values(log.best_config).resolved());
    std::size_t failures = 0;
    for (const auto& t : log.trials) failures += t.failed ? 1 : 0;
    std::cout << (grid ? "grid" : "stepwise") << " search: " << log.trials.size() << " evaluations, " << failures
              << " failed, best objective " << io::format_double(log.best_value) << "\n";
    for (std::size_t i = 0; i < space.size(); ++i) {
        std::cout << "  " << space.parameters()[i].name << "=" << io::format_double(log.best_config[i]) << "\n";
    }
    return std::isfinite(log.best_value) ? kOk : kModel;
}

int cmd_report(const Globals& g) {
    auto ctx = load_context(g);
    const auto report = eval::parse_report_json(io::read_file(ctx.out / "report.json"));
    std::cout << "config " << report.meta.config_hash << ", seed " << report.meta.seed << "\n";
    for (const auto& r : report.meta.ranges) {
        std::cout << r.symbol << ": " << r.bars << " bars, " << r.first_date << " to " << r.last_date << "\n";
    }
    print_report(report);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stockcast: stock price forecasting and backtesting"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    std::uint64_t seed = 0;
    app.add_option("--config", g.config_path, "Config file of key=value lines");
    auto* seed_opt = app.add_option("--seed", seed, "Master seed (overrides the config)");
    app.add_option("--out", g.out, "Output directory (overrides the config)");

    std::string csv, symbol;
    bool from_url = false, grid = false;
    auto* ingest = app.add_subcommand("ingest", "Validate and store OHLCV series");
    ingest->add_option("--csv", csv, "Single CSV file to ingest");
    ingest->add_option("--symbol", symbol, "Symbol for --csv (default: file stem)");
    ingest->add_flag("--from-url", from_url, "Fetch every symbol from data.url");
    auto* sentiment = app.add_subcommand("sentiment", "Decode documents into daily sentiment scores");
    auto* train = app.add_subcommand("train", "Fit the configured models on the full series");
    auto* forecast = app.add_subcommand("forecast", "Forecast past the series end with trained models");
    auto* backtest = app.add_subcommand("backtest", "Rolling-origin backtest with report and plots");
    auto* tune = app.add_subcommand("tune", "Stepwise (or grid) hyperparameter search");
    tune->add_flag("--grid", grid, "Exhaustive grid instead of stepwise search");
    auto* report = app.add_subcommand("report", "Print the stored comparison report");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }
    if (seed_opt->count() > 0) g.seed = seed;

    try {
        if (ingest->parsed()) return cmd_ingest(g, csv, symbol, from_url);
        if (sentiment->parsed()) return cmd_sentiment(g);
        if (train->parsed()) return cmd_train(g);
        if (forecast->parsed()) return cmd_forecast(g);
        if (backtest->parsed()) return cmd_backtest(g);
        if (tune->parsed()) return cmd_tune(g, grid);
        if (report->parsed()) return cmd_report(g);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const FetchError& e) {
        std::cerr << "fetch error: " << e.what() << "\n";
        return kData;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kData;
    } catch (const ModelError& e) {
        std::cerr << "model error: " << e.what() << "\n";
        return kModel;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kOther;
    }
    return kOther;
}
