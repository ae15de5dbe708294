#include "stockcast/evaluation.hpp"

#include "stockcast/errors.hpp"
#include "stockcast/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace stockcast::eval {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct FamilyName {
    ModelFamily family;
    std::string_view name;
};

constexpr FamilyName kFamilies[] = {
    {ModelFamily::Persistence, "persistence"},
    {ModelFamily::LstmUnivariate, "lstm_univariate"},
    {ModelFamily::LstmMultivariate, "lstm_multivariate"},
    {ModelFamily::Sarima, "sarima"},
    {ModelFamily::AdditiveBoosted, "additive_boosted"},
};

FoldForecast forecast_lstm(const ModelSpec& spec, const OhlcvSeries& train, std::size_t horizon,
                           const std::vector<double>& sentiment) {
    const auto frame = lstm_frame(spec, train, sentiment);
    const auto model = lstm::fit_model(frame.raw, frame.inputs, frame.target_col, spec.lookback, horizon, spec.lstm);
    return {lstm::forecast(model, frame.raw), {}, {}, {}};
}

FoldForecast forecast_sarima(const ModelSpec& spec, const OhlcvSeries& train, std::size_t horizon) {
    const auto closes = train.closes();
    const auto model = sarima::fit(closes, spec.order, spec.sarima);
    return {sarima::forecast(model, horizon), {}, {}, model.warnings};
}

Eigen::MatrixXd column(std::span<const double> v) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
    for (std::size_t t = 0; t < v.size(); ++t) m(static_cast<Eigen::Index>(t), 0) = v[t];
    return m;
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

double number_from(const nlohmann::json& j) { return j.is_null() ? kNaN : j.get<double>(); }

nlohmann::json cell_json(const ReportCell& c) {
    nlohmann::json folds = nlohmann::json::array();
    for (std::size_t k = 0; k < c.fold_rmse.size(); ++k) {
        nlohmann::json f;
        f["fold"] = k + 1;
        f["rmse"] = number_or_null(c.fold_rmse[k]);
        if (!c.fold_errors[k].empty()) f["error"] = c.fold_errors[k];
        folds.push_back(std::move(f));
    }
    nlohmann::json j;
    j["model"] = c.model;
    j["symbol"] = c.symbol;
    j["mean_rmse"] = number_or_null(c.mean);
    j["folds"] = std::move(folds);
    return j;
}

ReportCell cell_from(const nlohmann::json& j) {
    ReportCell c;
    c.model = j.at("model").get<std::string>();
    c.symbol = j.at("symbol").get<std::string>();
    c.mean = number_from(j.at("mean_rmse"));
    for (const auto& f : j.at("folds")) {
        c.fold_rmse.push_back(number_from(f.at("rmse")));
        c.fold_errors.push_back(f.contains("error") ? f.at("error").get<std::string>() : std::string());
    }
    return c;
}

std::string grid_csv(const std::vector<std::string>& symbols, const std::vector<std::string>& models,
                     const std::vector<ReportCell>& cells) {
    std::string out = "model";
    for (const auto& s : symbols) out += "," + s;
    out += "\n";
    for (const auto& m : models) {
        out += m;
        for (const auto& s : symbols) {
            const auto it = std::find_if(cells.begin(), cells.end(),
                                         [&](const ReportCell& c) { return c.model == m && c.symbol == s; });
            out += "," + (it == cells.end() ? std::string() : io::format_double(it->mean));
        }
        out += "\n";
    }
    return out;
}

}  // namespace

double rmse(std::span<const double> predicted, std::span<const double> actual) {
    if (predicted.empty() || actual.empty()) throw DataError("rmse of empty input");
    if (predicted.size() != actual.size()) {
        throw DataError("rmse length mismatch: " + std::to_string(predicted.size()) + " vs " +
                        std::to_string(actual.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const double d = predicted[i] - actual[i];
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(predicted.size()));
}

std::string_view family_name(ModelFamily f) {
    for (const auto& e : kFamilies) {
        if (e.family == f) return e.name;
    }
    return "unknown";
}

ModelFamily parse_family(std::string_view name) {
    for (const auto& e : kFamilies) {
        if (e.name == name) return e.family;
    }
    throw ConfigError("unknown model '" + std::string(name) +
                      "' (expected lstm_univariate, lstm_multivariate, sarima, additive_boosted or persistence)");
}

std::vector<ModelFamily> compared_families() {
    return {ModelFamily::LstmUnivariate, ModelFamily::LstmMultivariate, ModelFamily::Sarima,
            ModelFamily::AdditiveBoosted};
}

LstmFrame lstm_frame(const ModelSpec& spec, const OhlcvSeries& series, std::span<const double> aligned_sentiment) {
    const bool univariate = spec.family == ModelFamily::LstmUnivariate;
    std::vector<Feature> columns = univariate ? std::vector<Feature>{Feature::Close} : spec.lstm_inputs;
    if (std::find(columns.begin(), columns.end(), Feature::Close) == columns.end()) columns.push_back(Feature::Close);
    const auto index_of = [&columns](Feature f) {
        return static_cast<std::size_t>(std::find(columns.begin(), columns.end(), f) - columns.begin());
    };
    LstmFrame frame;
    frame.raw = feature_matrix(series, columns);
    frame.target_col = index_of(Feature::Close);
    if (univariate) {
        frame.inputs = {frame.target_col};
    } else {
        for (const Feature f : spec.lstm_inputs) frame.inputs.push_back(index_of(f));
    }
    if (spec.lstm_use_sentiment && !aligned_sentiment.empty()) {
        if (aligned_sentiment.size() != series.size()) throw DataError("sentiment does not match series length");
        const auto [lo, hi] = std::minmax_element(aligned_sentiment.begin(), aligned_sentiment.end());
        if (*hi > *lo) {
            frame.raw.conservativeResize(Eigen::NoChange, frame.raw.cols() + 1);
            frame.raw.col(frame.raw.cols() - 1) = column(aligned_sentiment);
            frame.inputs.push_back(static_cast<std::size_t>(frame.raw.cols() - 1));
        }
    }
    return frame;
}

HybridModel fit_hybrid(const ModelSpec& spec, const OhlcvSeries& train, std::span<const double> aligned_sentiment) {
    HybridModel out;
    const auto closes = train.closes();
    const auto dates = train.dates();
    const std::size_t n = closes.size();

    additive::FitConfig cfg = spec.additive;
    cfg.seasonalities.clear();
    for (const auto& s : spec.additive.seasonalities) {
        if (2.0 * s.period <= static_cast<double>(n)) {
            cfg.seasonalities.push_back(s);
        } else {
            out.warnings.push_back("seasonality with period " + io::format_double(s.period) +
                                   " dropped: training span of " + std::to_string(n) + " bars is too short");
        }
    }

    const bool use_exog = !aligned_sentiment.empty();
    if (use_exog && aligned_sentiment.size() != n) throw DataError("sentiment does not match series length");
    const Eigen::MatrixXd exog = use_exog ? column(aligned_sentiment) : Eigen::MatrixXd();
    additive::FitInput input{closes, dates, use_exog ? &exog : nullptr};
    out.additive = additive::fit(input, cfg);
    const auto fitted = additive::fitted_values(out.additive, n, dates, use_exog ? &exog : nullptr);
    std::vector<double> residuals(n);
    for (std::size_t t = 0; t < n; ++t) residuals[t] = closes[t] - fitted[t];

    const auto frame = gbt::build_feature_frame(closes, residuals, spec.lags, dates, aligned_sentiment);
    if (static_cast<std::size_t>(frame.features.rows()) >= 2 * spec.boost.min_samples_leaf) {
        out.booster = gbt::fit_booster(frame.features, frame.targets, spec.boost);
    } else {
        out.booster.config = spec.boost;
        out.booster.n_features = gbt::frame_width(spec.lags);
        out.warnings.push_back("too few rows for the booster; residual correction skipped");
    }
    return out;
}

FoldForecast forecast_hybrid(const ModelSpec& spec, const HybridModel& model, const OhlcvSeries& history,
                             std::size_t horizon, std::span<const double> aligned_sentiment) {
    if (history.size() != model.additive.n_obs) throw ModelError("history does not match the fitted model");
    FoldForecast out;
    out.warnings = model.warnings;
    const auto closes = history.closes();
    const bool use_exog = !model.additive.exog_coefs.empty();
    const double held = aligned_sentiment.empty() ? 0.0 : aligned_sentiment.back();
    const Eigen::MatrixXd future_exog =
        Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(horizon), use_exog ? 1 : 0, held);
    const auto interval = additive::predict_with_interval(model.additive, horizon, spec.interval,
                                                          use_exog ? &future_exog : nullptr);
    const auto future_dates = next_trading_dates(history.bars.back().date, horizon);
    const std::vector<double> future_sentiment(horizon, held);
    gbt::HybridInputs hybrid{closes, spec.lags, future_dates, future_sentiment};
    out.mean = gbt::hybrid_forecast(interval.mean, model.booster, hybrid);
    out.lower.resize(horizon);
    out.upper.resize(horizon);
    for (std::size_t h = 0; h < horizon; ++h) {
        const double shift = out.mean[h] - interval.mean[h];
        out.lower[h] = interval.lower[h] + shift;
        out.upper[h] = interval.upper[h] + shift;
    }
    return out;
}

FoldForecast forecast_from_train(const ModelSpec& spec, const OhlcvSeries& train, std::size_t horizon,
                                 const hmm::SentimentSeries* sentiment) {
    if (train.empty()) throw DataError("empty training range");
    if (horizon == 0) throw ConfigError("horizon must be positive");
    std::vector<double> aligned;
    if (sentiment != nullptr) {
        const auto dates = train.dates();
        aligned = hmm::align_sentiment(dates, *sentiment);
    }
    switch (spec.family) {
        case ModelFamily::Persistence:
            return {std::vector<double>(horizon, train.bars.back().close), {}, {}, {}};
        case ModelFamily::LstmUnivariate:
        case ModelFamily::LstmMultivariate:
            return forecast_lstm(spec, train, horizon, aligned);
        case ModelFamily::Sarima:
            return forecast_sarima(spec, train, horizon);
        case ModelFamily::AdditiveBoosted:
            return forecast_hybrid(spec, fit_hybrid(spec, train, aligned), train, horizon, aligned);
    }
    throw ConfigError("unknown model family");
}

double ForecastRun::rmse() const { return ok() ? eval::rmse(predicted, actual) : kNaN; }

std::vector<ForecastRun> run_backtest(const ModelSpec& spec, const OhlcvSeries& series, const BacktestFolds& folds,
                                      const hmm::SentimentSeries* sentiment) {
    std::vector<ForecastRun> runs;
    for (std::size_t k = 0; k < folds.size(); ++k) {
        const Fold& fold = folds[k];
        if (fold.test.end > series.size() || fold.train.end > fold.test.begin || fold.test.size() == 0) {
            throw DataError("fold " + std::to_string(k + 1) + " does not fit the series");
        }
        ForecastRun run;
        run.model = std::string(family_name(spec.family));
        run.symbol = series.symbol;
        run.fold = k + 1;
        run.range = fold;
        for (std::size_t t = fold.test.begin; t < fold.test.end; ++t) {
            run.dates.push_back(series.bars[t].date);
            run.actual.push_back(series.bars[t].close);
        }
        const auto started = std::chrono::steady_clock::now();
        try {
            const auto train = series.slice(fold.train.begin, fold.train.end);
            auto f = forecast_from_train(spec, train, fold.test.size(), sentiment);
            run.predicted = std::move(f.mean);
            run.lower = std::move(f.lower);
            run.upper = std::move(f.upper);
            run.warnings = std::move(f.warnings);
            for (double v : run.predicted) {
                if (!std::isfinite(v)) throw ModelError("forecast contains non-finite values");
            }
        } catch (const Error& e) {
            run.error = e.what();
            run.predicted.clear();
            run.lower.clear();
            run.upper.clear();
        }
        run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        runs.push_back(std::move(run));
    }
    return runs;
}

const ReportCell* ComparisonReport::cell(std::string_view model, std::string_view symbol) const {
    for (const auto& c : cells) {
        if (c.model == model && c.symbol == symbol) return &c;
    }
    return nullptr;
}

ComparisonReport build_report(std::span<const ForecastRun> runs, ReportMeta meta) {
    if (runs.empty()) throw DataError("cannot build a report without runs");
    ComparisonReport report;
    report.meta = std::move(meta);
    const std::string baseline_name(family_name(ModelFamily::Persistence));
    const auto find_cell = [](std::vector<ReportCell>& cells, const ForecastRun& r) -> ReportCell& {
        for (auto& c : cells) {
            if (c.model == r.model && c.symbol == r.symbol) return c;
        }
        cells.push_back(ReportCell{r.model, r.symbol, {}, {}, 0.0});
        return cells.back();
    };
    std::vector<ReportCell> cells;
    for (const auto& r : runs) {
        if (std::find(report.symbols.begin(), report.symbols.end(), r.symbol) == report.symbols.end()) {
            report.symbols.push_back(r.symbol);
        }
        const bool baseline = r.model == baseline_name;
        if (!baseline && std::find(report.models.begin(), report.models.end(), r.model) == report.models.end()) {
            report.models.push_back(r.model);
        }
        auto& c = find_cell(baseline ? report.baseline : cells, r);
        c.fold_rmse.push_back(r.rmse());
        c.fold_errors.push_back(r.error);
    }
    for (auto* group : {&cells, &report.baseline}) {
        for (auto& c : *group) {
            double sum = 0.0;
            for (double v : c.fold_rmse) sum += v;
            c.mean = sum / static_cast<double>(c.fold_rmse.size());
        }
    }
    // Row-major over the first-appearance orders.
    for (const auto& m : report.models) {
        for (const auto& s : report.symbols) {
            const auto it = std::find_if(cells.begin(), cells.end(),
                                         [&](const ReportCell& c) { return c.model == m && c.symbol == s; });
            if (it != cells.end()) report.cells.push_back(*it);
        }
    }
    for (const auto& s : report.symbols) {
        std::size_t expected = 0;
        std::string first;
        for (const auto* group : {&report.cells, &report.baseline}) {
            for (const auto& c : *group) {
                if (c.symbol != s) continue;
                if (first.empty()) {
                    first = c.model;
                    expected = c.fold_rmse.size();
                } else if (c.fold_rmse.size() != expected) {
                    report.warnings.push_back("symbol " + s + ": " + c.model + " has " +
                                              std::to_string(c.fold_rmse.size()) + " folds but " + first + " has " +
                                              std::to_string(expected));
                }
            }
        }
    }
    return report;
}

std::string report_csv(const ComparisonReport& report) { return grid_csv(report.symbols, report.models, report.cells); }

std::string baseline_csv(const ComparisonReport& report) {
    return grid_csv(report.symbols, {std::string(family_name(ModelFamily::Persistence))}, report.baseline);
}

std::string report_json(const ComparisonReport& report) {
    nlohmann::json j;
    j["format"] = "stockcast-report v1";
    j["config_hash"] = report.meta.config_hash;
    j["seed"] = report.meta.seed;
    nlohmann::json ranges = nlohmann::json::array();
    for (const auto& r : report.meta.ranges) {
        ranges.push_back({{"symbol", r.symbol}, {"first_date", r.first_date}, {"last_date", r.last_date}, {"bars", r.bars}});
    }
    j["data_range"] = std::move(ranges);
    j["models"] = report.models;
    j["symbols"] = report.symbols;
    j["cells"] = nlohmann::json::array();
    for (const auto& c : report.cells) j["cells"].push_back(cell_json(c));
    j["baseline"] = nlohmann::json::array();
    for (const auto& c : report.baseline) j["baseline"].push_back(cell_json(c));
    j["warnings"] = report.warnings;
    return j.dump(2) + "\n";
}

ComparisonReport parse_report_json(std::string_view text) {
    try {
        const auto j = nlohmann::json::parse(text);
        if (j.at("format") != "stockcast-report v1") throw DataError("not a stockcast report (v1)");
        ComparisonReport r;
        r.meta.config_hash = j.at("config_hash").get<std::string>();
        r.meta.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& d : j.at("data_range")) {
            r.meta.ranges.push_back({d.at("symbol").get<std::string>(), d.at("first_date").get<std::string>(),
                                     d.at("last_date").get<std::string>(), d.at("bars").get<std::size_t>()});
        }
        r.models = j.at("models").get<std::vector<std::string>>();
        r.symbols = j.at("symbols").get<std::vector<std::string>>();
        for (const auto& c : j.at("cells")) r.cells.push_back(cell_from(c));
        for (const auto& c : j.at("baseline")) r.baseline.push_back(cell_from(c));
        r.warnings = j.at("warnings").get<std::vector<std::string>>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed report JSON: ") + e.what());
    }
}

std::string fnv1a_hex(std::string_view text) {
    std::uint64_t h = 14695981039346656037ULL;
    for (const char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = kHex[h & 0xF];
        h >>= 4;
    }
    return out;
}

}  // namespace stockcast::eval
