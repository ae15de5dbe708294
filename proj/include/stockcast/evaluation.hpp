#pragma once

#include "stockcast/additive.hpp"
#include "stockcast/boosted_trees.hpp"
#include "stockcast/lstm.hpp"
#include "stockcast/market_data.hpp"
#include "stockcast/sarima.hpp"
#include "stockcast/sentiment_hmm.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stockcast::eval {

/// sqrt(mean((p - a)^2)). Throws DataError on empty or unequal inputs.
double rmse(std::span<const double> predicted, std::span<const double> actual);

enum class ModelFamily { Persistence, LstmUnivariate, LstmMultivariate, Sarima, AdditiveBoosted };

std::string_view family_name(ModelFamily f);
ModelFamily parse_family(std::string_view name);

/// The four compared families, in report row order.
std::vector<ModelFamily> compared_families();

struct ModelSpec {
    ModelFamily family = ModelFamily::Persistence;
    std::size_t lookback = 30;

    lstm::TrainConfig lstm;
    std::vector<Feature> lstm_inputs{Feature::Open, Feature::High, Feature::Low, Feature::Volume};
    bool lstm_use_sentiment = false;

    additive::FitConfig additive;
    additive::IntervalConfig interval;
    gbt::BoostConfig boost;
    std::vector<std::size_t> lags{1, 2, 3, 5};

    sarima::Order order{1, 1, 1, 3, 3, 1, 15};
    sarima::FitConfig sarima;
};

struct FoldForecast {
    std::vector<double> mean;
    std::vector<double> lower;  // empty unless the family produces intervals
    std::vector<double> upper;
    std::vector<std::string> warnings;
};

/// Raw LSTM feature matrix: the configured columns plus close (the
/// target), and the aligned sentiment as an extra input channel when
/// enabled and not constant.
struct LstmFrame {
    Eigen::MatrixXd raw;
    std::vector<std::size_t> inputs;
    std::size_t target_col = 0;
};

LstmFrame lstm_frame(const ModelSpec& spec, const OhlcvSeries& series, std::span<const double> aligned_sentiment);

/// Additive model plus the booster fitted on its in-sample residuals.
struct HybridModel {
    additive::Model additive;
    gbt::Ensemble booster;
    std::vector<std::string> warnings;
};

HybridModel fit_hybrid(const ModelSpec& spec, const OhlcvSeries& train, std::span<const double> aligned_sentiment);

/// Forecasts past the end of `history`, which must be the series the model
/// was fitted on.
FoldForecast forecast_hybrid(const ModelSpec& spec, const HybridModel& model, const OhlcvSeries& history,
                             std::size_t horizon, std::span<const double> aligned_sentiment);

/// Fits `spec` on `train` alone and forecasts the next `horizon` bars.
/// Sentiment is aligned to the training dates only; future steps hold the
/// last aligned score. Additive seasonalities longer than half the training
/// span are dropped (with a warning).
FoldForecast forecast_from_train(const ModelSpec& spec, const OhlcvSeries& train, std::size_t horizon,
                                 const hmm::SentimentSeries* sentiment = nullptr);

struct ForecastRun {
    std::string model;
    std::string symbol;
    std::size_t fold = 0;  // 1-based
    Fold range;
    std::vector<Date> dates;  // test dates
    std::vector<double> predicted;
    std::vector<double> actual;
    std::vector<double> lower;
    std::vector<double> upper;
    std::vector<std::string> warnings;
    std::string error;  // non-empty when the fold failed
    double seconds = 0.0;

    bool ok() const noexcept { return error.empty(); }
    double rmse() const;  // NaN for failed folds
};

/// One run per fold. The forecaster sees only `series.slice(train)`; fit
/// failures are recorded on the run instead of propagating.
std::vector<ForecastRun> run_backtest(const ModelSpec& spec, const OhlcvSeries& series, const BacktestFolds& folds,
                                      const hmm::SentimentSeries* sentiment = nullptr);

struct ReportCell {
    std::string model;
    std::string symbol;
    std::vector<double> fold_rmse;  // NaN for failed folds
    std::vector<std::string> fold_errors;
    double mean = 0.0;  // NaN when any fold failed
};

struct SymbolRange {
    std::string symbol;
    std::string first_date;
    std::string last_date;
    std::size_t bars = 0;
};

struct ReportMeta {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::vector<SymbolRange> ranges;
};

struct ComparisonReport {
    std::vector<std::string> models;   // rows
    std::vector<std::string> symbols;  // columns
    std::vector<ReportCell> cells;     // row-major
    std::vector<ReportCell> baseline;  // persistence, one per symbol
    std::vector<std::string> warnings;
    ReportMeta meta;

    const ReportCell* cell(std::string_view model, std::string_view symbol) const;
};

/// Groups runs by (model, symbol) in first-appearance order. Persistence
/// runs go to the baseline block. Fold-count mismatches between models of
/// the same symbol are listed in `warnings`. Throws DataError on no runs.
ComparisonReport build_report(std::span<const ForecastRun> runs, ReportMeta meta);

/// `model,<symbols...>` grid of mean RMSEs; NaN cells print as `nan`.
std::string report_csv(const ComparisonReport& report);
std::string baseline_csv(const ComparisonReport& report);
/// Full per-fold detail. Contains no timings, so equal inputs give equal bytes.
std::string report_json(const ComparisonReport& report);
ComparisonReport parse_report_json(std::string_view text);

/// 64-bit FNV-1a as 16 hex digits.
std::string fnv1a_hex(std::string_view text);

}  // namespace stockcast::eval
