#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stockcast {

using Date = std::chrono::year_month_day;

/// Parses a `YYYY-MM-DD` literal. Throws DataError on anything else.
Date parse_date(std::string_view text);
std::string format_date(const Date& d);

/// 0 = Monday ... 6 = Sunday.
int day_of_week(const Date& d);

/// Next `count` weekdays strictly after `last`. Used to date forecast steps.
std::vector<Date> next_trading_dates(const Date& last, std::size_t count);

struct OhlcvBar {
    Date date;
    double open = 0.0;
    double high = 0.0;
    double low = 0.0;
    double close = 0.0;
    std::int64_t volume = 0;

    bool operator==(const OhlcvBar&) const = default;
};

struct OhlcvSeries {
    std::string symbol;
    std::vector<OhlcvBar> bars;

    std::size_t size() const noexcept { return bars.size(); }
    bool empty() const noexcept { return bars.empty(); }

    /// Bars [begin, end) as a new series with the same symbol.
    OhlcvSeries slice(std::size_t begin, std::size_t end) const;
    std::vector<double> closes() const;
    std::vector<Date> dates() const;

    bool operator==(const OhlcvSeries&) const = default;
};

/// Checks every bar and cross-bar invariant; throws DataError naming the
/// offending date.
void validate(const OhlcvSeries& series);

/// Parses `date,open,high,low,close,volume` CSV (LF or CRLF). Rows must
/// already be in strictly increasing date order; nothing is reordered.
OhlcvSeries parse_csv(std::string_view text, std::string symbol = {});

/// Inverse of parse_csv. Prices use the shortest round-trip decimal form.
std::string serialize_csv(const OhlcvSeries& series);

enum class Feature { Open = 0, High, Low, Close, Volume };

Feature parse_feature(std::string_view name);
std::string_view feature_name(Feature f);

/// T x F matrix with one column per requested feature, in order.
Eigen::MatrixXd feature_matrix(const OhlcvSeries& series, std::span<const Feature> columns);

struct ScaleParams {
    std::vector<double> min;
    std::vector<double> max;

    std::size_t features() const noexcept { return min.size(); }
    double to_unit(std::size_t col, double value) const;
    double from_unit(std::size_t col, double value) const;

    bool operator==(const ScaleParams&) const = default;
};

struct ScaledMatrix {
    Eigen::MatrixXd values;
    ScaleParams params;
};

/// Per-column min-max to [0, 1]. Rejects T < 2 and constant columns.
ScaledMatrix scale_minmax(const Eigen::MatrixXd& matrix);
/// Applies previously fitted parameters; values outside the fit range map
/// outside [0, 1].
Eigen::MatrixXd apply_scale(const Eigen::MatrixXd& matrix, const ScaleParams& params);
Eigen::MatrixXd inverse_scale(const Eigen::MatrixXd& scaled, const ScaleParams& params);

struct WindowedDataset {
    std::vector<Eigen::MatrixXd> inputs;  // each lookback x features
    Eigen::MatrixXd targets;              // samples x horizon
    std::size_t target_feature = 0;

    std::size_t samples() const noexcept { return inputs.size(); }
    std::size_t lookback() const noexcept { return inputs.empty() ? 0 : inputs.front().rows(); }
    std::size_t features() const noexcept { return inputs.empty() ? 0 : inputs.front().cols(); }
    std::size_t horizon() const noexcept { return targets.cols(); }
};

/// Sample i takes rows [i, i+L) as input and rows [i+L, i+L+H) of
/// `target_col` as target. Throws DataError when T < L + H.
WindowedDataset split_sequences(const Eigen::MatrixXd& matrix, std::size_t lookback,
                                std::size_t horizon, std::size_t target_col);

/// Same windows, but inputs restricted to `input_cols` (the target column
/// need not be among them).
WindowedDataset split_sequences(const Eigen::MatrixXd& matrix, std::size_t lookback,
                                std::size_t horizon, std::size_t target_col,
                                std::span<const std::size_t> input_cols);

struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const noexcept { return end - begin; }
    bool operator==(const IndexRange&) const = default;
};

struct Fold {
    IndexRange train;
    IndexRange test;

    bool operator==(const Fold&) const = default;
};

using BacktestFolds = std::vector<Fold>;

/// Expanding-window folds: fold k (1-based) trains on
/// [0, T - (n_folds - k + 1) * test_len) and tests on the next test_len points.
BacktestFolds rolling_splits(std::size_t series_length, std::size_t n_folds, std::size_t test_len);

struct FetchRequest {
    std::string endpoint;  // e.g. http://host:port/q/{symbol}?from={start}&to={end}
    std::string symbol;
    std::string start;
    std::string end;
};

/// Expands `{symbol}`, `{start}` and `{end}` in the endpoint template.
std::string expand_endpoint(const FetchRequest& request);

/// HTTP GET of the expanded endpoint. Returns the body untouched; throws
/// FetchError on transport failure or non-2xx status.
std::string fetch_remote(const FetchRequest& request);

}  // namespace stockcast
