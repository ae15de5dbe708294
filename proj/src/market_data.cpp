#include "stockcast/market_data.hpp"

#include "stockcast/errors.hpp"

#include <httplib.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <sstream>

namespace stockcast {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

template <typename T>
bool parse_number(std::string_view text, T& value) {
    text = trim(text);
    if (text.empty()) return false;
    if (text.front() == '+') text.remove_prefix(1);
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    return ec == std::errc{} && ptr == end;
}

std::string line_error(std::size_t line, const std::string& what) {
    return "line " + std::to_string(line) + ": " + what;
}

void check_bar(const OhlcvBar& bar, const std::string& where) {
    const auto d = format_date(bar.date);
    const std::array<double, 4> prices{bar.open, bar.high, bar.low, bar.close};
    for (double p : prices) {
        if (!std::isfinite(p) || p <= 0.0) {
            throw DataError(where + "non-positive or non-finite price on " + d);
        }
    }
    if (bar.volume < 0) throw DataError(where + "negative volume on " + d);
    if (bar.high < bar.low) throw DataError(where + "high < low on " + d);
    if (bar.low > std::min(bar.open, bar.close)) {
        throw DataError(where + "low above open/close on " + d);
    }
    if (bar.high < std::max(bar.open, bar.close)) {
        throw DataError(where + "high below open/close on " + d);
    }
}

void append_double(std::string& out, double value) {
    std::array<char, 64> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    out.append(buf.data(), ptr);
}

}  // namespace

Date parse_date(std::string_view text) {
    text = trim(text);
    int y = 0;
    unsigned m = 0;
    unsigned d = 0;
    if (text.size() != 10 || text[4] != '-' || text[7] != '-' || !parse_number(text.substr(0, 4), y) ||
        !parse_number(text.substr(5, 2), m) || !parse_number(text.substr(8, 2), d)) {
        throw DataError("invalid date '" + std::string(text) + "' (expected YYYY-MM-DD)");
    }
    const Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!date.ok()) throw DataError("invalid calendar date '" + std::string(text) + "'");
    return date;
}

std::string format_date(const Date& d) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(d.year()),
                  static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
    return buf;
}

int day_of_week(const Date& d) {
    const std::chrono::weekday wd{std::chrono::sys_days{d}};
    return static_cast<int>(wd.iso_encoding()) - 1;
}

std::vector<Date> next_trading_dates(const Date& last, std::size_t count) {
    std::vector<Date> out;
    out.reserve(count);
    auto day = std::chrono::sys_days{last};
    while (out.size() < count) {
        day += std::chrono::days{1};
        const Date d{day};
        if (day_of_week(d) < 5) out.push_back(d);
    }
    return out;
}

OhlcvSeries OhlcvSeries::slice(std::size_t begin, std::size_t end) const {
    if (begin > end || end > bars.size()) throw DataError("series slice out of range");
    return OhlcvSeries{symbol, std::vector<OhlcvBar>(bars.begin() + static_cast<std::ptrdiff_t>(begin),
                                                     bars.begin() + static_cast<std::ptrdiff_t>(end))};
}

std::vector<double> OhlcvSeries::closes() const {
    std::vector<double> out;
    out.reserve(bars.size());
    for (const auto& b : bars) out.push_back(b.close);
    return out;
}

std::vector<Date> OhlcvSeries::dates() const {
    std::vector<Date> out;
    out.reserve(bars.size());
    for (const auto& b : bars) out.push_back(b.date);
    return out;
}

void validate(const OhlcvSeries& series) {
    if (series.empty()) throw DataError("series is empty");
    for (std::size_t i = 0; i < series.bars.size(); ++i) {
        check_bar(series.bars[i], "");
        if (i > 0 && !(series.bars[i - 1].date < series.bars[i].date)) {
            throw DataError("dates not strictly increasing at " + format_date(series.bars[i].date));
        }
    }
}

OhlcvSeries parse_csv(std::string_view text, std::string symbol) {
    if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF &&
        static_cast<unsigned char>(text[1]) == 0xBB && static_cast<unsigned char>(text[2]) == 0xBF) {
        text.remove_prefix(3);
    }
    OhlcvSeries series{std::move(symbol), {}};
    const auto lines = split(text, '\n');
    bool header_seen = false;
    for (std::size_t idx = 0; idx < lines.size(); ++idx) {
        const std::size_t line_no = idx + 1;
        const auto line = trim(lines[idx]);
        if (line.empty()) continue;
        if (!header_seen) {
            if (line != "date,open,high,low,close,volume") {
                throw DataError(line_error(line_no, "expected header date,open,high,low,close,volume"));
            }
            header_seen = true;
            continue;
        }
        const auto fields = split(line, ',');
        if (fields.size() != 6) {
            throw DataError(line_error(line_no, "expected 6 fields, found " + std::to_string(fields.size())));
        }
        OhlcvBar bar;
        try {
            bar.date = parse_date(fields[0]);
        } catch (const DataError& e) {
            throw DataError(line_error(line_no, e.what()));
        }
        if (!parse_number(fields[1], bar.open) || !parse_number(fields[2], bar.high) ||
            !parse_number(fields[3], bar.low) || !parse_number(fields[4], bar.close)) {
            throw DataError(line_error(line_no, "malformed price"));
        }
        if (!parse_number(fields[5], bar.volume)) throw DataError(line_error(line_no, "malformed volume"));
        const std::string where = "line " + std::to_string(line_no) + ": ";
        check_bar(bar, where);
        if (!series.bars.empty() && !(series.bars.back().date < bar.date)) {
            throw DataError(where + "date " + format_date(bar.date) + " does not follow " +
                            format_date(series.bars.back().date));
        }
        series.bars.push_back(bar);
    }
    if (!header_seen) throw DataError("empty file");
    if (series.bars.empty()) throw DataError("no data rows");
    return series;
}

std::string serialize_csv(const OhlcvSeries& series) {
    std::string out = "date,open,high,low,close,volume\n";
    for (const auto& b : series.bars) {
        out += format_date(b.date);
        for (double v : {b.open, b.high, b.low, b.close}) {
            out += ',';
            append_double(out, v);
        }
        out += ',';
        out += std::to_string(b.volume);
        out += '\n';
    }
    return out;
}

Feature parse_feature(std::string_view name) {
    name = trim(name);
    if (name == "open") return Feature::Open;
    if (name == "high") return Feature::High;
    if (name == "low") return Feature::Low;
    if (name == "close") return Feature::Close;
    if (name == "volume") return Feature::Volume;
    throw DataError("unknown feature '" + std::string(name) + "'");
}

std::string_view feature_name(Feature f) {
    switch (f) {
        case Feature::Open: return "open";
        case Feature::High: return "high";
        case Feature::Low: return "low";
        case Feature::Close: return "close";
        case Feature::Volume: return "volume";
    }
    return "?";
}

Eigen::MatrixXd feature_matrix(const OhlcvSeries& series, std::span<const Feature> columns) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(series.size()), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t r = 0; r < series.size(); ++r) {
        const auto& b = series.bars[r];
        for (std::size_t c = 0; c < columns.size(); ++c) {
            double v = 0.0;
            switch (columns[c]) {
                case Feature::Open: v = b.open; break;
                case Feature::High: v = b.high; break;
                case Feature::Low: v = b.low; break;
                case Feature::Close: v = b.close; break;
                case Feature::Volume: v = static_cast<double>(b.volume); break;
            }
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
        }
    }
    return m;
}

double ScaleParams::to_unit(std::size_t col, double value) const {
    return (value - min.at(col)) / (max.at(col) - min.at(col));
}

double ScaleParams::from_unit(std::size_t col, double value) const {
    return min.at(col) + value * (max.at(col) - min.at(col));
}

ScaledMatrix scale_minmax(const Eigen::MatrixXd& matrix) {
    if (matrix.rows() < 2) throw DataError("min-max scaling needs at least 2 rows");
    ScaledMatrix out;
    const auto cols = static_cast<std::size_t>(matrix.cols());
    out.params.min.resize(cols);
    out.params.max.resize(cols);
    for (Eigen::Index c = 0; c < matrix.cols(); ++c) {
        const double lo = matrix.col(c).minCoeff();
        const double hi = matrix.col(c).maxCoeff();
        if (!(hi > lo)) throw DataError("constant column " + std::to_string(c) + " cannot be min-max scaled");
        out.params.min[static_cast<std::size_t>(c)] = lo;
        out.params.max[static_cast<std::size_t>(c)] = hi;
    }
    out.values = apply_scale(matrix, out.params);
    return out;
}

Eigen::MatrixXd apply_scale(const Eigen::MatrixXd& matrix, const ScaleParams& params) {
    if (static_cast<std::size_t>(matrix.cols()) != params.features()) {
        throw DataError("scale parameters cover " + std::to_string(params.features()) + " features, matrix has " +
                        std::to_string(matrix.cols()));
    }
    Eigen::MatrixXd out(matrix.rows(), matrix.cols());
    for (Eigen::Index c = 0; c < matrix.cols(); ++c) {
        for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
            out(r, c) = params.to_unit(static_cast<std::size_t>(c), matrix(r, c));
        }
    }
    return out;
}

Eigen::MatrixXd inverse_scale(const Eigen::MatrixXd& scaled, const ScaleParams& params) {
    if (static_cast<std::size_t>(scaled.cols()) != params.features()) {
        throw DataError("scale parameters do not match matrix width");
    }
    Eigen::MatrixXd out(scaled.rows(), scaled.cols());
    for (Eigen::Index c = 0; c < scaled.cols(); ++c) {
        for (Eigen::Index r = 0; r < scaled.rows(); ++r) {
            out(r, c) = params.from_unit(static_cast<std::size_t>(c), scaled(r, c));
        }
    }
    return out;
}

WindowedDataset split_sequences(const Eigen::MatrixXd& matrix, std::size_t lookback, std::size_t horizon,
                                std::size_t target_col) {
    std::vector<std::size_t> all(static_cast<std::size_t>(matrix.cols()));
    for (std::size_t c = 0; c < all.size(); ++c) all[c] = c;
    return split_sequences(matrix, lookback, horizon, target_col, all);
}

WindowedDataset split_sequences(const Eigen::MatrixXd& matrix, std::size_t lookback, std::size_t horizon,
                                std::size_t target_col, std::span<const std::size_t> input_cols) {
    const auto rows = static_cast<std::size_t>(matrix.rows());
    const auto cols = static_cast<std::size_t>(matrix.cols());
    if (lookback == 0 || horizon == 0) throw DataError("lookback and horizon must be positive");
    if (target_col >= cols) throw DataError("target column out of range");
    if (input_cols.empty()) throw DataError("at least one input column is required");
    for (auto c : input_cols) {
        if (c >= cols) throw DataError("input column out of range");
    }
    if (rows < lookback + horizon) {
        throw DataError("series too short: " + std::to_string(rows) + " rows < lookback + horizon = " +
                        std::to_string(lookback + horizon));
    }
    const std::size_t n = rows - lookback - horizon + 1;
    WindowedDataset ds;
    ds.target_feature = target_col;
    ds.inputs.reserve(n);
    ds.targets.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(horizon));
    for (std::size_t i = 0; i < n; ++i) {
        Eigen::MatrixXd window(static_cast<Eigen::Index>(lookback), static_cast<Eigen::Index>(input_cols.size()));
        for (std::size_t r = 0; r < lookback; ++r) {
            for (std::size_t c = 0; c < input_cols.size(); ++c) {
                window(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                    matrix(static_cast<Eigen::Index>(i + r), static_cast<Eigen::Index>(input_cols[c]));
            }
        }
        ds.inputs.push_back(std::move(window));
        for (std::size_t h = 0; h < horizon; ++h) {
            ds.targets(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(h)) =
                matrix(static_cast<Eigen::Index>(i + lookback + h), static_cast<Eigen::Index>(target_col));
        }
    }
    return ds;
}

BacktestFolds rolling_splits(std::size_t series_length, std::size_t n_folds, std::size_t test_len) {
    if (n_folds == 0 || test_len == 0) throw DataError("fold count and test length must be positive");
    if (series_length <= n_folds * test_len) {
        throw DataError("series of length " + std::to_string(series_length) + " leaves no training data for " +
                        std::to_string(n_folds) + " folds of " + std::to_string(test_len));
    }
    BacktestFolds folds;
    folds.reserve(n_folds);
    for (std::size_t k = 1; k <= n_folds; ++k) {
        const std::size_t split = series_length - (n_folds - k + 1) * test_len;
        folds.push_back(Fold{{0, split}, {split, split + test_len}});
    }
    return folds;
}

std::string expand_endpoint(const FetchRequest& request) {
    std::string out = request.endpoint;
    const auto replace_all = [&out](std::string_view key, const std::string& value) {
        std::size_t pos = 0;
        while ((pos = out.find(key, pos)) != std::string::npos) {
            out.replace(pos, key.size(), value);
            pos += value.size();
        }
    };
    replace_all("{symbol}", request.symbol);
    replace_all("{start}", request.start);
    replace_all("{end}", request.end);
    return out;
}

std::string fetch_remote(const FetchRequest& request) {
    const std::string url = expand_endpoint(request);
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw FetchError("endpoint is not an absolute URL: " + url, 0);
    const auto path_start = url.find('/', scheme_end + 3);
    const std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client client(origin);
    client.set_connection_timeout(10);
    client.set_read_timeout(30);
    auto res = client.Get(path);
    if (!res) {
        throw FetchError("request to " + url + " failed: " + httplib::to_string(res.error()), 0);
    }
    if (res->status < 200 || res->status >= 300) {
        throw FetchError("request to " + url + " returned HTTP " + std::to_string(res->status), res->status);
    }
    return res->body;
}

}  // namespace stockcast
