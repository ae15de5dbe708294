#pragma once

#include "stockcast/market_data.hpp"

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

namespace testutil {

inline std::filesystem::path data_dir() { return STOCKCAST_TEST_DATA; }

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("stockcast_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// Random-walk OHLCV bars on consecutive weekdays.
inline stockcast::OhlcvSeries random_series(std::size_t n, std::uint64_t seed, const std::string& symbol = "TEST") {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    stockcast::OhlcvSeries s;
    s.symbol = symbol;
    const auto dates = stockcast::next_trading_dates(stockcast::Date{std::chrono::year{2020}, std::chrono::month{1},
                                                                     std::chrono::day{1}},
                                                     n);
    double level = 100.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double open = level;
        level *= std::exp(0.01 * z(rng));
        const double close = level;
        const double high = std::max(open, close) * (1.0 + 0.005 * std::abs(z(rng)));
        const double low = std::min(open, close) * (1.0 - 0.005 * std::abs(z(rng)));
        s.bars.push_back({dates[i], open, high, low, close, static_cast<std::int64_t>(1000 + 10 * i + (i * 7919) % 113)});
    }
    return s;
}

}  // namespace testutil
