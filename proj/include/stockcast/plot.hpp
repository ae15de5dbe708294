#pragma once

#include "stockcast/market_data.hpp"

#include <string>
#include <vector>

namespace stockcast::plot {

struct ForecastPlot {
    std::string title;
    std::vector<Date> dates;
    std::vector<double> actual;     // drawn as dots
    std::vector<double> predicted;  // drawn as a solid line
    std::vector<double> lower;      // optional shaded band
    std::vector<double> upper;
};

/// Static SVG with fixed-precision coordinates.
std::string to_svg(const ForecastPlot& plot);

/// `date,actual,predicted,lower,upper`; band columns are empty without a band.
std::string to_csv(const ForecastPlot& plot);

}  // namespace stockcast::plot
