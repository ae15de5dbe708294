#include "stockcast/plot.hpp"

#include "stockcast/errors.hpp"
#include "stockcast/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace stockcast::plot {

namespace {

constexpr double kWidth = 800.0;
constexpr double kHeight = 400.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 20.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 50.0;

std::string fixed(double v, int digits = 2) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (const char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

void check(const ForecastPlot& p) {
    const std::size_t n = p.dates.size();
    if (n == 0) throw DataError("nothing to plot");
    if (p.actual.size() != n || (!p.predicted.empty() && p.predicted.size() != n)) {
        throw DataError("plot series lengths differ");
    }
    if (p.lower.size() != p.upper.size() || (!p.lower.empty() && p.lower.size() != n)) {
        throw DataError("plot band lengths differ");
    }
}

}  // namespace

std::string to_svg(const ForecastPlot& p) {
    check(p);
    const std::size_t n = p.dates.size();
    double lo = INFINITY, hi = -INFINITY;
    for (const auto* v : {&p.actual, &p.predicted, &p.lower, &p.upper}) {
        for (double x : *v) {
            if (std::isfinite(x)) {
                lo = std::min(lo, x);
                hi = std::max(hi, x);
            }
        }
    }
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;

    const double plot_w = kWidth - kLeft - kRight;
    const double plot_h = kHeight - kTop - kBottom;
    const auto x_at = [&](std::size_t i) {
        return kLeft + (n == 1 ? plot_w / 2 : plot_w * static_cast<double>(i) / static_cast<double>(n - 1));
    };
    const auto y_at = [&](double v) { return kTop + plot_h * (hi - v) / (hi - lo); };
    const auto point = [&](std::size_t i, double v) { return fixed(x_at(i)) + "," + fixed(y_at(v)); };

    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"400\" viewBox=\"0 0 800 400\">\n";
    s += "<rect width=\"800\" height=\"400\" fill=\"white\"/>\n";
    s += "<text x=\"400\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" +
         escape(p.title) + "</text>\n";
    s += "<rect x=\"" + fixed(kLeft) + "\" y=\"" + fixed(kTop) + "\" width=\"" + fixed(plot_w) + "\" height=\"" +
         fixed(plot_h) + "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double v = lo + (hi - lo) * k / 4.0;
        s += "<text x=\"" + fixed(kLeft - 6) + "\" y=\"" + fixed(y_at(v) + 4) +
             "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + fixed(v) + "</text>\n";
    }
    s += "<text x=\"" + fixed(kLeft) + "\" y=\"" + fixed(kHeight - 20) +
         "\" font-family=\"sans-serif\" font-size=\"11\">" + format_date(p.dates.front()) + "</text>\n";
    s += "<text x=\"" + fixed(kWidth - kRight) + "\" y=\"" + fixed(kHeight - 20) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + format_date(p.dates.back()) +
         "</text>\n";

    if (!p.lower.empty()) {
        std::string pts;
        for (std::size_t i = 0; i < n; ++i) pts += point(i, p.upper[i]) + " ";
        for (std::size_t i = n; i-- > 0;) pts += point(i, p.lower[i]) + (i == 0 ? "" : " ");
        s += "<polygon class=\"band\" points=\"" + pts + "\" fill=\"#9ecae1\" fill-opacity=\"0.5\" stroke=\"none\"/>\n";
    }
    if (!p.predicted.empty()) {
        std::string pts;
        for (std::size_t i = 0; i < n; ++i) pts += point(i, p.predicted[i]) + (i + 1 == n ? "" : " ");
        s += "<polyline class=\"predicted\" points=\"" + pts + "\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n";
    }
    for (std::size_t i = 0; i < n; ++i) {
        s += "<circle class=\"actual\" cx=\"" + fixed(x_at(i)) + "\" cy=\"" + fixed(y_at(p.actual[i])) +
             "\" r=\"2.5\" fill=\"black\"/>\n";
    }
    s += "</svg>\n";
    return s;
}

std::string to_csv(const ForecastPlot& p) {
    check(p);
    std::string out = "date,actual,predicted,lower,upper\n";
    for (std::size_t i = 0; i < p.dates.size(); ++i) {
        out += format_date(p.dates[i]) + "," + io::format_double(p.actual[i]) + ",";
        if (!p.predicted.empty()) out += io::format_double(p.predicted[i]);
        out += ",";
        if (!p.lower.empty()) out += io::format_double(p.lower[i]) + "," + io::format_double(p.upper[i]);
        else out += ",";
        out += "\n";
    }
    return out;
}

}  // namespace stockcast::plot
