#pragma once

#include "stockcast/market_data.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stockcast::additive {

// Decomposable forecaster y(t) = g(t) + s(t) + h(t) + noise. Time t is the
// bar index counted from the first fitted bar; one unit is one bar.

enum class TrendKind { Linear, Logistic };

struct TrendSpec {
    TrendKind kind = TrendKind::Linear;
    double k = 0.0;  // base growth rate
    double m = 0.0;  // base offset
    std::vector<double> changepoints;  // strictly increasing
    std::vector<double> delta;         // rate adjustments
    std::vector<double> gamma;         // offset adjustments, tied by tie_offsets()
    double capacity = 0.0;             // logistic only
};

/// Offsets that keep the trend continuous at every changepoint. Linear:
/// gamma_j = -s_j * delta_j. Logistic: the usual recursive tie on the
/// offset so the curve stays continuous when the rate jumps.
std::vector<double> tie_offsets(const TrendSpec& spec);

/// Linear: (k + a(t)'delta) t + (m + a(t)'gamma).
/// Logistic: C / (1 + exp(-(k + a(t)'delta)(t - (m + a(t)'gamma)))).
/// a(t)_j = 1 iff t >= s_j.
double eval_trend(double t, const TrendSpec& spec);

struct Seasonality {
    double period = 0.0;
    std::vector<double> a;  // cosine coefficients, one per harmonic
    std::vector<double> b;  // sine coefficients

    std::size_t order() const noexcept { return a.size(); }
};

double eval_seasonality(double t, const Seasonality& spec);

struct HolidayEvent {
    std::string name;
    double beta = 0.0;
    std::vector<Date> dates;  // days on which the indicator is 1

    bool active(const Date& d) const;
};

struct HolidaySpec {
    std::vector<HolidayEvent> events;
};

/// Sum of active holiday effects plus `exog_coefs . exog_row`. Throws
/// DataError if the two exogenous spans differ in width.
double eval_holiday(const Date& date, const HolidaySpec& spec, std::span<const double> exog_coefs = {},
                    std::span<const double> exog_row = {});

struct Model {
    TrendSpec trend;
    std::vector<Seasonality> seasonalities;
    HolidaySpec holidays;
    std::vector<double> exog_coefs;
    double residual_sigma = 0.0;
    std::size_t n_obs = 0;                // fitted bars; forecasts start at t = n_obs
    std::optional<Date> last_date;        // date of bar t = n_obs - 1, when known
};

/// g + sum(s) + h at one point. Every other routine goes through this.
double model_value(const Model& model, double t, const std::optional<Date>& date,
                   std::span<const double> exog_row = {});

struct SeasonalityConfig {
    double period = 0.0;
    std::size_t order = 0;
};

struct FitConfig {
    TrendKind trend = TrendKind::Linear;
    double capacity = 0.0;
    std::size_t n_changepoints = 25;
    double changepoint_range = 0.8;
    std::vector<SeasonalityConfig> seasonalities{{5.0, 2}, {252.0, 10}};
    std::vector<HolidayEvent> holidays;  // betas ignored on input
    double lambda_delta = 0.0;
    std::size_t max_iter = 20000;
};

struct FitInput {
    std::span<const double> y;
    std::span<const Date> dates;            // empty: holidays inactive, no last_date
    const Eigen::MatrixXd* exog = nullptr;  // T x X sentiment/exogenous regressors
};

/// J changepoints at uniform positions over the first `range` fraction of
/// `n_obs` bars, rounded to bar indices and deduplicated.
std::vector<double> place_changepoints(std::size_t n_obs, std::size_t count, double range);

/// Minimizes sum (y - g - s - h)^2 + lambda * |delta|_1 with gamma tied.
/// Linear trend: profiled least squares plus coordinate descent on delta.
/// Logistic trend: gradient descent on (k, m, delta) with the remaining
/// coefficients solved exactly at every step.
Model fit(const FitInput& input, const FitConfig& config);

/// In-sample model values at t = 0..n-1.
std::vector<double> fitted_values(const Model& model, std::size_t n, std::span<const Date> dates = {},
                                  const Eigen::MatrixXd* exog = nullptr);

struct Interval {
    std::vector<double> mean;
    std::vector<double> lower;
    std::vector<double> upper;
};

struct IntervalConfig {
    std::size_t n_sims = 1000;
    double level = 0.8;
    std::uint64_t seed = 0;
};

/// Deterministic extrapolation over `horizon` bars plus simulated quantile
/// bands. Each path draws future changepoints at the historical rate with
/// Laplace-distributed rate changes scaled to mean |delta|, then adds
/// Gaussian noise with residual_sigma. Path p uses an RNG seeded from
/// (seed, p). Future exogenous rows default to zero.
Interval predict_with_interval(const Model& model, std::size_t horizon, const IntervalConfig& cfg,
                               const Eigen::MatrixXd* future_exog = nullptr);

/// Linear-interpolated empirical quantile of `values` (sorted in place).
double empirical_quantile(std::vector<double>& values, double q);

std::string to_text(const Model& model);
Model from_text(std::string_view text);

}  // namespace stockcast::additive
