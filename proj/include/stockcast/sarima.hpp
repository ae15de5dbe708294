#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stockcast::sarima {

/// (a, b, c)(A, B, C)_m: trend AR, differencing and MA orders, then the
/// seasonal counterparts and the season length.
struct Order {
    std::size_t a = 0, b = 0, c = 0;
    std::size_t A = 0, B = 0, C = 0;
    std::size_t m = 1;

    void validate() const;
    bool operator==(const Order&) const = default;
};

/// Values consumed by each differencing pass, in application order. Lags
/// are 1 for the b trend passes, then m for the B seasonal passes.
struct DifferenceState {
    std::vector<std::size_t> lags;
    std::vector<std::vector<double>> heads;  // first `lag` values of each pass input
    std::vector<std::vector<double>> tails;  // last `lag` values of each pass input
};

struct Differenced {
    std::vector<double> values;
    DifferenceState state;
};

/// Applies (1 - L)^b then (1 - L^m)^B. Output length = n - b - B*m.
Differenced difference(std::span<const double> series, std::size_t b, std::size_t B, std::size_t m);

/// Exact inverse of difference().
std::vector<double> integrate(std::span<const double> differenced, const DifferenceState& state);

/// Continues the level series past the end of the differenced data: maps
/// forecasts of the differenced process to level forecasts.
std::vector<double> integrate_forecast(std::span<const double> differenced_forecast, const DifferenceState& state);

/// Coefficients in the sign convention
///   (1 - sum phi_i L^i)(1 - sum Phi_i L^{im})(w_t - mu) = (1 + sum theta_i L^i)(1 + sum Theta_i L^{im}) e_t
struct Coefficients {
    std::vector<double> phi, theta, seasonal_phi, seasonal_theta;
    double intercept = 0.0;  // mu; only estimated when b + B == 0
};

/// Full lag polynomials after multiplying trend and seasonal factors.
/// Returned vectors hold the coefficients of L^1..L^p, as in
/// w_t = sum ar[k-1] w_{t-k} + e_t + sum ma[k-1] e_{t-k}.
std::vector<double> expand_ar(const Order& order, const Coefficients& coef);
std::vector<double> expand_ma(const Order& order, const Coefficients& coef);

/// Conditional residuals with zero pre-sample errors. Entries before the AR
/// warm-up (the expanded AR order) are zero.
std::vector<double> css_residuals(std::span<const double> differenced, const Order& order, const Coefficients& coef);

/// Sum of squared conditional residuals beyond the AR warm-up. Throws
/// ModelError if the recursion produces a non-finite value.
double css_loss(std::span<const double> differenced, const Order& order, const Coefficients& coef);

/// Partial-autocorrelation parametrization: maps unconstrained reals to the
/// coefficients of a stationary polynomial 1 - sum phi_i z^i.
std::vector<double> to_stationary(std::span<const double> unconstrained);
std::vector<double> from_stationary(std::span<const double> coefficients);

/// Roots of 1 - sum c_i z^i (sign = -1) or 1 + sum c_i z^i (sign = +1);
/// returns the smallest root modulus (infinity for a constant polynomial).
double min_root_modulus(std::span<const double> coefficients, int sign);

struct FitConfig {
    std::size_t max_iter = 5000;
    std::size_t restarts = 3;
    std::uint64_t seed = 0;
    double x_tolerance = 1e-8;   // simplex spread in parameter space
    double f_tolerance = 1e-14;  // relative spread of loss values
};

struct Model {
    Order order;
    Coefficients coef;
    double sigma2 = 0.0;
    DifferenceState diff_state;
    std::vector<double> differenced_tail;  // last p_full differenced values
    std::vector<double> residual_tail;     // last q_full residuals
    std::size_t n_obs = 0;
    std::vector<std::string> warnings;
};

/// Builds a model from given coefficients: differences `series`, runs the
/// residual recursion, and keeps the tails needed to forecast.
Model from_parameters(std::span<const double> series, const Order& order, const Coefficients& coef);

/// CSS estimation by Nelder-Mead over the stationary/invertible transform,
/// with `restarts` additional seeded jittered starts. Throws ModelError on
/// non-convergence (with the final gradient norm) or a too-short series.
Model fit(std::span<const double> series, const Order& order, const FitConfig& cfg = {});

/// Iterates the difference equation with future errors at zero, then
/// integrates back to levels.
std::vector<double> forecast(const Model& model, std::size_t steps);

/// The same recursion but in the differenced domain only.
std::vector<double> forecast_differenced(const Model& model, std::size_t steps);

std::string to_text(const Model& model);
Model from_text(std::string_view text);

}  // namespace stockcast::sarima
