#include "stockcast/additive.hpp"

#include "stockcast/errors.hpp"
#include "stockcast/io.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace stockcast::additive {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kRankTolerance = 1e-10;

Index idx(std::size_t v) { return static_cast<Index>(v); }

double soft_threshold(double x, double t) {
    if (x > t) return x - t;
    if (x < -t) return x + t;
    return 0.0;
}

// Least squares on a fixed design with column normalization and a rank
// check. Empty designs are allowed and project nothing.
class Projector {
public:
    explicit Projector(const MatrixXd& design) : design_(design) {
        norms_ = VectorXd::Ones(design.cols());
        if (design.cols() == 0) return;
        for (Index c = 0; c < design.cols(); ++c) {
            const double n = design.col(c).norm();
            if (!(n > 0.0)) throw ModelError("ill-conditioned fit: design column " + std::to_string(c) + " is zero");
            norms_(c) = n;
        }
        normalized_ = design * norms_.cwiseInverse().asDiagonal();
        qr_.compute(normalized_);
        qr_.setThreshold(kRankTolerance);
        if (qr_.rank() < design.cols()) {
            throw ModelError("ill-conditioned fit: design has rank " + std::to_string(qr_.rank()) + " < " +
                             std::to_string(design.cols()) + " columns");
        }
    }

    Index cols() const { return design_.cols(); }

    /// Coefficients of the least-squares fit of v on the raw design.
    VectorXd solve(const VectorXd& v) const {
        if (design_.cols() == 0) return VectorXd(0);
        return qr_.solve(v).cwiseQuotient(norms_);
    }

    MatrixXd solve(const MatrixXd& v) const {
        if (design_.cols() == 0) return MatrixXd(0, v.cols());
        return norms_.cwiseInverse().asDiagonal() * qr_.solve(v);
    }

    VectorXd residual(const VectorXd& v) const {
        if (design_.cols() == 0) return v;
        return v - design_ * solve(v);
    }

    MatrixXd residual(const MatrixXd& v) const {
        if (design_.cols() == 0) return v;
        return v - design_ * solve(v);
    }

private:
    MatrixXd design_;
    MatrixXd normalized_;
    VectorXd norms_;
    Eigen::ColPivHouseholderQR<MatrixXd> qr_;
};

// Columns shared by both trend kinds: seasonal harmonics, holidays and
// exogenous regressors. All-zero holiday/exogenous columns are dropped and
// keep a zero coefficient.
struct SharedBlock {
    MatrixXd columns;
    std::vector<std::size_t> seasonal_offsets;  // first column of each seasonality
    std::vector<std::optional<Index>> holiday_cols;
    std::vector<std::optional<Index>> exog_cols;
};

SharedBlock build_shared(std::size_t n, std::span<const Date> dates, const MatrixXd* exog,
                         const FitConfig& cfg) {
    SharedBlock block;
    std::vector<VectorXd> cols;
    for (const auto& s : cfg.seasonalities) {
        block.seasonal_offsets.push_back(cols.size());
        for (std::size_t k = 1; k <= s.order; ++k) {
            VectorXd c(idx(n)), d(idx(n));
            for (std::size_t i = 0; i < n; ++i) {
                const double x = kTwoPi * static_cast<double>(k) * static_cast<double>(i) / s.period;
                c(idx(i)) = std::cos(x);
                d(idx(i)) = std::sin(x);
            }
            cols.push_back(std::move(c));
            cols.push_back(std::move(d));
        }
    }
    for (const auto& ev : cfg.holidays) {
        VectorXd c = VectorXd::Zero(idx(n));
        for (std::size_t i = 0; i < dates.size(); ++i) c(idx(i)) = ev.active(dates[i]) ? 1.0 : 0.0;
        if (c.any()) {
            block.holiday_cols.emplace_back(idx(cols.size()));
            cols.push_back(std::move(c));
        } else {
            block.holiday_cols.emplace_back(std::nullopt);
        }
    }
    if (exog != nullptr) {
        for (Index j = 0; j < exog->cols(); ++j) {
            if (exog->col(j).cwiseAbs().maxCoeff() > 0.0) {
                block.exog_cols.emplace_back(idx(cols.size()));
                cols.push_back(exog->col(j));
            } else {
                block.exog_cols.emplace_back(std::nullopt);
            }
        }
    }
    block.columns.resize(idx(n), idx(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) block.columns.col(idx(c)) = cols[c];
    return block;
}

// Unpacks shared-block coefficients (already in y units) into the model.
void assign_shared(Model& model, const SharedBlock& block, const VectorXd& coef, Index offset,
                   const FitConfig& cfg) {
    model.seasonalities.clear();
    for (std::size_t s = 0; s < cfg.seasonalities.size(); ++s) {
        Seasonality season;
        season.period = cfg.seasonalities[s].period;
        for (std::size_t k = 0; k < cfg.seasonalities[s].order; ++k) {
            const Index base = offset + idx(block.seasonal_offsets[s] + 2 * k);
            season.a.push_back(coef(base));
            season.b.push_back(coef(base + 1));
        }
        model.seasonalities.push_back(std::move(season));
    }
    model.holidays.events = cfg.holidays;
    for (std::size_t j = 0; j < cfg.holidays.size(); ++j) {
        model.holidays.events[j].beta = block.holiday_cols[j] ? coef(offset + *block.holiday_cols[j]) : 0.0;
    }
    model.exog_coefs.clear();
    for (const auto& c : block.exog_cols) model.exog_coefs.push_back(c ? coef(offset + *c) : 0.0);
}

// Lasso on a Gram system: minimizes d'Gd - 2c'd + lambda |d|_1, which is the
// profiled residual sum of squares plus the L1 penalty.
VectorXd coordinate_descent(const MatrixXd& gram, const VectorXd& cross, double lambda, VectorXd start,
                            std::size_t max_iter) {
    VectorXd d = std::move(start);
    const double scale = std::max(1.0, cross.cwiseAbs().maxCoeff());
    for (std::size_t it = 0; it < max_iter; ++it) {
        double max_change = 0.0;
        for (Index j = 0; j < d.size(); ++j) {
            const double rho = cross(j) - gram.row(j).dot(d) + gram(j, j) * d(j);
            const double updated = soft_threshold(rho, lambda / 2.0) / gram(j, j);
            max_change = std::max(max_change, std::abs(updated - d(j)) * gram(j, j));
            d(j) = updated;
        }
        if (max_change < 1e-12 * scale) break;
    }
    return d;
}

std::vector<double> to_std(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Model fit_linear(const VectorXd& y, const SharedBlock& shared, const std::vector<double>& cps,
                 const FitConfig& cfg) {
    const Index n = y.size();
    MatrixXd unpenalized(n, 2 + shared.columns.cols());
    unpenalized.col(0).setOnes();
    for (Index i = 0; i < n; ++i) unpenalized(i, 1) = static_cast<double>(i);
    unpenalized.rightCols(shared.columns.cols()) = shared.columns;
    const Projector base(unpenalized);

    VectorXd delta = VectorXd::Zero(idx(cps.size()));
    MatrixXd hinge(n, idx(cps.size()));
    if (!cps.empty()) {
        for (std::size_t j = 0; j < cps.size(); ++j) {
            for (Index i = 0; i < n; ++i) hinge(i, idx(j)) = std::max(0.0, static_cast<double>(i) - cps[j]);
        }
        const MatrixXd h_res = base.residual(hinge);
        const VectorXd y_res = base.residual(y);
        const MatrixXd gram = h_res.transpose() * h_res;
        const VectorXd cross = h_res.transpose() * y_res;
        Eigen::ColPivHouseholderQR<MatrixXd> qr(h_res);
        qr.setThreshold(kRankTolerance);
        const bool full_rank = qr.rank() == h_res.cols();
        if (cfg.lambda_delta <= 0.0) {
            if (!full_rank) throw ModelError("ill-conditioned fit: changepoint columns are collinear");
            delta = qr.solve(y_res);
        } else {
            VectorXd start = full_rank ? VectorXd(qr.solve(y_res)) : VectorXd::Zero(h_res.cols());
            delta = coordinate_descent(gram, cross, cfg.lambda_delta, std::move(start), cfg.max_iter);
        }
    }
    const VectorXd rest = cps.empty() ? y : VectorXd(y - hinge * delta);
    const VectorXd coef = base.solve(rest);

    Model model;
    model.trend.kind = TrendKind::Linear;
    model.trend.m = coef(0);
    model.trend.k = coef(1);
    model.trend.changepoints = cps;
    model.trend.delta = to_std(delta);
    model.trend.gamma = tie_offsets(model.trend);
    assign_shared(model, shared, coef, 2, cfg);
    return model;
}

// Logistic trend in normalized units (tau = t / span, y / capacity).
struct LogisticProblem {
    const VectorXd& y_scaled;
    const Projector& shared;
    std::vector<double> cps_scaled;
    double lambda_scaled;

    VectorXd trend(const VectorXd& theta) const {
        TrendSpec spec;
        spec.kind = TrendKind::Logistic;
        spec.capacity = 1.0;
        spec.k = theta(0);
        spec.m = theta(1);
        spec.changepoints = cps_scaled;
        spec.delta.assign(theta.data() + 2, theta.data() + theta.size());
        spec.gamma = tie_offsets(spec);
        const Index n = y_scaled.size();
        const double span = std::max<double>(1.0, static_cast<double>(n - 1));
        VectorXd g(n);
        for (Index i = 0; i < n; ++i) g(i) = eval_trend(static_cast<double>(i) / span, spec);
        return g;
    }

    double smooth(const VectorXd& theta) const {
        return shared.residual(VectorXd(y_scaled - trend(theta))).squaredNorm();
    }

    double penalty(const VectorXd& theta) const {
        return lambda_scaled * theta.tail(theta.size() - 2).lpNorm<1>();
    }
};

Model fit_logistic(const VectorXd& y, const SharedBlock& shared, const std::vector<double>& cps,
                   const FitConfig& cfg) {
    if (!(cfg.capacity > 0.0)) throw ModelError("logistic trend requires a positive capacity");
    const Index n = y.size();
    const double cap = cfg.capacity;
    const double span = std::max<double>(1.0, static_cast<double>(n - 1));
    const VectorXd y_scaled = y / cap;
    const Projector proj(shared.columns);

    LogisticProblem problem{y_scaled, proj, {}, cfg.lambda_delta / (cap * cap * span)};
    for (double s : cps) problem.cps_scaled.push_back(s / span);

    // Start from a straight-line fit of the logit.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (Index i = 0; i < n; ++i) {
        const double x = static_cast<double>(i) / span;
        const double p = std::clamp(y_scaled(i), 1e-3, 1.0 - 1e-3);
        const double z = std::log(p / (1.0 - p));
        sx += x;
        sy += z;
        sxx += x * x;
        sxy += x * z;
    }
    const double nn = static_cast<double>(n);
    double slope = (nn * sxy - sx * sy) / (nn * sxx - sx * sx);
    if (!std::isfinite(slope) || std::abs(slope) < 1e-3) slope = 1e-3;
    const double intercept = (sy - slope * sx) / nn;

    VectorXd theta = VectorXd::Zero(idx(2 + cps.size()));
    theta(0) = slope;
    theta(1) = -intercept / slope;

    const auto objective = [&problem](const VectorXd& th) { return problem.smooth(th) + problem.penalty(th); };
    double current = objective(theta);
    double step = 1e-2;
    const double h = 1e-7;
    for (std::size_t it = 0; it < cfg.max_iter; ++it) {
        VectorXd grad(theta.size());
        for (Index j = 0; j < theta.size(); ++j) {
            VectorXd up = theta, down = theta;
            up(j) += h;
            down(j) -= h;
            grad(j) = (problem.smooth(up) - problem.smooth(down)) / (2.0 * h);
        }
        bool improved = false;
        VectorXd candidate;
        double value = current;
        step *= 2.0;
        while (step > 1e-16) {
            candidate = theta - step * grad;
            for (Index j = 2; j < candidate.size(); ++j) {
                candidate(j) = soft_threshold(candidate(j), step * problem.lambda_scaled);
            }
            value = objective(candidate);
            if (std::isfinite(value) && value < current) {
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if (!improved) break;
        const double gain = current - value;
        theta = candidate;
        current = value;
        if (gain < 1e-15 * std::max(1.0, current)) break;
    }

    const VectorXd coef = proj.solve(VectorXd(y_scaled - problem.trend(theta))) * cap;
    Model model;
    model.trend.kind = TrendKind::Logistic;
    model.trend.capacity = cap;
    model.trend.k = theta(0) / span;
    model.trend.m = theta(1) * span;
    model.trend.changepoints = cps;
    for (Index j = 2; j < theta.size(); ++j) model.trend.delta.push_back(theta(j) / span);
    model.trend.gamma = tie_offsets(model.trend);
    assign_shared(model, shared, coef, 0, cfg);
    return model;
}

}  // namespace

std::vector<double> tie_offsets(const TrendSpec& spec) {
    const std::size_t j_count = spec.changepoints.size();
    std::vector<double> gamma(j_count, 0.0);
    if (spec.delta.size() != j_count) throw ModelError("changepoint and delta counts differ");
    if (spec.kind == TrendKind::Linear) {
        for (std::size_t j = 0; j < j_count; ++j) gamma[j] = -spec.changepoints[j] * spec.delta[j];
        return gamma;
    }
    double rate_before = spec.k;
    double offset = spec.m;
    for (std::size_t j = 0; j < j_count; ++j) {
        const double rate_after = rate_before + spec.delta[j];
        if (std::abs(rate_after) > 1e-300) {
            gamma[j] = (spec.changepoints[j] - offset) * (1.0 - rate_before / rate_after);
        }
        offset += gamma[j];
        rate_before = rate_after;
    }
    return gamma;
}

double eval_trend(double t, const TrendSpec& spec) {
    double rate = spec.k;
    double offset = spec.m;
    for (std::size_t j = 0; j < spec.changepoints.size(); ++j) {
        if (t >= spec.changepoints[j]) {
            rate += spec.delta[j];
            offset += spec.gamma.empty() ? 0.0 : spec.gamma[j];
        }
    }
    if (spec.kind == TrendKind::Linear) return rate * t + offset;
    return spec.capacity / (1.0 + std::exp(-rate * (t - offset)));
}

double eval_seasonality(double t, const Seasonality& spec) {
    double s = 0.0;
    for (std::size_t k = 0; k < spec.a.size(); ++k) {
        const double x = kTwoPi * static_cast<double>(k + 1) * t / spec.period;
        s += spec.a[k] * std::cos(x) + spec.b[k] * std::sin(x);
    }
    return s;
}

bool HolidayEvent::active(const Date& d) const { return std::binary_search(dates.begin(), dates.end(), d); }

double eval_holiday(const Date& date, const HolidaySpec& spec, std::span<const double> exog_coefs,
                    std::span<const double> exog_row) {
    double h = 0.0;
    for (const auto& ev : spec.events) {
        if (ev.active(date)) h += ev.beta;
    }
    if (exog_row.empty()) return h;
    if (exog_row.size() != exog_coefs.size()) {
        throw DataError("exogenous row has " + std::to_string(exog_row.size()) + " values, model expects " +
                        std::to_string(exog_coefs.size()));
    }
    for (std::size_t j = 0; j < exog_row.size(); ++j) h += exog_coefs[j] * exog_row[j];
    return h;
}

double model_value(const Model& model, double t, const std::optional<Date>& date, std::span<const double> exog_row) {
    double v = eval_trend(t, model.trend);
    for (const auto& s : model.seasonalities) v += eval_seasonality(t, s);
    if (date) {
        v += eval_holiday(*date, model.holidays, model.exog_coefs, exog_row);
    } else if (!exog_row.empty()) {
        v += eval_holiday(Date{}, HolidaySpec{}, model.exog_coefs, exog_row);
    }
    return v;
}

std::vector<double> place_changepoints(std::size_t n_obs, std::size_t count, double range) {
    std::vector<double> out;
    if (count == 0 || n_obs < 3) return out;
    const double hist = std::floor(std::clamp(range, 0.0, 1.0) * static_cast<double>(n_obs));
    for (std::size_t j = 1; j <= count; ++j) {
        const double s = std::round(static_cast<double>(j) * hist / static_cast<double>(count));
        if (s < 1.0 || s > static_cast<double>(n_obs - 1)) continue;
        if (out.empty() || s > out.back()) out.push_back(s);
    }
    return out;
}

Model fit(const FitInput& input, const FitConfig& config) {
    const std::size_t n = input.y.size();
    double max_period = 0.0;
    for (const auto& s : config.seasonalities) {
        if (!(s.period > 0.0) || s.order == 0) throw ModelError("seasonality needs a positive period and order");
        max_period = std::max(max_period, s.period);
    }
    if (n < 2 || static_cast<double>(n) < 2.0 * max_period) {
        throw ModelError("series too short: " + std::to_string(n) + " bars for a maximum period of " +
                         io::format_double(max_period));
    }
    if (!input.dates.empty() && input.dates.size() != n) throw DataError("dates do not match series length");
    if (input.exog != nullptr && static_cast<std::size_t>(input.exog->rows()) != n) {
        throw DataError("exogenous regressors do not match series length");
    }
    VectorXd y(idx(n));
    for (std::size_t i = 0; i < n; ++i) y(idx(i)) = input.y[i];
    if (!y.allFinite()) throw DataError("series contains non-finite values");

    FitConfig cfg = config;
    for (auto& ev : cfg.holidays) std::sort(ev.dates.begin(), ev.dates.end());
    const SharedBlock shared = build_shared(n, input.dates, input.exog, cfg);
    const auto cps = place_changepoints(n, cfg.n_changepoints, cfg.changepoint_range);

    Model model = cfg.trend == TrendKind::Linear ? fit_linear(y, shared, cps, cfg) : fit_logistic(y, shared, cps, cfg);
    model.n_obs = n;
    if (!input.dates.empty()) model.last_date = input.dates.back();

    const auto fitted = fitted_values(model, n, input.dates, input.exog);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += input.y[i] - fitted[i];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = input.y[i] - fitted[i] - mean;
        ss += r * r;
    }
    model.residual_sigma = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    return model;
}

std::vector<double> fitted_values(const Model& model, std::size_t n, std::span<const Date> dates,
                                  const MatrixXd* exog) {
    std::vector<double> out(n);
    std::vector<double> row;
    for (std::size_t i = 0; i < n; ++i) {
        std::optional<Date> d;
        if (!dates.empty()) d = dates[i];
        row.clear();
        if (exog != nullptr) {
            for (Index j = 0; j < exog->cols(); ++j) row.push_back((*exog)(idx(i), j));
        }
        out[i] = model_value(model, static_cast<double>(i), d, row);
    }
    return out;
}

double empirical_quantile(std::vector<double>& values, double q) {
    if (values.empty()) throw ModelError("quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

Interval predict_with_interval(const Model& model, std::size_t horizon, const IntervalConfig& cfg,
                               const MatrixXd* future_exog) {
    if (!(cfg.level > 0.0 && cfg.level < 1.0)) throw ModelError("interval level must lie in (0, 1)");
    if (cfg.n_sims < 100) throw ModelError("at least 100 simulations are required");
    if (future_exog != nullptr &&
        (static_cast<std::size_t>(future_exog->rows()) < horizon ||
         static_cast<std::size_t>(future_exog->cols()) != model.exog_coefs.size())) {
        throw DataError("future exogenous rows do not cover the horizon");
    }

    std::vector<std::optional<Date>> dates(horizon);
    if (model.last_date) {
        const auto next = next_trading_dates(*model.last_date, horizon);
        for (std::size_t h = 0; h < horizon; ++h) dates[h] = next[h];
    }
    std::vector<std::vector<double>> rows(horizon, std::vector<double>(model.exog_coefs.size(), 0.0));
    if (future_exog != nullptr) {
        for (std::size_t h = 0; h < horizon; ++h) {
            for (std::size_t j = 0; j < model.exog_coefs.size(); ++j) rows[h][j] = (*future_exog)(idx(h), idx(j));
        }
    }

    Interval out;
    std::vector<double> season_holiday(horizon);
    for (std::size_t h = 0; h < horizon; ++h) {
        const double t = static_cast<double>(model.n_obs + h);
        out.mean.push_back(model_value(model, t, dates[h], rows[h]));
        season_holiday[h] = out.mean[h] - eval_trend(t, model.trend);
    }

    const std::size_t n_cp = model.trend.changepoints.size();
    const double cp_rate = model.n_obs > 0 ? static_cast<double>(n_cp) / static_cast<double>(model.n_obs) : 0.0;
    double delta_scale = 0.0;
    for (double d : model.trend.delta) delta_scale += std::abs(d);
    if (n_cp > 0) delta_scale /= static_cast<double>(n_cp);

    std::vector<std::vector<double>> samples(horizon, std::vector<double>(cfg.n_sims));
    for (std::size_t p = 0; p < cfg.n_sims; ++p) {
        std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                          static_cast<std::uint32_t>(p), static_cast<std::uint32_t>(p >> 32)};
        std::mt19937_64 rng(seq);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::normal_distribution<double> noise(0.0, 1.0);
        TrendSpec trend = model.trend;
        if (delta_scale > 0.0) {
            for (std::size_t h = 0; h < horizon; ++h) {
                if (unit(rng) < cp_rate) {
                    const double u = unit(rng) - 0.5;
                    const double d = -delta_scale * (u < 0 ? -1.0 : 1.0) * std::log(1.0 - 2.0 * std::abs(u));
                    trend.changepoints.push_back(static_cast<double>(model.n_obs + h));
                    trend.delta.push_back(d);
                }
            }
            trend.gamma = tie_offsets(trend);
        }
        for (std::size_t h = 0; h < horizon; ++h) {
            const double t = static_cast<double>(model.n_obs + h);
            const double eps = model.residual_sigma > 0.0 ? model.residual_sigma * noise(rng) : 0.0;
            samples[h][p] = eval_trend(t, trend) + season_holiday[h] + eps;
        }
    }
    const double lo_q = (1.0 - cfg.level) / 2.0;
    const double hi_q = 1.0 - lo_q;
    for (std::size_t h = 0; h < horizon; ++h) {
        out.lower.push_back(std::min(empirical_quantile(samples[h], lo_q), out.mean[h]));
        out.upper.push_back(std::max(empirical_quantile(samples[h], hi_q), out.mean[h]));
    }
    return out;
}

std::string to_text(const Model& model) {
    std::ostringstream os;
    const auto f = [](double v) { return io::format_double(v); };
    os << "stockcast-additive v1\n";
    os << "trend\t" << (model.trend.kind == TrendKind::Linear ? "linear" : "logistic") << '\n';
    os << "k\t" << f(model.trend.k) << '\n';
    os << "m\t" << f(model.trend.m) << '\n';
    os << "capacity\t" << f(model.trend.capacity) << '\n';
    os << "n_obs\t" << model.n_obs << '\n';
    os << "last_date\t" << (model.last_date ? format_date(*model.last_date) : "none") << '\n';
    os << "residual_sigma\t" << f(model.residual_sigma) << '\n';
    os << "changepoints\t" << model.trend.changepoints.size() << '\n';
    for (std::size_t j = 0; j < model.trend.changepoints.size(); ++j) {
        os << f(model.trend.changepoints[j]) << '\t' << f(model.trend.delta[j]) << '\t' << f(model.trend.gamma[j])
           << '\n';
    }
    os << "seasonalities\t" << model.seasonalities.size() << '\n';
    for (const auto& s : model.seasonalities) {
        os << f(s.period) << '\t' << s.order();
        for (double a : s.a) os << '\t' << f(a);
        for (double b : s.b) os << '\t' << f(b);
        os << '\n';
    }
    os << "holidays\t" << model.holidays.events.size() << '\n';
    for (const auto& ev : model.holidays.events) {
        os << ev.name << '\t' << f(ev.beta) << '\t' << ev.dates.size();
        for (const auto& d : ev.dates) os << '\t' << format_date(d);
        os << '\n';
    }
    os << "exogenous\t" << model.exog_coefs.size();
    for (double c : model.exog_coefs) os << '\t' << f(c);
    os << '\n';
    return os.str();
}

namespace {

class LineReader {
public:
    explicit LineReader(std::string_view text) : text_(text) {}

    std::vector<std::string> next() {
        if (pos_ >= text_.size()) throw DataError("truncated additive model text");
        auto end = text_.find('\n', pos_);
        if (end == std::string_view::npos) end = text_.size();
        std::string_view line = text_.substr(pos_, end - pos_);
        pos_ = end + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const auto tab = line.find('\t', start);
            fields.emplace_back(line.substr(start, tab == std::string_view::npos ? tab : tab - start));
            if (tab == std::string_view::npos) break;
            start = tab + 1;
        }
        return fields;
    }

    std::vector<std::string> keyed(std::string_view key, std::size_t min_fields) {
        auto f = next();
        if (f.empty() || f[0] != key || f.size() < min_fields) {
            throw DataError("additive model text: expected '" + std::string(key) + "'");
        }
        return f;
    }

private:
    std::string_view text_;
    std::size_t pos_ = 0;
};

std::size_t parse_count(const std::string& s) {
    const double v = io::parse_double(s);
    if (v < 0 || v != std::floor(v) || v > 1e9) throw DataError("invalid count '" + s + "'");
    return static_cast<std::size_t>(v);
}

}  // namespace

Model from_text(std::string_view text) {
    LineReader in(text);
    if (const auto header = in.next(); header.size() != 1 || header[0] != "stockcast-additive v1") {
        throw DataError("not a stockcast additive model (v1)");
    }
    Model m;
    const auto kind = in.keyed("trend", 2)[1];
    if (kind == "linear") {
        m.trend.kind = TrendKind::Linear;
    } else if (kind == "logistic") {
        m.trend.kind = TrendKind::Logistic;
    } else {
        throw DataError("unknown trend kind '" + kind + "'");
    }
    m.trend.k = io::parse_double(in.keyed("k", 2)[1]);
    m.trend.m = io::parse_double(in.keyed("m", 2)[1]);
    m.trend.capacity = io::parse_double(in.keyed("capacity", 2)[1]);
    m.n_obs = parse_count(in.keyed("n_obs", 2)[1]);
    if (const auto d = in.keyed("last_date", 2)[1]; d != "none") m.last_date = parse_date(d);
    m.residual_sigma = io::parse_double(in.keyed("residual_sigma", 2)[1]);
    const auto n_cp = parse_count(in.keyed("changepoints", 2)[1]);
    for (std::size_t j = 0; j < n_cp; ++j) {
        const auto f = in.next();
        if (f.size() != 3) throw DataError("malformed changepoint line");
        m.trend.changepoints.push_back(io::parse_double(f[0]));
        m.trend.delta.push_back(io::parse_double(f[1]));
        m.trend.gamma.push_back(io::parse_double(f[2]));
    }
    const auto n_season = parse_count(in.keyed("seasonalities", 2)[1]);
    for (std::size_t s = 0; s < n_season; ++s) {
        const auto f = in.next();
        if (f.size() < 2) throw DataError("malformed seasonality line");
        Seasonality season;
        season.period = io::parse_double(f[0]);
        const auto order = parse_count(f[1]);
        if (f.size() != 2 + 2 * order) throw DataError("seasonality line has wrong coefficient count");
        for (std::size_t k = 0; k < order; ++k) season.a.push_back(io::parse_double(f[2 + k]));
        for (std::size_t k = 0; k < order; ++k) season.b.push_back(io::parse_double(f[2 + order + k]));
        m.seasonalities.push_back(std::move(season));
    }
    const auto n_hol = parse_count(in.keyed("holidays", 2)[1]);
    for (std::size_t j = 0; j < n_hol; ++j) {
        const auto f = in.next();
        if (f.size() < 3) throw DataError("malformed holiday line");
        HolidayEvent ev;
        ev.name = f[0];
        ev.beta = io::parse_double(f[1]);
        const auto count = parse_count(f[2]);
        if (f.size() != 3 + count) throw DataError("holiday line has wrong date count");
        for (std::size_t d = 0; d < count; ++d) ev.dates.push_back(parse_date(f[3 + d]));
        m.holidays.events.push_back(std::move(ev));
    }
    const auto ex = in.keyed("exogenous", 2);
    const auto n_ex = parse_count(ex[1]);
    if (ex.size() != 2 + n_ex) throw DataError("exogenous line has wrong coefficient count");
    for (std::size_t j = 0; j < n_ex; ++j) m.exog_coefs.push_back(io::parse_double(ex[2 + j]));
    return m;
}

}  // namespace stockcast::additive
