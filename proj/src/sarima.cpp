#include "stockcast/sarima.hpp"

#include "stockcast/errors.hpp"
#include "stockcast/io.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace stockcast::sarima {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Product of two polynomials in L, coefficients in increasing degree.
std::vector<double> poly_mul(const std::vector<double>& p, const std::vector<double>& q) {
    std::vector<double> out(p.size() + q.size() - 1, 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
        for (std::size_t j = 0; j < q.size(); ++j) out[i + j] += p[i] * q[j];
    }
    return out;
}

// 1 + sign * sum c_i L^{i*stride}
std::vector<double> lag_poly(const std::vector<double>& c, std::size_t stride, double sign) {
    std::vector<double> p(c.size() * stride + 1, 0.0);
    p[0] = 1.0;
    for (std::size_t i = 0; i < c.size(); ++i) p[(i + 1) * stride] = sign * c[i];
    return p;
}

bool has_intercept(const Order& o) { return o.b + o.B == 0; }

struct Sparse {
    std::vector<std::size_t> lag;
    std::vector<double> coef;
};

Sparse nonzero(const std::vector<double>& dense) {
    Sparse s;
    for (std::size_t k = 0; k < dense.size(); ++k) {
        if (dense[k] != 0.0) {
            s.lag.push_back(k + 1);
            s.coef.push_back(dense[k]);
        }
    }
    return s;
}

std::size_t param_count(const Order& o) { return o.a + o.c + o.A + o.C + (has_intercept(o) ? 1 : 0); }

Coefficients decode(const Order& o, const std::vector<double>& x) {
    Coefficients c;
    std::size_t at = 0;
    const auto take = [&](std::size_t n) {
        std::vector<double> v(x.begin() + static_cast<std::ptrdiff_t>(at), x.begin() + static_cast<std::ptrdiff_t>(at + n));
        at += n;
        return v;
    };
    c.phi = to_stationary(take(o.a));
    c.theta = to_stationary(take(o.c));
    for (auto& v : c.theta) v = -v;
    c.seasonal_phi = to_stationary(take(o.A));
    c.seasonal_theta = to_stationary(take(o.C));
    for (auto& v : c.seasonal_theta) v = -v;
    if (has_intercept(o)) c.intercept = x[at];
    return c;
}

struct SimplexResult {
    std::vector<double> x;
    double f = kInf;
    bool converged = false;
};

template <typename F>
SimplexResult nelder_mead(F&& f, std::vector<double> x0, const std::vector<double>& step, std::size_t max_iter,
                          double x_tol, double f_tol) {
    const std::size_t n = x0.size();
    std::vector<std::vector<double>> pts(n + 1, x0);
    for (std::size_t i = 0; i < n; ++i) pts[i + 1][i] += step[i];
    std::vector<double> vals(n + 1);
    for (std::size_t i = 0; i <= n; ++i) vals[i] = f(pts[i]);
    std::vector<std::size_t> order(n + 1);

    const auto blend = [n](const std::vector<double>& a, const std::vector<double>& b, double t) {
        std::vector<double> out(n);
        for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + t * (b[i] - a[i]);
        return out;
    };

    SimplexResult res;
    for (std::size_t it = 0; it < max_iter; ++it) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
        const std::size_t best = order.front(), worst = order.back(), second = order[n - 1];

        double x_spread = 0.0;
        for (std::size_t i = 0; i <= n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                x_spread = std::max(x_spread, std::abs(pts[i][j] - pts[best][j]) / (1.0 + std::abs(pts[best][j])));
            }
        }
        const double f_spread = vals[worst] - vals[best];
        if (std::isfinite(vals[best]) &&
            (x_spread <= x_tol || f_spread <= f_tol * (1e-300 + std::abs(vals[best])))) {
            res.converged = true;
            break;
        }

        std::vector<double> centroid(n, 0.0);
        for (std::size_t i : order) {
            if (i == worst) continue;
            for (std::size_t j = 0; j < n; ++j) centroid[j] += pts[i][j] / static_cast<double>(n);
        }
        const auto reflected = blend(centroid, pts[worst], -1.0);
        const double fr = f(reflected);
        if (fr < vals[best]) {
            const auto expanded = blend(centroid, pts[worst], -2.0);
            const double fe = f(expanded);
            if (fe < fr) {
                pts[worst] = expanded;
                vals[worst] = fe;
            } else {
                pts[worst] = reflected;
                vals[worst] = fr;
            }
            continue;
        }
        if (fr < vals[second]) {
            pts[worst] = reflected;
            vals[worst] = fr;
            continue;
        }
        const bool outside = fr < vals[worst];
        const auto contracted = outside ? blend(centroid, reflected, 0.5) : blend(centroid, pts[worst], 0.5);
        const double fc = f(contracted);
        if (fc < (outside ? fr : vals[worst])) {
            pts[worst] = contracted;
            vals[worst] = fc;
            continue;
        }
        for (std::size_t i = 0; i <= n; ++i) {
            if (i == best) continue;
            pts[i] = blend(pts[best], pts[i], 0.5);
            vals[i] = f(pts[i]);
        }
    }
    const auto best = static_cast<std::size_t>(std::min_element(vals.begin(), vals.end()) - vals.begin());
    res.x = pts[best];
    res.f = vals[best];
    return res;
}

template <typename F>
double gradient_norm(F&& f, const std::vector<double>& x) {
    double sq = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double h = 1e-6 * (1.0 + std::abs(x[i]));
        auto up = x, down = x;
        up[i] += h;
        down[i] -= h;
        const double g = (f(up) - f(down)) / (2.0 * h);
        sq += g * g;
    }
    return std::sqrt(sq);
}

}  // namespace

void Order::validate() const {
    if ((A > 0 || B > 0 || C > 0) && m < 1) throw ConfigError("seasonal terms require m >= 1");
    if (m == 0) throw ConfigError("season length must be at least 1");
    if (b > 2 || B > 3) throw ConfigError("differencing orders above b = 2 or B = 3 are not supported");
}

Differenced difference(std::span<const double> series, std::size_t b, std::size_t B, std::size_t m) {
    if (m == 0) throw ModelError("season length must be at least 1");
    if (series.size() <= b + B * m) {
        throw ModelError("series too short: " + std::to_string(series.size()) + " values for differencing that consumes " +
                         std::to_string(b + B * m));
    }
    Differenced out;
    std::vector<double> x(series.begin(), series.end());
    for (std::size_t k = 0; k < b + B; ++k) {
        const std::size_t lag = k < b ? 1 : m;
        out.state.lags.push_back(lag);
        out.state.heads.emplace_back(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(lag));
        out.state.tails.emplace_back(x.end() - static_cast<std::ptrdiff_t>(lag), x.end());
        std::vector<double> next(x.size() - lag);
        for (std::size_t i = 0; i < next.size(); ++i) next[i] = x[i + lag] - x[i];
        x = std::move(next);
    }
    out.values = std::move(x);
    return out;
}

std::vector<double> integrate(std::span<const double> differenced, const DifferenceState& state) {
    if (state.heads.size() != state.lags.size()) throw ModelError("difference state does not match its lags");
    std::vector<double> x(differenced.begin(), differenced.end());
    for (std::size_t k = state.lags.size(); k-- > 0;) {
        const std::size_t lag = state.lags[k];
        if (state.heads[k].size() != lag) throw ModelError("difference state does not match its lags");
        std::vector<double> level(x.size() + lag);
        std::copy(state.heads[k].begin(), state.heads[k].end(), level.begin());
        for (std::size_t i = 0; i < x.size(); ++i) level[i + lag] = x[i] + level[i];
        x = std::move(level);
    }
    return x;
}

std::vector<double> integrate_forecast(std::span<const double> differenced_forecast, const DifferenceState& state) {
    if (state.tails.size() != state.lags.size()) throw ModelError("difference state does not match its lags");
    std::vector<double> f(differenced_forecast.begin(), differenced_forecast.end());
    for (std::size_t k = state.lags.size(); k-- > 0;) {
        const std::size_t lag = state.lags[k];
        if (state.tails[k].size() != lag) throw ModelError("difference state does not match its lags");
        std::vector<double> ext(state.tails[k].begin(), state.tails[k].end());
        for (std::size_t j = 0; j < f.size(); ++j) ext.push_back(f[j] + ext[j]);
        f.assign(ext.begin() + static_cast<std::ptrdiff_t>(lag), ext.end());
    }
    return f;
}

std::vector<double> expand_ar(const Order& order, const Coefficients& coef) {
    const auto p = poly_mul(lag_poly(coef.phi, 1, -1.0), lag_poly(coef.seasonal_phi, order.m, -1.0));
    std::vector<double> ar(p.size() - 1);
    for (std::size_t k = 1; k < p.size(); ++k) ar[k - 1] = -p[k];
    return ar;
}

std::vector<double> expand_ma(const Order& order, const Coefficients& coef) {
    const auto p = poly_mul(lag_poly(coef.theta, 1, 1.0), lag_poly(coef.seasonal_theta, order.m, 1.0));
    return std::vector<double>(p.begin() + 1, p.end());
}

std::vector<double> css_residuals(std::span<const double> w, const Order& order, const Coefficients& coef) {
    const auto ar_dense = expand_ar(order, coef);
    const auto ar = nonzero(ar_dense);
    const auto ma = nonzero(expand_ma(order, coef));
    const double mu = has_intercept(order) ? coef.intercept : 0.0;
    const std::size_t start = ar_dense.size();
    std::vector<double> e(w.size(), 0.0);
    for (std::size_t t = start; t < w.size(); ++t) {
        double v = w[t] - mu;
        for (std::size_t k = 0; k < ar.lag.size(); ++k) v -= ar.coef[k] * (w[t - ar.lag[k]] - mu);
        for (std::size_t k = 0; k < ma.lag.size(); ++k) {
            if (ma.lag[k] <= t) v -= ma.coef[k] * e[t - ma.lag[k]];
        }
        e[t] = v;
    }
    return e;
}

double css_loss(std::span<const double> w, const Order& order, const Coefficients& coef) {
    const auto e = css_residuals(w, order, coef);
    double loss = 0.0;
    for (double v : e) loss += v * v;
    if (!std::isfinite(loss)) throw ModelError("conditional residual recursion diverged");
    return loss;
}

// Partial autocorrelations stay strictly inside (-1, 1) even when tanh rounds to 1.
constexpr double kMaxPartial = 1.0 - 1e-7;

std::vector<double> to_stationary(std::span<const double> unconstrained) {
    std::vector<double> phi;
    for (std::size_t k = 0; k < unconstrained.size(); ++k) {
        const double r = kMaxPartial * std::tanh(unconstrained[k]);
        std::vector<double> next(k + 1);
        for (std::size_t j = 0; j < k; ++j) next[j] = phi[j] - r * phi[k - 1 - j];
        next[k] = r;
        phi = std::move(next);
    }
    return phi;
}

std::vector<double> from_stationary(std::span<const double> coefficients) {
    std::vector<double> phi(coefficients.begin(), coefficients.end());
    std::vector<double> u(phi.size());
    for (std::size_t k = phi.size(); k-- > 0;) {
        const double r = phi[k];
        if (!(std::abs(r) < kMaxPartial)) throw ModelError("coefficients are not inside the stationary region");
        u[k] = std::atanh(r / kMaxPartial);
        std::vector<double> prev(k);
        for (std::size_t j = 0; j < k; ++j) prev[j] = (phi[j] + r * phi[k - 1 - j]) / (1.0 - r * r);
        phi = std::move(prev);
    }
    return u;
}

double min_root_modulus(std::span<const double> coefficients, int sign) {
    std::size_t degree = coefficients.size();
    while (degree > 0 && coefficients[degree - 1] == 0.0) --degree;
    if (degree == 0) return kInf;
    // Companion matrix of the monic polynomial z^d + ... built from 1 + s*sum c_i z^i.
    const double lead = sign * coefficients[degree - 1];
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(degree), static_cast<Eigen::Index>(degree));
    for (std::size_t i = 0; i < degree; ++i) {
        const double a_i = i == 0 ? 1.0 : sign * coefficients[i - 1];
        companion(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(degree - 1)) = -a_i / lead;
        if (i > 0) companion(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i - 1)) = 1.0;
    }
    Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
    return solver.eigenvalues().cwiseAbs().minCoeff();
}

Model from_parameters(std::span<const double> series, const Order& order, const Coefficients& coef) {
    order.validate();
    if (coef.phi.size() != order.a || coef.theta.size() != order.c || coef.seasonal_phi.size() != order.A ||
        coef.seasonal_theta.size() != order.C) {
        throw ModelError("coefficient counts do not match the order");
    }
    auto diff = difference(series, order.b, order.B, order.m);
    const std::size_t p = expand_ar(order, coef).size();
    const std::size_t q = expand_ma(order, coef).size();
    if (diff.values.size() <= p) throw ModelError("series too short for the autoregressive warm-up");

    Model model;
    model.order = order;
    model.coef = coef;
    model.n_obs = series.size();
    const auto e = css_residuals(diff.values, order, coef);
    double loss = 0.0;
    for (std::size_t t = p; t < e.size(); ++t) loss += e[t] * e[t];
    model.sigma2 = loss / static_cast<double>(e.size() - p);
    model.differenced_tail.assign(diff.values.end() - static_cast<std::ptrdiff_t>(p), diff.values.end());
    const std::size_t q_keep = std::min(q, e.size());
    model.residual_tail.assign(q - q_keep, 0.0);
    model.residual_tail.insert(model.residual_tail.end(), e.end() - static_cast<std::ptrdiff_t>(q_keep), e.end());
    model.diff_state = std::move(diff.state);
    if (static_cast<double>(order.b + order.B * order.m) > 0.2 * static_cast<double>(series.size())) {
        model.warnings.push_back("differencing consumes more than 20% of the series");
    }
    return model;
}

Model fit(std::span<const double> series, const Order& order, const FitConfig& cfg) {
    order.validate();
    const auto diff = difference(series, order.b, order.B, order.m);
    const std::vector<double>& w = diff.values;
    const std::size_t p = order.a + order.A * order.m;
    const std::size_t k = param_count(order);
    if (w.size() < p + std::max<std::size_t>(10, 2 * k)) {
        throw ModelError("series too short: " + std::to_string(w.size()) + " differenced values for " +
                         std::to_string(k) + " parameters after a warm-up of " + std::to_string(p));
    }

    const double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
    double var = 0.0;
    for (double v : w) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(w.size()));

    const auto objective = [&](const std::vector<double>& x) {
        try {
            return css_loss(w, order, decode(order, x));
        } catch (const ModelError&) {
            return kInf;
        }
    };

    std::vector<double> x0(k, 0.0);
    std::vector<double> step(k, 0.1);
    if (has_intercept(order)) {
        x0.back() = mean;
        step.back() = 0.1 * sd + 1e-3;
    }

    SimplexResult best{x0, objective(x0), true};
    if (k > 0) {
        const auto run = [&](std::vector<double> start) {
            auto r = nelder_mead(objective, std::move(start), step, cfg.max_iter, cfg.x_tolerance, cfg.f_tolerance);
            // A fresh simplex at the optimum guards against premature collapse.
            if (r.converged) {
                auto polished = nelder_mead(objective, r.x, step, cfg.max_iter, cfg.x_tolerance, cfg.f_tolerance);
                if (polished.f <= r.f) r = polished;
            }
            return r;
        };
        best = run(x0);
        std::mt19937_64 rng(cfg.seed);
        std::normal_distribution<double> jitter(0.0, 0.5);
        for (std::size_t r = 0; r < cfg.restarts; ++r) {
            auto start = x0;
            for (std::size_t i = 0; i < k; ++i) start[i] += jitter(rng) * (has_intercept(order) && i + 1 == k ? sd : 1.0);
            auto result = run(std::move(start));
            if (result.f < best.f || (!best.converged && result.converged && result.f <= best.f)) best = result;
        }
        if (!best.converged || !std::isfinite(best.f)) {
            throw ModelError("CSS optimizer did not converge after " + std::to_string(cfg.max_iter) +
                             " iterations (gradient norm " + io::format_double(gradient_norm(objective, best.x)) + ")");
        }
    }
    return from_parameters(series, order, decode(order, best.x));
}

std::vector<double> forecast_differenced(const Model& model, std::size_t steps) {
    if (steps == 0) throw ModelError("forecast horizon must be positive");
    const auto ar = expand_ar(model.order, model.coef);
    const auto ma = expand_ma(model.order, model.coef);
    if (model.differenced_tail.size() != ar.size() || model.residual_tail.size() != ma.size()) {
        throw ModelError("model tails do not match its order");
    }
    const double mu = has_intercept(model.order) ? model.coef.intercept : 0.0;
    std::vector<double> y;
    for (double v : model.differenced_tail) y.push_back(v - mu);
    std::vector<double> e = model.residual_tail;
    const std::size_t y0 = y.size();
    const std::size_t e0 = e.size();
    std::vector<double> out;
    for (std::size_t h = 0; h < steps; ++h) {
        double v = 0.0;
        for (std::size_t k = 1; k <= ar.size(); ++k) v += ar[k - 1] * y[y0 + h - k];
        for (std::size_t k = 1; k <= ma.size(); ++k) {
            if (k > h) v += ma[k - 1] * e[e0 + h - k];
        }
        y.push_back(v);
        e.push_back(0.0);
        out.push_back(v + mu);
    }
    return out;
}

std::vector<double> forecast(const Model& model, std::size_t steps) {
    return integrate_forecast(forecast_differenced(model, steps), model.diff_state);
}

std::string to_text(const Model& model) {
    std::ostringstream os;
    const auto list = [&os](std::string_view key, const std::vector<double>& v) {
        os << key << '\t' << v.size();
        for (double x : v) os << '\t' << io::format_double(x);
        os << '\n';
    };
    const auto& o = model.order;
    os << "stockcast-sarima v1\n";
    os << "order\t" << o.a << '\t' << o.b << '\t' << o.c << '\t' << o.A << '\t' << o.B << '\t' << o.C << '\t' << o.m
       << '\n';
    list("phi", model.coef.phi);
    list("theta", model.coef.theta);
    list("seasonal_phi", model.coef.seasonal_phi);
    list("seasonal_theta", model.coef.seasonal_theta);
    os << "intercept\t" << io::format_double(model.coef.intercept) << '\n';
    os << "sigma2\t" << io::format_double(model.sigma2) << '\n';
    os << "n_obs\t" << model.n_obs << '\n';
    os << "passes\t" << model.diff_state.lags.size() << '\n';
    for (std::size_t k = 0; k < model.diff_state.lags.size(); ++k) {
        list("head", model.diff_state.heads[k]);
        list("tail", model.diff_state.tails[k]);
    }
    list("differenced_tail", model.differenced_tail);
    list("residual_tail", model.residual_tail);
    return os.str();
}

Model from_text(std::string_view text) {
    std::vector<std::vector<std::string>> lines;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        auto line = text.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        pos = end + 1;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::size_t s = 0;
        while (true) {
            const auto tab = line.find('\t', s);
            f.emplace_back(line.substr(s, tab == std::string_view::npos ? tab : tab - s));
            if (tab == std::string_view::npos) break;
            s = tab + 1;
        }
        lines.push_back(std::move(f));
    }
    std::size_t at = 0;
    const auto next = [&](std::string_view key) -> const std::vector<std::string>& {
        if (at >= lines.size() || lines[at][0] != key) throw DataError("sarima text: expected '" + std::string(key) + "'");
        return lines[at++];
    };
    const auto count = [](const std::string& s) {
        const double v = io::parse_double(s);
        if (v < 0 || v != std::floor(v) || v > 1e9) throw DataError("invalid count '" + s + "'");
        return static_cast<std::size_t>(v);
    };
    const auto list = [&](std::string_view key) {
        const auto& f = next(key);
        if (f.size() < 2 || f.size() != 2 + count(f[1])) throw DataError("malformed '" + std::string(key) + "' line");
        std::vector<double> v;
        for (std::size_t i = 2; i < f.size(); ++i) v.push_back(io::parse_double(f[i]));
        return v;
    };
    if (lines.empty() || lines[0].size() != 1 || lines[0][0] != "stockcast-sarima v1") {
        throw DataError("not a stockcast SARIMA model (v1)");
    }
    ++at;
    Model m;
    const auto& o = next("order");
    if (o.size() != 8) throw DataError("malformed order line");
    m.order = Order{count(o[1]), count(o[2]), count(o[3]), count(o[4]), count(o[5]), count(o[6]), count(o[7])};
    m.coef.phi = list("phi");
    m.coef.theta = list("theta");
    m.coef.seasonal_phi = list("seasonal_phi");
    m.coef.seasonal_theta = list("seasonal_theta");
    m.coef.intercept = io::parse_double(next("intercept").at(1));
    m.sigma2 = io::parse_double(next("sigma2").at(1));
    m.n_obs = count(next("n_obs").at(1));
    const auto passes = count(next("passes").at(1));
    for (std::size_t k = 0; k < passes; ++k) {
        m.diff_state.lags.push_back(k < m.order.b ? 1 : m.order.m);
        m.diff_state.heads.push_back(list("head"));
        m.diff_state.tails.push_back(list("tail"));
    }
    m.differenced_tail = list("differenced_tail");
    m.residual_tail = list("residual_tail");
    if (at != lines.size()) throw DataError("trailing lines in SARIMA text");
    return m;
}

}  // namespace stockcast::sarima
