#include "stockcast/stepwise_tuner.hpp"

#include "stockcast/errors.hpp"
#include "stockcast/io.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <set>
#include <thread>

namespace stockcast::tuner {

namespace {

double safe_eval(const Objective& objective, const std::vector<double>& config, bool& failed) {
    try {
        const double v = objective(config);
        failed = !std::isfinite(v);
        return failed ? std::numeric_limits<double>::infinity() : v;
    } catch (const std::exception&) {
        failed = true;
        return std::numeric_limits<double>::infinity();
    }
}

// Evaluates every config; results land in input order regardless of which
// worker ran them.
std::vector<Trial> evaluate_all(const Objective& objective, const std::vector<std::vector<double>>& configs,
                                std::size_t first_index, std::size_t threads) {
    std::vector<Trial> out(configs.size());
    const auto run = [&](std::size_t i) {
        out[i].index = first_index + i;
        out[i].config = configs[i];
        out[i].objective = safe_eval(objective, configs[i], out[i].failed);
    };
    const std::size_t workers = std::min(std::max<std::size_t>(1, threads), configs.size());
    if (workers <= 1) {
        for (std::size_t i = 0; i < configs.size(); ++i) run(i);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < configs.size(); i = next++) run(i);
        });
    }
    pool.clear();
    return out;
}

TrialLog start_log(const SearchSpace& space) {
    TrialLog log;
    for (const auto& p : space.parameters()) log.names.push_back(p.name);
    log.best_config = space.defaults();
    return log;
}

void record(TrialLog& log, std::vector<Trial> trials) {
    for (auto& t : trials) {
        if (t.objective < log.best_value) {
            log.best_value = t.objective;
            log.best_config = t.config;
        }
        log.trials.push_back(std::move(t));
    }
}

}  // namespace

SearchSpace::SearchSpace(std::vector<Parameter> params) : params_(std::move(params)) {
    std::set<std::string> names;
    for (const auto& p : params_) {
        if (p.candidates.empty()) throw ConfigError("parameter '" + p.name + "' has no candidates");
        if (std::find(p.candidates.begin(), p.candidates.end(), p.default_value) == p.candidates.end()) {
            throw ConfigError("default of '" + p.name + "' is not among its candidates");
        }
        if (!names.insert(p.name).second) throw ConfigError("duplicate parameter '" + p.name + "'");
    }
}

std::vector<double> SearchSpace::defaults() const {
    std::vector<double> d;
    for (const auto& p : params_) d.push_back(p.default_value);
    return d;
}

std::size_t SearchSpace::stepwise_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.candidates.size();
    return n;
}

std::size_t SearchSpace::grid_count() const {
    if (params_.empty()) return 0;
    std::size_t n = 1;
    for (const auto& p : params_) {
        if (n > std::numeric_limits<std::size_t>::max() / p.candidates.size()) {
            return std::numeric_limits<std::size_t>::max();
        }
        n *= p.candidates.size();
    }
    return n;
}

TrialLog stepwise_optimize(const Objective& objective, const SearchSpace& space, const TunerOptions& opts) {
    TrialLog log = start_log(space);
    std::vector<double> current = space.defaults();
    for (std::size_t i = 0; i < space.size(); ++i) {
        const auto& param = space.parameters()[i];
        std::vector<std::vector<double>> configs;
        for (double c : param.candidates) {
            auto cfg = current;
            cfg[i] = c;
            configs.push_back(std::move(cfg));
        }
        auto trials = evaluate_all(objective, configs, log.trials.size(), opts.threads);
        std::size_t best = 0;
        for (std::size_t k = 1; k < trials.size(); ++k) {
            if (trials[k].objective < trials[best].objective) best = k;
        }
        current[i] = param.candidates[best];
        record(log, std::move(trials));
    }
    // The frozen path is the reported optimum; its value was logged at the last step.
    if (space.size() > 0) {
        log.best_config = current;
        log.best_value = std::numeric_limits<double>::infinity();
        for (const auto& t : log.trials) {
            if (t.config == current) log.best_value = std::min(log.best_value, t.objective);
        }
    }
    return log;
}

TrialLog grid_optimize(const Objective& objective, const SearchSpace& space, const TunerOptions& opts) {
    const std::size_t total = space.grid_count();
    if (total > opts.grid_budget) {
        throw ConfigError("grid of " + std::to_string(total) + " evaluations exceeds the budget of " +
                          std::to_string(opts.grid_budget));
    }
    TrialLog log = start_log(space);
    if (total == 0) return log;
    std::vector<std::vector<double>> configs;
    configs.reserve(total);
    std::vector<std::size_t> digits(space.size(), 0);
    for (std::size_t n = 0; n < total; ++n) {
        std::vector<double> cfg(space.size());
        for (std::size_t i = 0; i < space.size(); ++i) cfg[i] = space.parameters()[i].candidates[digits[i]];
        configs.push_back(std::move(cfg));
        for (std::size_t i = space.size(); i-- > 0;) {
            if (++digits[i] < space.parameters()[i].candidates.size()) break;
            digits[i] = 0;
        }
    }
    record(log, evaluate_all(objective, configs, 0, opts.threads));
    return log;
}

std::string to_csv(const TrialLog& log) {
    std::string out = "eval_index";
    for (const auto& n : log.names) out += "," + n;
    out += ",objective\n";
    for (const auto& t : log.trials) {
        out += std::to_string(t.index);
        for (double v : t.config) out += "," + io::format_double(v);
        out += "," + io::format_double(t.objective) + "\n";
    }
    return out;
}

}  // namespace stockcast::tuner
