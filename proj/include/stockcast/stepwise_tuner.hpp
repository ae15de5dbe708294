#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace stockcast::tuner {

struct Parameter {
    std::string name;
    std::vector<double> candidates;
    double default_value = 0.0;
};

/// Ordered parameters. Stepwise search freezes them in declaration order.
class SearchSpace {
public:
    SearchSpace() = default;
    explicit SearchSpace(std::vector<Parameter> params);

    const std::vector<Parameter>& parameters() const noexcept { return params_; }
    std::size_t size() const noexcept { return params_.size(); }
    std::vector<double> defaults() const;

    std::size_t stepwise_count() const;  // sum of candidate counts
    std::size_t grid_count() const;      // product of candidate counts

private:
    std::vector<Parameter> params_;
};

/// Lower is better. Values are aligned with SearchSpace::parameters().
using Objective = std::function<double(const std::vector<double>&)>;

struct Trial {
    std::size_t index = 0;  // 0-based evaluation order
    std::vector<double> config;
    double objective = std::numeric_limits<double>::infinity();
    bool failed = false;
};

struct TrialLog {
    std::vector<std::string> names;
    std::vector<Trial> trials;
    std::vector<double> best_config;
    double best_value = std::numeric_limits<double>::infinity();
};

struct TunerOptions {
    std::size_t threads = 1;  // concurrent candidate evaluations within one step
    std::size_t grid_budget = 100000;
};

/// One parameter at a time: every candidate of parameter i is evaluated
/// with earlier parameters frozen and later ones at their defaults; the
/// earliest argmin is frozen. Exactly stepwise_count() evaluations.
/// Non-finite or throwing objectives are logged as failed (+inf).
TrialLog stepwise_optimize(const Objective& objective, const SearchSpace& space, const TunerOptions& opts = {});

/// Full Cartesian product in lexicographic candidate order (last parameter
/// varies fastest); the first minimum wins ties. Throws ConfigError when the
/// product exceeds the budget, before evaluating anything.
TrialLog grid_optimize(const Objective& objective, const SearchSpace& space, const TunerOptions& opts = {});

/// `eval_index,<param names...>,objective`, one row per trial.
std::string to_csv(const TrialLog& log);

}  // namespace stockcast::tuner
