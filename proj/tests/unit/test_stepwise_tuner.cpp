#include "catch_amalgamated.hpp"

#include "stockcast/errors.hpp"
#include "stockcast/stepwise_tuner.hpp"

#include <atomic>
#include <cmath>
#include <random>

using namespace stockcast;
using namespace stockcast::tuner;

namespace {

SearchSpace xy(std::vector<double> xs, std::vector<double> ys, double dx, double dy) {
    return SearchSpace({{"x", std::move(xs), dx}, {"y", std::move(ys), dy}});
}

}  // namespace

TEST_CASE("stepwise evaluates the sum and grid the product", "[tuner]") {
    const auto space = xy({0, 1, 2}, {0, 1, 2, 3}, 0, 0);
    std::atomic<int> calls{0};
    const Objective f = [&](const std::vector<double>& c) {
        ++calls;
        return c[0] + c[1];
    };
    CHECK(space.stepwise_count() == 7);
    CHECK(space.grid_count() == 12);
    CHECK(stepwise_optimize(f, space).trials.size() == 7);
    CHECK(calls == 7);
    calls = 0;
    CHECK(grid_optimize(f, space).trials.size() == 12);
    CHECK(calls == 12);
}

TEST_CASE("stepwise finds the optimum of a separable objective", "[tuner]") {
    const auto space = xy({-1, 0, 1}, {-2, 0, 2}, -1, 2);
    const Objective f = [](const std::vector<double>& c) { return c[0] * c[0] + c[1] * c[1]; };
    const auto log = stepwise_optimize(f, space);
    CHECK(log.best_config == std::vector<double>{0, 0});
    CHECK(log.best_value == 0.0);
    CHECK(grid_optimize(f, space).best_config == log.best_config);
}

TEST_CASE("stepwise trace on a non-separable objective", "[tuner]") {
    const auto space = xy({0, 1}, {0, 1}, 0, 1);
    const Objective f = [](const std::vector<double>& c) { return (c[0] - c[1]) * (c[0] - c[1]); };
    const auto log = stepwise_optimize(f, space);
    REQUIRE(log.trials.size() == 4);
    CHECK(log.trials[0].config == std::vector<double>{0, 1});
    CHECK(log.trials[1].config == std::vector<double>{1, 1});
    CHECK(log.trials[2].config == std::vector<double>{1, 0});
    CHECK(log.trials[3].config == std::vector<double>{1, 1});
    CHECK(log.best_config == std::vector<double>{1, 1});
    CHECK(log.best_value == 0.0);
}

TEST_CASE("ties go to the earliest candidate", "[tuner]") {
    const auto space = xy({3, 1, 2}, {5, 4}, 3, 5);
    const Objective flat = [](const std::vector<double>&) { return 1.0; };
    CHECK(stepwise_optimize(flat, space).best_config == std::vector<double>{3, 5});
    const auto grid = grid_optimize(flat, space);
    CHECK(grid.best_config == std::vector<double>{3, 5});
    CHECK(grid.trials[1].config == std::vector<double>{3, 4});
}

TEST_CASE("single-parameter spaces agree with grid", "[tuner]") {
    const SearchSpace space({{"a", {4, -1, 2, 7}, 4}});
    const Objective f = [](const std::vector<double>& c) { return std::abs(c[0] - 1.5); };
    const auto s = stepwise_optimize(f, space);
    const auto g = grid_optimize(f, space);
    REQUIRE(s.trials.size() == g.trials.size());
    for (std::size_t i = 0; i < s.trials.size(); ++i) {
        CHECK(s.trials[i].config == g.trials[i].config);
        CHECK(s.trials[i].objective == g.trials[i].objective);
    }
    CHECK(s.best_config == g.best_config);
}

TEST_CASE("grid dominates stepwise and both are deterministic", "[tuner][property]") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
        const double a = u(rng), b = u(rng), c = u(rng);
        const Objective f = [=](const std::vector<double>& v) {
            return std::sin(a * v[0] + b * v[1]) + c * v[0] * v[1] + v[2] * v[2] * a;
        };
        const SearchSpace space({{"p", {0, 1, 2}, 1}, {"q", {-1, 0.5, 3, 4}, 3}, {"r", {0, -2}, 0}});
        const auto s = stepwise_optimize(f, space);
        const auto g = grid_optimize(f, space);
        CHECK(g.best_value <= s.best_value);
        CHECK(s.trials.size() == 9);
        CHECK(g.trials.size() == 24);
        double min_logged = INFINITY;
        for (const auto& t : s.trials) min_logged = std::min(min_logged, t.objective);
        CHECK(s.best_value == min_logged);

        TunerOptions threaded;
        threaded.threads = 3;
        const auto s3 = stepwise_optimize(f, space, threaded);
        const auto g3 = grid_optimize(f, space, threaded);
        CHECK(to_csv(s3) == to_csv(s));
        CHECK(to_csv(g3) == to_csv(g));
        CHECK(s3.best_config == s.best_config);
    }
}

TEST_CASE("failing objectives are logged as +inf", "[tuner]") {
    const auto space = xy({0, 1, 2}, {0}, 0, 0);
    const Objective f = [](const std::vector<double>& c) -> double {
        if (c[0] == 0) return NAN;
        if (c[0] == 1) throw ModelError("boom");
        return 5.0;
    };
    const auto log = stepwise_optimize(f, space);
    CHECK(log.trials[0].failed);
    CHECK(std::isinf(log.trials[0].objective));
    CHECK(log.trials[1].failed);
    CHECK(!log.trials[2].failed);
    CHECK(log.best_config == std::vector<double>{2, 0});
    CHECK(log.best_value == 5.0);
}

TEST_CASE("grid refuses to exceed its budget", "[tuner]") {
    const auto space = xy({0, 1, 2}, {0, 1, 2, 3}, 0, 0);
    int calls = 0;
    const Objective f = [&](const std::vector<double>&) { return double(++calls); };
    TunerOptions opts;
    opts.grid_budget = 11;
    CHECK_THROWS_AS(grid_optimize(f, space, opts), ConfigError);
    CHECK(calls == 0);
}

TEST_CASE("search spaces are validated", "[tuner]") {
    CHECK_THROWS_AS(SearchSpace({{"a", {}, 0}}), ConfigError);
    CHECK_THROWS_AS(SearchSpace({{"a", {1, 2}, 3}}), ConfigError);
    CHECK_THROWS_AS(SearchSpace({{"a", {1}, 1}, {"a", {2}, 2}}), ConfigError);
    CHECK(xy({1, 2}, {3}, 2, 3).defaults() == std::vector<double>{2, 3});
}

TEST_CASE("trial log CSV layout", "[tuner]") {
    const auto space = xy({0, 1}, {2}, 0, 2);
    const auto log = stepwise_optimize([](const std::vector<double>& c) { return c[0] + c[1]; }, space);
    CHECK(to_csv(log) == "eval_index,x,y,objective\n0,0,2,2\n1,1,2,3\n2,0,2,2\n");
}
