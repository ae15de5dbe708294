#include "catch_amalgamated.hpp"

#include "stockcast/boosted_trees.hpp"
#include "stockcast/errors.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

using namespace stockcast;
using namespace stockcast::gbt;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double training_mse(const Ensemble& e, const MatrixXd& x, const VectorXd& y) {
    const auto p = predict(e, x);
    double s = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) s += (p[static_cast<std::size_t>(i)] - y(i)) * (p[static_cast<std::size_t>(i)] - y(i));
    return s / static_cast<double>(y.size());
}

void make_data(std::uint64_t seed, Eigen::Index n, Eigen::Index f, MatrixXd& x, VectorXd& y, int levels = 0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    x.resize(n, f);
    y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < f; ++j) x(i, j) = levels > 0 ? double(rng() % levels) : z(rng);
        y(i) = std::sin(x(i, 0)) + 0.5 * x(i, f - 1) + 0.3 * z(rng);
    }
}

Ensemble single_leaf(double base, double value, double eta) {
    Ensemble e;
    e.base_score = base;
    e.config.learning_rate = eta;
    e.n_features = frame_width(std::vector<std::size_t>{1});
    RegressionTree t;
    t.nodes.push_back(Node{-1, 0.0, -1, -1, value});
    e.trees.push_back(t);
    return e;
}

// Every distinct value of every feature as a "x <= v" threshold.
double exhaustive_gain(const MatrixXd& x, const VectorXd& r, std::size_t min_leaf, double l2) {
    const auto n = static_cast<std::size_t>(r.size());
    const auto score = [l2](double g, std::size_t c) { return g * g / (static_cast<double>(c) + l2); };
    const double parent = score(r.sum(), n);
    double best = 0.0;
    for (Eigen::Index f = 0; f < x.cols(); ++f) {
        std::set<double> values(x.col(f).data(), x.col(f).data() + x.rows());
        for (double v : values) {
            double gl = 0.0;
            std::size_t nl = 0;
            for (Eigen::Index i = 0; i < x.rows(); ++i) {
                if (x(i, f) <= v) gl += r(i), ++nl;
            }
            if (nl < min_leaf || n - nl < min_leaf) continue;
            best = std::max(best, score(gl, nl) + score(r.sum() - gl, n - nl) - parent);
        }
    }
    return best;
}

}  // namespace

TEST_CASE("build_feature_frame shifts and trims", "[boosted_trees]") {
    const std::vector<double> s{1, 2, 3, 4};
    const std::vector<double> res{0.1, 0.2, 0.3, 0.4};
    const std::vector<std::size_t> lag1{1};
    const auto f = build_feature_frame(s, res, lag1);
    REQUIRE(f.features.rows() == 3);
    CHECK(f.features.cols() == static_cast<Eigen::Index>(frame_width(lag1)));
    CHECK(f.features(0, 0) == 1);
    CHECK(f.features(1, 0) == 2);
    CHECK(f.features(2, 0) == 3);
    CHECK(f.targets(0) == 0.2);
    CHECK(f.rows == std::vector<std::size_t>{1, 2, 3});
    CHECK(f.features.col(f.features.cols() - 1).isZero());

    const std::vector<std::size_t> lag12{1, 2};
    CHECK(build_feature_frame(s, res, lag12).features.rows() == 2);
    const std::vector<std::size_t> lag9{9};
    CHECK_THROWS_AS(build_feature_frame(s, res, lag9), DataError);
}

TEST_CASE("feature frame carries weekday one-hot and sentiment", "[boosted_trees]") {
    const std::vector<double> s{1, 2, 3};
    const std::vector<Date> dates = next_trading_dates(parse_date("2024-01-04"), 3);  // Fri, Mon, Tue
    const std::vector<double> sent{0.0, 0.5, -0.25};
    const std::vector<std::size_t> lags{1};
    const auto f = build_feature_frame(s, s, lags, dates, sent);
    REQUIRE(f.features.rows() == 2);
    CHECK(f.features(0, 1 + 0) == 1.0);  // Monday
    CHECK(f.features.row(0).segment(1, 7).sum() == 1.0);
    CHECK(f.features(1, 1 + 1) == 1.0);  // Tuesday
    CHECK(f.features(0, 8) == 0.5);
    CHECK(f.features(1, 8) == -0.25);
}

TEST_CASE("one single-leaf tree predicts the mean", "[boosted_trees]") {
    MatrixXd x;
    VectorXd y;
    make_data(1, 40, 2, x, y);
    BoostConfig cfg;
    cfg.n_trees = 1;
    cfg.max_leaves = 1;
    cfg.learning_rate = 1.0;
    const auto e = fit_booster(x, y, cfg);
    for (double p : predict(e, x)) CHECK(p == Catch::Approx(y.mean()).margin(1e-12));
}

TEST_CASE("a perfectly splittable target is fitted exactly", "[boosted_trees]") {
    MatrixXd x(20, 1);
    VectorXd y(20);
    for (int i = 0; i < 20; ++i) {
        x(i, 0) = i - 10;
        y(i) = x(i, 0) < 0 ? 0.0 : 10.0;
    }
    BoostConfig cfg;
    cfg.n_trees = 1;
    cfg.max_leaves = 2;
    cfg.learning_rate = 1.0;
    cfg.min_samples_leaf = 1;
    const auto e = fit_booster(x, y, cfg);
    CHECK(training_mse(e, x, y) < 1e-20);
    CHECK(e.trees[0].leaf_count() == 2);
}

TEST_CASE("training error never increases with more trees", "[boosted_trees][property]") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        MatrixXd x;
        VectorXd y;
        make_data(seed, 120, 3, x, y);
        BoostConfig cfg;
        cfg.n_trees = 50;
        cfg.learning_rate = 0.1;
        cfg.max_leaves = 8;
        cfg.l2_leaf_penalty = seed % 2 ? 0.0 : 1.0;
        const auto full = fit_booster(x, y, cfg);
        double prev = training_mse(Ensemble{full.config, full.n_features, full.base_score, {}}, x, y);
        for (std::size_t k = 1; k <= full.trees.size(); ++k) {
            Ensemble part = full;
            part.trees.resize(k);
            const double cur = training_mse(part, x, y);
            CHECK(cur <= prev + 1e-12);
            prev = cur;
        }
    }
}

TEST_CASE("leaves respect min_samples_leaf and the depth cap", "[boosted_trees][property]") {
    MatrixXd x;
    VectorXd y;
    make_data(9, 200, 3, x, y);
    BoostConfig cfg;
    cfg.n_trees = 10;
    cfg.max_leaves = 16;
    cfg.min_samples_leaf = 7;
    cfg.max_depth = 3;
    const auto e = fit_booster(x, y, cfg);
    for (const auto& tree : e.trees) {
        CHECK(tree.depth() <= 3);
        CHECK(tree.leaf_count() <= 16);
        std::vector<std::size_t> counts(tree.nodes.size(), 0);
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            int node = 0;
            while (!tree.nodes[node].is_leaf()) {
                const auto& nd = tree.nodes[node];
                node = x(i, nd.feature) <= nd.threshold ? nd.left : nd.right;
            }
            ++counts[static_cast<std::size_t>(node)];
        }
        for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
            if (tree.nodes[k].is_leaf()) CHECK(counts[k] >= 7);
        }
    }
}

TEST_CASE("histogram splits equal exhaustive splits on small data", "[boosted_trees][property]") {
    for (std::uint64_t seed = 1; seed <= 40; ++seed) {
        MatrixXd x;
        VectorXd r;
        const auto n = static_cast<Eigen::Index>(8 + seed % 57);
        make_data(seed, n, 3, x, r, seed % 3 == 0 ? 5 : 0);
        BoostConfig cfg;
        cfg.min_samples_leaf = 1 + seed % 4;
        cfg.l2_leaf_penalty = double(seed % 3);
        cfg.max_bins = 64;
        std::vector<std::vector<double>> edges;
        for (Eigen::Index f = 0; f < x.cols(); ++f) {
            const VectorXd col = x.col(f);
            edges.push_back(bin_edges(std::span(col.data(), static_cast<std::size_t>(col.size())), cfg.max_bins));
        }
        std::vector<std::size_t> rows(static_cast<std::size_t>(n));
        std::iota(rows.begin(), rows.end(), std::size_t{0});
        const auto got = best_split(x, r, rows, edges, cfg);
        const double want = exhaustive_gain(x, r, cfg.min_samples_leaf, cfg.l2_leaf_penalty);
        CHECK(got.gain == Catch::Approx(want).epsilon(1e-12).margin(1e-12));
    }
}

TEST_CASE("bin_edges are distinct data values", "[boosted_trees]") {
    const std::vector<double> col{3, 1, 2, 2, 5};
    CHECK(bin_edges(col, 64) == std::vector<double>{1, 2, 3});
    std::vector<double> many(1000);
    std::iota(many.begin(), many.end(), 0.0);
    const auto e = bin_edges(many, 16);
    CHECK(e.size() <= 15);
    CHECK(std::is_sorted(e.begin(), e.end()));
    const std::vector<double> flat(10, 4.0);
    CHECK(bin_edges(flat, 8).empty());
}

TEST_CASE("constant features give a base-score ensemble", "[boosted_trees]") {
    MatrixXd x = MatrixXd::Constant(30, 2, 1.0);
    VectorXd y = VectorXd::LinSpaced(30, 0.0, 29.0);
    const auto e = fit_booster(x, y, BoostConfig{});
    for (double p : predict(e, x)) CHECK(p == Catch::Approx(y.mean()));
    CHECK_THROWS_AS(fit_booster(MatrixXd(0, 2), VectorXd(0), BoostConfig{}), ModelError);
}

TEST_CASE("predict follows the ensemble definition", "[boosted_trees]") {
    Ensemble empty;
    empty.base_score = 4.0;
    empty.n_features = 2;
    for (double p : predict(empty, MatrixXd::Random(3, 2))) CHECK(p == 4.0);

    const Ensemble one = single_leaf(1.0, 3.0, 0.5);
    const std::vector<double> row(one.n_features, 0.0);
    CHECK(one.predict_row(row) == 2.5);
    CHECK_THROWS_AS(predict(one, MatrixXd::Zero(2, 3)), DataError);

    MatrixXd x;
    VectorXd y;
    make_data(4, 80, 3, x, y);
    BoostConfig cfg;
    cfg.n_trees = 3;
    cfg.learning_rate = 0.3;
    const auto e = fit_booster(x, y, cfg);
    const auto got = predict(e, x);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        double manual = e.base_score;
        for (const auto& tree : e.trees) {
            int node = 0;
            while (tree.nodes[node].feature >= 0) {
                node = x(i, tree.nodes[node].feature) <= tree.nodes[node].threshold ? tree.nodes[node].left
                                                                                    : tree.nodes[node].right;
            }
            manual += 0.3 * tree.nodes[node].value;
        }
        CHECK(got[static_cast<std::size_t>(i)] == Catch::Approx(manual).epsilon(1e-14));
    }
}

TEST_CASE("hybrid_forecast corrections", "[boosted_trees]") {
    const std::vector<double> history{10, 11, 12, 13};
    const std::vector<double> base{14, 15, 16};
    const std::vector<std::size_t> lags{1};

    Ensemble zero;
    zero.n_features = frame_width(lags);
    CHECK(hybrid_forecast(base, zero, {history, lags, {}, {}}) == base);

    const auto plus = hybrid_forecast(base, single_leaf(0.0, 1.0, 0.5), {history, lags, {}, {}});
    for (std::size_t h = 0; h < 3; ++h) CHECK(plus[h] == base[h] + 0.5);

    // the booster reads the previous corrected value: correction = 0.1 * lag1
    Ensemble e;
    e.n_features = frame_width(lags);
    e.config.learning_rate = 1.0;
    RegressionTree t;
    t.nodes = {Node{0, 13.5, 1, 2, 0.0}, Node{-1, 0, -1, -1, -1.0}, Node{-1, 0, -1, -1, 2.0}};
    e.trees.push_back(t);
    const auto got = hybrid_forecast(base, e, {history, lags, {}, {}});
    // step 1: lag 13 <= 13.5 -> -1 -> 13; step 2: lag 13 -> 14; step 3: lag 14 > 13.5 -> 18
    CHECK(got == std::vector<double>{13.0, 14.0, 18.0});
}

TEST_CASE("ensemble text round trip", "[boosted_trees]") {
    MatrixXd x;
    VectorXd y;
    make_data(6, 60, 2, x, y);
    BoostConfig cfg;
    cfg.n_trees = 5;
    const auto e = fit_booster(x, y, cfg);
    const auto back = from_text(to_text(e));
    CHECK(to_text(back) == to_text(e));
    CHECK(predict(back, x) == predict(e, x));
    CHECK_THROWS_AS(from_text("nope"), DataError);
}
