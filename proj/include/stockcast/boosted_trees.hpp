#pragma once

#include "stockcast/additive.hpp"
#include "stockcast/market_data.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stockcast::gbt {

/// Preorder node storage. Internal nodes route a row left when
/// `row[feature] <= threshold`; leaves carry `value`.
struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;

    bool is_leaf() const noexcept { return feature < 0; }
};

struct RegressionTree {
    std::vector<Node> nodes;  // nodes[0] is the root

    double predict(std::span<const double> row) const;
    std::size_t leaf_count() const;
    std::size_t depth() const;
};

struct BoostConfig {
    std::size_t n_trees = 100;
    std::size_t max_leaves = 31;
    std::size_t min_samples_leaf = 5;
    std::size_t max_depth = 0;  // 0 = unlimited
    double l2_leaf_penalty = 0.0;
    double learning_rate = 0.1;
    std::size_t max_bins = 64;
};

struct Ensemble {
    BoostConfig config;
    std::size_t n_features = 0;
    double base_score = 0.0;
    std::vector<RegressionTree> trees;

    double predict_row(std::span<const double> row) const;
};

struct FeatureFrame {
    Eigen::MatrixXd features;
    Eigen::VectorXd targets;
    std::vector<std::size_t> rows;  // source index t of each frame row
};

/// Column layout of build_feature_frame for a lag set.
std::size_t frame_width(std::span<const std::size_t> lags);

/// Row t holds [series[t - lag] for each lag, Mon..Sun one-hot of dates[t],
/// sentiment[t]] and target residuals[t]. Rows without every lag are
/// dropped. Missing dates leave the one-hot block zero; missing sentiment
/// fills zero.
FeatureFrame build_feature_frame(std::span<const double> series, std::span<const double> residuals,
                                 std::span<const std::size_t> lags, std::span<const Date> dates = {},
                                 std::span<const double> sentiment = {});

/// One feature row for time t given the (possibly forecast-extended) series.
std::vector<double> feature_row(std::span<const double> series, std::size_t t, std::span<const std::size_t> lags,
                                const std::optional<Date>& date, double sentiment);

/// Equal-frequency bin upper edges (actual data values) for one feature.
/// With no more distinct values than `max_bins`, every distinct value but
/// the largest is an edge.
std::vector<double> bin_edges(std::span<const double> column, std::size_t max_bins);

struct SplitCandidate {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
    std::size_t left_count = 0;
    std::size_t right_count = 0;
};

/// Best histogram split of `rows` for gradient targets `residuals`.
/// gain = G_L^2/(n_L+l2) + G_R^2/(n_R+l2) - G^2/(n+l2).
SplitCandidate best_split(const Eigen::MatrixXd& features, const Eigen::VectorXd& residuals,
                          std::span<const std::size_t> rows, const std::vector<std::vector<double>>& edges,
                          const BoostConfig& cfg);

/// Squared-loss gradient boosting with leaf-wise (best-gain-first) growth.
Ensemble fit_booster(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets, const BoostConfig& cfg);

std::vector<double> predict(const Ensemble& ensemble, const Eigen::MatrixXd& rows);

struct HybridInputs {
    std::span<const double> history;          // observed target series
    std::span<const std::size_t> lags;
    std::span<const Date> future_dates;       // optional, one per step
    std::span<const double> future_sentiment; // optional, one per step
};

/// Additive forecast corrected step by step by the booster; each corrected
/// value feeds later lag features.
std::vector<double> hybrid_forecast(std::span<const double> additive_forecast, const Ensemble& ensemble,
                                    const HybridInputs& inputs);

std::string to_text(const Ensemble& ensemble);
Ensemble from_text(std::string_view text);

}  // namespace stockcast::gbt
