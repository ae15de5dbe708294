#include "stockcast/boosted_trees.hpp"

#include "stockcast/errors.hpp"
#include "stockcast/io.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>

namespace stockcast::gbt {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr std::size_t kCalendarWidth = 7;
constexpr double kMinGain = 1e-12;

Index idx(std::size_t v) { return static_cast<Index>(v); }

double leaf_value(double sum, std::size_t count, double l2) { return sum / (static_cast<double>(count) + l2); }

double score(double sum, std::size_t count, double l2) { return sum * sum / (static_cast<double>(count) + l2); }

struct GrowLeaf {
    std::vector<std::size_t> rows;
    std::size_t depth = 0;
    SplitCandidate split;
    int left = -1;   // child indices into the growth arena once split
    int right = -1;
    double value = 0.0;
};

void to_preorder(const std::vector<GrowLeaf>& arena, int at, std::vector<Node>& out) {
    const auto& g = arena[static_cast<std::size_t>(at)];
    const auto self = out.size();
    out.push_back(Node{});
    if (g.left < 0) {
        out[self].value = g.value;
        return;
    }
    out[self].feature = g.split.feature;
    out[self].threshold = g.split.threshold;
    out[self].left = static_cast<int>(out.size());
    to_preorder(arena, g.left, out);
    out[self].right = static_cast<int>(out.size());
    to_preorder(arena, g.right, out);
}

RegressionTree grow_tree(const MatrixXd& features, const VectorXd& residuals,
                         const std::vector<std::vector<double>>& edges, const BoostConfig& cfg, bool& split_found) {
    std::vector<GrowLeaf> arena;
    GrowLeaf root;
    root.rows.resize(static_cast<std::size_t>(features.rows()));
    std::iota(root.rows.begin(), root.rows.end(), std::size_t{0});
    arena.push_back(std::move(root));
    std::vector<int> open{0};

    const auto can_split = [&cfg](const GrowLeaf& leaf) {
        return cfg.max_depth == 0 || leaf.depth < cfg.max_depth;
    };
    if (cfg.max_leaves > 1) arena[0].split = best_split(features, residuals, arena[0].rows, edges, cfg);
    split_found = arena[0].split.feature >= 0 && can_split(arena[0]);

    std::size_t leaves = 1;
    while (leaves < cfg.max_leaves) {
        int best = -1;
        for (int i : open) {
            const auto& leaf = arena[static_cast<std::size_t>(i)];
            if (leaf.split.feature < 0 || !can_split(leaf)) continue;
            if (best < 0 || leaf.split.gain > arena[static_cast<std::size_t>(best)].split.gain) best = i;
        }
        if (best < 0) break;

        GrowLeaf left, right;
        {
            const auto& parent = arena[static_cast<std::size_t>(best)];
            const auto f = static_cast<Index>(parent.split.feature);
            for (std::size_t r : parent.rows) {
                (features(idx(r), f) <= parent.split.threshold ? left.rows : right.rows).push_back(r);
            }
            left.depth = right.depth = parent.depth + 1;
        }
        left.split = best_split(features, residuals, left.rows, edges, cfg);
        right.split = best_split(features, residuals, right.rows, edges, cfg);
        const int li = static_cast<int>(arena.size());
        arena.push_back(std::move(left));
        arena.push_back(std::move(right));
        arena[static_cast<std::size_t>(best)].left = li;
        arena[static_cast<std::size_t>(best)].right = li + 1;
        open.erase(std::find(open.begin(), open.end(), best));
        open.push_back(li);
        open.push_back(li + 1);
        ++leaves;
    }

    for (auto& g : arena) {
        if (g.left >= 0) continue;
        double sum = 0.0;
        for (std::size_t r : g.rows) sum += residuals(idx(r));
        g.value = leaf_value(sum, g.rows.size(), cfg.l2_leaf_penalty);
    }
    RegressionTree tree;
    to_preorder(arena, 0, tree.nodes);
    return tree;
}

}  // namespace

double RegressionTree::predict(std::span<const double> row) const {
    if (nodes.empty()) return 0.0;
    std::size_t at = 0;
    while (!nodes[at].is_leaf()) {
        const auto& n = nodes[at];
        at = static_cast<std::size_t>(row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return nodes[at].value;
}

std::size_t RegressionTree::leaf_count() const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const Node& n) { return n.is_leaf(); }));
}

std::size_t RegressionTree::depth() const {
    if (nodes.empty()) return 0;
    std::function<std::size_t(std::size_t)> walk = [&](std::size_t at) -> std::size_t {
        const auto& n = nodes[at];
        if (n.is_leaf()) return 0;
        return 1 + std::max(walk(static_cast<std::size_t>(n.left)), walk(static_cast<std::size_t>(n.right)));
    };
    return walk(0);
}

double Ensemble::predict_row(std::span<const double> row) const {
    if (row.size() != n_features) {
        throw DataError("feature row has " + std::to_string(row.size()) + " columns, ensemble expects " +
                        std::to_string(n_features));
    }
    double sum = 0.0;
    for (const auto& t : trees) sum += t.predict(row);
    return base_score + config.learning_rate * sum;
}

std::size_t frame_width(std::span<const std::size_t> lags) { return lags.size() + kCalendarWidth + 1; }

std::vector<double> feature_row(std::span<const double> series, std::size_t t, std::span<const std::size_t> lags,
                                const std::optional<Date>& date, double sentiment) {
    std::vector<double> row(frame_width(lags), 0.0);
    for (std::size_t j = 0; j < lags.size(); ++j) {
        if (lags[j] == 0 || lags[j] > t || t - lags[j] >= series.size()) {
            throw DataError("lag " + std::to_string(lags[j]) + " undefined at t = " + std::to_string(t));
        }
        row[j] = series[t - lags[j]];
    }
    if (date) row[lags.size() + static_cast<std::size_t>(day_of_week(*date))] = 1.0;
    row.back() = sentiment;
    return row;
}

FeatureFrame build_feature_frame(std::span<const double> series, std::span<const double> residuals,
                                 std::span<const std::size_t> lags, std::span<const Date> dates,
                                 std::span<const double> sentiment) {
    if (lags.empty()) throw DataError("at least one lag is required");
    if (residuals.size() != series.size()) throw DataError("residuals do not match series length");
    if (!dates.empty() && dates.size() != series.size()) throw DataError("dates do not match series length");
    if (!sentiment.empty() && sentiment.size() != series.size()) {
        throw DataError("sentiment does not match series length");
    }
    const std::size_t max_lag = *std::max_element(lags.begin(), lags.end());
    if (*std::min_element(lags.begin(), lags.end()) == 0) throw DataError("lags must be positive");
    if (series.size() <= max_lag) {
        throw DataError("series of length " + std::to_string(series.size()) + " is shorter than max lag " +
                        std::to_string(max_lag) + " + 1");
    }
    FeatureFrame frame;
    const std::size_t n = series.size() - max_lag;
    frame.features.resize(idx(n), idx(frame_width(lags)));
    frame.targets.resize(idx(n));
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t t = r + max_lag;
        std::optional<Date> d;
        if (!dates.empty()) d = dates[t];
        const auto row = feature_row(series, t, lags, d, sentiment.empty() ? 0.0 : sentiment[t]);
        for (std::size_t c = 0; c < row.size(); ++c) frame.features(idx(r), idx(c)) = row[c];
        frame.targets(idx(r)) = residuals[t];
        frame.rows.push_back(t);
    }
    return frame;
}

std::vector<double> bin_edges(std::span<const double> column, std::size_t max_bins) {
    if (max_bins < 2) throw ModelError("max_bins must be at least 2");
    std::vector<double> sorted(column.begin(), column.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> distinct;
    std::vector<std::size_t> counts;
    for (double v : sorted) {
        if (distinct.empty() || v != distinct.back()) {
            distinct.push_back(v);
            counts.push_back(0);
        }
        ++counts.back();
    }
    std::vector<double> edges;
    if (distinct.size() <= 1) return edges;
    if (distinct.size() <= max_bins) {
        edges.assign(distinct.begin(), distinct.end() - 1);
        return edges;
    }
    const double per_bin = static_cast<double>(sorted.size()) / static_cast<double>(max_bins);
    std::size_t cumulative = 0;
    std::size_t next_bin = 1;
    for (std::size_t i = 0; i + 1 < distinct.size(); ++i) {
        cumulative += counts[i];
        if (static_cast<double>(cumulative) >= per_bin * static_cast<double>(next_bin)) {
            edges.push_back(distinct[i]);
            while (static_cast<double>(cumulative) >= per_bin * static_cast<double>(next_bin)) ++next_bin;
            if (edges.size() + 1 >= max_bins) break;
        }
    }
    return edges;
}

SplitCandidate best_split(const MatrixXd& features, const VectorXd& residuals, std::span<const std::size_t> rows,
                          const std::vector<std::vector<double>>& edges, const BoostConfig& cfg) {
    SplitCandidate best;
    const std::size_t n = rows.size();
    const std::size_t min_leaf = std::max<std::size_t>(1, cfg.min_samples_leaf);
    if (n < 2 * min_leaf) return best;
    double total = 0.0;
    for (std::size_t r : rows) total += residuals(idx(r));
    const double parent = score(total, n, cfg.l2_leaf_penalty);

    std::vector<double> bin_sum;
    std::vector<std::size_t> bin_count;
    for (std::size_t f = 0; f < edges.size(); ++f) {
        const auto& e = edges[f];
        if (e.empty()) continue;
        bin_sum.assign(e.size() + 1, 0.0);
        bin_count.assign(e.size() + 1, 0);
        for (std::size_t r : rows) {
            const double x = features(idx(r), idx(f));
            const auto b = static_cast<std::size_t>(std::lower_bound(e.begin(), e.end(), x) - e.begin());
            bin_sum[b] += residuals(idx(r));
            ++bin_count[b];
        }
        double left_sum = 0.0;
        std::size_t left_n = 0;
        for (std::size_t b = 0; b < e.size(); ++b) {
            left_sum += bin_sum[b];
            left_n += bin_count[b];
            const std::size_t right_n = n - left_n;
            if (left_n < min_leaf) continue;
            if (right_n < min_leaf) break;
            const double gain = score(left_sum, left_n, cfg.l2_leaf_penalty) +
                                score(total - left_sum, right_n, cfg.l2_leaf_penalty) - parent;
            if (gain > kMinGain && gain > best.gain) {
                best = SplitCandidate{static_cast<int>(f), e[b], gain, left_n, right_n};
            }
        }
    }
    return best;
}

Ensemble fit_booster(const MatrixXd& features, const VectorXd& targets, const BoostConfig& cfg) {
    if (features.rows() == 0 || targets.size() == 0) throw ModelError("cannot fit a booster on empty data");
    if (features.rows() != targets.size()) throw DataError("feature rows do not match targets");
    if (cfg.n_trees == 0 || cfg.max_leaves == 0) throw ModelError("n_trees and max_leaves must be positive");
    if (!(cfg.learning_rate > 0.0 && cfg.learning_rate <= 1.0)) throw ModelError("learning rate must lie in (0, 1]");
    if (cfg.l2_leaf_penalty < 0.0) throw ModelError("l2 leaf penalty must be non-negative");
    if (static_cast<std::size_t>(features.rows()) < 2 * std::max<std::size_t>(1, cfg.min_samples_leaf)) {
        throw ModelError("need at least 2 * min_samples_leaf rows");
    }

    Ensemble ens;
    ens.config = cfg;
    ens.n_features = static_cast<std::size_t>(features.cols());
    ens.base_score = targets.mean();

    std::vector<std::vector<double>> edges(ens.n_features);
    for (std::size_t f = 0; f < ens.n_features; ++f) {
        const VectorXd col = features.col(idx(f));
        edges[f] = bin_edges(std::span(col.data(), static_cast<std::size_t>(col.size())), cfg.max_bins);
    }

    VectorXd pred = VectorXd::Constant(targets.size(), ens.base_score);
    std::vector<double> row(ens.n_features);
    for (std::size_t k = 0; k < cfg.n_trees; ++k) {
        const VectorXd residuals = targets - pred;
        bool split_found = false;
        RegressionTree tree = grow_tree(features, residuals, edges, cfg, split_found);
        if (cfg.max_leaves > 1 && !split_found) break;
        for (Index r = 0; r < features.rows(); ++r) {
            for (std::size_t c = 0; c < ens.n_features; ++c) row[c] = features(r, idx(c));
            pred(r) += cfg.learning_rate * tree.predict(row);
        }
        ens.trees.push_back(std::move(tree));
    }
    return ens;
}

std::vector<double> predict(const Ensemble& ensemble, const MatrixXd& rows) {
    if (static_cast<std::size_t>(rows.cols()) != ensemble.n_features) {
        throw DataError("feature width " + std::to_string(rows.cols()) + " does not match ensemble (" +
                        std::to_string(ensemble.n_features) + ")");
    }
    std::vector<double> out(static_cast<std::size_t>(rows.rows()));
    std::vector<double> row(ensemble.n_features);
    for (Index r = 0; r < rows.rows(); ++r) {
        for (std::size_t c = 0; c < row.size(); ++c) row[c] = rows(r, idx(c));
        out[static_cast<std::size_t>(r)] = ensemble.predict_row(row);
    }
    return out;
}

std::vector<double> hybrid_forecast(std::span<const double> additive_forecast, const Ensemble& ensemble,
                                    const HybridInputs& inputs) {
    const std::size_t horizon = additive_forecast.size();
    if (!inputs.future_dates.empty() && inputs.future_dates.size() < horizon) {
        throw DataError("future dates do not cover the horizon");
    }
    if (!inputs.future_sentiment.empty() && inputs.future_sentiment.size() < horizon) {
        throw DataError("future sentiment does not cover the horizon");
    }
    std::vector<double> extended(inputs.history.begin(), inputs.history.end());
    std::vector<double> out;
    out.reserve(horizon);
    for (std::size_t h = 0; h < horizon; ++h) {
        const std::size_t t = extended.size();
        std::optional<Date> date;
        if (!inputs.future_dates.empty()) date = inputs.future_dates[h];
        const double sentiment = inputs.future_sentiment.empty() ? 0.0 : inputs.future_sentiment[h];
        const auto row = feature_row(extended, t, inputs.lags, date, sentiment);
        const double value = additive_forecast[h] + ensemble.predict_row(row);
        out.push_back(value);
        extended.push_back(value);
    }
    return out;
}

std::string to_text(const Ensemble& ensemble) {
    std::ostringstream os;
    const auto f = [](double v) { return io::format_double(v); };
    const auto& c = ensemble.config;
    os << "stockcast-gbt v1\n";
    os << "config\t" << c.n_trees << '\t' << c.max_leaves << '\t' << c.min_samples_leaf << '\t' << c.max_depth
       << '\t' << f(c.l2_leaf_penalty) << '\t' << f(c.learning_rate) << '\t' << c.max_bins << '\n';
    os << "n_features\t" << ensemble.n_features << '\n';
    os << "base_score\t" << f(ensemble.base_score) << '\n';
    os << "trees\t" << ensemble.trees.size() << '\n';
    for (const auto& t : ensemble.trees) {
        os << "tree\t" << t.nodes.size() << '\n';
        for (const auto& n : t.nodes) {
            if (n.is_leaf()) {
                os << "L\t" << f(n.value) << '\n';
            } else {
                os << "S\t" << n.feature << '\t' << f(n.threshold) << '\n';
            }
        }
    }
    return os.str();
}

namespace {

std::vector<std::string> fields_of(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        out.emplace_back(line.substr(start, tab == std::string_view::npos ? tab : tab - start));
        if (tab == std::string_view::npos) return out;
        start = tab + 1;
    }
}

std::size_t to_count(const std::string& s) {
    const double v = io::parse_double(s);
    if (v < 0 || v != std::floor(v) || v > 1e9) throw DataError("invalid count '" + s + "'");
    return static_cast<std::size_t>(v);
}

// Rebuilds child links from a preorder listing; returns the index after the subtree.
std::size_t link_preorder(std::vector<Node>& nodes, std::size_t at) {
    if (at >= nodes.size()) throw DataError("truncated tree in ensemble text");
    if (nodes[at].is_leaf()) return at + 1;
    nodes[at].left = static_cast<int>(at + 1);
    const std::size_t after_left = link_preorder(nodes, at + 1);
    nodes[at].right = static_cast<int>(after_left);
    return link_preorder(nodes, after_left);
}

}  // namespace

Ensemble from_text(std::string_view text) {
    std::vector<std::vector<std::string>> lines;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        auto line = text.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!line.empty()) lines.push_back(fields_of(line));
        pos = end + 1;
    }
    std::size_t at = 0;
    const auto next = [&](std::string_view key, std::size_t n_fields) -> const std::vector<std::string>& {
        if (at >= lines.size() || lines[at][0] != key || lines[at].size() != n_fields) {
            throw DataError("ensemble text: expected '" + std::string(key) + "'");
        }
        return lines[at++];
    };
    if (lines.empty() || lines[0].size() != 1 || lines[0][0] != "stockcast-gbt v1") {
        throw DataError("not a stockcast booster (v1)");
    }
    ++at;
    Ensemble e;
    const auto& c = next("config", 8);
    e.config.n_trees = to_count(c[1]);
    e.config.max_leaves = to_count(c[2]);
    e.config.min_samples_leaf = to_count(c[3]);
    e.config.max_depth = to_count(c[4]);
    e.config.l2_leaf_penalty = io::parse_double(c[5]);
    e.config.learning_rate = io::parse_double(c[6]);
    e.config.max_bins = to_count(c[7]);
    e.n_features = to_count(next("n_features", 2)[1]);
    e.base_score = io::parse_double(next("base_score", 2)[1]);
    const auto n_trees = to_count(next("trees", 2)[1]);
    for (std::size_t t = 0; t < n_trees; ++t) {
        const auto n_nodes = to_count(next("tree", 2)[1]);
        RegressionTree tree;
        for (std::size_t k = 0; k < n_nodes; ++k) {
            if (at >= lines.size()) throw DataError("truncated tree in ensemble text");
            const auto& f = lines[at++];
            Node node;
            if (f[0] == "L" && f.size() == 2) {
                node.value = io::parse_double(f[1]);
            } else if (f[0] == "S" && f.size() == 3) {
                node.feature = static_cast<int>(to_count(f[1]));
                if (static_cast<std::size_t>(node.feature) >= e.n_features) throw DataError("split feature out of range");
                node.threshold = io::parse_double(f[2]);
            } else {
                throw DataError("malformed tree node line");
            }
            tree.nodes.push_back(node);
        }
        if (!tree.nodes.empty() && link_preorder(tree.nodes, 0) != tree.nodes.size()) {
            throw DataError("tree node count does not match its preorder structure");
        }
        e.trees.push_back(std::move(tree));
    }
    if (at != lines.size()) throw DataError("trailing lines in ensemble text");
    return e;
}

}  // namespace stockcast::gbt
