#include "crisisforest/forest.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include <json.hpp>

#include "crisisforest/rng.hpp"

namespace crisisforest {

namespace {

using nlohmann::json;

constexpr std::uint64_t kGroupStream = 0x67726f75ULL;  // half-sample draw per group
constexpr std::uint64_t kTreeStream = 0x74726565ULL;   // everything else, per tree

struct TrainData {
    ForestKind kind = ForestKind::regression;
    const std::vector<double>* target = nullptr;  // regression
    const std::vector<double>* y_res = nullptr;   // causal
    const std::vector<double>* d_res = nullptr;
    const std::vector<double>* d_raw = nullptr;
};

struct GrowContext {
    const Matrix& x;
    const TrainData& data;
    const ForestConfig& cfg;
    Rng& rng;
    Tree& tree;
};

struct SplitChoice {
    int feature = -1;
    double cut = 0.0;
    double gain = -std::numeric_limits<double>::infinity();
};

// Per-row split score: the target itself for regression trees, the
// heterogeneity pseudo-outcome for causal trees. Returns false when the node
// cannot support a split (causal: no treatment-residual variance).
bool node_scores(const GrowContext& ctx, const std::vector<int>& split_rows,
                 std::vector<double>& scores) {
    const std::size_t n = split_rows.size();
    scores.resize(n);
    if (ctx.data.kind == ForestKind::regression) {
        for (std::size_t i = 0; i < n; ++i) scores[i] = (*ctx.data.target)[split_rows[i]];
        return true;
    }
    const auto& dr = *ctx.data.d_res;
    const auto& yr = *ctx.data.y_res;
    double sum_dr = 0.0;
    for (int r : split_rows) sum_dr += dr[r];
    const double mean_dr = sum_dr / static_cast<double>(n);
    double var_dr = 0.0;
    double cov = 0.0;
    for (int r : split_rows) {
        const double c = dr[r] - mean_dr;
        var_dr += c * c;
        cov += c * yr[r];
    }
    var_dr /= static_cast<double>(n);
    if (var_dr < 1e-12) return false;
    const double tau_parent = cov / (var_dr * static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const int r = split_rows[i];
        scores[i] = (dr[r] - mean_dr) * (yr[r] - tau_parent * dr[r]) / var_dr;
    }
    return true;
}

// Greedy exact search over midpoints of consecutive distinct values of each
// sampled feature, maximizing sum_child (sum of scores)^2 / child size.
// Candidates are scanned in ascending (feature, cut) order with strict
// improvement, so equal-gain ties resolve to the lowest feature then cut.
SplitChoice find_best_split(const GrowContext& ctx, const std::vector<int>& split_rows,
                            const std::vector<int>& est_rows, const std::vector<double>& scores) {
    const int p = static_cast<int>(ctx.x.n_cols);
    std::vector<int> features = ctx.rng.sample_without_replacement(p, ctx.cfg.mtry);
    std::sort(features.begin(), features.end());

    const std::size_t n = split_rows.size();
    const bool causal = ctx.data.kind == ForestKind::causal;
    SplitChoice best;

    std::vector<std::pair<double, double>> split_vals(n);  // (feature value, score)
    std::vector<std::pair<double, double>> est_vals;       // (feature value, d)
    est_vals.reserve(est_rows.size());
    std::vector<double> est_d_prefix;

    for (int f : features) {
        for (std::size_t i = 0; i < n; ++i) {
            split_vals[i] = {ctx.x.at(split_rows[i], f), scores[i]};
        }
        std::sort(split_vals.begin(), split_vals.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        if (split_vals.front().first == split_vals.back().first) continue;

        est_vals.clear();
        for (int r : est_rows) {
            est_vals.push_back({ctx.x.at(r, f), causal ? (*ctx.data.d_raw)[r] : 0.0});
        }
        std::sort(est_vals.begin(), est_vals.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        est_d_prefix.assign(est_vals.size() + 1, 0.0);
        for (std::size_t i = 0; i < est_vals.size(); ++i) {
            est_d_prefix[i + 1] = est_d_prefix[i] + est_vals[i].second;
        }

        double total_sum = 0.0;
        for (const auto& sv : split_vals) total_sum += sv.second;
        double left_sum = 0.0;
        for (std::size_t k = 0; k + 1 < n; ++k) {
            left_sum += split_vals[k].second;
            const double lo = split_vals[k].first;
            const double hi = split_vals[k + 1].first;
            if (lo == hi) continue;
            double cut = lo + (hi - lo) / 2.0;
            if (cut >= hi) cut = lo;  // midpoint rounded up between adjacent doubles

            const std::size_t n_left = k + 1;
            const std::size_t n_right = n - n_left;
            if (n_left < static_cast<std::size_t>(ctx.cfg.min_leaf_size) ||
                n_right < static_cast<std::size_t>(ctx.cfg.min_leaf_size)) {
                continue;
            }

            const std::size_t e_left =
                std::upper_bound(est_vals.begin(), est_vals.end(), cut,
                                 [](double v, const auto& ev) { return v < ev.first; }) -
                est_vals.begin();
            const std::size_t e_right = est_vals.size() - e_left;
            if (causal) {
                const double treated_left = est_d_prefix[e_left];
                const double treated_right = est_d_prefix[est_vals.size()] - treated_left;
                const double control_left = static_cast<double>(e_left) - treated_left;
                const double control_right = static_cast<double>(e_right) - treated_right;
                const double need = static_cast<double>(ctx.cfg.min_leaf_size);
                if (treated_left < need || treated_right < need || control_left < need ||
                    control_right < need) {
                    continue;
                }
            } else {
                if (e_left < 1 || e_right < 1) continue;
            }

            const double right_sum = total_sum - left_sum;
            const double gain = left_sum * left_sum / static_cast<double>(n_left) +
                                right_sum * right_sum / static_cast<double>(n_right);
            if (gain > best.gain) {
                best.feature = f;
                best.cut = cut;
                best.gain = gain;
            }
        }
    }
    return best;
}

int grow_node(GrowContext& ctx, std::vector<int>&& split_rows, std::vector<int>&& est_rows,
              int depth) {
    const int node_id = static_cast<int>(ctx.tree.nodes.size());
    ctx.tree.nodes.emplace_back();

    const bool depth_ok = ctx.cfg.max_depth < 0 || depth < ctx.cfg.max_depth;
    if (depth_ok && split_rows.size() >= 2 * static_cast<std::size_t>(ctx.cfg.min_leaf_size)) {
        std::vector<double> scores;
        if (node_scores(ctx, split_rows, scores)) {
            SplitChoice choice = find_best_split(ctx, split_rows, est_rows, scores);
            if (choice.feature >= 0) {
                std::vector<int> sl, sr, el, er;
                for (int r : split_rows) {
                    (ctx.x.at(r, choice.feature) <= choice.cut ? sl : sr).push_back(r);
                }
                for (int r : est_rows) {
                    (ctx.x.at(r, choice.feature) <= choice.cut ? el : er).push_back(r);
                }
                ctx.tree.nodes[node_id].feature = choice.feature;
                ctx.tree.nodes[node_id].cut = choice.cut;
                const int left = grow_node(ctx, std::move(sl), std::move(el), depth + 1);
                const int right = grow_node(ctx, std::move(sr), std::move(er), depth + 1);
                ctx.tree.nodes[node_id].left = left;
                ctx.tree.nodes[node_id].right = right;
                return node_id;
            }
        }
    }
    return node_id;  // leaf; payload filled afterwards
}

// Honest leaf payloads: estimation-half rows, routed in stored order, in a
// fixed summation order. verify_honesty re-runs this exact procedure.
void compute_leaf_payloads(Tree& tree, const Matrix& x, const TrainData& data) {
    const std::size_t m = tree.nodes.size();
    std::vector<double> sum_a(m, 0.0), sum_b(m, 0.0);
    std::vector<int> count(m, 0), treated(m, 0);

    for (int r : tree.estimation_half) {
        const int leaf = tree.route(x.row(r));
        if (data.kind == ForestKind::regression) {
            sum_a[leaf] += (*data.target)[r];
        } else {
            const double dr = (*data.d_res)[r];
            sum_a[leaf] += dr * (*data.y_res)[r];
            sum_b[leaf] += dr * dr;
            if ((*data.d_raw)[r] > 0.5) treated[leaf] += 1;
        }
        count[leaf] += 1;
    }

    // Leaves with no estimation rows fall back to their split-half rows.
    std::vector<double> fb_a(m, 0.0), fb_b(m, 0.0);
    std::vector<int> fb_count(m, 0);
    for (int r : tree.split_half) {
        const int leaf = tree.route(x.row(r));
        if (count[leaf] > 0) continue;
        if (data.kind == ForestKind::regression) {
            fb_a[leaf] += (*data.target)[r];
        } else {
            const double dr = (*data.d_res)[r];
            fb_a[leaf] += dr * (*data.y_res)[r];
            fb_b[leaf] += dr * dr;
        }
        fb_count[leaf] += 1;
    }

    for (std::size_t i = 0; i < m; ++i) {
        TreeNode& node = tree.nodes[i];
        if (!node.is_leaf()) continue;
        node.n_est = count[i];
        if (data.kind == ForestKind::regression) {
            if (count[i] > 0) node.value = sum_a[i] / count[i];
            else if (fb_count[i] > 0) node.value = fb_a[i] / fb_count[i];
            else node.value = 0.0;
        } else {
            node.n_treated = treated[i];
            node.n_control = count[i] - treated[i];
            if (count[i] > 0 && sum_b[i] > 0.0) node.value = sum_a[i] / sum_b[i];
            else if (count[i] == 0 && fb_b[i] > 0.0) node.value = fb_a[i] / fb_b[i];
            else node.value = 0.0;
        }
    }
}

Tree build_tree(const Matrix& x, const TrainData& data, const ForestConfig& cfg, int tree_index,
                const std::vector<std::vector<int>>& cluster_rows,
                const std::vector<std::vector<int>>& group_half_clusters) {
    Rng rng = Rng::derive(cfg.seed, kTreeStream, static_cast<std::uint64_t>(tree_index));
    const auto& half = group_half_clusters[tree_index / cfg.ci_group_size];

    const int n_clusters = static_cast<int>(cluster_rows.size());
    int bag_k = std::max(1, static_cast<int>(std::lround(cfg.subsample_fraction * n_clusters)));
    bag_k = std::min(bag_k, static_cast<int>(half.size()));
    std::vector<int> picks = rng.sample_without_replacement(static_cast<int>(half.size()), bag_k);

    Tree tree;
    tree.bag_clusters.reserve(bag_k);
    for (int idx : picks) tree.bag_clusters.push_back(half[idx]);
    std::sort(tree.bag_clusters.begin(), tree.bag_clusters.end());

    std::vector<int> rows;
    for (int c : tree.bag_clusters) {
        rows.insert(rows.end(), cluster_rows[c].begin(), cluster_rows[c].end());
    }
    rng.shuffle(rows);

    const std::size_t n = rows.size();
    std::size_t n_split = static_cast<std::size_t>(std::lround(cfg.honesty_fraction * n));
    n_split = std::min(std::max<std::size_t>(n_split, 1), n);
    if (n >= 2 && n_split == n) n_split = n - 1;
    tree.split_half.assign(rows.begin(), rows.begin() + n_split);
    tree.estimation_half.assign(rows.begin() + n_split, rows.end());

    GrowContext ctx{x, data, cfg, rng, tree};
    std::vector<int> split_copy = tree.split_half;
    std::vector<int> est_copy = tree.estimation_half;
    grow_node(ctx, std::move(split_copy), std::move(est_copy), 0);
    compute_leaf_payloads(tree, x, data);
    return tree;
}

Forest train_forest(ForestKind kind, const Matrix& x, const TrainData& data,
                    const std::vector<std::string>& clusters, ForestConfig cfg,
                    const std::vector<std::string>& feature_names) {
    const std::size_t n = x.n_rows;
    if (n == 0) throw std::invalid_argument("forest: empty training matrix");
    if (cfg.n_trees < 1) throw std::invalid_argument("forest: n_trees must be positive");
    if (cfg.subsample_fraction <= 0.0 || cfg.subsample_fraction > 1.0)
        throw std::invalid_argument("forest: subsample_fraction outside (0, 1]");
    if (cfg.honesty_fraction <= 0.0 || cfg.honesty_fraction >= 1.0)
        throw std::invalid_argument("forest: honesty_fraction outside (0, 1)");
    if (cfg.subsample_fraction * static_cast<double>(n) < 2.0 * cfg.min_leaf_size)
        throw std::invalid_argument("forest: subsample too small for min_leaf_size");
    if (cfg.mtry == 0) cfg.mtry = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(x.n_cols))));
    cfg.mtry = std::min(cfg.mtry, static_cast<int>(x.n_cols));
    if (cfg.ci_group_size < 1) cfg.ci_group_size = 1;

    Forest forest;
    forest.kind = kind;
    forest.config = cfg;
    forest.feature_names = feature_names;
    if (forest.feature_names.empty()) {
        for (std::size_t c = 0; c < x.n_cols; ++c) forest.feature_names.push_back("x" + std::to_string(c));
    }

    // Cluster ids in first-appearance order; without cluster awareness every
    // row stands alone so the bag/OOB logic degenerates to row subsampling.
    forest.row_cluster.resize(n);
    if (cfg.cluster_aware && !clusters.empty()) {
        if (clusters.size() != n) throw std::invalid_argument("forest: cluster vector length mismatch");
        std::unordered_map<std::string, int> ids;
        for (std::size_t i = 0; i < n; ++i) {
            auto [it, inserted] = ids.try_emplace(clusters[i], static_cast<int>(forest.cluster_names.size()));
            if (inserted) forest.cluster_names.push_back(clusters[i]);
            forest.row_cluster[i] = it->second;
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            forest.row_cluster[i] = static_cast<int>(i);
            forest.cluster_names.push_back(std::to_string(i));
        }
    }
    const int n_clusters = static_cast<int>(forest.cluster_names.size());
    std::vector<std::vector<int>> cluster_rows(n_clusters);
    for (std::size_t i = 0; i < n; ++i) cluster_rows[forest.row_cluster[i]].push_back(static_cast<int>(i));

    // Little-bags structure: trees come in groups sharing a half-sample of
    // clusters; each tree subsamples its bag from its group's half.
    const int n_groups = (cfg.n_trees + cfg.ci_group_size - 1) / cfg.ci_group_size;
    std::vector<std::vector<int>> group_half(n_groups);
    for (int g = 0; g < n_groups; ++g) {
        Rng grng = Rng::derive(cfg.seed, kGroupStream, static_cast<std::uint64_t>(g));
        const int half_size = std::max(1, n_clusters / 2);
        group_half[g] = grng.sample_without_replacement(n_clusters, half_size);
    }

    forest.trees.resize(cfg.n_trees);
    const int n_threads = std::max(1, cfg.n_threads);
    if (n_threads == 1) {
        for (int t = 0; t < cfg.n_trees; ++t) {
            forest.trees[t] = build_tree(x, data, cfg, t, cluster_rows, group_half);
        }
    } else {
        std::vector<std::thread> workers;
        std::atomic<int> next{0};
        for (int w = 0; w < n_threads; ++w) {
            workers.emplace_back([&]() {
                int t;
                while ((t = next.fetch_add(1)) < cfg.n_trees) {
                    forest.trees[t] = build_tree(x, data, cfg, t, cluster_rows, group_half);
                }
            });
        }
        for (auto& th : workers) th.join();
    }
    return forest;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

int Tree::route(const double* x) const {
    int node = 0;
    while (!nodes[node].is_leaf()) {
        node = x[nodes[node].feature] <= nodes[node].cut ? nodes[node].left : nodes[node].right;
    }
    return node;
}

bool Tree::in_bag_cluster(int cluster_id) const {
    return std::binary_search(bag_clusters.begin(), bag_clusters.end(), cluster_id);
}

int Forest::n_groups() const {
    return (config.n_trees + config.ci_group_size - 1) / config.ci_group_size;
}

Forest fit_regression_forest(const Matrix& x, const std::vector<double>& targets,
                             const std::vector<std::string>& clusters, const ForestConfig& config,
                             const std::vector<std::string>& feature_names) {
    if (targets.size() != x.n_rows) throw std::invalid_argument("forest: target length mismatch");
    TrainData data;
    data.kind = ForestKind::regression;
    data.target = &targets;
    return train_forest(ForestKind::regression, x, data, clusters, config, feature_names);
}

CausalForest fit_causal_forest(const Matrix& x, const std::vector<double>& y,
                               const std::vector<double>& d,
                               const std::vector<std::string>& clusters,
                               const ForestConfig& config,
                               const std::vector<std::string>& feature_names) {
    if (y.size() != x.n_rows || d.size() != x.n_rows)
        throw std::invalid_argument("forest: y/d length mismatch");
    bool any_treated = false;
    bool any_control = false;
    for (double v : d) {
        if (v != 0.0 && v != 1.0) throw std::invalid_argument("forest: treatment must be binary");
        (v == 1.0 ? any_treated : any_control) = true;
    }
    if (!any_treated || !any_control)
        throw std::invalid_argument(std::string("forest: ") +
                                    (any_treated ? "control" : "treated") + " arm is empty");

    CausalForest cf;
    ForestConfig m_cfg = config;
    m_cfg.seed = splitmix64(config.seed ^ 0x6d686174ULL);
    ForestConfig e_cfg = config;
    e_cfg.seed = splitmix64(config.seed ^ 0x65686174ULL);
    cf.centering_outcome = fit_regression_forest(x, y, clusters, m_cfg, feature_names);
    cf.centering_treatment = fit_regression_forest(x, d, clusters, e_cfg, feature_names);

    // Local centering on OOB nuisance fits; rows in every bag fall back to
    // the overall mean.
    cf.m_hat = predict_oob(cf.centering_outcome, x);
    cf.e_hat = predict_oob(cf.centering_treatment, x);
    const double y_mean = mean_of(y);
    const double d_mean = mean_of(d);
    for (auto& v : cf.m_hat) {
        if (std::isnan(v)) v = y_mean;
    }
    for (auto& v : cf.e_hat) {
        if (std::isnan(v)) v = d_mean;
    }
    cf.y_residual.resize(y.size());
    cf.d_residual.resize(d.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        cf.y_residual[i] = y[i] - cf.m_hat[i];
        cf.d_residual[i] = d[i] - cf.e_hat[i];
    }

    TrainData data;
    data.kind = ForestKind::causal;
    data.y_res = &cf.y_residual;
    data.d_res = &cf.d_residual;
    data.d_raw = &d;
    cf.forest = train_forest(ForestKind::causal, x, data, clusters, config, feature_names);
    return cf;
}

std::vector<double> predict(const Forest& forest, const Matrix& x) {
    if (x.n_cols != forest.feature_names.size())
        throw std::invalid_argument("predict: feature count mismatch");
    std::vector<double> out(x.n_rows, 0.0);
    for (std::size_t i = 0; i < x.n_rows; ++i) {
        double sum = 0.0;
        for (const auto& tree : forest.trees) sum += tree.predict(x.row(i));
        out[i] = sum / static_cast<double>(forest.trees.size());
    }
    return out;
}

std::vector<double> predict_oob(const Forest& forest, const Matrix& training_x) {
    if (training_x.n_rows != forest.row_cluster.size())
        throw std::invalid_argument("predict_oob: expects the training matrix");
    std::vector<double> out(training_x.n_rows, kAbsent);
    for (std::size_t i = 0; i < training_x.n_rows; ++i) {
        double sum = 0.0;
        int used = 0;
        const int cluster = forest.row_cluster[i];
        for (const auto& tree : forest.trees) {
            if (tree.in_bag_cluster(cluster)) continue;
            sum += tree.predict(training_x.row(i));
            used += 1;
        }
        if (used > 0) out[i] = sum / used;
    }
    return out;
}

std::vector<ImportanceEntry> variable_importance(const Forest& forest) {
    std::vector<double> weight(forest.feature_names.size(), 0.0);
    double total = 0.0;
    const bool depth_weighted = forest.config.importance_depth_weighted;
    for (const auto& tree : forest.trees) {
        // depth-first with explicit (node, depth) stack
        std::vector<std::pair<int, int>> stack{{0, 0}};
        while (!stack.empty()) {
            auto [id, depth] = stack.back();
            stack.pop_back();
            const TreeNode& node = tree.nodes[id];
            if (node.is_leaf()) continue;
            double w = 1.0;
            if (depth_weighted) {
                if (depth > 4) w = 0.0;
                else w = std::pow(0.5, depth);
            }
            weight[node.feature] += w;
            total += w;
            stack.push_back({node.left, depth + 1});
            stack.push_back({node.right, depth + 1});
        }
    }
    if (total <= 0.0) return {};
    std::vector<ImportanceEntry> out;
    for (std::size_t f = 0; f < weight.size(); ++f) {
        out.push_back({forest.feature_names[f], weight[f] / total});
    }
    std::sort(out.begin(), out.end(), [](const ImportanceEntry& a, const ImportanceEntry& b) {
        if (a.weight != b.weight) return a.weight > b.weight;
        return a.feature < b.feature;
    });
    return out;
}

namespace {

bool verify_honesty_impl(const Forest& forest, const Matrix& x, const TrainData& data) {
    for (const auto& tree : forest.trees) {
        Tree copy = tree;
        compute_leaf_payloads(copy, x, data);
        for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
            const TreeNode& a = tree.nodes[i];
            const TreeNode& b = copy.nodes[i];
            if (!a.is_leaf()) continue;
            if (a.value != b.value || a.n_est != b.n_est || a.n_treated != b.n_treated ||
                a.n_control != b.n_control) {
                return false;
            }
        }
    }
    return true;
}

}  // namespace

bool verify_honesty(const Forest& forest, const Matrix& x, const std::vector<double>& targets) {
    TrainData data;
    data.kind = ForestKind::regression;
    data.target = &targets;
    return verify_honesty_impl(forest, x, data);
}

bool verify_honesty(const CausalForest& cf, const Matrix& x) {
    std::vector<double> d_raw(x.n_rows, 0.0);
    for (std::size_t i = 0; i < x.n_rows; ++i) {
        d_raw[i] = cf.d_residual[i] + cf.e_hat[i];  // reconstruct the binary flag
        d_raw[i] = d_raw[i] > 0.5 ? 1.0 : 0.0;
    }
    TrainData data;
    data.kind = ForestKind::causal;
    data.y_res = &cf.y_residual;
    data.d_res = &cf.d_residual;
    data.d_raw = &d_raw;
    return verify_honesty_impl(cf.forest, x, data);
}

bool verify_partition(const Forest& forest, const Matrix& x) {
    for (const auto& tree : forest.trees) {
        // Structure: every node reachable exactly once from the root.
        std::vector<int> seen(tree.nodes.size(), 0);
        std::vector<int> stack{0};
        while (!stack.empty()) {
            const int id = stack.back();
            stack.pop_back();
            if (id < 0 || id >= static_cast<int>(tree.nodes.size())) return false;
            if (seen[id]++) return false;
            const TreeNode& node = tree.nodes[id];
            if (!node.is_leaf()) {
                stack.push_back(node.left);
                stack.push_back(node.right);
            }
        }
        for (int s : seen) {
            if (s != 1) return false;
        }
        // Leaves are disjoint and exhaustive over the bag: routing assigns
        // each bag row to exactly one leaf, and the estimation counts stored
        // in the leaves account for every estimation-half row.
        std::vector<int> est_count(tree.nodes.size(), 0);
        for (int r : tree.estimation_half) est_count[tree.route(x.row(r))] += 1;
        for (int r : tree.split_half) tree.route(x.row(r));  // must terminate at a leaf
        for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
            if (tree.nodes[i].is_leaf() && est_count[i] != tree.nodes[i].n_est) return false;
            if (!tree.nodes[i].is_leaf() && est_count[i] != 0) return false;
        }
    }
    return true;
}

namespace {

json config_to_json(const ForestConfig& c) {
    return json{{"n_trees", c.n_trees},
                {"subsample_fraction", c.subsample_fraction},
                {"honesty_fraction", c.honesty_fraction},
                {"min_leaf_size", c.min_leaf_size},
                {"mtry", c.mtry},
                {"max_depth", c.max_depth},
                {"seed", c.seed},
                {"cluster_aware", c.cluster_aware},
                {"ci_group_size", c.ci_group_size},
                {"importance_depth_weighted", c.importance_depth_weighted}};
}

ForestConfig config_from_json(const json& j) {
    ForestConfig c;
    c.n_trees = j.at("n_trees");
    c.subsample_fraction = j.at("subsample_fraction");
    c.honesty_fraction = j.at("honesty_fraction");
    c.min_leaf_size = j.at("min_leaf_size");
    c.mtry = j.at("mtry");
    c.max_depth = j.at("max_depth");
    c.seed = j.at("seed");
    c.cluster_aware = j.at("cluster_aware");
    c.ci_group_size = j.at("ci_group_size");
    c.importance_depth_weighted = j.at("importance_depth_weighted");
    // n_threads is an execution setting, not part of the model; it is not
    // serialized and always loads as 1.
    return c;
}

json forest_to_json(const Forest& f) {
    json trees = json::array();
    for (const auto& tree : f.trees) {
        json nodes = json::array();
        for (const auto& n : tree.nodes) {
            nodes.push_back({n.feature, n.cut, n.left, n.right, n.value, n.n_est, n.n_treated, n.n_control});
        }
        trees.push_back({{"nodes", std::move(nodes)},
                         {"split_half", tree.split_half},
                         {"estimation_half", tree.estimation_half},
                         {"bag_clusters", tree.bag_clusters}});
    }
    return json{{"kind", f.kind == ForestKind::regression ? "regression" : "causal"},
                {"config", config_to_json(f.config)},
                {"feature_names", f.feature_names},
                {"cluster_names", f.cluster_names},
                {"row_cluster", f.row_cluster},
                {"trees", std::move(trees)}};
}

Forest forest_from_json(const json& j) {
    Forest f;
    f.kind = j.at("kind") == "causal" ? ForestKind::causal : ForestKind::regression;
    f.config = config_from_json(j.at("config"));
    f.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    f.cluster_names = j.at("cluster_names").get<std::vector<std::string>>();
    f.row_cluster = j.at("row_cluster").get<std::vector<int>>();
    for (const auto& jt : j.at("trees")) {
        Tree tree;
        for (const auto& jn : jt.at("nodes")) {
            TreeNode n;
            n.feature = jn.at(0);
            n.cut = jn.at(1);
            n.left = jn.at(2);
            n.right = jn.at(3);
            n.value = jn.at(4);
            n.n_est = jn.at(5);
            n.n_treated = jn.at(6);
            n.n_control = jn.at(7);
            tree.nodes.push_back(n);
        }
        tree.split_half = jt.at("split_half").get<std::vector<int>>();
        tree.estimation_half = jt.at("estimation_half").get<std::vector<int>>();
        tree.bag_clusters = jt.at("bag_clusters").get<std::vector<int>>();
        f.trees.push_back(std::move(tree));
    }
    return f;
}

}  // namespace

std::string serialize_forest(const Forest& forest) {
    json j = forest_to_json(forest);
    j["format"] = "crisisforest.forest";
    j["version"] = 1;
    return j.dump();
}

Forest deserialize_forest(const std::string& text) {
    json j = json::parse(text);
    if (j.at("format") != "crisisforest.forest" || j.at("version") != 1)
        throw std::runtime_error("forest file: unknown format or version");
    return forest_from_json(j);
}

std::string serialize_causal_forest(const CausalForest& cf) {
    json j{{"format", "crisisforest.causal_forest"},
           {"version", 1},
           {"causal", forest_to_json(cf.forest)},
           {"centering_outcome", forest_to_json(cf.centering_outcome)},
           {"centering_treatment", forest_to_json(cf.centering_treatment)},
           {"m_hat", cf.m_hat},
           {"e_hat", cf.e_hat},
           {"y_residual", cf.y_residual},
           {"d_residual", cf.d_residual}};
    return j.dump();
}

CausalForest deserialize_causal_forest(const std::string& text) {
    json j = json::parse(text);
    if (j.at("format") != "crisisforest.causal_forest" || j.at("version") != 1)
        throw std::runtime_error("causal forest file: unknown format or version");
    CausalForest cf;
    cf.forest = forest_from_json(j.at("causal"));
    cf.centering_outcome = forest_from_json(j.at("centering_outcome"));
    cf.centering_treatment = forest_from_json(j.at("centering_treatment"));
    cf.m_hat = j.at("m_hat").get<std::vector<double>>();
    cf.e_hat = j.at("e_hat").get<std::vector<double>>();
    cf.y_residual = j.at("y_residual").get<std::vector<double>>();
    cf.d_residual = j.at("d_residual").get<std::vector<double>>();
    return cf;
}

void save_causal_forest(const CausalForest& cf, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << serialize_causal_forest(cf);
}

CausalForest load_causal_forest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize_causal_forest(ss.str());
}

}  // namespace crisisforest
