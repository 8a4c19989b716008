#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace crisisforest {

struct Matrix {
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;
    std::vector<double> values;  // row-major

    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols) : n_rows(rows), n_cols(cols), values(rows * cols, 0.0) {}

    double at(std::size_t r, std::size_t c) const { return values[r * n_cols + c]; }
    double& at(std::size_t r, std::size_t c) { return values[r * n_cols + c]; }
    const double* row(std::size_t r) const { return values.data() + r * n_cols; }
};

struct ForestConfig {
    int n_trees = 2000;
    double subsample_fraction = 0.5;
    double honesty_fraction = 0.5;
    int min_leaf_size = 5;
    int mtry = 0;       // 0 resolves to ceil(sqrt(p))
    int max_depth = -1;  // -1 unlimited
    std::uint64_t seed = 42;
    bool cluster_aware = true;
    int ci_group_size = 10;  // little-bags group size
    bool importance_depth_weighted = true;
    int n_threads = 1;
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double cut = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;  // leaf payload, from estimation-half rows
    int n_est = 0;
    int n_treated = 0;  // causal leaves only
    int n_control = 0;

    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;
    std::vector<int> split_half;       // row ids, shuffled bag order
    std::vector<int> estimation_half;  // row ids
    std::vector<int> bag_clusters;     // sorted cluster ids

    int route(const double* x) const;
    double predict(const double* x) const { return nodes[route(x)].value; }
    bool in_bag_cluster(int cluster_id) const;
};

enum class ForestKind { regression, causal };

struct Forest {
    ForestKind kind = ForestKind::regression;
    ForestConfig config;  // resolved: mtry filled in
    std::vector<std::string> feature_names;
    std::vector<std::string> cluster_names;
    std::vector<int> row_cluster;  // training row -> cluster id
    std::vector<Tree> trees;

    int n_groups() const;  // little-bags groups of config.ci_group_size trees
};

inline constexpr double kAbsent = std::numeric_limits<double>::quiet_NaN();

// Honest regression forest with cluster-aware subsampling. clusters[i] is the
// cluster token of row i; an empty vector means every row is its own cluster.
Forest fit_regression_forest(const Matrix& x, const std::vector<double>& targets,
                             const std::vector<std::string>& clusters, const ForestConfig& config,
                             const std::vector<std::string>& feature_names = {});

struct CausalForest {
    Forest forest;               // trees split on effect heterogeneity
    Forest centering_outcome;    // m(x) = E[Y|X]
    Forest centering_treatment;  // e(x) = E[D|X]
    std::vector<double> m_hat;   // OOB nuisance fits over the training rows
    std::vector<double> e_hat;
    std::vector<double> y_residual;
    std::vector<double> d_residual;
};

// Local centering followed by honest causal trees: residualize y and d on
// out-of-bag nuisance fits, then split on the heterogeneity of the
// residual-on-residual effect. Leaf payloads are residual-ratio effects
// computed from estimation-half rows.
CausalForest fit_causal_forest(const Matrix& x, const std::vector<double>& y,
                               const std::vector<double>& d,
                               const std::vector<std::string>& clusters,
                               const ForestConfig& config,
                               const std::vector<std::string>& feature_names = {});

// Average over all trees.
std::vector<double> predict(const Forest& forest, const Matrix& x);

// OOB prediction over the training matrix: row i averages only trees whose
// bag clusters exclude i's cluster. Rows in every bag get kAbsent (NaN).
std::vector<double> predict_oob(const Forest& forest, const Matrix& training_x);

struct ImportanceEntry {
    std::string feature;
    double weight = 0.0;
};

// Normalized split frequency, depth-weighted (1/2)^depth and truncated at
// depth 4 when config.importance_depth_weighted is set, plain counts
// otherwise. Descending by weight, ties broken by feature name. Empty when
// the forest never splits.
std::vector<ImportanceEntry> variable_importance(const Forest& forest);

// Invariant checks, usable on freshly fitted and on deserialized forests.
// Honesty: recomputing each leaf payload from the stored estimation-half
// rows reproduces the stored value bit-exactly.
bool verify_honesty(const Forest& forest, const Matrix& x, const std::vector<double>& targets);
bool verify_honesty(const CausalForest& cf, const Matrix& x);
// Partition: every tree is a well-formed binary tree and its leaves'
// estimation counts add up to the routed estimation-half rows.
bool verify_partition(const Forest& forest, const Matrix& x);

std::string serialize_forest(const Forest& forest);
Forest deserialize_forest(const std::string& text);
std::string serialize_causal_forest(const CausalForest& cf);
CausalForest deserialize_causal_forest(const std::string& text);
void save_causal_forest(const CausalForest& cf, const std::string& path);
CausalForest load_causal_forest(const std::string& path);

}  // namespace crisisforest
