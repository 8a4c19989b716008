#include "crisisforest/inference.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "crisisforest/rng.hpp"

namespace crisisforest {

namespace {

// Cluster token -> row indices, in sorted token order for a fixed summation
// order regardless of row permutation.
std::map<std::string, std::vector<std::size_t>> index_clusters(
    const std::vector<std::string>& clusters) {
    std::map<std::string, std::vector<std::size_t>> index;
    for (std::size_t i = 0; i < clusters.size(); ++i) index[clusters[i]].push_back(i);
    return index;
}

}  // namespace

VarianceEstimate cluster_variance(const std::vector<double>& scores,
                                  const std::vector<double>& weights,
                                  const std::vector<std::string>& clusters) {
    const std::size_t n = scores.size();
    if (weights.size() != n || clusters.size() != n)
        throw std::invalid_argument("cluster_variance: length mismatch");
    auto index = index_clusters(clusters);
    const int g_count = static_cast<int>(index.size());
    if (g_count < 2)
        throw std::invalid_argument(
            "cluster_variance: need >= 2 clusters; pass one cluster per row to request "
            "unclustered inference explicitly");

    double sum_w = 0.0;
    double sum_ws = 0.0;
    for (const auto& [_, rows] : index) {
        for (std::size_t i : rows) {
            sum_w += weights[i];
            sum_ws += weights[i] * scores[i];
        }
    }
    if (sum_w == 0.0) throw std::invalid_argument("cluster_variance: zero total weight");
    const double tau_hat = sum_ws / sum_w;

    double meat = 0.0;
    for (const auto& [_, rows] : index) {
        double cluster_sum = 0.0;
        for (std::size_t i : rows) cluster_sum += weights[i] * (scores[i] - tau_hat);
        meat += cluster_sum * cluster_sum;
    }
    const double correction = static_cast<double>(g_count) / (g_count - 1);

    VarianceEstimate out;
    out.value = correction * meat / (sum_w * sum_w);
    out.method = "cluster_sandwich";
    out.n_clusters = g_count;
    return out;
}

std::vector<double> little_bags_variance(const Forest& forest, const Matrix& x) {
    const int s = forest.config.ci_group_size;
    const int n_groups = forest.n_groups();
    if (n_groups < 2) throw std::invalid_argument("little_bags_variance: need >= 2 tree groups");
    if (x.n_cols != forest.feature_names.size())
        throw std::invalid_argument("little_bags_variance: feature count mismatch");

    std::vector<double> out(x.n_rows, 0.0);
    std::vector<double> group_mean(n_groups);
    std::vector<double> group_within(n_groups);
    std::vector<double> preds(forest.trees.size());

    for (std::size_t i = 0; i < x.n_rows; ++i) {
        const double* xi = x.row(i);
        for (std::size_t t = 0; t < forest.trees.size(); ++t) preds[t] = forest.trees[t].predict(xi);

        double overall = 0.0;
        for (int g = 0; g < n_groups; ++g) {
            const std::size_t lo = static_cast<std::size_t>(g) * s;
            const std::size_t hi = std::min(lo + s, forest.trees.size());
            const std::size_t size = hi - lo;
            double m = 0.0;
            for (std::size_t t = lo; t < hi; ++t) m += preds[t];
            m /= static_cast<double>(size);
            group_mean[g] = m;
            double w = 0.0;
            for (std::size_t t = lo; t < hi; ++t) w += (preds[t] - m) * (preds[t] - m);
            group_within[g] = size > 1 ? w / static_cast<double>(size - 1) : 0.0;
            overall += m;
        }
        overall /= n_groups;

        double between = 0.0;
        double within = 0.0;
        for (int g = 0; g < n_groups; ++g) {
            between += (group_mean[g] - overall) * (group_mean[g] - overall);
            within += group_within[g];
        }
        between /= (n_groups - 1);
        within /= n_groups;
        out[i] = std::max(0.0, between - within / s);
    }
    return out;
}

// Acklam's rational approximation of the inverse normal CDF, |error| < 1.2e-9.
double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p outside (0, 1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double p_low = 0.02425;
    double q, r;
    if (p < p_low) {
        q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p <= 1.0 - p_low) {
        q = p - 0.5;
        r = q * q;
        return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
               (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    }
    q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
}

std::pair<double, double> confidence_interval(double tau_hat, double variance, double level) {
    if (variance < 0.0) throw std::invalid_argument("confidence_interval: negative variance");
    if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("confidence_interval: bad level");
    const double z = normal_quantile((1.0 + level) / 2.0);
    const double half = z * std::sqrt(variance);
    return {tau_hat - half, tau_hat + half};
}

std::vector<double> cluster_bootstrap_ate(const std::vector<double>& scores,
                                          const std::vector<double>& weights,
                                          const std::vector<std::string>& clusters, int n_replicates,
                                          std::uint64_t seed) {
    auto index = index_clusters(clusters);
    std::vector<const std::vector<std::size_t>*> groups;
    for (const auto& [_, rows] : index) groups.push_back(&rows);
    const std::size_t g_count = groups.size();
    if (g_count < 2) throw std::invalid_argument("cluster_bootstrap_ate: need >= 2 clusters");

    std::vector<double> out;
    out.reserve(n_replicates);
    for (int rep = 0; rep < n_replicates; ++rep) {
        Rng rng = Rng::derive(seed, 0x626f6f74ULL, static_cast<std::uint64_t>(rep));
        double sum_w = 0.0;
        double sum_ws = 0.0;
        for (std::size_t k = 0; k < g_count; ++k) {
            const auto& rows = *groups[rng.uniform_index(g_count)];
            for (std::size_t i : rows) {
                sum_w += weights[i];
                sum_ws += weights[i] * scores[i];
            }
        }
        out.push_back(sum_w > 0.0 ? sum_ws / sum_w : 0.0);
    }
    return out;
}

}  // namespace crisisforest
