#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crisisforest/forest.hpp"

namespace crisisforest {

struct VarianceEstimate {
    double value = 0.0;
    std::string method;  // "cluster_sandwich" | "little_bags"
    int n_clusters = 0;
};

// Variance of the weighted mean tau_hat = sum(w*score)/sum(w) treating
// cluster sums of centered weighted scores as independent units:
//   V = G/(G-1) * sum_g (sum_{i in g} w_i (score_i - tau_hat))^2 / (sum w)^2
// Requires at least two clusters; unclustered inference must be requested
// explicitly by passing one cluster token per row.
VarianceEstimate cluster_variance(const std::vector<double>& scores,
                                  const std::vector<double>& weights,
                                  const std::vector<std::string>& clusters);

// Per-row prediction variance from the forest's little-bags structure:
// between-group variance of group-mean predictions, debiased by the average
// within-group variance divided by the group size, floored at zero.
std::vector<double> little_bags_variance(const Forest& forest, const Matrix& x);

double normal_quantile(double p);

// tau_hat +/- z_{(1+level)/2} * sqrt(variance)
std::pair<double, double> confidence_interval(double tau_hat, double variance, double level);

// Cluster bootstrap cross-check: resample clusters with replacement and
// recompute the weighted mean, B replicates.
std::vector<double> cluster_bootstrap_ate(const std::vector<double>& scores,
                                          const std::vector<double>& weights,
                                          const std::vector<std::string>& clusters, int n_replicates,
                                          std::uint64_t seed);

}  // namespace crisisforest
