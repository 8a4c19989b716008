#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "crisisforest/cohort.hpp"
#include "crisisforest/forest.hpp"

namespace crisisforest {

// Clamp bounds for estimated propensities; keeps inverse-propensity terms
// bounded. Surfaced in the config echo of every report.
inline constexpr double kPropensityClampLow = 0.01;
inline constexpr double kPropensityClampHigh = 0.99;

struct SampleData {
    Matrix x;
    std::vector<double> y;
    std::vector<double> d;
    std::vector<std::string> clusters;
    std::vector<std::string> child_ids;
};

SampleData sample_to_data(const CohortSample& sample);

struct PropensityModel {
    Forest forest;
    std::vector<double> oob_scores;  // clamped to [0.01, 0.99]
};

// OOB propensity fit e(x) = E[D|X]; throws when either arm is missing,
// naming the missing arm.
PropensityModel estimate_propensity(const SampleData& data, const ForestConfig& config);

// w_i = e_i * (1 - e_i), in [0, 0.25].
std::vector<double> overlap_weights(const std::vector<double>& scores);

// AIPW score per row:
//   G_i = tau(x_i) + (d_i - e_i)/(e_i(1-e_i)) * (y_i - m(x_i) - (d_i - e_i) tau(x_i))
// with OOB nuisances m, e, tau.
std::vector<double> doubly_robust_scores(const SampleData& data,
                                         const std::vector<double>& propensity,
                                         const std::vector<double>& m_hat,
                                         const std::vector<double>& tau_hat);

struct EffectEstimate {
    std::string threshold;
    double tau_hat = 0.0;
    double std_err = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double level = 0.95;
    int n_treated = 0;
    int n_control = 0;
    int n_clusters = 0;
    std::string estimator = "overlap_aipw";
};

struct AteComponents {
    std::vector<double> scores;   // AIPW scores, one per row
    std::vector<double> weights;  // overlap weights
    std::vector<std::string> clusters;
};

AteComponents ate_components(const CohortSample& sample, const CausalForest& cf,
                             const PropensityModel& propensity);

// Overlap-weighted AIPW ATE with country-year cluster-robust standard error.
EffectEstimate estimate_ate(const CohortSample& sample, const CausalForest& cf,
                            const PropensityModel& propensity, double level = 0.95);

struct CateRow {
    std::string child_id;
    double tau = 0.0;
    double variance = 0.0;
    std::string cluster;
};

struct CateTable {
    std::vector<CateRow> rows;
};

// Per-row OOB effect estimates with little-bags variances. Rows present in
// every bag fall back to the all-trees prediction.
CateTable estimate_cate(const CohortSample& sample, const CausalForest& cf);

struct Histogram {
    std::vector<double> bin_edges;  // n_bins + 1
    std::vector<int> counts;        // n_bins
    double mean = 0.0;              // marker: mean effect
    double zero = 0.0;              // marker: zero line
};

Histogram cate_histogram(const CateTable& table, int n_bins);

// Mode count of a histogram after light smoothing: local maxima of the
// twice-smoothed (window 3) counts with height >= 10% of the tallest peak.
int count_modes(const Histogram& hist);

void write_cate_csv(const CateTable& table, std::ostream& out);
void write_histogram_csv(const Histogram& hist, std::ostream& out);
std::string effect_to_json(const EffectEstimate& e, const ForestConfig& config);

}  // namespace crisisforest
