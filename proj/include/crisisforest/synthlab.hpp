#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crisisforest/cohort.hpp"
#include "crisisforest/forest.hpp"

namespace crisisforest {

// Covariate-dependent effect shift. Supported covariate tokens and the
// feature column each one is visible through:
//   low_income   -> gdp_per_capita (country income class)
//   large_population -> population (above-median countries)
//   urban        -> residence_urban
//   young_mother -> mother_age (< 25)
//   female       -> sex_female
struct ModeratorSpec {
    std::string covariate;
    double effect_shift = 0.0;
};

struct DgpConfig {
    int n_countries = 10;
    int first_year = 1990;
    int years_span = 4;  // birth-year cohorts per country
    int children_per_country_year = 50;
    double baseline_mortality = 0.2;
    std::optional<double> true_ate;  // constant component of tau(x)
    std::vector<ModeratorSpec> moderators;
    double cluster_effect_sd = 0.0;
    std::string sdc_assignment = "random_country_year";  // | "gdp_dependent"
    double event_prob = 0.15;      // per country-year, random assignment
    double event_prob_low = 0.30;  // gdp_dependent: low-income countries
    double event_prob_mid = 0.05;  // gdp_dependent: middle-income countries
    std::string threshold = "u1";
    std::uint64_t seed = 1;
};

struct TruthBundle {
    std::map<std::string, double> tau_by_child;
    double true_ate = 0.0;  // mean of per-child tau over the population
    std::map<std::string, double> propensity_by_country_year;
    std::string moderator_feature;  // column carrying the heterogeneity, "" if none
};

struct Panel {
    std::vector<ChildRecord> children;
    std::vector<CrisisEvent> events;
    std::vector<CountryYearCovariates> covariates;
    TruthBundle truth;
};

// Hierarchical country/year/child generator with known ground truth.
// Outcomes are Bernoulli(baseline + cluster effect + d * tau(x)); exposure is
// assigned at the country-year level and propagated through the same window
// logic as real data. Throws when the configured shifts cannot keep the
// outcome probability inside [0, 1].
Panel generate_panel(const DgpConfig& dgp);

void write_panel_csvs(const Panel& panel, const std::string& dir);

DgpConfig dgp_from_json_file(const std::string& path);
DgpConfig dgp_from_json(const std::string& text);

struct RepResult {
    int rep = 0;
    bool failed = false;
    std::string error;
    double tau_hat = 0.0;
    double std_err = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double true_ate = 0.0;
    bool covered = false;
    int moderator_rank = 0;  // 1-based rank in variable importance, 0 = n/a
    int n_modes = 0;         // modes of the CATE histogram (moderated DGPs)
    double group_base_mean = 0.0;     // mean CATE over unshifted children
    double group_shifted_mean = 0.0;  // mean CATE over shifted children
    double importance_sum = 0.0;
    double seconds = 0.0;
};

struct MonteCarloReport {
    std::vector<RepResult> reps;
    double bias = 0.0;
    double rmse = 0.0;
    double coverage = 0.0;          // share of reps whose CI covers the truth
    double moderator_top1 = 0.0;    // share of reps ranking the moderator first
    double two_mode_share = 0.0;    // share of reps with a bimodal CATE histogram
    double mean_seconds = 0.0;
    int n_failed = 0;
};

struct EvalOptions {
    int n_reps = 2;
    double level = 0.95;
    int cate_bins = 25;
    bool use_oracle = false;  // read the TruthBundle instead of estimating
    bool compute_cate = true;
};

// Monte Carlo harness: per replicate, generate a panel, run the full
// cohort -> forest -> estimate pipeline, and compare against the truth.
// Failed replicates are recorded and skipped; more than 20% failures aborts.
MonteCarloReport evaluate_estimator(const DgpConfig& dgp, const ForestConfig& forest_config,
                                    const EvalOptions& options);

std::string report_to_json(const MonteCarloReport& report);
void write_report_csv(const MonteCarloReport& report, std::ostream& out);

}  // namespace crisisforest
