#include "crisisforest/effects.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "crisisforest/format.hpp"
#include "crisisforest/inference.hpp"

namespace crisisforest {

using nlohmann::json;

SampleData sample_to_data(const CohortSample& sample) {
    SampleData data;
    const std::size_t n = sample.rows.size();
    const std::size_t p = sample.feature_names.size();
    data.x = Matrix(n, p);
    data.y.resize(n);
    data.d.resize(n);
    data.clusters.resize(n);
    data.child_ids.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const CohortRow& row = sample.rows[i];
        if (row.x.size() != p) throw std::invalid_argument("sample row has wrong covariate count");
        for (std::size_t c = 0; c < p; ++c) data.x.at(i, c) = row.x[c];
        data.y[i] = row.y;
        data.d[i] = row.d;
        data.clusters[i] = row.cluster;
        data.child_ids[i] = row.child_id;
    }
    return data;
}

PropensityModel estimate_propensity(const SampleData& data, const ForestConfig& config) {
    bool any_treated = false;
    bool any_control = false;
    for (double v : data.d) (v == 1.0 ? any_treated : any_control) = true;
    if (!any_treated) throw std::invalid_argument("estimate_propensity: treated arm is empty");
    if (!any_control) throw std::invalid_argument("estimate_propensity: control arm is empty");

    PropensityModel model;
    model.forest = fit_regression_forest(data.x, data.d, data.clusters, config);
    model.oob_scores = predict_oob(model.forest, data.x);
    double d_mean = 0.0;
    for (double v : data.d) d_mean += v;
    d_mean /= static_cast<double>(data.d.size());
    for (double& s : model.oob_scores) {
        if (std::isnan(s)) s = d_mean;
        s = std::clamp(s, kPropensityClampLow, kPropensityClampHigh);
    }
    return model;
}

std::vector<double> overlap_weights(const std::vector<double>& scores) {
    std::vector<double> w(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i] < 0.0 || scores[i] > 1.0)
            throw std::invalid_argument("overlap_weights: score outside [0, 1]");
        w[i] = scores[i] * (1.0 - scores[i]);
    }
    return w;
}

std::vector<double> doubly_robust_scores(const SampleData& data,
                                         const std::vector<double>& propensity,
                                         const std::vector<double>& m_hat,
                                         const std::vector<double>& tau_hat) {
    const std::size_t n = data.y.size();
    if (propensity.size() != n || m_hat.size() != n || tau_hat.size() != n)
        throw std::invalid_argument("doubly_robust_scores: length mismatch");
    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double e = propensity[i];
        const double resid_d = data.d[i] - e;
        const double correction =
            resid_d / (e * (1.0 - e)) * (data.y[i] - m_hat[i] - resid_d * tau_hat[i]);
        scores[i] = tau_hat[i] + correction;
        if (!std::isfinite(scores[i]))
            throw std::runtime_error("doubly_robust_scores: non-finite score at row " +
                                     std::to_string(i));
    }
    return scores;
}

namespace {

// OOB effect predictions; in-every-bag rows use the full forest.
std::vector<double> oob_tau(const CausalForest& cf, const Matrix& x) {
    std::vector<double> tau = predict_oob(cf.forest, x);
    std::vector<double> full;
    for (std::size_t i = 0; i < tau.size(); ++i) {
        if (!std::isnan(tau[i])) continue;
        if (full.empty()) full = predict(cf.forest, x);
        tau[i] = full[i];
    }
    return tau;
}

}  // namespace

AteComponents ate_components(const CohortSample& sample, const CausalForest& cf,
                             const PropensityModel& propensity) {
    SampleData data = sample_to_data(sample);
    const std::size_t n = data.y.size();
    if (propensity.oob_scores.size() != n)
        throw std::invalid_argument("estimate_ate: propensity rows do not match the sample");
    if (cf.m_hat.size() != n)
        throw std::invalid_argument("estimate_ate: forest was fitted on a different sample");

    std::vector<double> tau = oob_tau(cf, data.x);
    AteComponents comp;
    comp.scores = doubly_robust_scores(data, propensity.oob_scores, cf.m_hat, tau);
    comp.weights = overlap_weights(propensity.oob_scores);
    comp.clusters = std::move(data.clusters);
    return comp;
}

EffectEstimate estimate_ate(const CohortSample& sample, const CausalForest& cf,
                            const PropensityModel& propensity, double level) {
    AteComponents comp = ate_components(sample, cf, propensity);
    const std::vector<double>& gamma = comp.scores;
    const std::vector<double>& w = comp.weights;
    const std::size_t n = gamma.size();

    double sum_w = 0.0;
    double sum_wg = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sum_w += w[i];
        sum_wg += w[i] * gamma[i];
    }
    if (sum_w == 0.0) throw std::runtime_error("estimate_ate: degenerate overlap, all weights zero");

    EffectEstimate est;
    est.threshold = sample.threshold.token;
    est.level = level;
    est.tau_hat = sum_wg / sum_w;
    VarianceEstimate var = cluster_variance(gamma, w, comp.clusters);
    est.std_err = std::sqrt(var.value);
    est.n_clusters = var.n_clusters;
    auto [lo, hi] = confidence_interval(est.tau_hat, var.value, level);
    est.ci_low = lo;
    est.ci_high = hi;
    for (const auto& row : sample.rows) (row.d == 1.0 ? est.n_treated : est.n_control) += 1;
    return est;
}

CateTable estimate_cate(const CohortSample& sample, const CausalForest& cf) {
    SampleData data = sample_to_data(sample);
    std::vector<double> tau = oob_tau(cf, data.x);
    std::vector<double> var = little_bags_variance(cf.forest, data.x);

    CateTable table;
    table.rows.resize(data.y.size());
    for (std::size_t i = 0; i < data.y.size(); ++i) {
        table.rows[i] = {data.child_ids[i], tau[i], var[i], data.clusters[i]};
    }
    return table;
}

Histogram cate_histogram(const CateTable& table, int n_bins) {
    if (n_bins < 2) throw std::invalid_argument("cate_histogram: need n_bins >= 2");
    Histogram hist;
    if (table.rows.empty()) return hist;

    double lo = table.rows[0].tau;
    double hi = lo;
    double sum = 0.0;
    for (const auto& row : table.rows) {
        lo = std::min(lo, row.tau);
        hi = std::max(hi, row.tau);
        sum += row.tau;
    }
    hist.mean = sum / static_cast<double>(table.rows.size());
    if (hi == lo) hi = lo + 1e-12;  // all-equal table collapses into one bin

    hist.bin_edges.resize(n_bins + 1);
    for (int b = 0; b <= n_bins; ++b) {
        hist.bin_edges[b] = lo + (hi - lo) * static_cast<double>(b) / n_bins;
    }
    hist.counts.assign(n_bins, 0);
    for (const auto& row : table.rows) {
        int b = static_cast<int>((row.tau - lo) / (hi - lo) * n_bins);
        b = std::clamp(b, 0, n_bins - 1);
        hist.counts[b] += 1;
    }
    return hist;
}

int count_modes(const Histogram& hist) {
    if (hist.counts.empty()) return 0;
    std::vector<double> s(hist.counts.begin(), hist.counts.end());
    for (int pass = 0; pass < 2; ++pass) {
        std::vector<double> t(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) {
            const double prev = i > 0 ? s[i - 1] : s[i];
            const double next = i + 1 < s.size() ? s[i + 1] : s[i];
            t[i] = (prev + s[i] + next) / 3.0;
        }
        s.swap(t);
    }
    double peak = 0.0;
    for (double v : s) peak = std::max(peak, v);
    if (peak <= 0.0) return 0;
    const double floor_height = 0.1 * peak;

    // A mode is a maximal run of equal smoothed values strictly above both
    // neighbors (edges count as below-neighbor) and above the height floor.
    int modes = 0;
    std::size_t i = 0;
    while (i < s.size()) {
        std::size_t j = i;
        while (j + 1 < s.size() && s[j + 1] == s[i]) ++j;
        const bool rises = i == 0 || s[i - 1] < s[i];
        const bool falls = j + 1 == s.size() || s[j + 1] < s[i];
        if (rises && falls && s[i] >= floor_height) ++modes;
        i = j + 1;
    }
    return modes;
}

void write_cate_csv(const CateTable& table, std::ostream& out) {
    out << "child_id,tau_hat,variance,cluster\n";
    for (const auto& row : table.rows) {
        out << row.child_id << ',' << format_double(row.tau) << ',' << format_double(row.variance)
            << ',' << row.cluster << '\n';
    }
}

void write_histogram_csv(const Histogram& hist, std::ostream& out) {
    out << "bin_low,bin_high,count\n";
    for (std::size_t b = 0; b < hist.counts.size(); ++b) {
        out << format_double(hist.bin_edges[b]) << ',' << format_double(hist.bin_edges[b + 1]) << ','
            << hist.counts[b] << '\n';
    }
}

std::string effect_to_json(const EffectEstimate& e, const ForestConfig& config) {
    json j{{"threshold", e.threshold},
           {"tau_hat", e.tau_hat},
           {"std_err", e.std_err},
           {"ci_low", e.ci_low},
           {"ci_high", e.ci_high},
           {"level", e.level},
           {"n_treated", e.n_treated},
           {"n_control", e.n_control},
           {"n_clusters", e.n_clusters},
           {"estimator", e.estimator},
           {"config_echo",
            {{"n_trees", config.n_trees},
             {"subsample_fraction", config.subsample_fraction},
             {"honesty_fraction", config.honesty_fraction},
             {"min_leaf_size", config.min_leaf_size},
             {"mtry", config.mtry},
             {"max_depth", config.max_depth},
             {"seed", config.seed},
             {"cluster_aware", config.cluster_aware},
             {"ci_group_size", config.ci_group_size},
             {"importance_depth_weighted", config.importance_depth_weighted},
             {"propensity_clamp", {kPropensityClampLow, kPropensityClampHigh}}}}};
    return j.dump();
}

}  // namespace crisisforest
