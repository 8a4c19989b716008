#include "crisisforest/synthlab.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "crisisforest/effects.hpp"
#include "crisisforest/format.hpp"
#include "crisisforest/rng.hpp"

namespace crisisforest {

namespace {

using nlohmann::json;

struct CountryInfo {
    std::string code;
    bool low_income = false;
    bool large_population = false;
    double gdp_base = 0.0;
    double pop_base = 0.0;
};

std::string feature_for_moderator(const std::string& token) {
    if (token == "low_income") return "gdp_per_capita";
    if (token == "large_population") return "population";
    if (token == "urban") return "residence_urban";
    if (token == "young_mother") return "mother_age";
    if (token == "female") return "sex_female";
    throw std::invalid_argument("dgp: unknown moderator covariate '" + token + "'");
}

bool moderator_applies(const std::string& token, const CountryInfo& country,
                       const ChildRecord& child) {
    if (token == "low_income") return country.low_income;
    if (token == "large_population") return country.large_population;
    if (token == "urban") return child.residence_urban == 1;
    if (token == "young_mother") return child.mother_age < 25.0;
    if (token == "female") return child.sex_female == 1;
    return false;
}

double event_probability(const DgpConfig& dgp, const CountryInfo& country) {
    if (dgp.sdc_assignment == "gdp_dependent") {
        return country.low_income ? dgp.event_prob_low : dgp.event_prob_mid;
    }
    return dgp.event_prob;
}

}  // namespace

Panel generate_panel(const DgpConfig& dgp) {
    if (dgp.n_countries < 1 || dgp.years_span < 1 || dgp.children_per_country_year < 1)
        throw std::invalid_argument("dgp: counts must be positive");
    if (dgp.sdc_assignment != "random_country_year" && dgp.sdc_assignment != "gdp_dependent")
        throw std::invalid_argument("dgp: unknown sdc_assignment '" + dgp.sdc_assignment + "'");
    auto threshold = threshold_from_token(dgp.threshold);
    if (!threshold) throw std::invalid_argument("dgp: unknown threshold '" + dgp.threshold + "'");
    for (const auto& mod : dgp.moderators) feature_for_moderator(mod.covariate);  // validates

    // Effect range check: baseline plus any reachable tau must stay in [0, 1].
    const double base_tau = dgp.true_ate.value_or(0.0);
    double min_tau = base_tau;
    double max_tau = base_tau;
    for (const auto& mod : dgp.moderators) {
        min_tau += std::min(0.0, mod.effect_shift);
        max_tau += std::max(0.0, mod.effect_shift);
    }
    if (dgp.baseline_mortality + std::min(0.0, min_tau) < 0.0 ||
        dgp.baseline_mortality + std::max(0.0, max_tau) > 1.0) {
        std::ostringstream msg;
        msg << "dgp: baseline " << dgp.baseline_mortality << " with effect range [" << min_tau
            << ", " << max_tau << "] leaves [0, 1]";
        throw std::invalid_argument(msg.str());
    }

    Rng rng(dgp.seed);
    Panel panel;

    std::vector<CountryInfo> countries(dgp.n_countries);
    std::vector<double> pops;
    for (int c = 0; c < dgp.n_countries; ++c) {
        CountryInfo& info = countries[c];
        char code[16];
        std::snprintf(code, sizeof(code), "C%02d", c);
        info.code = code;
        info.low_income = c % 2 == 0;  // deterministic half/half split
        info.gdp_base = info.low_income ? rng.uniform(500.0, 2000.0) : rng.uniform(5000.0, 20000.0);
        info.pop_base = std::exp(rng.uniform(std::log(1e6), std::log(1e8)));
        pops.push_back(info.pop_base);
    }
    std::vector<double> sorted_pops = pops;
    std::sort(sorted_pops.begin(), sorted_pops.end());
    const double pop_median = sorted_pops[sorted_pops.size() / 2];
    for (auto& info : countries) info.large_population = info.pop_base >= pop_median;

    const int last_year = dgp.first_year + dgp.years_span - 1;
    const int event_year_lo = dgp.first_year - 1;
    const int event_year_hi = 1900 + ((last_year - 1900) * 12 + 12 + threshold->months - 1) / 12;

    // Realized events plus assignment probabilities for the truth bundle.
    std::map<std::pair<std::string, int>, double> event_prob_by_cy;
    for (const auto& country : countries) {
        const double p = event_probability(dgp, country);
        for (int year = event_year_lo; year <= event_year_hi; ++year) {
            event_prob_by_cy[{country.code, year}] = p;
            if (rng.bernoulli(p)) panel.events.push_back({country.code, year});
        }
    }

    for (const auto& country : countries) {
        for (int year = dgp.first_year; year <= event_year_hi; ++year) {
            panel.covariates.push_back({country.code, year, country.gdp_base * rng.uniform(0.95, 1.05),
                                        country.pop_base * rng.uniform(0.98, 1.02)});
        }
    }

    // Design propensity of exposure for each birth cohort, marginalizing over
    // the event draws and the uniform birth month.
    for (const auto& country : countries) {
        for (int year = dgp.first_year; year <= last_year; ++year) {
            double p_sum = 0.0;
            for (int month = 1; month <= 12; ++month) {
                const int cmc = (year - 1900) * 12 + month;
                const int lo_year = 1900 + (cmc - 9 - 1) / 12;
                const int hi_year = 1900 + (cmc + threshold->months - 1) / 12;
                double p_none = 1.0;
                for (int ev_year = lo_year; ev_year <= hi_year; ++ev_year) {
                    auto it = event_prob_by_cy.find({country.code, ev_year});
                    if (it != event_prob_by_cy.end()) p_none *= 1.0 - it->second;
                }
                p_sum += 1.0 - p_none;
            }
            panel.truth.propensity_by_country_year[country.code + ":" + std::to_string(year)] =
                p_sum / 12.0;
        }
    }

    const int survey_year = last_year + 7;  // no cohort is censored below u5
    double tau_sum = 0.0;
    for (std::size_t c = 0; c < countries.size(); ++c) {
        const CountryInfo& country = countries[c];
        for (int year = dgp.first_year; year <= last_year; ++year) {
            // Cluster random effect, redrawn until every reachable outcome
            // probability stays inside [0, 1].
            double cluster_effect = 0.0;
            for (int attempt = 0;; ++attempt) {
                cluster_effect = dgp.cluster_effect_sd > 0.0 ? rng.normal(0.0, dgp.cluster_effect_sd) : 0.0;
                const double lo = dgp.baseline_mortality + cluster_effect + std::min(0.0, min_tau);
                const double hi = dgp.baseline_mortality + cluster_effect + std::max(0.0, max_tau);
                if (lo >= 0.0 && hi <= 1.0) break;
                if (attempt > 1000)
                    throw std::invalid_argument("dgp: cluster_effect_sd incompatible with baseline");
            }

            for (int k = 0; k < dgp.children_per_country_year; ++k) {
                ChildRecord child;
                char id[32];
                std::snprintf(id, sizeof(id), "%s_%d_%03d", country.code.c_str(), year, k);
                child.child_id = id;
                child.country = country.code;
                child.birth_cmc = (year - 1900) * 12 + 1 + static_cast<int>(rng.uniform_index(12));
                child.survey_year = survey_year;
                child.sex_female = rng.bernoulli(0.5) ? 1 : 0;
                child.mother_age = std::round(rng.uniform(15.0, 45.0) * 10.0) / 10.0;
                child.mother_edu = static_cast<int>(rng.uniform_index(4));
                child.residence_urban = rng.bernoulli(0.4) ? 1 : 0;
                child.birth_order = 1 + static_cast<int>(rng.uniform_index(6));
                child.multiple_birth = rng.bernoulli(0.02);

                double tau = base_tau;
                for (const auto& mod : dgp.moderators) {
                    if (moderator_applies(mod.covariate, country, child)) tau += mod.effect_shift;
                }
                const bool exposed = build_exposure(child, panel.events, threshold->months);
                const double p = dgp.baseline_mortality + cluster_effect + (exposed ? tau : 0.0);
                child.died = rng.bernoulli(p);
                if (child.died) {
                    child.age_at_death_months = static_cast<int>(rng.uniform_index(threshold->months + 1));
                }
                panel.truth.tau_by_child[child.child_id] = tau;
                tau_sum += tau;
                panel.children.push_back(std::move(child));
            }
        }
    }
    panel.truth.true_ate = tau_sum / static_cast<double>(panel.children.size());
    if (!dgp.moderators.empty()) {
        panel.truth.moderator_feature = feature_for_moderator(dgp.moderators.front().covariate);
    }
    return panel;
}

void write_panel_csvs(const Panel& panel, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    {
        std::ofstream out(fs::path(dir) / "children.csv", std::ios::binary);
        out << "child_id,country,birth_cmc,survey_year,died,age_at_death_months,sex,mother_age,"
               "mother_edu,residence,birth_order,multiple_birth\n";
        for (const auto& c : panel.children) {
            out << c.child_id << ',' << c.country << ',' << c.birth_cmc << ',' << c.survey_year << ','
                << (c.died ? 1 : 0) << ','
                << (c.age_at_death_months ? std::to_string(*c.age_at_death_months) : "") << ','
                << (c.sex_female ? "female" : "male") << ',' << format_double(c.mother_age) << ','
                << c.mother_edu << ',' << (c.residence_urban ? "urban" : "rural") << ','
                << c.birth_order << ',' << (c.multiple_birth ? 1 : 0) << '\n';
        }
    }
    {
        std::ofstream out(fs::path(dir) / "events.csv", std::ios::binary);
        out << "country,year\n";
        for (const auto& e : panel.events) out << e.country << ',' << e.year << '\n';
    }
    {
        std::ofstream out(fs::path(dir) / "country_year.csv", std::ios::binary);
        out << "country,year,gdp_per_capita,population\n";
        for (const auto& cv : panel.covariates) {
            out << cv.country << ',' << cv.year << ',' << format_double(cv.gdp_per_capita) << ','
                << format_double(cv.population) << '\n';
        }
    }
    {
        std::ofstream out(fs::path(dir) / "truth.json", std::ios::binary);
        json j{{"true_ate", panel.truth.true_ate},
               {"moderator_feature", panel.truth.moderator_feature},
               {"tau_by_child", panel.truth.tau_by_child},
               {"propensity_by_country_year", panel.truth.propensity_by_country_year}};
        out << j.dump();
    }
}

DgpConfig dgp_from_json(const std::string& text) {
    json j = json::parse(text);
    DgpConfig d;
    d.n_countries = j.value("n_countries", d.n_countries);
    d.first_year = j.value("first_year", d.first_year);
    d.years_span = j.value("years_span", d.years_span);
    d.children_per_country_year = j.value("children_per_country_year", d.children_per_country_year);
    d.baseline_mortality = j.value("baseline_mortality", d.baseline_mortality);
    if (j.contains("true_ate") && !j["true_ate"].is_null()) d.true_ate = j["true_ate"].get<double>();
    if (j.contains("moderators")) {
        for (const auto& jm : j["moderators"]) {
            d.moderators.push_back({jm.at("covariate"), jm.at("effect_shift")});
        }
    }
    d.cluster_effect_sd = j.value("cluster_effect_sd", d.cluster_effect_sd);
    d.sdc_assignment = j.value("sdc_assignment", d.sdc_assignment);
    d.event_prob = j.value("event_prob", d.event_prob);
    d.event_prob_low = j.value("event_prob_low", d.event_prob_low);
    d.event_prob_mid = j.value("event_prob_mid", d.event_prob_mid);
    d.threshold = j.value("threshold", d.threshold);
    d.seed = j.value("seed", d.seed);
    return d;
}

DgpConfig dgp_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return dgp_from_json(ss.str());
}

MonteCarloReport evaluate_estimator(const DgpConfig& dgp, const ForestConfig& forest_config,
                                    const EvalOptions& options) {
    if (options.n_reps < 2) throw std::invalid_argument("evaluate_estimator: need n_reps >= 2");
    auto threshold = threshold_from_token(dgp.threshold);
    if (!threshold) throw std::invalid_argument("evaluate_estimator: bad threshold");

    MonteCarloReport report;
    for (int rep = 0; rep < options.n_reps; ++rep) {
        RepResult r;
        r.rep = rep;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            DgpConfig dgp_rep = dgp;
            dgp_rep.seed = splitmix64(dgp.seed ^ splitmix64(static_cast<std::uint64_t>(rep) + 1));
            Panel panel = generate_panel(dgp_rep);
            r.true_ate = panel.truth.true_ate;

            if (options.use_oracle) {
                r.tau_hat = panel.truth.true_ate;
                r.std_err = 0.0;
                r.ci_low = r.ci_high = r.tau_hat;
                r.covered = true;
            } else {
                CohortBuildResult cohort = build_threshold_sample(panel.children, panel.events,
                                                                  panel.covariates, *threshold);
                SampleData data = sample_to_data(cohort.sample);

                ForestConfig fc = forest_config;
                fc.seed = splitmix64(forest_config.seed ^ splitmix64(static_cast<std::uint64_t>(rep) + 0x5151ULL));
                CausalForest cf = fit_causal_forest(data.x, data.y, data.d, data.clusters, fc,
                                                    cohort.sample.feature_names);

                // The treatment-centering forest is already a propensity fit;
                // reuse its OOB scores instead of training a fourth forest.
                PropensityModel prop;
                prop.oob_scores = cf.e_hat;
                for (double& s : prop.oob_scores)
                    s = std::clamp(s, kPropensityClampLow, kPropensityClampHigh);

                EffectEstimate ate = estimate_ate(cohort.sample, cf, prop, options.level);
                r.tau_hat = ate.tau_hat;
                r.std_err = ate.std_err;
                r.ci_low = ate.ci_low;
                r.ci_high = ate.ci_high;
                r.covered = ate.ci_low <= r.true_ate && r.true_ate <= ate.ci_high;

                auto importance = variable_importance(cf.forest);
                for (const auto& entry : importance) r.importance_sum += entry.weight;
                if (!panel.truth.moderator_feature.empty()) {
                    for (std::size_t i = 0; i < importance.size(); ++i) {
                        if (importance[i].feature == panel.truth.moderator_feature) {
                            r.moderator_rank = static_cast<int>(i) + 1;
                            break;
                        }
                    }
                }

                if (options.compute_cate && !dgp.moderators.empty()) {
                    CateTable cate = estimate_cate(cohort.sample, cf);
                    const double base_tau = dgp.true_ate.value_or(0.0);
                    double base_sum = 0.0, shift_sum = 0.0;
                    int base_n = 0, shift_n = 0;
                    for (const auto& row : cate.rows) {
                        const double truth = panel.truth.tau_by_child.at(row.child_id);
                        if (std::abs(truth - base_tau) < 1e-12) {
                            base_sum += row.tau;
                            base_n += 1;
                        } else {
                            shift_sum += row.tau;
                            shift_n += 1;
                        }
                    }
                    r.group_base_mean = base_n > 0 ? base_sum / base_n : 0.0;
                    r.group_shifted_mean = shift_n > 0 ? shift_sum / shift_n : 0.0;
                    r.n_modes = count_modes(cate_histogram(cate, options.cate_bins));
                }
            }
        } catch (const std::exception& e) {
            r.failed = true;
            r.error = e.what();
            report.n_failed += 1;
        }
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        report.reps.push_back(std::move(r));
        if (report.n_failed * 5 > options.n_reps) {
            throw std::runtime_error("evaluate_estimator: more than 20% of replicates failed, last: " +
                                     report.reps.back().error);
        }
    }

    double err_sum = 0.0, err_sq = 0.0, sec_sum = 0.0;
    int ok = 0, covered = 0, top1 = 0, top1_den = 0, two_modes = 0;
    for (const auto& r : report.reps) {
        if (r.failed) continue;
        ok += 1;
        const double err = r.tau_hat - r.true_ate;
        err_sum += err;
        err_sq += err * err;
        sec_sum += r.seconds;
        if (r.covered) covered += 1;
        if (r.moderator_rank > 0) {
            top1_den += 1;
            if (r.moderator_rank == 1) top1 += 1;
        }
        if (r.n_modes == 2) two_modes += 1;
    }
    if (ok > 0) {
        report.bias = err_sum / ok;
        report.rmse = std::sqrt(err_sq / ok);
        report.coverage = static_cast<double>(covered) / ok;
        report.two_mode_share = static_cast<double>(two_modes) / ok;
        report.mean_seconds = sec_sum / ok;
    }
    if (top1_den > 0) report.moderator_top1 = static_cast<double>(top1) / top1_den;
    return report;
}

std::string report_to_json(const MonteCarloReport& report) {
    json reps = json::array();
    for (const auto& r : report.reps) {
        reps.push_back({{"rep", r.rep},
                        {"failed", r.failed},
                        {"error", r.error},
                        {"tau_hat", r.tau_hat},
                        {"std_err", r.std_err},
                        {"ci_low", r.ci_low},
                        {"ci_high", r.ci_high},
                        {"true_ate", r.true_ate},
                        {"covered", r.covered},
                        {"moderator_rank", r.moderator_rank},
                        {"n_modes", r.n_modes},
                        {"group_base_mean", r.group_base_mean},
                        {"group_shifted_mean", r.group_shifted_mean},
                        {"seconds", r.seconds}});
    }
    json j{{"bias", report.bias},
           {"rmse", report.rmse},
           {"coverage", report.coverage},
           {"moderator_top1", report.moderator_top1},
           {"two_mode_share", report.two_mode_share},
           {"mean_seconds", report.mean_seconds},
           {"n_failed", report.n_failed},
           {"reps", std::move(reps)}};
    return j.dump();
}

void write_report_csv(const MonteCarloReport& report, std::ostream& out) {
    out << "rep,failed,tau_hat,std_err,ci_low,ci_high,true_ate,covered,moderator_rank,n_modes,"
           "group_base_mean,group_shifted_mean,seconds\n";
    for (const auto& r : report.reps) {
        out << r.rep << ',' << (r.failed ? 1 : 0) << ',' << format_double(r.tau_hat) << ','
            << format_double(r.std_err) << ',' << format_double(r.ci_low) << ','
            << format_double(r.ci_high) << ',' << format_double(r.true_ate) << ','
            << (r.covered ? 1 : 0) << ',' << r.moderator_rank << ',' << r.n_modes << ','
            << format_double(r.group_base_mean) << ',' << format_double(r.group_shifted_mean) << ','
            << format_double(r.seconds) << '\n';
    }
}

}  // namespace crisisforest
