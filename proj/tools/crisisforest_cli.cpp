// Command-line pipeline: build-cohort -> fit -> estimate -> report, plus the
// synthetic-data simulation harness. Every run writes a manifest echoing the
// resolved configuration and input checksums.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "crisisforest/cohort.hpp"
#include "crisisforest/csv.hpp"
#include "crisisforest/effects.hpp"
#include "crisisforest/forest.hpp"
#include "crisisforest/format.hpp"
#include "crisisforest/inference.hpp"
#include "crisisforest/synthlab.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace crisisforest;

namespace {

constexpr const char* kVersion = "0.1.0";

// Exit codes: 2 usage, 3 validation, 4 estimation.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write file: " + path.string());
    out << text;
}

std::string fnv1a_hex(const std::string& data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void require_file(const std::string& path) {
    if (!fs::exists(path)) throw ValidationError("missing input file: " + path);
}

json config_echo(const ForestConfig& c) {
    return json{{"n_trees", c.n_trees},
                {"subsample_fraction", c.subsample_fraction},
                {"honesty_fraction", c.honesty_fraction},
                {"min_leaf_size", c.min_leaf_size},
                {"mtry", c.mtry},
                {"max_depth", c.max_depth},
                {"seed", c.seed},
                {"cluster_aware", c.cluster_aware},
                {"ci_group_size", c.ci_group_size},
                {"importance_depth_weighted", c.importance_depth_weighted},
                {"n_threads", c.n_threads}};
}

ForestConfig forest_config_from_json(const json& j) {
    ForestConfig c;
    c.n_trees = j.value("n_trees", c.n_trees);
    c.subsample_fraction = j.value("subsample_fraction", c.subsample_fraction);
    c.honesty_fraction = j.value("honesty_fraction", c.honesty_fraction);
    c.min_leaf_size = j.value("min_leaf_size", c.min_leaf_size);
    c.mtry = j.value("mtry", c.mtry);
    c.max_depth = j.value("max_depth", c.max_depth);
    c.seed = j.value("seed", c.seed);
    c.cluster_aware = j.value("cluster_aware", c.cluster_aware);
    c.ci_group_size = j.value("ci_group_size", c.ci_group_size);
    c.importance_depth_weighted = j.value("importance_depth_weighted", c.importance_depth_weighted);
    c.n_threads = j.value("n_threads", c.n_threads);
    return c;
}

void write_manifest(const fs::path& dir, const std::string& command, const json& resolved,
                    const std::vector<std::string>& inputs) {
    json checksums = json::object();
    for (const auto& path : inputs) checksums[path] = fnv1a_hex(read_text(path));
    json manifest{{"tool", "crisisforest"},
                  {"version", kVersion},
                  {"command", command},
                  {"resolved_config", resolved},
                  {"input_checksums", checksums}};
    fs::create_directories(dir);
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::vector<std::string> split_tokens(const std::string& csv_list) {
    std::vector<std::string> out;
    std::string token;
    std::istringstream ss(csv_list);
    while (std::getline(ss, token, ',')) {
        if (!token.empty()) out.push_back(token);
    }
    return out;
}

int cmd_build_cohort(const std::string& children_path, const std::string& events_path,
                     const std::string& covars_path, const std::string& thresholds_arg,
                     const std::string& out_dir) {
    require_file(children_path);
    require_file(events_path);
    require_file(covars_path);
    std::vector<Threshold> thresholds;
    for (const auto& token : split_tokens(thresholds_arg)) {
        auto t = threshold_from_token(token);
        if (!t) throw ValidationError("unknown threshold token: " + token);
        thresholds.push_back(*t);
    }
    if (thresholds.empty()) throw ValidationError("no thresholds requested");

    ParseResult parsed = parse_birth_histories_file(children_path);
    auto events = parse_events_file(events_path);
    auto covars = parse_country_year_file(covars_path);

    fs::create_directories(out_dir);
    std::vector<Exclusion> all_exclusions;
    for (const auto& t : thresholds) {
        CohortBuildResult built = build_threshold_sample(parsed.records, events, covars, t);
        std::ofstream out(fs::path(out_dir) / ("cohort_" + t.token + ".csv"), std::ios::binary);
        write_cohort_csv(built.sample, out);
        for (auto& ex : built.exclusions) {
            ex.reason = t.token + ":" + ex.reason;
            all_exclusions.push_back(ex);
        }
    }
    {
        std::ofstream out(fs::path(out_dir) / "exclusions.csv", std::ios::binary);
        write_exclusions_csv(all_exclusions, out);
    }
    {
        std::ofstream out(fs::path(out_dir) / "eventtime_hist.csv", std::ios::binary);
        write_eventtime_csv(event_time_histogram(parsed.records, events), out);
    }
    if (!parsed.issues.empty()) {
        std::ofstream out(fs::path(out_dir) / "row_issues.csv", std::ios::binary);
        out << "line,child_id,reason\n";
        for (const auto& issue : parsed.issues)
            out << issue.line << ',' << issue.child_id << ',' << issue.reason << '\n';
        std::cerr << "note: " << parsed.issues.size() << " malformed rows listed in row_issues.csv\n";
    }

    json resolved{{"thresholds", thresholds_arg}};
    write_manifest(out_dir, "build-cohort", resolved, {children_path, events_path, covars_path});
    return 0;
}

int cmd_fit(const std::string& cohort_path, const std::string& config_path,
            const std::string& out_path) {
    require_file(cohort_path);
    ForestConfig config;
    std::vector<std::string> inputs{cohort_path};
    if (!config_path.empty()) {
        require_file(config_path);
        config = forest_config_from_json(json::parse(read_text(config_path)));
        inputs.push_back(config_path);
    }
    CohortSample sample = read_cohort_file(cohort_path);
    SampleData data = sample_to_data(sample);

    CausalForest cf;
    try {
        cf = fit_causal_forest(data.x, data.y, data.d, data.clusters, config, sample.feature_names);
    } catch (const std::invalid_argument& e) {
        throw ValidationError(e.what());
    }
    save_causal_forest(cf, out_path);
    write_manifest(fs::path(out_path).parent_path().empty() ? "." : fs::path(out_path).parent_path(),
                   "fit", config_echo(config), inputs);
    return 0;
}

struct EstimatePair {
    std::string token;
    std::string cohort_path;
    std::string forest_path;
};

// --cohort/--forest may name single files or directories holding
// cohort_<t>.csv / forest_<t>.json for several thresholds.
std::vector<EstimatePair> resolve_estimate_inputs(const std::string& cohort_arg,
                                                  const std::string& forest_arg) {
    std::vector<EstimatePair> pairs;
    if (fs::is_directory(cohort_arg)) {
        for (const auto& t : all_thresholds()) {
            const fs::path cohort = fs::path(cohort_arg) / ("cohort_" + t.token + ".csv");
            if (!fs::exists(cohort)) continue;
            fs::path forest = fs::path(forest_arg) / ("forest_" + t.token + ".json");
            if (!fs::is_directory(forest_arg)) forest = forest_arg;
            pairs.push_back({t.token, cohort.string(), forest.string()});
        }
        if (pairs.empty()) throw ValidationError("no cohort_<threshold>.csv files in " + cohort_arg);
    } else {
        require_file(cohort_arg);
        CohortSample probe = read_cohort_file(cohort_arg);
        pairs.push_back({probe.threshold.token, cohort_arg, forest_arg});
    }
    for (const auto& p : pairs) require_file(p.forest_path);
    return pairs;
}

int cmd_estimate(const std::string& cohort_arg, const std::string& forest_arg, double level,
                 int bootstrap, const std::string& out_dir) {
    auto pairs = resolve_estimate_inputs(cohort_arg, forest_arg);
    fs::create_directories(out_dir);

    json entries = json::array();
    std::vector<std::string> inputs;
    for (const auto& pair : pairs) {
        CohortSample sample = read_cohort_file(pair.cohort_path);
        CausalForest cf = load_causal_forest(pair.forest_path);
        inputs.push_back(pair.cohort_path);
        inputs.push_back(pair.forest_path);

        PropensityModel prop;
        prop.oob_scores = cf.e_hat;
        for (double& s : prop.oob_scores)
            s = std::clamp(s, kPropensityClampLow, kPropensityClampHigh);

        EffectEstimate est = estimate_ate(sample, cf, prop, level);
        entries.push_back(json::parse(effect_to_json(est, cf.forest.config)));

        CateTable cate = estimate_cate(sample, cf);
        {
            std::ofstream out(fs::path(out_dir) / ("cate_" + pair.token + ".csv"), std::ios::binary);
            write_cate_csv(cate, out);
        }
        {
            std::ofstream out(fs::path(out_dir) / ("cate_hist_" + pair.token + ".csv"),
                              std::ios::binary);
            write_histogram_csv(cate_histogram(cate, 25), out);
        }
        {
            auto importance = variable_importance(cf.forest);
            std::ofstream out(fs::path(out_dir) / ("importance_" + pair.token + ".csv"),
                              std::ios::binary);
            out << "feature,weight\n";
            for (const auto& e : importance) out << e.feature << ',' << format_double(e.weight) << '\n';
        }
        if (bootstrap > 0) {
            AteComponents comp = ate_components(sample, cf, prop);
            auto reps = cluster_bootstrap_ate(comp.scores, comp.weights, comp.clusters, bootstrap,
                                              cf.forest.config.seed);
            std::ofstream out(fs::path(out_dir) / ("bootstrap_ate_" + pair.token + ".csv"),
                              std::ios::binary);
            out << "replicate,tau_hat\n";
            for (std::size_t b = 0; b < reps.size(); ++b)
                out << b << ',' << format_double(reps[b]) << '\n';
        }
    }
    write_text(fs::path(out_dir) / "ate_report.json", entries.dump(2) + "\n");
    write_manifest(out_dir, "estimate", json{{"level", level}, {"bootstrap", bootstrap}}, inputs);
    return 0;
}

int cmd_simulate(const std::string& dgp_path, int reps, const std::string& config_path,
                 const std::string& out_dir) {
    require_file(dgp_path);
    DgpConfig dgp = dgp_from_json_file(dgp_path);
    ForestConfig config;
    std::vector<std::string> inputs{dgp_path};
    if (!config_path.empty()) {
        require_file(config_path);
        config = forest_config_from_json(json::parse(read_text(config_path)));
        inputs.push_back(config_path);
    } else {
        config.n_trees = 200;  // desk-scale default for simulation runs
    }
    EvalOptions options;
    options.n_reps = reps;
    MonteCarloReport report = evaluate_estimator(dgp, config, options);

    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "mc_report.json", report_to_json(report) + "\n");
    {
        std::ofstream out(fs::path(out_dir) / "mc_report.csv", std::ios::binary);
        write_report_csv(report, out);
    }
    write_manifest(out_dir, "simulate", json{{"reps", reps}, {"forest", config_echo(config)}}, inputs);
    return 0;
}

int cmd_report(const std::string& in_dir, const std::string& out_dir) {
    if (!fs::is_directory(in_dir)) throw ValidationError("missing input directory: " + in_dir);
    fs::create_directories(out_dir);
    bool found = false;
    const fs::path ate = fs::path(in_dir) / "ate_report.json";
    if (fs::exists(ate)) {
        write_text(fs::path(out_dir) / "ate_report.json", read_text(ate.string()));
        found = true;
    }
    for (const auto& t : all_thresholds()) {
        const fs::path cate_path = fs::path(in_dir) / ("cate_" + t.token + ".csv");
        if (!fs::exists(cate_path)) continue;
        found = true;
        std::ifstream in(cate_path);
        csv::Table table = csv::read(in);
        CateTable cate;
        for (const auto& row : table.rows) {
            cate.rows.push_back({row[0], std::stod(row[1]), std::stod(row[2]), row[3]});
        }
        std::ofstream out(fs::path(out_dir) / ("cate_hist_" + t.token + ".csv"), std::ios::binary);
        write_histogram_csv(cate_histogram(cate, 25), out);
    }
    if (!found) throw ValidationError("no intermediates (ate_report.json or cate_<t>.csv) in " + in_dir);
    write_manifest(out_dir, "report", json::object(), {});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Crisis-exposure cohort construction and causal forest estimation"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    std::string children_path, events_path, covars_path, thresholds = "neo,u1,u2,u3,u4,u5";
    std::string cohort_path, config_path, forest_path, out_path, dgp_path, in_dir;
    double level = 0.95;
    int bootstrap = 0;
    int reps = 10;

    auto* build = app.add_subcommand("build-cohort", "Construct threshold-specific cohort samples");
    build->add_option("--children", children_path, "children.csv")->required();
    build->add_option("--events", events_path, "events.csv")->required();
    build->add_option("--covars", covars_path, "country_year.csv")->required();
    build->add_option("--thresholds", thresholds, "comma list from neo,u1,u2,u3,u4,u5");
    build->add_option("--out", out_path, "output directory")->required();

    auto* fit = app.add_subcommand("fit", "Fit a causal forest on a cohort file");
    fit->add_option("--cohort", cohort_path, "cohort_<t>.csv")->required();
    fit->add_option("--config", config_path, "forest config JSON");
    fit->add_option("--out", out_path, "output forest file")->required();

    auto* estimate = app.add_subcommand("estimate", "Estimate ATE and CATEs from fitted forests");
    estimate->add_option("--cohort", cohort_path, "cohort file or directory")->required();
    estimate->add_option("--forest", forest_path, "forest file or directory")->required();
    estimate->add_option("--level", level, "confidence level");
    estimate->add_option("--bootstrap", bootstrap, "cluster-bootstrap replicates (cross-check)");
    estimate->add_option("--out", out_path, "output directory")->required();

    auto* simulate = app.add_subcommand("simulate", "Monte Carlo evaluation on a synthetic DGP");
    simulate->add_option("--dgp", dgp_path, "DGP config JSON")->required();
    simulate->add_option("--reps", reps, "number of replicates");
    simulate->add_option("--config", config_path, "forest config JSON");
    simulate->add_option("--out", out_path, "output directory")->required();

    auto* report = app.add_subcommand("report", "Regenerate figure-ready files from intermediates");
    report->add_option("--in", in_dir, "directory with saved intermediates")->required();
    report->add_option("--out", out_path, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    }

    try {
        if (build->parsed())
            return cmd_build_cohort(children_path, events_path, covars_path, thresholds, out_path);
        if (fit->parsed()) return cmd_fit(cohort_path, config_path, out_path);
        if (estimate->parsed())
            return cmd_estimate(cohort_path, forest_path, level, bootstrap, out_path);
        if (simulate->parsed()) return cmd_simulate(dgp_path, reps, config_path, out_path);
        if (report->parsed()) return cmd_report(in_dir, out_path);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    }
    return 2;
}
