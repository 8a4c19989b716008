#include "crisisforest/cohort.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <unordered_map>

#include "crisisforest/csv.hpp"
#include "crisisforest/format.hpp"

namespace crisisforest {

namespace {

const char* kChildColumns[] = {"child_id", "country",   "birth_cmc",  "survey_year",
                               "died",     "age_at_death_months", "sex", "mother_age",
                               "mother_edu", "residence", "birth_order", "multiple_birth"};

bool parse_int(const std::string& s, int& out) {
    if (s.empty()) return false;
    const char* b = s.data();
    const char* e = b + s.size();
    auto [p, ec] = std::from_chars(b, e, out);
    return ec == std::errc() && p == e;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size() && std::isfinite(out);
}

bool parse_bool01(const std::string& s, bool& out) {
    if (s == "0") { out = false; return true; }
    if (s == "1") { out = true; return true; }
    return false;
}

}  // namespace

const std::vector<Threshold>& all_thresholds() {
    static const std::vector<Threshold> t = {{"neo", 1}, {"u1", 12}, {"u2", 24},
                                             {"u3", 36}, {"u4", 48}, {"u5", 60}};
    return t;
}

std::optional<Threshold> threshold_from_token(const std::string& token) {
    for (const auto& t : all_thresholds()) {
        if (t.token == token) return t;
    }
    return std::nullopt;
}

const std::vector<std::string>& cohort_feature_names() {
    static const std::vector<std::string> names = {
        "sex_female",  "mother_age",     "mother_edu", "residence_urban",
        "birth_order", "multiple_birth", "gdp_per_capita", "population"};
    return names;
}

ParseResult parse_birth_histories(std::istream& in) {
    csv::Table table = csv::read(in);
    std::unordered_map<std::string, int> col;
    for (const char* name : kChildColumns) {
        int c = table.column(name);
        if (c < 0) throw std::runtime_error(std::string("children schema: missing column '") + name + "'");
        col[name] = c;
    }

    ParseResult result;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::size_t line = r + 1;
        if (row.size() < table.header.size()) {
            result.issues.push_back({line, "", "wrong field count"});
            continue;
        }
        ChildRecord rec;
        rec.child_id = row[col["child_id"]];
        rec.country = row[col["country"]];
        auto fail = [&](const std::string& why) {
            result.issues.push_back({line, rec.child_id, why});
        };
        bool ok = true;
        int tmp = 0;
        if (!parse_int(row[col["birth_cmc"]], rec.birth_cmc) || rec.birth_cmc < 1) { fail("bad birth_cmc"); ok = false; }
        if (ok && !parse_int(row[col["survey_year"]], rec.survey_year)) { fail("bad survey_year"); ok = false; }
        if (ok && !parse_bool01(row[col["died"]], rec.died)) { fail("bad died flag"); ok = false; }
        if (ok) {
            const std::string& age = row[col["age_at_death_months"]];
            if (!age.empty()) {
                if (!parse_int(age, tmp) || tmp < 0) { fail("bad age_at_death_months"); ok = false; }
                else rec.age_at_death_months = tmp;
            }
        }
        if (ok) {
            const std::string& sex = row[col["sex"]];
            if (sex == "female") rec.sex_female = 1;
            else if (sex == "male") rec.sex_female = 0;
            else { fail("bad sex"); ok = false; }
        }
        if (ok && !parse_double(row[col["mother_age"]], rec.mother_age)) { fail("bad mother_age"); ok = false; }
        if (ok && !parse_int(row[col["mother_edu"]], rec.mother_edu)) { fail("bad mother_edu"); ok = false; }
        if (ok) {
            const std::string& res = row[col["residence"]];
            if (res == "urban") rec.residence_urban = 1;
            else if (res == "rural") rec.residence_urban = 0;
            else { fail("bad residence"); ok = false; }
        }
        if (ok && (!parse_int(row[col["birth_order"]], rec.birth_order) || rec.birth_order < 1)) { fail("bad birth_order"); ok = false; }
        if (ok && !parse_bool01(row[col["multiple_birth"]], rec.multiple_birth)) { fail("bad multiple_birth"); ok = false; }
        if (!ok) continue;

        // Record-level invariants.
        if (rec.died != rec.age_at_death_months.has_value()) {
            fail(rec.died ? "died without age_at_death_months" : "age_at_death_months without died");
            continue;
        }
        if (rec.birth_year() > rec.survey_year) {
            fail("birth year after survey year");
            continue;
        }
        if (rec.mother_age < 10.0 || rec.mother_age > 60.0) {
            fail("mother_age outside [10, 60]");
            continue;
        }
        result.records.push_back(std::move(rec));
    }
    return result;
}

ParseResult parse_birth_histories_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    return parse_birth_histories(in);
}

std::vector<CrisisEvent> parse_events(std::istream& in) {
    csv::Table table = csv::read(in);
    int c_country = table.column("country");
    int c_year = table.column("year");
    if (c_country < 0) throw std::runtime_error("events schema: missing column 'country'");
    if (c_year < 0) throw std::runtime_error("events schema: missing column 'year'");
    std::vector<CrisisEvent> events;
    for (const auto& row : table.rows) {
        CrisisEvent ev;
        ev.country = row[c_country];
        if (!parse_int(row[c_year], ev.year)) throw std::runtime_error("events: bad year '" + row[c_year] + "'");
        for (const auto& other : events) {
            if (other.country == ev.country && other.year == ev.year)
                throw std::runtime_error("events: duplicate (" + ev.country + ", " + row[c_year] + ")");
        }
        events.push_back(std::move(ev));
    }
    return events;
}

std::vector<CrisisEvent> parse_events_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    return parse_events(in);
}

std::vector<CountryYearCovariates> parse_country_year(std::istream& in) {
    csv::Table table = csv::read(in);
    for (const char* name : {"country", "year", "gdp_per_capita", "population"}) {
        if (table.column(name) < 0)
            throw std::runtime_error(std::string("country_year schema: missing column '") + name + "'");
    }
    int c_country = table.column("country");
    int c_year = table.column("year");
    int c_gdp = table.column("gdp_per_capita");
    int c_pop = table.column("population");
    std::vector<CountryYearCovariates> covars;
    for (const auto& row : table.rows) {
        CountryYearCovariates cv;
        cv.country = row[c_country];
        if (!parse_int(row[c_year], cv.year)) throw std::runtime_error("country_year: bad year");
        if (!parse_double(row[c_gdp], cv.gdp_per_capita) || cv.gdp_per_capita <= 0.0)
            throw std::runtime_error("country_year: bad gdp_per_capita for " + cv.country);
        if (!parse_double(row[c_pop], cv.population) || cv.population <= 0.0)
            throw std::runtime_error("country_year: bad population for " + cv.country);
        covars.push_back(std::move(cv));
    }
    return covars;
}

std::vector<CountryYearCovariates> parse_country_year_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    return parse_country_year(in);
}

bool build_exposure(const ChildRecord& child, const std::vector<CrisisEvent>& events,
                    int threshold_months) {
    const int window_lo = child.birth_cmc - 9;
    const int window_hi = child.birth_cmc + threshold_months;
    for (const auto& ev : events) {
        if (ev.country != child.country) continue;
        const int ev_lo = (ev.year - 1900) * 12 + 1;
        const int ev_hi = (ev.year - 1900) * 12 + 12;
        if (ev_lo <= window_hi && ev_hi >= window_lo) return true;
    }
    return false;
}

std::optional<int> event_time(const ChildRecord& child, const std::vector<CrisisEvent>& events) {
    const int by = child.birth_year();
    std::optional<int> best_year;
    for (const auto& ev : events) {
        if (ev.country != child.country) continue;
        if (!best_year) {
            best_year = ev.year;
            continue;
        }
        const int d_new = std::abs(by - ev.year);
        const int d_old = std::abs(by - *best_year);
        if (d_new < d_old || (d_new == d_old && ev.year < *best_year)) best_year = ev.year;
    }
    if (!best_year) return std::nullopt;
    return by - *best_year;
}

CohortBuildResult build_threshold_sample(const std::vector<ChildRecord>& children,
                                         const std::vector<CrisisEvent>& events,
                                         const std::vector<CountryYearCovariates>& covars,
                                         const Threshold& threshold) {
    std::unordered_map<std::string, const CountryYearCovariates*> covar_index;
    for (const auto& cv : covars) {
        covar_index[cv.country + ":" + std::to_string(cv.year)] = &cv;
    }

    CohortBuildResult result;
    result.sample.threshold = threshold;
    result.sample.feature_names = cohort_feature_names();

    for (const auto& child : children) {
        // A still-alive child only belongs in the sample once its outcome at
        // the threshold is observable. The survey date is known to the year;
        // January of survey_year is the conservative observation time.
        if (!child.died) {
            const int observable_months = (child.survey_year - 1900) * 12 + 1 - child.birth_cmc;
            if (observable_months < threshold.months) {
                result.exclusions.push_back({child.child_id, "censored_before_threshold"});
                continue;
            }
        }
        const std::string cluster = child.country + ":" + std::to_string(child.birth_year());
        auto it = covar_index.find(cluster);
        if (it == covar_index.end()) {
            result.exclusions.push_back({child.child_id, "missing_covariates"});
            continue;
        }
        CohortRow row;
        row.child_id = child.child_id;
        row.cluster = cluster;
        row.y = (child.died && *child.age_at_death_months <= threshold.months) ? 1.0 : 0.0;
        row.d = build_exposure(child, events, threshold.months) ? 1.0 : 0.0;
        row.x = {static_cast<double>(child.sex_female),
                 child.mother_age,
                 static_cast<double>(child.mother_edu),
                 static_cast<double>(child.residence_urban),
                 static_cast<double>(child.birth_order),
                 static_cast<double>(child.multiple_birth ? 1 : 0),
                 it->second->gdp_per_capita,
                 it->second->population};
        result.sample.rows.push_back(std::move(row));
    }
    return result;
}

std::map<std::string, int> exposure_frequency_report(const CohortSample& sample) {
    std::map<std::string, int> report;
    for (const auto& row : sample.rows) {
        if (row.d == 1.0 && row.y == 1.0) {
            const auto colon = row.cluster.find(':');
            report[row.cluster.substr(0, colon)] += 1;
        }
    }
    return report;
}

std::vector<EventTimeBin> event_time_histogram(const std::vector<ChildRecord>& children,
                                               const std::vector<CrisisEvent>& events) {
    std::map<int, EventTimeBin> bins;
    for (const auto& child : children) {
        auto et = event_time(child, events);
        if (!et) continue;
        auto& bin = bins[*et];
        bin.event_time = *et;
        if (child.died) bin.died_count += 1;
        else bin.alive_count += 1;
    }
    std::vector<EventTimeBin> out;
    out.reserve(bins.size());
    for (const auto& [_, bin] : bins) out.push_back(bin);
    return out;
}

void write_cohort_csv(const CohortSample& sample, std::ostream& out) {
    out << "child_id,cluster,y,d";
    for (const auto& name : sample.feature_names) out << ',' << name;
    out << '\n';
    for (const auto& row : sample.rows) {
        out << row.child_id << ',' << row.cluster << ',' << format_double(row.y) << ','
            << format_double(row.d);
        for (double v : row.x) out << ',' << format_double(v);
        out << '\n';
    }
}

CohortSample read_cohort_csv(std::istream& in) {
    csv::Table table = csv::read(in);
    if (table.header.size() < 5 || table.header[0] != "child_id" || table.header[1] != "cluster" ||
        table.header[2] != "y" || table.header[3] != "d") {
        throw std::runtime_error("cohort file: unexpected header");
    }
    CohortSample sample;
    sample.feature_names.assign(table.header.begin() + 4, table.header.end());
    for (const auto& r : table.rows) {
        if (r.size() != table.header.size()) throw std::runtime_error("cohort file: ragged row");
        CohortRow row;
        row.child_id = r[0];
        row.cluster = r[1];
        double v = 0.0;
        if (!parse_double(r[2], row.y) || !parse_double(r[3], row.d))
            throw std::runtime_error("cohort file: bad y/d for " + row.child_id);
        for (std::size_t c = 4; c < r.size(); ++c) {
            if (!parse_double(r[c], v)) throw std::runtime_error("cohort file: bad covariate for " + row.child_id);
            row.x.push_back(v);
        }
        sample.rows.push_back(std::move(row));
    }
    return sample;
}

CohortSample read_cohort_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    CohortSample s = read_cohort_csv(in);
    // Recover the threshold token from cohort_<token>.csv when possible.
    const auto stem_start = path.find_last_of("/\\");
    std::string name = path.substr(stem_start == std::string::npos ? 0 : stem_start + 1);
    if (name.rfind("cohort_", 0) == 0) {
        const auto dot = name.find('.');
        if (auto t = threshold_from_token(name.substr(7, dot - 7))) s.threshold = *t;
    }
    return s;
}

void write_exclusions_csv(const std::vector<Exclusion>& exclusions, std::ostream& out) {
    out << "child_id,reason\n";
    for (const auto& ex : exclusions) out << ex.child_id << ',' << ex.reason << '\n';
}

void write_eventtime_csv(const std::vector<EventTimeBin>& bins, std::ostream& out) {
    out << "event_time,alive_count,died_count\n";
    for (const auto& b : bins) out << b.event_time << ',' << b.alive_count << ',' << b.died_count << '\n';
}

}  // namespace crisisforest
