#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace crisisforest {

// One child's birth/death history plus mother, household, and country fields.
// birth_cmc is the century-month code: months since January 1900, with
// CMC = (year - 1900) * 12 + month.
struct ChildRecord {
    std::string child_id;
    std::string country;
    int birth_cmc = 0;
    int survey_year = 0;
    bool died = false;
    std::optional<int> age_at_death_months;
    int sex_female = 0;  // 1 female, 0 male
    double mother_age = 0.0;
    int mother_edu = 0;  // ordinal 0..3
    int residence_urban = 0;  // 1 urban, 0 rural
    int birth_order = 1;
    bool multiple_birth = false;

    int birth_year() const { return 1900 + (birth_cmc - 1) / 12; }
};

struct CrisisEvent {
    std::string country;
    int year = 0;
};

struct CountryYearCovariates {
    std::string country;
    int year = 0;
    double gdp_per_capita = 0.0;
    double population = 0.0;
};

// Mortality thresholds in months: neo=1, u1=12, u2=24, u3=36, u4=48, u5=60.
struct Threshold {
    std::string token;
    int months = 0;
};

const std::vector<Threshold>& all_thresholds();
std::optional<Threshold> threshold_from_token(const std::string& token);

// Fixed covariate layout shared by cohort files, forests, and the DGP.
const std::vector<std::string>& cohort_feature_names();

struct CohortRow {
    std::string child_id;
    std::string cluster;  // "<country>:<birth year>"
    double y = 0.0;
    double d = 0.0;
    std::vector<double> x;
};

struct CohortSample {
    Threshold threshold;
    std::vector<std::string> feature_names;
    std::vector<CohortRow> rows;
};

struct RowIssue {
    std::size_t line = 0;  // 1-based data row number
    std::string child_id;
    std::string reason;
};

struct ParseResult {
    std::vector<ChildRecord> records;
    std::vector<RowIssue> issues;
};

// Schema errors (missing mandatory column) throw; row-level problems are
// collected into issues rather than silently dropped.
ParseResult parse_birth_histories(std::istream& in);
ParseResult parse_birth_histories_file(const std::string& path);

std::vector<CrisisEvent> parse_events(std::istream& in);
std::vector<CrisisEvent> parse_events_file(const std::string& path);

std::vector<CountryYearCovariates> parse_country_year(std::istream& in);
std::vector<CountryYearCovariates> parse_country_year_file(const std::string& path);

// D = 1 iff some event year's January..December span intersects the window
// [birth_cmc - 9, birth_cmc + threshold_months].
bool build_exposure(const ChildRecord& child, const std::vector<CrisisEvent>& events,
                    int threshold_months);

// Birth year minus nearest event year for the child's country; absent when
// the country has no event. Equidistant events resolve to the earlier one.
std::optional<int> event_time(const ChildRecord& child, const std::vector<CrisisEvent>& events);

struct Exclusion {
    std::string child_id;
    std::string reason;  // "censored_before_threshold" | "missing_covariates"
};

struct CohortBuildResult {
    CohortSample sample;
    std::vector<Exclusion> exclusions;
};

// Assembles the threshold-specific analysis table. A still-alive child whose
// observable age at survey time (January of survey_year, the conservative
// bound) is below the threshold is censored and excluded.
CohortBuildResult build_threshold_sample(const std::vector<ChildRecord>& children,
                                         const std::vector<CrisisEvent>& events,
                                         const std::vector<CountryYearCovariates>& covars,
                                         const Threshold& threshold);

// Counts of children with d=1 and y=1 grouped by country, sorted by country.
std::map<std::string, int> exposure_frequency_report(const CohortSample& sample);

struct EventTimeBin {
    int event_time = 0;
    int alive_count = 0;
    int died_count = 0;
};

// Event-time alignment of births relative to each country's nearest crisis.
std::vector<EventTimeBin> event_time_histogram(const std::vector<ChildRecord>& children,
                                               const std::vector<CrisisEvent>& events);

void write_cohort_csv(const CohortSample& sample, std::ostream& out);
CohortSample read_cohort_csv(std::istream& in);
CohortSample read_cohort_file(const std::string& path);
void write_exclusions_csv(const std::vector<Exclusion>& exclusions, std::ostream& out);
void write_eventtime_csv(const std::vector<EventTimeBin>& bins, std::ostream& out);

}  // namespace crisisforest
