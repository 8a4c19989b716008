#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <sstream>
#include <vector>

#include "crisisforest/cohort.hpp"
#include "crisisforest/rng.hpp"
#include "exposure_golden.hpp"

using namespace crisisforest;

namespace {

ChildRecord make_child(const std::string& id, const std::string& country, int birth_cmc,
                       int survey_year, bool died = false, int age_at_death = -1) {
    ChildRecord c;
    c.child_id = id;
    c.country = country;
    c.birth_cmc = birth_cmc;
    c.survey_year = survey_year;
    c.died = died;
    if (age_at_death >= 0) c.age_at_death_months = age_at_death;
    c.mother_age = 25.0;
    return c;
}

std::vector<CountryYearCovariates> covars_for(const std::vector<ChildRecord>& children) {
    std::map<std::pair<std::string, int>, bool> seen;
    std::vector<CountryYearCovariates> out;
    for (const auto& c : children) {
        auto key = std::make_pair(c.country, c.birth_year());
        if (seen.emplace(key, true).second) {
            out.push_back({c.country, c.birth_year(), 1000.0, 5e6});
        }
    }
    return out;
}

}  // namespace

TEST_CASE("well-formed birth history row round-trips") {
    std::istringstream in(
        "child_id,country,birth_cmc,survey_year,died,age_at_death_months,sex,mother_age,"
        "mother_edu,residence,birth_order,multiple_birth\n"
        "c1,PE,1140,1996,0,,female,24,2,urban,1,0\n");
    ParseResult result = parse_birth_histories(in);
    REQUIRE(result.records.size() == 1);
    CHECK(result.issues.empty());
    const ChildRecord& c = result.records[0];
    CHECK(c.child_id == "c1");
    CHECK(c.country == "PE");
    CHECK(c.birth_cmc == 1140);
    CHECK(c.survey_year == 1996);
    CHECK(!c.died);
    CHECK(!c.age_at_death_months.has_value());
    CHECK(c.sex_female == 1);
    CHECK(c.mother_age == doctest::Approx(24.0));
    CHECK(c.mother_edu == 2);
    CHECK(c.residence_urban == 1);
    CHECK(c.birth_order == 1);
    CHECK(!c.multiple_birth);
    CHECK(c.birth_year() == 1994);
}

TEST_CASE("died without death age is a row issue, not a record") {
    std::istringstream in(
        "child_id,country,birth_cmc,survey_year,died,age_at_death_months,sex,mother_age,"
        "mother_edu,residence,birth_order,multiple_birth\n"
        "c1,PE,1140,1996,1,,male,24,2,rural,1,0\n");
    ParseResult result = parse_birth_histories(in);
    CHECK(result.records.empty());
    REQUIRE(result.issues.size() == 1);
    CHECK(result.issues[0].child_id == "c1");
}

TEST_CASE("3-row file with 1 malformed row yields 2 records and 1 issue") {
    std::istringstream in(
        "child_id,country,birth_cmc,survey_year,died,age_at_death_months,sex,mother_age,"
        "mother_edu,residence,birth_order,multiple_birth\n"
        "c1,PE,1140,1996,0,,female,24,2,urban,1,0\n"
        "c2,PE,1141,1996,0,,male,not_a_number,2,urban,2,0\n"
        "c3,BO,1150,1998,1,4,male,31,1,rural,1,0\n");
    ParseResult result = parse_birth_histories(in);
    CHECK(result.records.size() == 2);
    REQUIRE(result.issues.size() == 1);
    CHECK(result.issues[0].line == 2);
    CHECK(result.issues[0].child_id == "c2");
}

TEST_CASE("row invariants are enforced") {
    const std::string header =
        "child_id,country,birth_cmc,survey_year,died,age_at_death_months,sex,mother_age,"
        "mother_edu,residence,birth_order,multiple_birth\n";
    SUBCASE("birth year after survey year") {
        std::istringstream in(header + "c1,PE,1200,1996,0,,male,24,2,urban,1,0\n");
        ParseResult r = parse_birth_histories(in);
        CHECK(r.records.empty());
        CHECK(r.issues.size() == 1);
    }
    SUBCASE("mother age outside [10, 60]") {
        std::istringstream in(header + "c1,PE,1140,1996,0,,male,8,2,urban,1,0\n");
        ParseResult r = parse_birth_histories(in);
        CHECK(r.records.empty());
        CHECK(r.issues.size() == 1);
    }
    SUBCASE("death age without died flag") {
        std::istringstream in(header + "c1,PE,1140,1996,0,7,male,24,2,urban,1,0\n");
        ParseResult r = parse_birth_histories(in);
        CHECK(r.records.empty());
        CHECK(r.issues.size() == 1);
    }
}

TEST_CASE("missing mandatory column names the column") {
    std::istringstream in("child_id,country,birth_cmc\nc1,PE,1140\n");
    try {
        parse_birth_histories(in);
        FAIL("expected a schema error");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("survey_year") != std::string::npos);
    }
}

TEST_CASE("duplicate event pair is rejected") {
    std::istringstream in("country,year\nPE,1995\nPE,1995\n");
    CHECK_THROWS(parse_events(in));
}

TEST_CASE("exposure golden suite: 25 hand-computed fixtures") {
    for (const auto& f : golden::exposure_fixtures()) {
        INFO(f.label);
        ChildRecord child = golden::fixture_child(f);
        auto events = golden::fixture_events(f);
        CHECK(build_exposure(child, events, f.threshold_months) == f.expected_exposed);
        auto et = event_time(child, events);
        REQUIRE(et.has_value());
        CHECK(*et == *f.expected_event_time);
    }
}

TEST_CASE("events for other countries never match") {
    ChildRecord child = make_child("c1", "AA", golden::cmc(1995, 1), 2000);
    std::vector<CrisisEvent> events = {{"BB", 1995}};
    CHECK(!build_exposure(child, events, 12));
    CHECK(!event_time(child, events).has_value());
}

TEST_CASE("event_time nearest and tie rules") {
    ChildRecord child = make_child("c1", "AA", golden::cmc(1996, 5), 2000);
    SUBCASE("one event, born the year after") {
        std::vector<CrisisEvent> events = {{"AA", 1995}};
        CHECK(*event_time(child, events) == 1);
    }
    SUBCASE("nearest of two events wins") {
        child.birth_cmc = golden::cmc(1995, 5);
        std::vector<CrisisEvent> events = {{"AA", 1990}, {"AA", 1999}};
        CHECK(*event_time(child, events) == -4);
    }
    SUBCASE("no events means absent") {
        CHECK(!event_time(child, {}).has_value());
    }
}

TEST_CASE("exposure is monotone in threshold") {
    Rng rng(404);
    const int thresholds[] = {1, 12, 24, 36, 48, 60};
    for (int trial = 0; trial < 200; ++trial) {
        ChildRecord child = make_child("c", "AA", 1000 + static_cast<int>(rng.uniform_index(300)),
                                       2010);
        std::vector<CrisisEvent> events;
        const int n_events = 1 + static_cast<int>(rng.uniform_index(3));
        for (int e = 0; e < n_events; ++e) {
            events.push_back({"AA", 1975 + static_cast<int>(rng.uniform_index(40))});
        }
        bool prev = false;
        for (int t : thresholds) {
            bool cur = build_exposure(child, events, t);
            if (prev) CHECK(cur);
            prev = cur;
        }
    }
}

TEST_CASE("exposure agrees with a direct window-overlap recomputation") {
    Rng rng(505);
    for (int trial = 0; trial < 500; ++trial) {
        ChildRecord child = make_child("c", "AA", 900 + static_cast<int>(rng.uniform_index(500)),
                                       2010);
        const int year = 1970 + static_cast<int>(rng.uniform_index(45));
        const int t = 1 + static_cast<int>(rng.uniform_index(60));
        std::vector<CrisisEvent> events = {{"AA", year}};
        const int win_lo = child.birth_cmc - 9;
        const int win_hi = child.birth_cmc + t;
        const int span_lo = (year - 1900) * 12 + 1;
        const int span_hi = (year - 1900) * 12 + 12;
        const bool expected = win_lo <= span_hi && span_lo <= win_hi;
        CHECK(build_exposure(child, events, t) == expected);
    }
}

TEST_CASE("whole-year shifts of births and events preserve exposure") {
    Rng rng(606);
    for (int trial = 0; trial < 200; ++trial) {
        ChildRecord child = make_child("c", "AA", 1000 + static_cast<int>(rng.uniform_index(300)),
                                       2010);
        const int year = 1975 + static_cast<int>(rng.uniform_index(40));
        const int t = 1 + static_cast<int>(rng.uniform_index(60));
        const int shift = -5 + static_cast<int>(rng.uniform_index(11));
        const bool base = build_exposure(child, {{"AA", year}}, t);
        ChildRecord shifted = child;
        shifted.birth_cmc += 12 * shift;
        CHECK(build_exposure(shifted, {{"AA", year + shift}}, t) == base);
    }
}

TEST_CASE("single child dead at 6 months lands in the u1 sample with y=1") {
    std::vector<ChildRecord> children = {make_child("c1", "AA", golden::cmc(1995, 1), 2000, true, 6)};
    std::vector<CrisisEvent> events = {{"AA", 1995}};
    CohortBuildResult result =
        build_threshold_sample(children, events, covars_for(children), *threshold_from_token("u1"));
    REQUIRE(result.sample.rows.size() == 1);
    CHECK(result.sample.rows[0].y == 1.0);
    CHECK(result.sample.rows[0].d == 1.0);
    CHECK(result.sample.rows[0].cluster == "AA:1995");
    CHECK(result.exclusions.empty());
}

TEST_CASE("death after the threshold age counts as y=0") {
    std::vector<ChildRecord> children = {make_child("c1", "AA", golden::cmc(1995, 1), 2000, true, 20)};
    CohortBuildResult result =
        build_threshold_sample(children, {}, covars_for(children), *threshold_from_token("u1"));
    REQUIRE(result.sample.rows.size() == 1);
    CHECK(result.sample.rows[0].y == 0.0);
}

TEST_CASE("staggered 10-child fixture matches the hand-computed exposure vector") {
    // One event in 1995; births every June from 1990 to 1999; threshold u2
    // gives window [Sep y-1, Jun y+2], so births 1993..1996 are exposed.
    std::vector<ChildRecord> children;
    for (int i = 0; i < 10; ++i) {
        children.push_back(make_child("c" + std::to_string(i), "AA", golden::cmc(1990 + i, 6), 2005));
    }
    std::vector<CrisisEvent> events = {{"AA", 1995}};
    const bool expected[10] = {false, false, false, true, true, true, true, false, false, false};
    CohortBuildResult result =
        build_threshold_sample(children, events, covars_for(children), *threshold_from_token("u2"));
    REQUIRE(result.sample.rows.size() == 10);
    for (int i = 0; i < 10; ++i) {
        INFO("child " << i);
        auto it = std::find_if(result.sample.rows.begin(), result.sample.rows.end(),
                               [&](const CohortRow& r) { return r.child_id == children[i].child_id; });
        REQUIRE(it != result.sample.rows.end());
        CHECK(it->d == (expected[i] ? 1.0 : 0.0));
    }
}

TEST_CASE("alive children censored before the threshold are excluded") {
    // Born June 2004, surveyed 2005: observable age at January 2005 is
    // 7 months, so u1 is not yet decided for a surviving child.
    std::vector<ChildRecord> alive = {make_child("c1", "AA", golden::cmc(2004, 6), 2005)};
    CohortBuildResult result =
        build_threshold_sample(alive, {}, covars_for(alive), *threshold_from_token("u1"));
    CHECK(result.sample.rows.empty());
    REQUIRE(result.exclusions.size() == 1);
    CHECK(result.exclusions[0].reason == "censored_before_threshold");

    // The same child already dead within the window stays in.
    std::vector<ChildRecord> dead = {make_child("c1", "AA", golden::cmc(2004, 6), 2005, true, 3)};
    result = build_threshold_sample(dead, {}, covars_for(dead), *threshold_from_token("u1"));
    CHECK(result.sample.rows.size() == 1);
    CHECK(result.exclusions.empty());

    // And neo is observable for the alive child.
    result = build_threshold_sample(alive, {}, covars_for(alive), *threshold_from_token("neo"));
    CHECK(result.sample.rows.size() == 1);
}

TEST_CASE("missing country-year covariates are excluded with a reason code") {
    std::vector<ChildRecord> children = {make_child("c1", "AA", golden::cmc(1995, 1), 2000),
                                         make_child("c2", "BB", golden::cmc(1995, 1), 2000)};
    std::vector<CountryYearCovariates> covars = {{"AA", 1995, 1000.0, 5e6}};
    CohortBuildResult result =
        build_threshold_sample(children, {}, covars, *threshold_from_token("u1"));
    REQUIRE(result.sample.rows.size() == 1);
    CHECK(result.sample.rows[0].child_id == "c1");
    REQUIRE(result.exclusions.size() == 1);
    CHECK(result.exclusions[0].child_id == "c2");
    CHECK(result.exclusions[0].reason == "missing_covariates");
}

TEST_CASE("frequency report counts exposed deaths by country") {
    CohortSample sample;
    sample.threshold = *threshold_from_token("neo");
    sample.feature_names = cohort_feature_names();
    auto add = [&](const std::string& id, const std::string& country, double y, double d) {
        CohortRow row;
        row.child_id = id;
        row.cluster = country + ":1995";
        row.y = y;
        row.d = d;
        row.x.assign(cohort_feature_names().size(), 0.0);
        sample.rows.push_back(row);
    };
    add("a1", "A", 1, 1);
    add("a2", "A", 1, 1);
    add("a3", "A", 1, 1);
    add("a4", "A", 1, 0);  // unexposed death does not count
    add("a5", "A", 0, 1);  // exposed survivor does not count
    add("b1", "B", 1, 1);
    std::map<std::string, int> report = exposure_frequency_report(sample);
    REQUIRE(report.size() == 2);
    CHECK(report["A"] == 3);
    CHECK(report["B"] == 1);

    int direct = 0;
    for (const auto& row : sample.rows) direct += (row.y == 1.0 && row.d == 1.0) ? 1 : 0;
    int total = 0;
    for (const auto& [country, count] : report) total += count;
    CHECK(total == direct);
}

TEST_CASE("empty sample gives an empty frequency report") {
    CohortSample sample;
    CHECK(exposure_frequency_report(sample).empty());
}

TEST_CASE("event-time histogram aligns births to the nearest event") {
    std::vector<ChildRecord> children = {
        make_child("c1", "AA", golden::cmc(1995, 3), 2005),             // event year
        make_child("c2", "AA", golden::cmc(1996, 3), 2005, true, 2),    // +1, died
        make_child("c3", "AA", golden::cmc(1996, 9), 2005),             // +1
        make_child("c4", "BB", golden::cmc(1995, 3), 2005),             // no event: dropped
    };
    std::vector<CrisisEvent> events = {{"AA", 1995}};
    std::vector<EventTimeBin> bins = event_time_histogram(children, events);
    REQUIRE(bins.size() == 2);
    CHECK(bins[0].event_time == 0);
    CHECK(bins[0].alive_count == 1);
    CHECK(bins[0].died_count == 0);
    CHECK(bins[1].event_time == 1);
    CHECK(bins[1].alive_count == 1);
    CHECK(bins[1].died_count == 1);
}

TEST_CASE("cohort csv round-trips") {
    std::vector<ChildRecord> children;
    for (int i = 0; i < 10; ++i) {
        children.push_back(make_child("c" + std::to_string(i), "AA", golden::cmc(1994 + i % 3, 6),
                                      2005, i % 4 == 0, i % 4 == 0 ? 2 : -1));
    }
    std::vector<CrisisEvent> events = {{"AA", 1995}};
    CohortBuildResult built =
        build_threshold_sample(children, events, covars_for(children), *threshold_from_token("u1"));

    std::ostringstream out;
    write_cohort_csv(built.sample, out);
    std::istringstream in(out.str());
    CohortSample loaded = read_cohort_csv(in);

    REQUIRE(loaded.rows.size() == built.sample.rows.size());
    CHECK(loaded.feature_names == built.sample.feature_names);
    for (std::size_t i = 0; i < loaded.rows.size(); ++i) {
        CHECK(loaded.rows[i].child_id == built.sample.rows[i].child_id);
        CHECK(loaded.rows[i].cluster == built.sample.rows[i].cluster);
        CHECK(loaded.rows[i].y == built.sample.rows[i].y);
        CHECK(loaded.rows[i].d == built.sample.rows[i].d);
        CHECK(loaded.rows[i].x == built.sample.rows[i].x);
    }
}

TEST_CASE("threshold table matches the documented month mapping") {
    REQUIRE(all_thresholds().size() == 6);
    CHECK(threshold_from_token("neo")->months == 1);
    CHECK(threshold_from_token("u1")->months == 12);
    CHECK(threshold_from_token("u2")->months == 24);
    CHECK(threshold_from_token("u3")->months == 36);
    CHECK(threshold_from_token("u4")->months == 48);
    CHECK(threshold_from_token("u5")->months == 60);
    CHECK(!threshold_from_token("u6").has_value());
}
