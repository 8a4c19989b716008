#pragma once

// Hand-computed exposure fixtures shared by the unit tests and the
// acceptance gate. Month arithmetic uses CMC = (year - 1900) * 12 + month,
// exposure window [birth_cmc - 9, birth_cmc + threshold_months], event span
// [January, December] of the event year.

#include <optional>
#include <string>
#include <vector>

#include "crisisforest/cohort.hpp"

namespace golden {

inline int cmc(int year, int month) { return (year - 1900) * 12 + month; }

struct ExposureFixture {
    const char* label;
    int birth_cmc;
    int threshold_months;
    std::vector<int> event_years;  // all for the child's country
    bool expected_exposed;
    std::optional<int> expected_event_time;
};

// 25 fixtures covering window boundaries on both ends, pre-conception
// events, every threshold, foreign events, and nearest-event ties.
inline const std::vector<ExposureFixture>& exposure_fixtures() {
    static const std::vector<ExposureFixture> fixtures = {
        // Event year contains the birth month.
        {"birth Jan 1995, event 1995, u1", cmc(1995, 1), 12, {1995}, true, 0},
        // Window [Jun 1997, Mar 2003] starts years after the event.
        {"birth Mar 1998, event 1990, u5", cmc(1998, 3), 60, {1990}, false, 8},
        // Window [Feb 1995, Dec 1995] misses 1994 entirely.
        {"birth Nov 1995, event 1994, neo", cmc(1995, 11), 1, {1994}, false, 1},
        // Same window overlaps the 1995 span.
        {"birth Nov 1995, event 1995, neo", cmc(1995, 11), 1, {1995}, true, 0},
        // Window starts Jan 1996, one month after the 1995 span ends.
        {"birth Oct 1996, event 1995, u1", cmc(1996, 10), 12, {1995}, false, 1},
        {"birth Oct 1996, event 1996, neo", cmc(1996, 10), 1, {1996}, true, 0},
        // Conception month Dec 1995 touches the event span's last month.
        {"birth Sep 1996, event 1995, neo", cmc(1996, 9), 1, {1995}, true, 1},
        // Window's last month Jan 1995 touches the event span's first month.
        {"birth Dec 1994, event 1995, neo", cmc(1994, 12), 1, {1995}, true, -1},
        {"birth Nov 1994, event 1995, neo", cmc(1994, 11), 1, {1995}, false, -1},
        // u1 window [Apr 1993, Jan 1995] reaches January of the event year.
        {"birth Jan 1994, event 1995, u1", cmc(1994, 1), 12, {1995}, true, -1},
        {"birth Dec 1993, event 1995, u1", cmc(1993, 12), 12, {1995}, false, -2},
        // Same right-boundary pattern at the longer thresholds.
        {"birth Jan 1993, event 1995, u2", cmc(1993, 1), 24, {1995}, true, -2},
        {"birth Dec 1992, event 1995, u2", cmc(1992, 12), 24, {1995}, false, -3},
        {"birth Jan 1992, event 1995, u3", cmc(1992, 1), 36, {1995}, true, -3},
        {"birth Dec 1991, event 1995, u3", cmc(1991, 12), 36, {1995}, false, -4},
        {"birth Jan 1991, event 1995, u4", cmc(1991, 1), 48, {1995}, true, -4},
        {"birth Jan 1990, event 1995, u5", cmc(1990, 1), 60, {1995}, true, -5},
        {"birth Dec 1989, event 1995, u5", cmc(1989, 12), 60, {1995}, false, -6},
        // Pre-conception event one year before the window opens.
        {"birth Jun 2000, event 1990, u5", cmc(2000, 6), 60, {1990}, false, 10},
        // Event the year before birth overlaps via the 9-month lookback.
        {"birth Jan 1995, event 1994, neo", cmc(1995, 1), 1, {1994}, true, 1},
        {"birth Nov 1995, event 1996, neo", cmc(1995, 11), 1, {1996}, false, -1},
        {"birth Jan 1995, event 1997, u1", cmc(1995, 1), 12, {1997}, false, -2},
        // Multiple events; exposure stays a single binary flag.
        {"birth Jan 1995, events 1980+1995, u1", cmc(1995, 1), 12, {1980, 1995}, true, 0},
        {"birth Jan 1995, events 1994+1995, u1", cmc(1995, 1), 12, {1994, 1995}, true, 0},
        // Equidistant events resolve to the earlier year: 1995 - 1993 = +2.
        {"birth Jan 1995, events 1993+1997 tie", cmc(1995, 1), 12, {1993, 1997}, false, 2},
    };
    return fixtures;
}

inline crisisforest::ChildRecord fixture_child(const ExposureFixture& f) {
    crisisforest::ChildRecord child;
    child.child_id = "gx";
    child.country = "AA";
    child.birth_cmc = f.birth_cmc;
    child.survey_year = 2010;
    child.mother_age = 25.0;
    return child;
}

inline std::vector<crisisforest::CrisisEvent> fixture_events(const ExposureFixture& f) {
    std::vector<crisisforest::CrisisEvent> events;
    for (int year : f.event_years) events.push_back({"AA", year});
    return events;
}

}  // namespace golden
