#pragma once

// Brute-force depth-1 regression split search, written independently of the
// forest engine and shared by the unit tests and the acceptance gate. Scans
// every feature and every midpoint between consecutive distinct split-half
// values, maximizing (sum y_L)^2/n_L + (sum y_R)^2/n_R, which is equivalent
// to minimizing total within-child variance. Ties resolve to the lowest
// feature index, then the lowest cut.

#include <algorithm>
#include <limits>
#include <vector>

#include "crisisforest/forest.hpp"

namespace oracle {

struct Split {
    int feature = -1;
    double cut = 0.0;
};

inline Split best_depth1_split(const crisisforest::Matrix& x, const std::vector<double>& y,
                               const std::vector<int>& split_rows,
                               const std::vector<int>& est_rows, int min_leaf) {
    Split best;
    double best_gain = -std::numeric_limits<double>::infinity();
    const std::size_t n = split_rows.size();

    for (int f = 0; f < static_cast<int>(x.n_cols); ++f) {
        std::vector<std::pair<double, double>> vals;
        vals.reserve(n);
        for (int r : split_rows) vals.push_back({x.at(r, f), y[r]});
        std::sort(vals.begin(), vals.end());

        std::vector<double> cuts;
        for (std::size_t k = 0; k + 1 < n; ++k) {
            if (vals[k].first == vals[k + 1].first) continue;
            double cut = vals[k].first + (vals[k + 1].first - vals[k].first) / 2.0;
            if (cut >= vals[k + 1].first) cut = vals[k].first;
            cuts.push_back(cut);
        }

        for (double cut : cuts) {
            std::size_t n_left = 0;
            double sum_left = 0.0, sum_total = 0.0;
            for (const auto& [v, target] : vals) {
                sum_total += target;
                if (v <= cut) {
                    ++n_left;
                    sum_left += target;
                }
            }
            const std::size_t n_right = n - n_left;
            if (n_left < static_cast<std::size_t>(min_leaf) ||
                n_right < static_cast<std::size_t>(min_leaf)) {
                continue;
            }
            std::size_t e_left = 0;
            for (int r : est_rows) e_left += x.at(r, f) <= cut ? 1 : 0;
            if (e_left < 1 || est_rows.size() - e_left < 1) continue;

            const double sum_right = sum_total - sum_left;
            const double gain = sum_left * sum_left / static_cast<double>(n_left) +
                                sum_right * sum_right / static_cast<double>(n_right);
            if (gain > best_gain) {
                best_gain = gain;
                best.feature = f;
                best.cut = cut;
            }
        }
    }
    return best;
}

}  // namespace oracle
