#pragma once

#include "cdmeta/model.hpp"

#include <cmath>
#include <vector>

namespace fixtures {

// Saw palmetto trials: mean differences in symptom score with standard errors.
inline cdmeta::MetaAnalysis serenoa() {
    const std::vector<double> y{-0.23, -1.74, -0.22, 0.70, -0.27, -1.30, -0.30, -2.77, -2.18};
    const std::vector<double> s{0.59, 1.16, 0.92, 1.13, 0.48, 1.37, 0.44, 0.48, 1.12};
    std::vector<cdmeta::Study> st;
    for (std::size_t i = 0; i < y.size(); ++i) st.emplace_back(y[i], s[i]);
    return cdmeta::MetaAnalysis(st);
}

// Corticosteroid trials in critically ill COVID-19 patients: log odds
// ratios of 28-day mortality, standard errors from the 95% limits.
inline cdmeta::MetaAnalysis covid() {
    const double z = 1.959963984540054;
    struct Row { double odds, lo, hi; };
    const std::vector<Row> rows{{2.00, 0.21, 18.69}, {0.80, 0.49, 1.31}, {0.59, 0.44, 0.78},
                                {0.46, 0.20, 1.04},  {4.00, 0.65, 24.66}, {0.71, 0.38, 1.33},
                                {0.91, 0.29, 2.87}};
    std::vector<cdmeta::Study> st;
    for (const auto& r : rows) {
        st.emplace_back(std::log(r.odds), (std::log(r.hi) - std::log(r.lo)) / (2.0 * z));
    }
    return cdmeta::MetaAnalysis(st);
}

inline cdmeta::MetaAnalysis equal_se(const std::vector<double>& y, double se = 1.0) {
    std::vector<cdmeta::Study> st;
    for (double v : y) st.emplace_back(v, se);
    return cdmeta::MetaAnalysis(st);
}

}  // namespace fixtures
