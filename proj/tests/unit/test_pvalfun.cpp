#include "cdmeta/pvalfun.hpp"

#include "cdmeta/heterogeneity.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

using namespace cdmeta;
using fixtures::serenoa;

namespace {

// Standard normal CDF by composite Simpson integration of the density.
double simpson_phi(double x) {
    const int n = 20000;
    const double h = x / n;
    auto f = [](double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi); };
    double s = f(0.0) + f(x);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(i * h);
    return 0.5 + s * h / 3.0;
}

}  // namespace

TEST(WaldP, Examples) {
    EXPECT_DOUBLE_EQ(wald_p(-0.23, -0.23, 0.59, PValueSide::GreaterAlternative), 0.5);
    EXPECT_DOUBLE_EQ(wald_p(1.3, 1.3, 2.0, PValueSide::TwoSided), 1.0);
    // Limits where the one-sided p-value crosses 0.025 and 0.975.
    const double z = 1.959963984540054;
    EXPECT_NEAR(-0.23 - z * 0.59, -1.39, 0.005);
    EXPECT_NEAR(-0.23 + z * 0.59, 0.93, 0.005);
    EXPECT_NEAR(wald_p(-0.23 - z * 0.59, -0.23, 0.59, PValueSide::GreaterAlternative), 0.025, 1e-12);
    EXPECT_NEAR(wald_p(-0.23 + z * 0.59, -0.23, 0.59, PValueSide::GreaterAlternative), 0.975, 1e-12);
}

TEST(WaldP, SidesAreConsistent) {
    for (double mu = -3.0; mu <= 3.0; mu += 0.25) {
        const double g = wald_p(mu, 0.4, 0.8, PValueSide::GreaterAlternative);
        const double l = wald_p(mu, 0.4, 0.8, PValueSide::LessAlternative);
        EXPECT_NEAR(g + l, 1.0, 1e-15);
        EXPECT_DOUBLE_EQ(wald_p(mu, 0.4, 0.8, PValueSide::TwoSided), 2.0 * std::min(g, l));
        EXPECT_LE(wald_p(mu - 0.1, 0.4, 0.8, PValueSide::GreaterAlternative), g);
    }
}

TEST(StudyP, MatchesIndependentNormalOracle) {
    const Study s(-0.23, 0.59);
    const double expected = simpson_phi(0.23 / std::sqrt(0.85 + 0.59 * 0.59));
    EXPECT_NEAR(study_p_greater(0.0, s, 0.85), expected, 1e-12);
    EXPECT_DOUBLE_EQ(study_p_greater(-0.23, s, 0.0), 0.5);
    EXPECT_NEAR(study_p_greater(-1e3, s, 0.3), 0.0, 1e-300);
    EXPECT_NEAR(study_p_greater(1e3, s, 0.3), 1.0, 1e-15);
}

TEST(IrwinHall, SimpleValues) {
    for (int k = 1; k < 12; ++k) EXPECT_NEAR(irwin_hall_cdf(0.5 * k, k), 0.5, 1e-13) << k;
    EXPECT_NEAR(irwin_hall_cdf(0.3, 1), 0.3, 1e-15);
    EXPECT_EQ(irwin_hall_cdf(-0.1, 4), 0.0);
    EXPECT_EQ(irwin_hall_cdf(4.1, 4), 1.0);
    // k = 2: triangular distribution.
    EXPECT_NEAR(irwin_hall_cdf(0.6, 2), 0.18, 1e-14);
    EXPECT_NEAR(irwin_hall_cdf(1.5, 2), 1.0 - 0.125, 1e-14);
}

TEST(IrwinHall, MatchesConvolutionOracle) {
    const int m = 4000;
    for (int k = 2; k <= 11; ++k) {
        const auto oracle = oracles::irwin_hall_convolution(k, m);
        double worst = 0.0;
        for (std::size_t i = 0; i < oracle.size(); i += 37) {
            const double s = static_cast<double>(i) / m;
            worst = std::max(worst, std::abs(irwin_hall_cdf(s, k) - oracle[i]));
        }
        EXPECT_LE(worst, 1e-6) << "k = " << k;
    }
    // The specific documented point.
    const auto o3 = oracles::irwin_hall_convolution(3, m);
    EXPECT_NEAR(irwin_hall_cdf(1.7, 3), o3[static_cast<std::size_t>(1.7 * m + 0.5)], 1e-6);
}

TEST(IrwinHall, PdfIsDerivativeOfCdf) {
    for (int k : {2, 3, 5, 9, 11, 15}) {
        for (double s = 0.05 * k; s < 0.95 * k; s += 0.07 * k) {
            const double h = 1e-6;
            const double fd = (irwin_hall_cdf(s + h, k) - irwin_hall_cdf(s - h, k)) / (2.0 * h);
            EXPECT_NEAR(irwin_hall_pdf(s, k), fd, 1e-5) << k << ' ' << s;
        }
    }
}

TEST(IrwinHall, SwitchPointDiscrepancyIsSmall) {
    // Exact k = 11 against the normal approximation evaluated at k = 11.
    double worst = 0.0;
    for (double s = 0.0; s <= 11.0; s += 0.01) {
        const double clt = 0.5 * std::erfc(-std::sqrt(12.0 * 11.0) * (s / 11.0 - 0.5) / std::sqrt(2.0));
        worst = std::max(worst, std::abs(irwin_hall_cdf(s, 11) - clt));
    }
    EXPECT_LE(worst, 0.02);
    EXPECT_GT(worst, 0.0);
}

TEST(IrwinHall, LargeKUsesNormalApproximation) {
    for (int k : {12, 20, 50}) {
        for (double s : {0.3 * k, 0.45 * k, 0.5 * k, 0.61 * k}) {
            const double z = std::sqrt(12.0 * k) * (s / k - 0.5);
            EXPECT_NEAR(irwin_hall_cdf(s, k), 0.5 * std::erfc(-z / std::sqrt(2.0)), 1e-15);
        }
    }
}

TEST(EdgingtonCd, SingleStudyReducesToStudyPValue) {
    const std::vector<double> y{0.4};
    const std::vector<double> v{0.25};
    const EdgingtonCd cd(y, v, 0.1);
    for (double mu = -2.0; mu <= 2.0; mu += 0.2) {
        EXPECT_NEAR(cd.cdf(mu), study_p_greater(mu, Study(0.4, 0.5), 0.1), 1e-15);
    }
    EXPECT_NEAR(cd.quantile(0.5), 0.4, 1e-8);
}

TEST(EdgingtonCd, IdenticalStudiesAreCentred) {
    const MetaAnalysis ma({Study(0.7, 0.3), Study(0.7, 0.3), Study(0.7, 0.3), Study(0.7, 0.3)});
    EXPECT_NEAR(edgington_p(0.7, ma, 0.2), 0.5, 1e-14);
    EXPECT_NEAR(invert_conditional_cd(0.5, ma, 0.2), 0.7, 1e-8);
}

TEST(EdgingtonCd, MonotoneWithLimits) {
    const auto ma = serenoa();
    const EdgingtonCd cd(ma, 0.85);
    double prev = 0.0;
    for (double mu = -12.0; mu <= 12.0; mu += 0.01) {
        const double c = cd.cdf(mu);
        EXPECT_GE(c, prev);
        prev = c;
    }
    EXPECT_LT(cd.cdf(-50.0), 1e-12);
    EXPECT_GT(cd.cdf(50.0), 1.0 - 1e-12);
}

TEST(EdgingtonCd, DensityIsDerivative) {
    const EdgingtonCd cd(serenoa(), 0.85);
    for (double mu = -3.0; mu <= 1.0; mu += 0.3) {
        const double h = 1e-5;
        EXPECT_NEAR(cd.density(mu), (cd.cdf(mu + h) - cd.cdf(mu - h)) / (2.0 * h), 1e-6);
    }
}

TEST(EdgingtonCd, InversionRoundTrip) {
    const auto ma = serenoa();
    std::mt19937_64 eng(3);
    std::uniform_real_distribution<double> u(1e-6, 1.0 - 1e-6);
    for (int r = 0; r < 1000; ++r) {
        const double target = u(eng);
        const double tau2 = 3.0 * u(eng);
        const double mu = invert_conditional_cd(target, ma, tau2);
        EXPECT_NEAR(edgington_p(mu, ma, tau2), target, 1e-8);
    }
}

TEST(EdgingtonCd, ExtremeTargetsStayBracketed) {
    const auto ma = serenoa();
    for (double tau2 : {0.0, 1e-3, 1.0, 1e4}) {
        for (double p : {1e-12, 1e-6, 1.0 - 1e-6, 1.0 - 1e-12}) {
            const double mu = invert_conditional_cd(p, ma, tau2);
            EXPECT_TRUE(std::isfinite(mu));
            EXPECT_NEAR(edgington_p(mu, ma, tau2), p, 1e-8);
        }
    }
}

TEST(EdgingtonResult, SerenoaPlugIn) {
    const auto ma = serenoa();
    const auto r = edgington_result(ma, reml_tau2(ma), 0.95);
    EXPECT_NEAR(r.estimate, -0.83, 0.01);
    EXPECT_NEAR(r.ci.lower, -1.71, 0.01);
    EXPECT_NEAR(r.ci.upper, -0.04, 0.01);
    EXPECT_NEAR(r.skewness, -0.06, 0.02);
    EXPECT_LE(r.ci.lower, r.estimate);
    EXPECT_LE(r.estimate, r.ci.upper);
    EXPECT_NEAR(invert_conditional_cd(0.025, ma, 0.85), -1.71, 0.01);
}

TEST(ConfidenceCurve, Values) {
    EXPECT_DOUBLE_EQ(confidence_curve(0.5), 0.0);
    EXPECT_NEAR(confidence_curve(0.025), 0.95, 1e-15);
    EXPECT_DOUBLE_EQ(confidence_curve(1.0), 1.0);
    EXPECT_DOUBLE_EQ(two_sided_from_cdf(0.5), 1.0);
    EXPECT_DOUBLE_EQ(two_sided_from_cdf(0.99), 2.0 * (1.0 - 0.99));
}

// With the true tau2 the study p-values are independent uniforms, so the
// combined p-value at the true mean is uniform.
TEST(EdgingtonCd, PivotIsUniformAtTrueMean) {
    std::mt19937_64 eng(20240501);
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_real_distribution<double> se_dist(0.2, 1.0);
    const double mu0 = -0.3;
    const double tau2 = 0.4;
    std::vector<double> p;
    for (int r = 0; r < 5000; ++r) {
        std::vector<Study> st;
        for (int i = 0; i < 6; ++i) {
            const double se = se_dist(eng);
            st.emplace_back(mu0 + std::sqrt(tau2 + se * se) * z(eng), se);
        }
        p.push_back(edgington_p(mu0, MetaAnalysis(st), tau2));
    }
    // Kolmogorov-Smirnov critical value at alpha = 0.01.
    EXPECT_LE(oracles::ks_uniform(p), oracles::kKsCritical01 / std::sqrt(5000.0));
}
