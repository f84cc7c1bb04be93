#include "cdmeta/model.hpp"

#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace cdmeta;
using fixtures::equal_se;
using fixtures::serenoa;

namespace {

// Plain moment skewness g1 = m3 / m2^1.5 with 1/n moments.
double moment_skewness(const std::vector<double>& x) {
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double m2 = 0.0, m3 = 0.0;
    for (double v : x) {
        m2 += (v - mean) * (v - mean);
        m3 += (v - mean) * (v - mean) * (v - mean);
    }
    m2 /= static_cast<double>(x.size());
    m3 /= static_cast<double>(x.size());
    return m3 / std::pow(m2, 1.5);
}

}  // namespace

TEST(Study, RejectsNonFiniteAndNonPositiveSe) {
    EXPECT_THROW(Study(0.0, 0.0), InputError);
    EXPECT_THROW(Study(0.0, -1.0), InputError);
    EXPECT_THROW(Study(std::nan(""), 1.0), InputError);
    EXPECT_THROW(Study(0.0, std::numeric_limits<double>::infinity()), InputError);
    EXPECT_THROW(Study(std::numeric_limits<double>::infinity(), 1.0), InputError);
    const Study s(-0.23, 0.59, "Glemain (2002)");
    EXPECT_DOUBLE_EQ(s.variance(), 0.59 * 0.59);
    EXPECT_EQ(s.label(), "Glemain (2002)");
}

TEST(MetaAnalysis, NeedsTwoStudies) {
    EXPECT_THROW(MetaAnalysis({Study(1.0, 1.0)}), InputError);
    EXPECT_THROW(MetaAnalysis({}), InputError);
    const auto ma = serenoa();
    EXPECT_EQ(ma.size(), 9u);
    EXPECT_DOUBLE_EQ(ma.estimates()[0], -0.23);
    EXPECT_DOUBLE_EQ(ma.min_estimate(), -2.77);
    EXPECT_DOUBLE_EQ(ma.max_estimate(), 0.70);
    EXPECT_DOUBLE_EQ(ma.max_variance(), 1.37 * 1.37);
}

TEST(MetaAnalysis, ShiftMovesEveryEstimate) {
    const auto ma = serenoa();
    const auto sh = ma.shifted(1.5);
    for (std::size_t i = 0; i < ma.size(); ++i) {
        EXPECT_DOUBLE_EQ(sh.estimates()[i], ma.estimates()[i] + 1.5);
        EXPECT_DOUBLE_EQ(sh.variances()[i], ma.variances()[i]);
    }
}

TEST(Method, NamesRoundTrip) {
    for (Method m : {Method::IVW, Method::HKSJ, Method::Edgington, Method::CDEdgingtonMC,
                     Method::CDEdgingtonGAQ}) {
        EXPECT_EQ(parse_method(method_name(m)), m);
    }
    EXPECT_FALSE(parse_method("fisher").has_value());
}

TEST(CiSkewness, Examples) {
    // Two-decimal limits of the plug-in Edgington interval: (-0.04 - 1.71 + 1.66) / 1.67.
    // The unrounded interval gives -0.062 (checked with the full computation elsewhere).
    EXPECT_NEAR(ci_skewness({-1.71, -0.04, 0.95}, -0.83), -0.09 / 1.67, 1e-14);
    EXPECT_DOUBLE_EQ(ci_skewness({-1.0, 1.0, 0.95}, 0.0), 0.0);
    EXPECT_DOUBLE_EQ(ci_skewness({0.0, 4.0, 0.95}, 1.0), 0.5);
    EXPECT_THROW(ci_skewness({1.0, 1.0, 0.95}, 1.0), NumericError);
}

TEST(CiSkewness, AffineInvariantAndBounded) {
    std::mt19937_64 eng(7);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int r = 0; r < 200; ++r) {
        double lo = u(eng), hi = u(eng);
        if (lo > hi) std::swap(lo, hi);
        if (hi - lo < 1e-6) continue;
        const double c = lo + (hi - lo) * (u(eng) + 5.0) / 10.0;
        const double a = u(eng);
        const double b = 0.1 + (u(eng) + 5.0);
        const double base = ci_skewness({lo, hi, 0.95}, c);
        EXPECT_LE(std::abs(base), 1.0);
        EXPECT_NEAR(ci_skewness({a + b * lo, a + b * hi, 0.95}, a + b * c), base, 1e-9);
    }
}

TEST(FisherSkewness, SerenoaValue) {
    EXPECT_NEAR(fisher_weighted_skewness(serenoa()), -0.874, 0.002);
}

TEST(FisherSkewness, SymmetricAndHandComputed) {
    EXPECT_NEAR(fisher_weighted_skewness(equal_se({-1.0, 0.0, 1.0})), 0.0, 1e-15);
    // {0, 0, 3}: mean 1, deviations (-1, -1, 2), m2 = 2, m3 = 2 -> 2 / 2^1.5.
    EXPECT_NEAR(fisher_weighted_skewness(equal_se({0.0, 0.0, 3.0})), 1.0 / std::sqrt(2.0), 1e-14);
    EXPECT_THROW(fisher_weighted_skewness(equal_se({2.0, 2.0, 2.0})), NumericError);
}

TEST(FisherSkewness, EqualWeightsReduceToMomentSkewness) {
    std::mt19937_64 eng(11);
    std::gamma_distribution<double> g(2.0, 1.0);
    for (int r = 0; r < 50; ++r) {
        std::vector<double> x(12);
        for (double& v : x) v = g(eng);
        EXPECT_NEAR(fisher_weighted_skewness(equal_se(x, 0.3)), moment_skewness(x), 1e-10);
        EXPECT_NEAR(fisher_skewness(x), moment_skewness(x), 1e-10);
    }
}

TEST(FisherSkewness, FlipsSignUnderNegation) {
    const auto ma = serenoa();
    std::vector<Study> neg;
    for (const auto& s : ma.studies()) neg.emplace_back(-s.estimate(), s.se());
    EXPECT_NEAR(fisher_weighted_skewness(MetaAnalysis(neg)), -fisher_weighted_skewness(ma), 1e-14);
}

TEST(ConfidenceInterval, WidthAndContains) {
    const ConfidenceInterval ci{-1.0, 2.0, 0.9};
    EXPECT_DOUBLE_EQ(ci.width(), 3.0);
    EXPECT_TRUE(ci.contains(-1.0));
    EXPECT_FALSE(ci.contains(2.5));
}
