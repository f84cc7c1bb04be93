#include "cdmeta/heterogeneity.hpp"

#include "cdmeta/distributions.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace cdmeta;
using fixtures::covid;
using fixtures::equal_se;
using fixtures::serenoa;

namespace {

MetaAnalysis random_dataset(std::mt19937_64& eng, int k) {
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_real_distribution<double> se(0.1, 1.5);
    std::vector<Study> st;
    for (int i = 0; i < k; ++i) st.emplace_back(z(eng), se(eng));
    return MetaAnalysis(st);
}

// Negative restricted log-likelihood of the random-effects model.
double neg_restricted_loglik(double tau2, const MetaAnalysis& ma) {
    double sw = 0.0, swy = 0.0, logdet = 0.0;
    for (std::size_t i = 0; i < ma.size(); ++i) {
        const double w = 1.0 / (ma.variances()[i] + tau2);
        sw += w;
        swy += w * ma.estimates()[i];
        logdet += std::log(ma.variances()[i] + tau2);
    }
    const double mu = swy / sw;
    double rss = 0.0;
    for (std::size_t i = 0; i < ma.size(); ++i) {
        const double r = ma.estimates()[i] - mu;
        rss += r * r / (ma.variances()[i] + tau2);
    }
    return 0.5 * (logdet + std::log(sw) + rss);
}

// Golden-section minimisation on [0, hi].
double golden_min(auto f, double lo, double hi) {
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = lo, b = hi;
    double c = b - g * (b - a), d = a + g * (b - a);
    while (b - a > 1e-10) {
        if (f(c) < f(d)) b = d;
        else a = c;
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    return 0.5 * (a + b);
}

template <class F>
double simpson(F f, double a, double b, int n) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
    return s * h / 3.0;
}

}  // namespace

TEST(GeneralizedQ, SerenoaCochranQ) {
    const auto ma = serenoa();
    // Direct summation over the rows in extended precision.
    long double sw = 0, swy = 0;
    for (const auto& s : ma.studies()) {
        const long double w = 1.0L / (static_cast<long double>(s.se()) * s.se());
        sw += w;
        swy += w * s.estimate();
    }
    const long double mean = swy / sw;
    long double q = 0;
    for (const auto& s : ma.studies()) {
        const long double r = s.estimate() - mean;
        q += r * r / (static_cast<long double>(s.se()) * s.se());
    }
    EXPECT_NEAR(generalized_q(0.0, ma), static_cast<double>(q), 1e-12);
    EXPECT_NEAR(generalized_q(0.0, ma), 24.5149, 1e-4);
}

TEST(GeneralizedQ, HomogeneousIsZero) {
    const auto ma = MetaAnalysis({Study(0.3, 0.2), Study(0.3, 0.5), Study(0.3, 1.0)});
    for (double t : {0.0, 0.1, 10.0}) {
        EXPECT_EQ(generalized_q(t, ma), 0.0);
        EXPECT_EQ(dq_dtau2(t, ma), 0.0);
    }
    EXPECT_EQ(paule_mandel(ma), 0.0);
    EXPECT_EQ(reml_tau2(ma), 0.0);
    EXPECT_EQ(i_squared(ma), 0.0);
    const auto ci = q_profile_ci(ma, 0.95);
    EXPECT_EQ(ci.lower, 0.0);
    EXPECT_EQ(ci.upper, 0.0);
}

TEST(GeneralizedQ, TwoStudyClosedForm) {
    const auto ma = equal_se({0.0, 1.0});
    for (double t : {0.0, 0.3, 1.0, 7.5}) {
        EXPECT_NEAR(generalized_q(t, ma), 1.0 / (2.0 * (1.0 + t)), 1e-15);
        EXPECT_NEAR(dq_dtau2(t, ma), -1.0 / (2.0 * (1.0 + t) * (1.0 + t)), 1e-15);
    }
}

TEST(GeneralizedQ, StrictlyDecreasing) {
    std::mt19937_64 eng(5);
    for (int r = 0; r < 50; ++r) {
        const auto ma = random_dataset(eng, 3 + r % 10);
        double prev = generalized_q(0.0, ma);
        for (double t = 0.01; t < 20.0; t *= 1.3) {
            const double q = generalized_q(t, ma);
            EXPECT_LT(q, prev);
            prev = q;
        }
    }
}

TEST(DqDtau2, MatchesFiniteDifferences) {
    std::mt19937_64 eng(17);
    for (int r = 0; r < 100; ++r) {
        const auto ma = random_dataset(eng, 2 + r % 15);
        for (double t : {0.0, 0.01, 0.1, 0.5, 1.0, 3.0, 10.0}) {
            const double h = 1e-6 * (1.0 + t);
            auto q = [&](double x) { return generalized_q(x, ma); };
            // Second-order one-sided difference at the boundary, central elsewhere.
            const double fd = t == 0.0 ? (-3.0 * q(0.0) + 4.0 * q(h) - q(2.0 * h)) / (2.0 * h)
                                       : (q(t + h) - q(t - h)) / (2.0 * h);
            const double an = dq_dtau2(t, ma);
            EXPECT_LE(an, 0.0);
            EXPECT_NEAR(an, fd, 1e-5 * std::abs(an) + 1e-12) << "rep " << r << " tau2 " << t;
        }
    }
    const double t = 0.5;
    const auto ma = serenoa();
    const double h = 1e-6 * (1.0 + t);
    const double fd = (generalized_q(t + h, ma) - generalized_q(t - h, ma)) / (2.0 * h);
    EXPECT_NEAR(dq_dtau2(t, ma) / fd, 1.0, 1e-5);
}

TEST(IvwMean, Examples) {
    EXPECT_NEAR(ivw_mean(0.0, equal_se({1.0, 2.0, 6.0})), 3.0, 1e-15);
    EXPECT_NEAR(ivw_mean(0.85, serenoa()), -0.90, 0.01);
    const auto ma = serenoa();
    for (double t : {0.0, 0.5, 100.0}) {
        const double m = ivw_mean(t, ma);
        EXPECT_GE(m, ma.min_estimate());
        EXPECT_LE(m, ma.max_estimate());
    }
}

TEST(Estimators, SerenoaSummaries) {
    const auto ma = serenoa();
    EXPECT_NEAR(reml_tau2(ma), 0.85, 0.01);
    EXPECT_NEAR(i_squared(ma), 0.674, 0.005);
    EXPECT_NEAR(heterogeneity_p_value(ma), 0.002, 0.001);
    const auto ci = q_profile_ci(ma, 0.95);
    EXPECT_NEAR(ci.lower, 0.11, 0.02);
    EXPECT_NEAR(ci.upper, 3.96, 0.02);
    const double pm = paule_mandel(ma);
    EXPECT_GT(pm, 0.0);
    EXPECT_NEAR(generalized_q(pm, ma), 8.0, 1e-8);
}

TEST(Estimators, CovidSummaries) {
    const auto ma = covid();
    EXPECT_LT(reml_tau2(ma), 1e-4);
    EXPECT_NEAR(i_squared(ma), 0.1401, 0.005);
    const auto ci = q_profile_ci(ma, 0.95);
    EXPECT_NEAR(ci.lower, 0.00, 0.05);
    EXPECT_NEAR(ci.upper, 2.13, 0.05);
}

TEST(Estimators, PauleMandelTruncatesAtZero) {
    const auto ma = equal_se({0.0, 0.1, 0.2});
    ASSERT_LT(generalized_q(0.0, ma), 2.0);
    EXPECT_EQ(paule_mandel(ma), 0.0);
}

TEST(Estimators, RemlMaximisesRestrictedLikelihood) {
    std::mt19937_64 eng(23);
    for (int r = 0; r < 40; ++r) {
        const auto ma = random_dataset(eng, 3 + r % 12);
        const double reml = reml_tau2(ma);
        const double oracle = golden_min([&](double t) { return neg_restricted_loglik(t, ma); }, 0.0,
                                         50.0);
        EXPECT_NEAR(reml, oracle, 1e-6 * (1.0 + oracle)) << "rep " << r;
    }
}

TEST(Tau2Cd, DensityAndAtomIntegrateToOne) {
    for (const auto& ma : {serenoa(), covid()}) {
        const Tau2ConfidenceDistribution cd(ma);
        // tau2 = x / (1 - x) maps [0, 1) onto [0, inf).
        auto f = [&](double x) {
            if (x >= 1.0) return 0.0;
            const double t = x / (1.0 - x);
            return cd.density(t) / ((1.0 - x) * (1.0 - x));
        };
        const double mass = simpson(f, 0.0, 1.0 - 1e-9, 200000);
        EXPECT_NEAR(mass + cd.atom(), 1.0, 1e-4);
    }
}

TEST(Tau2Cd, CdfMatchesIntegratedDensity) {
    const Tau2ConfidenceDistribution cd(serenoa());
    for (double t : {0.05, 0.3, 1.0, 4.0}) {
        const double integral = simpson([&](double x) { return cd.density(x); }, 0.0, t, 20000);
        EXPECT_NEAR(cd.atom() + integral, cd.cdf(t), 1e-7);
    }
}

TEST(Tau2Cd, WindowedSummaries) {
    const Tau2ConfidenceDistribution s(serenoa());
    EXPECT_NEAR(s.window_quantile(0.5, 5.0), 0.77, 0.05);
    EXPECT_NEAR(s.window_quantile(0.025, 5.0), 0.12, 0.05);
    EXPECT_NEAR(s.window_quantile(0.975, 5.0), 3.39, 0.05);
    const Tau2ConfidenceDistribution c(covid());
    EXPECT_NEAR(c.window_quantile(0.5, 2.0), 0.21, 0.05);
    EXPECT_NEAR(c.window_quantile(0.025, 2.0), 0.00, 0.05);
    EXPECT_NEAR(c.window_quantile(0.975, 2.0), 1.56, 0.05);
}

TEST(Tau2Cd, QuantilesMatchQProfile) {
    const auto ma = serenoa();
    const Tau2ConfidenceDistribution cd(ma);
    const auto ci = q_profile_ci(ma, 0.95);
    EXPECT_NEAR(cd.quantile(0.025), ci.lower, 1e-9);
    EXPECT_NEAR(cd.quantile(0.975), ci.upper, 1e-9);
    const Tau2ConfidenceDistribution cc(covid());
    EXPECT_EQ(cc.quantile(0.3), 0.0);
    EXPECT_GT(cc.atom(), 0.3);
}

TEST(SampleTau2, RoundTripAndTruncation) {
    const auto ma = serenoa();
    const Tau2ConfidenceDistribution cd(ma);
    std::mt19937_64 eng(99);
    std::chi_squared_distribution<double> chi2(8.0);
    int positive = 0;
    for (int r = 0; r < 1000; ++r) {
        const double w = chi2(eng);
        const double t = cd.from_pivot(w);
        if (w >= cd.q_at_zero()) {
            EXPECT_EQ(t, 0.0);
        } else {
            ASSERT_GT(t, 0.0);
            EXPECT_NEAR(generalized_q(t, ma), w, 1e-8);
            ++positive;
        }
    }
    EXPECT_GT(positive, 900);
    EXPECT_EQ(cd.from_pivot(cd.q_at_zero() + 1.0), 0.0);
}

TEST(SampleTau2, EmpiricalDistributionMatchesAnalytic) {
    const auto ma = serenoa();
    const Tau2ConfidenceDistribution cd(ma);
    auto eng = make_stream(4, 0);
    std::vector<double> draws(100000);
    for (double& d : draws) d = sample_tau2(ma, eng);
    std::vector<double> sorted = draws;
    std::sort(sorted.begin(), sorted.end());
    const auto ci = q_profile_ci(ma, 0.95);
    EXPECT_NEAR(sorted[2500], ci.lower, 0.05);
    EXPECT_NEAR(sorted[97500], ci.upper, 0.05);
    EXPECT_LE(oracles::ks_distance(draws, [&](double t) { return cd.cdf(t); }), 0.01);
}

TEST(Tau2Cd, PivotFollowsChiSquareAtTrueTau2) {
    std::mt19937_64 eng(8);
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_real_distribution<double> se(0.2, 1.0);
    const double tau2 = 0.3;
    const int k = 7;
    std::vector<double> q;
    for (int r = 0; r < 5000; ++r) {
        std::vector<Study> st;
        for (int i = 0; i < k; ++i) {
            const double s = se(eng);
            st.emplace_back(0.2 + std::sqrt(tau2 + s * s) * z(eng), s);
        }
        q.push_back(generalized_q(tau2, MetaAnalysis(st)));
    }
    const double d = oracles::ks_distance(q, [&](double x) { return dist::chi2_cdf(x, k - 1); });
    EXPECT_LE(d, oracles::kKsCritical01 / std::sqrt(5000.0));
}

TEST(Tau2Cd, LowInformationFlag) {
    EXPECT_TRUE(Tau2ConfidenceDistribution(equal_se({0.0, 1.0})).low_information());
    EXPECT_FALSE(Tau2ConfidenceDistribution(serenoa()).low_information());
}
