#pragma once

#include "cdmeta/model.hpp"

#include <span>
#include <vector>

namespace cdmeta {

enum class PValueSide { GreaterAlternative, LessAlternative, TwoSided };

/// Wald p-value function of a normal estimator, evaluated at `mu`.
double wald_p(double mu, double estimate, double se, PValueSide side);

/// One-sided ("greater") p-value of a single study under the marginal
/// random-effects model: 1 - Phi((estimate - mu) / sqrt(tau2 + se^2)).
double study_p_greater(double mu, const Study& study, double tau2);

/// CDF of the sum of k independent standard uniforms. Exact alternating sum
/// for k < 12, CLT normal approximation for k >= 12. Output clamped to [0, 1].
double irwin_hall_cdf(double s, int k);

/// Density matching irwin_hall_cdf (exact below 12, normal approximation above).
double irwin_hall_pdf(double s, int k);

/// The k below which the exact Irwin-Hall sum is used.
inline constexpr int kIrwinHallExactLimit = 12;

/// Confidence distribution of mu conditional on a fixed tau2, obtained from
/// Edgington's sum-of-p-values combination of the one-sided study p-value
/// functions. Holds the per-study pivot scales so repeated evaluations at
/// the same tau2 stay cheap.
class EdgingtonCd {
public:
    EdgingtonCd(std::span<const double> estimates, std::span<const double> variances, double tau2);
    EdgingtonCd(const MetaAnalysis& ma, double tau2);

    double tau2() const noexcept { return tau2_; }
    int k() const noexcept { return static_cast<int>(estimates_.size()); }

    /// Sum of the study p-values at mu.
    double p_sum(double mu) const;
    /// Combined p-value function, i.e. the conditional CDF C(mu | tau2).
    double cdf(double mu) const;
    /// Conditional confidence density dC/dmu.
    double density(double mu) const;
    /// Solve cdf(mu) = target for target in (0, 1).
    double quantile(double target) const;

    /// Bracket used to start quantile searches.
    double bracket_lower() const noexcept { return lo_; }
    double bracket_upper() const noexcept { return hi_; }

private:
    std::vector<double> estimates_;
    std::vector<double> scales_;
    double tau2_;
    double lo_;
    double hi_;
};

/// Edgington combined p-value function C(mu | tau2).
double edgington_p(double mu, const MetaAnalysis& ma, double tau2);

/// Inverse of edgington_p in mu. Throws NumericError if no bracket is found.
double invert_conditional_cd(double target, const MetaAnalysis& ma, double tau2);

/// |1 - 2 C|; the confidence curve value for a CDF value.
double confidence_curve(double cdf_value);

/// Two-sided p-value 2 min(C, 1 - C) for a CDF value.
double two_sided_from_cdf(double cdf_value);

/// Edgington's method with a plug-in heterogeneity estimate: median,
/// equi-tailed interval by inversion, interval skewness, two-sided p at 0.
EstimationResult edgington_result(const MetaAnalysis& ma, double tau2, double level);

}  // namespace cdmeta
