#pragma once

#include "cdmeta/model.hpp"
#include "cdmeta/rng.hpp"

namespace cdmeta {

/// Random-effects inverse-variance weighted mean with weights 1/(se^2 + tau2).
double ivw_mean(double tau2, const MetaAnalysis& ma);

/// Generalized heterogeneity statistic Q(tau2); Cochran's Q at tau2 = 0.
double generalized_q(double tau2, const MetaAnalysis& ma);

/// Analytic derivative dQ/dtau2 (product and quotient rule form).
double dq_dtau2(double tau2, const MetaAnalysis& ma);

/// Solve Q(tau2) = target for tau2 >= 0. Returns 0 when Q(0) <= target.
/// Throws NumericError when no upper bracket is found.
double tau2_for_q(double target, const MetaAnalysis& ma);

/// Higgins' I^2 = max(0, (Q(0) - (k - 1)) / Q(0)).
double i_squared(const MetaAnalysis& ma);

/// P(chi^2_{k-1} > Q(0)), the p-value of the test for heterogeneity.
double heterogeneity_p_value(const MetaAnalysis& ma);

/// DerSimonian-Laird moment estimate truncated at 0.
double dersimonian_laird(const MetaAnalysis& ma);

/// Paule-Mandel estimate: root of Q(tau2) = k - 1, or 0.
double paule_mandel(const MetaAnalysis& ma);

/// Restricted maximum-likelihood estimate of tau2 by Fisher scoring,
/// started at the DerSimonian-Laird value and truncated at 0.
/// Throws NumericError after 100 iterations without convergence.
double reml_tau2(const MetaAnalysis& ma);

/// Q-profile interval: invert Q at the chi^2_{k-1} quantiles 1 - alpha/2 and alpha/2.
ConfidenceInterval q_profile_ci(const MetaAnalysis& ma, double level);

/// Confidence distribution of tau2 induced by the chi^2_{k-1} pivot Q(tau2).
///
/// The distribution has an atom at tau2 = 0 of mass P(chi^2_{k-1} > Q(0)),
/// the probability of a pivot draw that no tau2 >= 0 can reach, and a
/// continuous part with density f_chi2(Q(tau2)) |dQ/dtau2| on (0, inf).
class Tau2ConfidenceDistribution {
public:
    explicit Tau2ConfidenceDistribution(MetaAnalysis ma);

    const MetaAnalysis& data() const noexcept { return ma_; }
    int df() const noexcept { return df_; }
    /// df = 1 (two studies) gives a usable but very flat distribution.
    bool low_information() const noexcept { return df_ < 2; }

    double q(double tau2) const { return generalized_q(tau2, ma_); }
    double q_at_zero() const noexcept { return q0_; }
    /// Mass of the atom at tau2 = 0.
    double atom() const noexcept { return atom_; }

    /// Confidence density of the continuous part.
    double density(double tau2) const;
    /// P(tau2' <= tau2) including the atom.
    double cdf(double tau2) const;
    /// Left-continuous inverse of cdf; 0 for p <= atom().
    double quantile(double p) const;

    /// Quantile of the continuous part restricted to (0, upper] and
    /// renormalized: the summary a density plotted on [0, upper] gives.
    double window_quantile(double p, double upper) const;

    /// Inverse-transform draw: W ~ chi^2_{k-1}, then Q(tau2) = W (or 0 if W >= Q(0)).
    double sample(RandomEngine& eng) const;
    /// Map a pivot value W to tau2.
    double from_pivot(double w) const;

private:
    MetaAnalysis ma_;
    int df_;
    double q0_;
    double atom_;
};

/// Density c(tau2) of the tau2 confidence distribution.
double tau2_confidence_density(double tau2, const MetaAnalysis& ma);

/// One draw of tau2 from its confidence distribution.
double sample_tau2(const MetaAnalysis& ma, RandomEngine& eng);

}  // namespace cdmeta
