#pragma once

#include "cdmeta/model.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace cdmeta {

inline constexpr std::size_t kDefaultMcDraws = 100000;

struct McOptions {
    std::size_t draws = kDefaultMcDraws;
    std::uint64_t seed = 1;
    /// Sub-stream identifier; lets callers run independent analyses from one seed.
    std::uint64_t stream = 0;
    /// Worker threads. Results do not depend on this value.
    unsigned workers = 1;
};

/// Monte Carlo representation of the marginal confidence distribution of mu.
class ConfidenceDistributionSamples {
public:
    ConfidenceDistributionSamples(std::vector<double> mu_draws, std::vector<double> tau2_draws,
                                  std::uint64_t seed, std::uint64_t stream);

    const std::vector<double>& mu_draws() const noexcept { return mu_; }
    const std::vector<double>& tau2_draws() const noexcept { return tau2_; }
    std::size_t size() const noexcept { return mu_.size(); }
    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream() const noexcept { return stream_; }
    /// Fewer than 10^4 draws: quantiles are noisy.
    bool low_draw_count() const noexcept { return mu_.size() < 10000; }

    double mean() const;
    /// Type-7 (linear interpolation) sample quantile.
    double quantile(double p) const;
    /// Empirical CDF: fraction of draws <= x.
    double cdf(double x) const;

private:
    std::vector<double> mu_;
    std::vector<double> tau2_;
    std::vector<double> sorted_;
    std::uint64_t seed_;
    std::uint64_t stream_;
};

/// CD-Edgington by Monte Carlo: tau2 from its confidence distribution by
/// inverse transformation of a chi^2_{k-1} draw, then mu from the
/// conditional Edgington distribution by inverting it at a uniform draw.
/// Draws are generated in fixed-size blocks with one random stream each.
ConfidenceDistributionSamples cd_edgington_mc(const MetaAnalysis& ma, const McOptions& opts);

/// How the tau2 confidence distribution enters the quadrature.
enum class Tau2Mass {
    /// Point mass P(chi^2_{k-1} > Q(0)) at tau2 = 0 plus the continuous
    /// density; the same distribution the Monte Carlo sampler draws from.
    WithAtom,
    /// Continuous density only, renormalized to one. This is the mixture
    /// integral over the confidence density alone and ignores the mass the
    /// pivot places below Q(0); it widens intervals when Q(0) is small.
    DensityOnly,
};

struct GaqOptions {
    /// Absolute error target of the global adaptive quadrature in tau2.
    double tol = 1e-8;
    std::size_t grid_points = 2048;
    Tau2Mass mass = Tau2Mass::WithAtom;
    /// Confidence mass above the upper tau2 integration limit.
    double tau2_tail_mass = 1e-6;
    /// Marginal tail probability beyond each end of the mu grid.
    double mu_tail_mass = 1e-6;
    int max_subintervals = 400;
};

/// CD-Edgington by deterministic quadrature over tau2.
///
/// The adaptive step fixes a Gauss-Kronrod rule over [0, tau2_max] once,
/// refining where any monitored conditional CDF needs it. The marginal CDF
/// at every mu is then the same weighted sum of conditional CDFs, which
/// keeps it exactly monotone (all Kronrod weights are positive).
class MarginalCDGaq {
public:
    /// Marginal CDF evaluated from the quadrature rule.
    double cdf_at(double mu) const;
    /// Inverts cdf_at by root finding.
    double quantile(double p) const;
    /// Expected value from midpoints of the grid weighted by CDF increments.
    double mean() const;
    /// Marginal confidence density from the conditional densities.
    double density_at(double mu) const;

    const std::vector<double>& grid() const noexcept { return grid_; }
    const std::vector<double>& cdf() const noexcept { return cdf_; }
    std::pair<double, double> tau2_grid_bounds() const noexcept { return tau2_bounds_; }
    const std::vector<double>& tau2_nodes() const noexcept { return nodes_; }
    const std::vector<double>& tau2_weights() const noexcept { return weights_; }
    /// Quadrature error estimate reached by the adaptive step.
    double error_estimate() const noexcept { return error_; }
    Tau2Mass mass() const noexcept { return mass_; }

private:
    friend MarginalCDGaq cd_edgington_gaq(const MetaAnalysis&, const GaqOptions&);
    MarginalCDGaq() = default;

    std::vector<double> estimates_;
    std::vector<double> variances_;
    std::vector<double> nodes_;
    std::vector<double> weights_;
    std::vector<double> grid_;
    std::vector<double> cdf_;
    std::pair<double, double> tau2_bounds_{0.0, 0.0};
    double error_ = 0.0;
    double search_lo_ = 0.0;
    double search_hi_ = 0.0;
    Tau2Mass mass_ = Tau2Mass::WithAtom;
};

/// Throws InputError when k < 3 and NumericError when the adaptive
/// quadrature misses `tol`.
MarginalCDGaq cd_edgington_gaq(const MetaAnalysis& ma, const GaqOptions& opts = {});

double point_estimate(const ConfidenceDistributionSamples& s);
double point_estimate(const MarginalCDGaq& g);

ConfidenceInterval equi_tailed_ci(const ConfidenceDistributionSamples& s, double level);
ConfidenceInterval equi_tailed_ci(const MarginalCDGaq& g, double level);

/// Marginal CDF at mu0, i.e. the one-sided p-value for the "greater" alternative.
double marginal_cdf(const ConfidenceDistributionSamples& s, double mu0);
double marginal_cdf(const MarginalCDGaq& g, double mu0);

/// Two-sided p-value 2 min(C(mu0), 1 - C(mu0)).
double marginal_p_value(const ConfidenceDistributionSamples& s, double mu0);
double marginal_p_value(const MarginalCDGaq& g, double mu0);

EstimationResult cd_edgington_result(const ConfidenceDistributionSamples& s, double level);
EstimationResult cd_edgington_result(const MarginalCDGaq& g, double level);

}  // namespace cdmeta
