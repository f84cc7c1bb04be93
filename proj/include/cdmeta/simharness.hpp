#pragma once

#include "cdmeta/marginal.hpp"
#include "cdmeta/model.hpp"
#include "cdmeta/rng.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace cdmeta::sim {

enum class EffectDistribution { Normal, SkewNormal };

/// Shape parameter of the skew-normal effect distribution.
inline constexpr double kSkewNormalAlpha = -4.0;

struct SimScenario {
    int k = 10;
    double i2 = 0.0;
    /// The first k_large studies use n_large participants.
    int k_large = 0;
    EffectDistribution effect_dist = EffectDistribution::Normal;
    double mu_true = -0.3;
    int n_small = 50;
    int n_large = 500;
    int n_sim = 1000;
    std::uint64_t seed = 1;

    /// Throws InputError on k < 2, k_large > k, i2 outside [0, 1), n < 2 or n_sim < 1.
    void validate() const;
    std::vector<int> study_sizes() const;
};

/// Squared standard error chi^2_{2(n-1)} / ((n - 1) n); mean 2/n.
double draw_se2(int n, RandomEngine& eng);

/// tau2 = mean(2 / n_i) * I^2 / (1 - I^2) over the scenario's study sizes.
double tau2_from_i2(const SimScenario& s);

/// True study effects with mean mu_true and variance tau2. The skew-normal
/// location and scale are moment-matched for alpha = kSkewNormalAlpha.
std::vector<double> draw_true_effects(const SimScenario& s, double tau2, RandomEngine& eng);

/// Estimates theta_i + N(0, 2/n_i); the reported standard error is the
/// square root of an independent draw_se2 for the same study size.
MetaAnalysis draw_estimates(const std::vector<double>& theta, const SimScenario& s,
                            RandomEngine& eng);

/// Two-category Cohen's kappa of sign agreement. Signs are -1 or +1.
/// Empty when the expected agreement is 1 (both vectors constant and equal).
std::optional<double> cohen_kappa(const std::vector<int>& a, const std::vector<int>& b);

/// Pearson correlation; empty if either input has zero variance.
std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b);

struct SimOptions {
    std::size_t mc_draws = 10000;
    /// Also run the quadrature version of CD-Edgington.
    bool include_gaq = false;
    GaqOptions gaq{};
    double level = 0.95;
    unsigned workers = 1;
    /// Keep per-iteration records in the result.
    bool keep_iterations = false;
};

struct Measure {
    double value = 0.0;
    double mcse = 0.0;
};

struct MethodPerformance {
    Method method = Method::IVW;
    std::size_t n_ok = 0;
    std::size_t failures = 0;
    Measure coverage;
    Measure width;
    Measure bias;
    Measure mse;
    /// Interval skewness against the weighted skewness of the estimates and
    /// the skewness of the true effects. Empty when undefined, which is
    /// always the case for the symmetric classical intervals.
    std::optional<double> skew_r_estimates;
    std::optional<double> skew_r_true;
    std::optional<double> kappa_estimates;
    std::optional<double> kappa_true;
};

struct MethodOutcome {
    bool ok = false;
    double estimate = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    double skewness = 0.0;
};

struct IterationRecord {
    double tau2_hat = 0.0;
    bool reml_failed = false;
    /// Empty when the estimates or true effects have zero spread.
    std::optional<double> gamma_estimates;
    std::optional<double> gamma_true;
    std::vector<MethodOutcome> outcomes;
};

struct SimResult {
    SimScenario scenario;
    std::vector<Method> methods;
    std::vector<MethodPerformance> performance;
    std::size_t reml_failures = 0;
    std::vector<IterationRecord> iterations;
};

/// One iteration of a scenario; `iteration` selects the random stream.
IterationRecord run_iteration(const SimScenario& s, const SimOptions& opts, std::uint64_t iteration);

/// Runs n_sim iterations of IVW, HKSJ, Edgington with the REML plug-in and
/// CD-Edgington by Monte Carlo (plus quadrature when requested), then
/// aggregates. Each iteration has its own stream, so the result does not
/// depend on the worker count.
SimResult run_scenario(const SimScenario& s, const SimOptions& opts);

/// Factorial simulation grid read from a key=value file.
struct SimConfig {
    std::vector<int> k{3, 5, 10, 20, 50};
    std::vector<double> i2{0.0, 0.3, 0.6, 0.9};
    std::vector<int> k_large{0, 1, 2};
    std::vector<EffectDistribution> effect_dist{EffectDistribution::Normal,
                                                EffectDistribution::SkewNormal};
    double mu_true = -0.3;
    int n_small = 50;
    int n_large = 500;
    int n_sim = 4000;
    std::uint64_t seed = 1;
    SimOptions options{};

    /// Cells of the grid; cell seeds are derived from the base seed and the
    /// cell's own parameters, not from its position.
    std::vector<SimScenario> scenarios() const;
};

/// Parses `key = value` lines; `#` starts a comment and lists are comma
/// separated. Unknown keys and malformed values raise InputError naming the line.
SimConfig parse_config(const std::string& text);

/// One row per scenario, method and measure: scenario columns, method,
/// measure, value, mcse.
void write_csv(std::ostream& out, const std::vector<SimResult>& results);

}  // namespace cdmeta::sim
