#pragma once

#include "cdmeta/marginal.hpp"
#include "cdmeta/model.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cdmeta::io {

inline constexpr int kSchemaVersion = 1;

/// Reads `study,estimate,se` CSV text (header case-insensitive, quoted
/// fields allowed). Errors name the line and the column.
MetaAnalysis parse_studies(std::string_view csv_text);

/// Writes the CSV form read by parse_studies; numbers use the shortest
/// representation that reads back to the same double.
std::string serialize_studies(const MetaAnalysis& ma);

struct AnalysisOptions {
    double level = 0.95;
    /// Monte Carlo draws for CD-Edgington.
    std::size_t samples = kDefaultMcDraws;
    std::uint64_t seed = 1;
    std::vector<Method> methods{Method::IVW, Method::HKSJ, Method::Edgington,
                                Method::CDEdgingtonMC, Method::CDEdgingtonGAQ};
    /// Number of mu grid points for curve export; 0 disables curves.
    std::size_t curve_points = 0;
    /// Report the confidence probability P(mu < x) for each method.
    std::optional<double> prob_below;
    unsigned workers = 1;
    GaqOptions gaq{};
};

struct Tau2Block {
    std::optional<double> reml;
    std::string reml_error;
    double paule_mandel = 0.0;
    ConfidenceInterval q_profile;
    double i2 = 0.0;
    double q0 = 0.0;
    double heterogeneity_p = 1.0;
    /// Confidence mass of tau2 = 0.
    double atom = 0.0;
};

struct Curve {
    std::vector<double> mu;
    std::vector<double> cdf;
    /// Empty when the method has no density (Monte Carlo).
    std::vector<double> density;
    std::vector<double> confidence_curve;
    std::vector<double> p_two_sided;
};

struct MethodReport {
    Method method = Method::IVW;
    bool ok = false;
    std::string error;
    EstimationResult result;
    std::optional<double> prob_below;
    std::optional<Curve> curve;
};

struct AnalysisReport {
    std::vector<Study> studies;
    AnalysisOptions options;
    Tau2Block tau2;
    std::vector<MethodReport> methods;
    std::vector<std::string> warnings;

    bool any_failed() const;
};

/// Heterogeneity summaries plus every requested method. A numeric failure
/// in one method is recorded in its report and does not stop the others.
AnalysisReport analyze(const MetaAnalysis& ma, const AnalysisOptions& options);

/// JSON with `schema_version`, the seed and the number of draws.
std::string to_json(const AnalysisReport& report);
/// One row per method at 6 significant digits, followed by the curve
/// table when curves were requested.
std::string to_csv(const AnalysisReport& report);

struct Tau2Options {
    std::size_t grid_points = 200;
    /// Upper end of the density grid and of the windowed summaries.
    /// Defaults to the 0.99 confidence quantile.
    std::optional<double> tau2_max;
    double level = 0.95;
};

struct Tau2Report {
    Tau2Block block;
    /// Median and equi-tailed interval of the full confidence distribution.
    double median = 0.0;
    ConfidenceInterval ci;
    /// The same summaries for the continuous part restricted to (0, tau2_max].
    double window_upper = 0.0;
    std::optional<double> window_median;
    std::optional<ConfidenceInterval> window_ci;
    std::vector<double> grid;
    std::vector<double> density;
    std::vector<double> cdf;
    std::vector<std::string> warnings;
};

Tau2Report tau2_report(const MetaAnalysis& ma, const Tau2Options& options);
std::string to_json(const Tau2Report& report);
std::string to_csv(const Tau2Report& report);

}  // namespace cdmeta::io
