#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cdmeta {

/// Bad user input: non-finite values, non-positive standard errors, malformed files.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical routine failed (bracket expansion, quadrature, estimator iteration).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One study: effect estimate and its standard error on an opaque effect scale.
class Study {
public:
    Study(double estimate, double se, std::string label = {});

    double estimate() const noexcept { return estimate_; }
    double se() const noexcept { return se_; }
    double variance() const noexcept { return se_ * se_; }
    const std::string& label() const noexcept { return label_; }

    friend bool operator==(const Study&, const Study&) = default;

private:
    double estimate_;
    double se_;
    std::string label_;
};

/// An ordered collection of k >= 2 studies. Within-study variances are
/// treated as known constants.
class MetaAnalysis {
public:
    explicit MetaAnalysis(std::vector<Study> studies);

    std::size_t size() const noexcept { return studies_.size(); }
    std::span<const Study> studies() const noexcept { return studies_; }
    const Study& operator[](std::size_t i) const { return studies_[i]; }

    std::span<const double> estimates() const noexcept { return estimates_; }
    std::span<const double> variances() const noexcept { return variances_; }

    double min_estimate() const noexcept;
    double max_estimate() const noexcept;
    double max_variance() const noexcept;
    /// True when every estimate equals the first one exactly.
    bool homogeneous_estimates() const noexcept;

    /// Copy with every estimate shifted by `offset`.
    MetaAnalysis shifted(double offset) const;

    friend bool operator==(const MetaAnalysis& a, const MetaAnalysis& b) {
        return a.studies_ == b.studies_;
    }

private:
    std::vector<Study> studies_;
    std::vector<double> estimates_;
    std::vector<double> variances_;
};

struct ConfidenceInterval {
    double lower = 0.0;
    double upper = 0.0;
    double level = 0.95;

    double width() const noexcept { return upper - lower; }
    bool contains(double x) const noexcept { return lower <= x && x <= upper; }
};

enum class Method { IVW, HKSJ, Edgington, CDEdgingtonMC, CDEdgingtonGAQ };

std::string_view method_name(Method m) noexcept;
std::optional<Method> parse_method(std::string_view name) noexcept;

/// Point estimate, equi-tailed interval and summaries for one method.
/// `tau2_used` is empty when heterogeneity was marginalized rather than plugged in.
struct EstimationResult {
    Method method = Method::IVW;
    double estimate = 0.0;
    ConfidenceInterval ci;
    double skewness = 0.0;
    double p_value_at_zero = 1.0;
    std::optional<double> tau2_used;
};

/// Groeneveld interval skewness (upper + lower - 2 center) / (upper - lower).
/// Throws NumericError for a zero-width interval.
double ci_skewness(const ConfidenceInterval& ci, double center);

/// Fisher's weighted skewness of the estimates around the fixed-effect
/// inverse-variance mean, with weights 1/se^2.
/// Throws NumericError when the weighted second moment vanishes.
double fisher_weighted_skewness(const MetaAnalysis& ma);

/// Same coefficient with unit weights.
double fisher_skewness(std::span<const double> values);

/// Shared kernel: weighted skewness for arbitrary positive weights.
double weighted_skewness(std::span<const double> values, std::span<const double> weights);

}  // namespace cdmeta
