#include "cdmeta/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

namespace cdmeta {

Study::Study(double estimate, double se, std::string label)
    : estimate_(estimate), se_(se), label_(std::move(label)) {
    if (!std::isfinite(estimate)) {
        throw InputError("study estimate must be finite");
    }
    if (!std::isfinite(se) || se <= 0.0) {
        throw InputError("study standard error must be positive and finite");
    }
}

MetaAnalysis::MetaAnalysis(std::vector<Study> studies) : studies_(std::move(studies)) {
    if (studies_.size() < 2) {
        throw InputError("a meta-analysis needs at least 2 studies");
    }
    estimates_.reserve(studies_.size());
    variances_.reserve(studies_.size());
    for (const auto& s : studies_) {
        estimates_.push_back(s.estimate());
        variances_.push_back(s.variance());
    }
}

double MetaAnalysis::min_estimate() const noexcept {
    return *std::min_element(estimates_.begin(), estimates_.end());
}

double MetaAnalysis::max_estimate() const noexcept {
    return *std::max_element(estimates_.begin(), estimates_.end());
}

double MetaAnalysis::max_variance() const noexcept {
    return *std::max_element(variances_.begin(), variances_.end());
}

bool MetaAnalysis::homogeneous_estimates() const noexcept {
    return std::all_of(estimates_.begin(), estimates_.end(),
                       [&](double y) { return y == estimates_.front(); });
}

MetaAnalysis MetaAnalysis::shifted(double offset) const {
    std::vector<Study> out;
    out.reserve(studies_.size());
    for (const auto& s : studies_) {
        out.emplace_back(s.estimate() + offset, s.se(), s.label());
    }
    return MetaAnalysis(std::move(out));
}

namespace {
constexpr std::array<std::pair<Method, std::string_view>, 5> kMethodNames{{
    {Method::IVW, "ivw"},
    {Method::HKSJ, "hksj"},
    {Method::Edgington, "edgington"},
    {Method::CDEdgingtonMC, "cd-edgington-mc"},
    {Method::CDEdgingtonGAQ, "cd-edgington-gaq"},
}};
}  // namespace

std::string_view method_name(Method m) noexcept {
    for (const auto& [method, name] : kMethodNames) {
        if (method == m) return name;
    }
    return "unknown";
}

std::optional<Method> parse_method(std::string_view name) noexcept {
    for (const auto& [method, n] : kMethodNames) {
        if (n == name) return method;
    }
    return std::nullopt;
}

double ci_skewness(const ConfidenceInterval& ci, double center) {
    const double width = ci.upper - ci.lower;
    if (!(width > 0.0)) {
        throw NumericError("interval skewness undefined for a zero-width interval");
    }
    return (ci.upper + ci.lower - 2.0 * center) / width;
}

double weighted_skewness(std::span<const double> values, std::span<const double> weights) {
    double sw = 0.0;
    double swx = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        sw += weights[i];
        swx += weights[i] * values[i];
    }
    const double mean = swx / sw;
    double m2 = 0.0;
    double m3 = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double d = values[i] - mean;
        m2 += weights[i] * d * d;
        m3 += weights[i] * d * d * d;
    }
    if (!(m2 > 0.0)) {
        throw NumericError("skewness undefined: values have zero spread");
    }
    return m3 * std::sqrt(sw) / std::pow(m2, 1.5);
}

double fisher_weighted_skewness(const MetaAnalysis& ma) {
    std::vector<double> w;
    w.reserve(ma.size());
    for (double v : ma.variances()) w.push_back(1.0 / v);
    return weighted_skewness(ma.estimates(), w);
}

double fisher_skewness(std::span<const double> values) {
    const std::vector<double> ones(values.size(), 1.0);
    return weighted_skewness(values, ones);
}

}  // namespace cdmeta
