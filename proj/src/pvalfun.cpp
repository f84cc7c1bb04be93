#include "cdmeta/pvalfun.hpp"

#include "cdmeta/distributions.hpp"
#include "cdmeta/roots.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace cdmeta {

namespace {

// Neumaier-compensated running sum; the Irwin-Hall alternating series loses
// several digits to cancellation otherwise.
class CompensatedSum {
public:
    void add(double x) noexcept {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

constexpr std::array<double, kIrwinHallExactLimit + 1> kFactorial = [] {
    std::array<double, kIrwinHallExactLimit + 1> f{};
    f[0] = 1.0;
    for (std::size_t i = 1; i < f.size(); ++i) f[i] = f[i - 1] * static_cast<double>(i);
    return f;
}();

double binomial(int n, int j) {
    return kFactorial[n] / (kFactorial[j] * kFactorial[n - j]);
}

// sum_{j <= floor(s)} (-1)^j C(k, j) (s - j)^power / denom, for 0 < s <= k / 2.
double irwin_hall_series(double s, int k, int power, double denom) {
    CompensatedSum acc;
    const int jmax = static_cast<int>(std::floor(s));
    for (int j = 0; j <= jmax; ++j) {
        const double term = binomial(k, j) * std::pow(s - j, power);
        acc.add((j % 2 == 0) ? term : -term);
    }
    return acc.value() / denom;
}

constexpr double kCdfTolerance = 1e-10;
constexpr int kMaxDoublings = 60;

}  // namespace

double wald_p(double mu, double estimate, double se, PValueSide side) {
    if (!(se > 0.0)) throw InputError("standard error must be positive");
    const double z = (estimate - mu) / se;
    switch (side) {
        case PValueSide::GreaterAlternative:
            return dist::normal_sf(z);
        case PValueSide::LessAlternative:
            return dist::normal_cdf(z);
        case PValueSide::TwoSided:
            return std::min(1.0, 2.0 * std::min(dist::normal_sf(z), dist::normal_cdf(z)));
    }
    return 0.0;
}

double study_p_greater(double mu, const Study& study, double tau2) {
    return dist::normal_sf((study.estimate() - mu) / std::sqrt(tau2 + study.variance()));
}

double irwin_hall_cdf(double s, int k) {
    if (k < 1) throw InputError("Irwin-Hall order must be positive");
    if (std::isnan(s)) return s;
    if (s <= 0.0) return 0.0;
    if (s >= k) return 1.0;
    if (k >= kIrwinHallExactLimit) {
        return dist::normal_cdf(std::sqrt(12.0 * k) * (s / k - 0.5));
    }
    // Evaluate on the short side of the symmetric distribution.
    const double half = 0.5 * k;
    const double value = s <= half ? irwin_hall_series(s, k, k, kFactorial[k])
                                   : 1.0 - irwin_hall_series(k - s, k, k, kFactorial[k]);
    return std::clamp(value, 0.0, 1.0);
}

double irwin_hall_pdf(double s, int k) {
    if (k < 1) throw InputError("Irwin-Hall order must be positive");
    if (s < 0.0 || s > k) return 0.0;
    if (k >= kIrwinHallExactLimit) {
        const double scale = std::sqrt(12.0 * k);
        return dist::normal_pdf(scale * (s / k - 0.5)) * scale / k;
    }
    if (k == 1) return 1.0;
    const double x = s <= 0.5 * k ? s : k - s;
    return std::max(0.0, irwin_hall_series(x, k, k - 1, kFactorial[k - 1]));
}

EdgingtonCd::EdgingtonCd(std::span<const double> estimates, std::span<const double> variances,
                         double tau2)
    : estimates_(estimates.begin(), estimates.end()), tau2_(tau2) {
    if (estimates_.empty()) throw InputError("Edgington combination needs at least one study");
    if (!(tau2 >= 0.0) || !std::isfinite(tau2)) {
        throw InputError("heterogeneity variance must be a finite non-negative number");
    }
    scales_.reserve(variances.size());
    for (double v : variances) scales_.push_back(std::sqrt(tau2 + v));
    const double max_scale = *std::max_element(scales_.begin(), scales_.end());
    lo_ = *std::min_element(estimates_.begin(), estimates_.end()) - 10.0 * max_scale;
    hi_ = *std::max_element(estimates_.begin(), estimates_.end()) + 10.0 * max_scale;
}

EdgingtonCd::EdgingtonCd(const MetaAnalysis& ma, double tau2)
    : EdgingtonCd(ma.estimates(), ma.variances(), tau2) {}

double EdgingtonCd::p_sum(double mu) const {
    double s = 0.0;
    for (std::size_t i = 0; i < estimates_.size(); ++i) {
        s += dist::normal_sf((estimates_[i] - mu) / scales_[i]);
    }
    return s;
}

double EdgingtonCd::cdf(double mu) const {
    return irwin_hall_cdf(p_sum(mu), k());
}

double EdgingtonCd::density(double mu) const {
    double s = 0.0;
    double ds = 0.0;
    for (std::size_t i = 0; i < estimates_.size(); ++i) {
        const double z = (estimates_[i] - mu) / scales_[i];
        s += dist::normal_sf(z);
        ds += dist::normal_pdf(z) / scales_[i];
    }
    return irwin_hall_pdf(s, k()) * ds;
}

double EdgingtonCd::quantile(double target) const {
    if (!(target > 0.0 && target < 1.0)) {
        throw InputError("confidence level target must lie strictly between 0 and 1");
    }
    auto f = [&](double mu) { return cdf(mu) - target; };
    double lo = lo_;
    double hi = hi_;
    const auto [flo, fhi] = roots::expand_increasing(f, lo, hi, kMaxDoublings);
    roots::Tolerance tol;
    tol.f_tol = kCdfTolerance;
    tol.x_abs = 1e-12 * (hi_ - lo_);
    return roots::brent(f, lo, hi, flo, fhi, tol);
}

double edgington_p(double mu, const MetaAnalysis& ma, double tau2) {
    return EdgingtonCd(ma, tau2).cdf(mu);
}

double invert_conditional_cd(double target, const MetaAnalysis& ma, double tau2) {
    return EdgingtonCd(ma, tau2).quantile(target);
}

double confidence_curve(double cdf_value) {
    return std::abs(1.0 - 2.0 * cdf_value);
}

double two_sided_from_cdf(double cdf_value) {
    return std::clamp(2.0 * std::min(cdf_value, 1.0 - cdf_value), 0.0, 1.0);
}

EstimationResult edgington_result(const MetaAnalysis& ma, double tau2, double level) {
    if (!(level > 0.0 && level < 1.0)) throw InputError("confidence level must lie in (0, 1)");
    const EdgingtonCd cd(ma, tau2);
    const double alpha = 1.0 - level;
    EstimationResult r;
    r.method = Method::Edgington;
    r.estimate = cd.quantile(0.5);
    r.ci = {cd.quantile(0.5 * alpha), cd.quantile(1.0 - 0.5 * alpha), level};
    r.skewness = ci_skewness(r.ci, r.estimate);
    r.p_value_at_zero = two_sided_from_cdf(cd.cdf(0.0));
    r.tau2_used = tau2;
    return r;
}

}  // namespace cdmeta
