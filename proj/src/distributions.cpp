#include "cdmeta/distributions.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <limits>
#include <numbers>

namespace cdmeta::dist {

namespace bm = boost::math;

double normal_cdf(double x) noexcept {
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double normal_sf(double x) noexcept {
    return 0.5 * std::erfc(x / std::numbers::sqrt2);
}

double normal_pdf(double x) noexcept {
    return std::exp(-0.5 * x * x) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
}

double normal_quantile(double p) {
    return bm::quantile(bm::normal_distribution<double>(), p);
}

double chi2_cdf(double x, double df) {
    if (x <= 0.0) return 0.0;
    return bm::cdf(bm::chi_squared_distribution<double>(df), x);
}

double chi2_sf(double x, double df) {
    if (x <= 0.0) return 1.0;
    return bm::cdf(bm::complement(bm::chi_squared_distribution<double>(df), x));
}

double chi2_pdf(double x, double df) {
    if (x < 0.0) return 0.0;
    if (x == 0.0) {
        if (df < 2.0) return std::numeric_limits<double>::infinity();
        return df == 2.0 ? 0.5 : 0.0;
    }
    return bm::pdf(bm::chi_squared_distribution<double>(df), x);
}

double chi2_quantile(double p, double df) {
    if (p <= 0.0) return 0.0;
    return bm::quantile(bm::chi_squared_distribution<double>(df), p);
}

double t_cdf(double x, double df) {
    return bm::cdf(bm::students_t_distribution<double>(df), x);
}

double t_pdf(double x, double df) {
    return bm::pdf(bm::students_t_distribution<double>(df), x);
}

double t_sf(double x, double df) {
    return bm::cdf(bm::complement(bm::students_t_distribution<double>(df), x));
}

double t_quantile(double p, double df) {
    return bm::quantile(bm::students_t_distribution<double>(df), p);
}

}  // namespace cdmeta::dist
