#pragma once

// Thin wrappers over Boost.Math for the reference distributions used
// throughout the library. Normal tails go through std::erfc directly since
// they sit on every hot path.

namespace cdmeta::dist {

double normal_cdf(double x) noexcept;
/// 1 - normal_cdf(x), accurate in the upper tail.
double normal_sf(double x) noexcept;
double normal_pdf(double x) noexcept;
double normal_quantile(double p);

double chi2_cdf(double x, double df);
double chi2_sf(double x, double df);
double chi2_pdf(double x, double df);
double chi2_quantile(double p, double df);

double t_cdf(double x, double df);
double t_sf(double x, double df);
double t_pdf(double x, double df);
double t_quantile(double p, double df);

}  // namespace cdmeta::dist
