#include "cdmeta/classical.hpp"

#include "cdmeta/distributions.hpp"
#include "cdmeta/heterogeneity.hpp"

#include <algorithm>
#include <cmath>

namespace cdmeta {

namespace {

void check_level(double level) {
    if (!(level > 0.0 && level < 1.0)) throw InputError("confidence level must lie in (0, 1)");
}

double sum_weights(const MetaAnalysis& ma, double tau2) {
    double sw = 0.0;
    for (double v : ma.variances()) sw += 1.0 / (v + tau2);
    return sw;
}

}  // namespace

EstimationResult ivw_result(const MetaAnalysis& ma, double tau2, double level) {
    check_level(level);
    const double mu = ivw_mean(tau2, ma);
    const double se = 1.0 / std::sqrt(sum_weights(ma, tau2));
    const double z = dist::normal_quantile(1.0 - 0.5 * (1.0 - level));
    EstimationResult r;
    r.method = Method::IVW;
    r.estimate = mu;
    r.ci = {mu - z * se, mu + z * se, level};
    r.skewness = 0.0;
    r.p_value_at_zero = std::min(1.0, 2.0 * dist::normal_sf(std::abs(mu) / se));
    r.tau2_used = tau2;
    return r;
}

EstimationResult hksj_result(const MetaAnalysis& ma, double tau2, double level) {
    check_level(level);
    const double mu = ivw_mean(tau2, ma);
    const auto y = ma.estimates();
    const auto v = ma.variances();
    double sw = 0.0;
    double swr2 = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double w = 1.0 / (v[i] + tau2);
        sw += w;
        swr2 += w * (y[i] - mu) * (y[i] - mu);
    }
    const double df = static_cast<double>(ma.size() - 1);
    const double se = std::sqrt(swr2 / (df * sw));
    const double t = dist::t_quantile(1.0 - 0.5 * (1.0 - level), df);
    EstimationResult r;
    r.method = Method::HKSJ;
    r.estimate = mu;
    r.ci = {mu - t * se, mu + t * se, level};
    r.skewness = 0.0;
    if (se > 0.0) {
        r.p_value_at_zero = std::min(1.0, 2.0 * dist::t_sf(std::abs(mu) / se, df));
    } else {
        r.p_value_at_zero = mu == 0.0 ? 1.0 : 0.0;
    }
    r.tau2_used = tau2;
    return r;
}

}  // namespace cdmeta
