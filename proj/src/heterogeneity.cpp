#include "cdmeta/heterogeneity.hpp"

#include "cdmeta/distributions.hpp"
#include "cdmeta/roots.hpp"

#include <cmath>
#include <random>
#include <string>

namespace cdmeta {

namespace {

constexpr int kMaxBracketDoublings = 200;
constexpr int kRemlMaxIter = 100;
constexpr double kRemlTolerance = 1e-10;

struct WeightedMoments {
    double sum_w = 0.0;
    double mean = 0.0;
};

WeightedMoments weighted_mean(double tau2, const MetaAnalysis& ma) {
    const auto y = ma.estimates();
    const auto v = ma.variances();
    WeightedMoments m;
    // Centred at the first estimate so identical estimates give an exact mean.
    double swd = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double w = 1.0 / (v[i] + tau2);
        m.sum_w += w;
        swd += w * (y[i] - y[0]);
    }
    m.mean = y[0] + swd / m.sum_w;
    return m;
}

// REML score (twice the derivative of the restricted log-likelihood) and
// the expected information tr(P P) for P = W - W 1 1' W / sum(w).
struct RemlScore {
    double score;
    double information;
};

RemlScore reml_score(double tau2, const MetaAnalysis& ma) {
    const auto y = ma.estimates();
    const auto v = ma.variances();
    const auto m = weighted_mean(tau2, ma);
    double sw2 = 0.0, sw3 = 0.0, sw2r2 = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double w = 1.0 / (v[i] + tau2);
        const double r = y[i] - m.mean;
        sw2 += w * w;
        sw3 += w * w * w;
        sw2r2 += w * w * r * r;
    }
    const double sw = m.sum_w;
    const double tr_p = sw - sw2 / sw;
    const double tr_pp = sw2 - 2.0 * sw3 / sw + (sw2 / sw) * (sw2 / sw);
    return {sw2r2 - tr_p, tr_pp};
}

void check_tau2(double tau2) {
    if (!(tau2 >= 0.0) || !std::isfinite(tau2)) {
        throw InputError("heterogeneity variance must be a finite non-negative number");
    }
}

}  // namespace

double ivw_mean(double tau2, const MetaAnalysis& ma) {
    check_tau2(tau2);
    return weighted_mean(tau2, ma).mean;
}

double generalized_q(double tau2, const MetaAnalysis& ma) {
    check_tau2(tau2);
    const double mu = weighted_mean(tau2, ma).mean;
    const auto y = ma.estimates();
    const auto v = ma.variances();
    double q = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = y[i] - mu;
        q += r * r / (v[i] + tau2);
    }
    return q;
}

double dq_dtau2(double tau2, const MetaAnalysis& ma) {
    check_tau2(tau2);
    const auto y = ma.estimates();
    const auto v = ma.variances();
    // A = sum w (y - y_1), B = sum w, mu = y_1 + A / B, with w' = -w^2.
    double a = 0.0, b = 0.0, da = 0.0, db = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double w = 1.0 / (v[i] + tau2);
        const double dw = -w * w;
        a += w * (y[i] - y[0]);
        b += w;
        da += dw * (y[i] - y[0]);
        db += dw;
    }
    const double mu = y[0] + a / b;
    const double dmu = (b * da - a * db) / (b * b);
    double dq = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double w = 1.0 / (v[i] + tau2);
        const double r = y[i] - mu;
        dq += -w * w * r * r - 2.0 * w * r * dmu;
    }
    return dq;
}

double tau2_for_q(double target, const MetaAnalysis& ma) {
    const double q0 = generalized_q(0.0, ma);
    if (q0 <= target) return 0.0;
    if (!(target > 0.0)) {
        throw NumericError("Q(tau2) only reaches 0 as tau2 grows without bound");
    }
    auto f = [&](double t) { return generalized_q(t, ma) - target; };
    double hi = 4.0 * ma.max_variance();
    double fhi = f(hi);
    for (int i = 0; fhi > 0.0; ++i) {
        if (i == kMaxBracketDoublings) {
            throw NumericError("no upper bracket for Q(tau2) = " + std::to_string(target));
        }
        hi *= 2.0;
        fhi = f(hi);
    }
    roots::Tolerance tol;
    tol.x_abs = 0.0;
    tol.x_rel = 1e-12;
    return roots::brent(f, 0.0, hi, q0 - target, fhi, tol);
}

double i_squared(const MetaAnalysis& ma) {
    const double q0 = generalized_q(0.0, ma);
    const double df = static_cast<double>(ma.size() - 1);
    if (!(q0 > 0.0)) return 0.0;
    return std::max(0.0, (q0 - df) / q0);
}

double heterogeneity_p_value(const MetaAnalysis& ma) {
    return dist::chi2_sf(generalized_q(0.0, ma), static_cast<double>(ma.size() - 1));
}

double dersimonian_laird(const MetaAnalysis& ma) {
    double sw = 0.0, sw2 = 0.0;
    for (double v : ma.variances()) {
        sw += 1.0 / v;
        sw2 += 1.0 / (v * v);
    }
    const double q0 = generalized_q(0.0, ma);
    const double df = static_cast<double>(ma.size() - 1);
    return std::max(0.0, (q0 - df) / (sw - sw2 / sw));
}

double paule_mandel(const MetaAnalysis& ma) {
    return tau2_for_q(static_cast<double>(ma.size() - 1), ma);
}

double reml_tau2(const MetaAnalysis& ma) {
    if (ma.homogeneous_estimates()) return 0.0;
    double tau2 = dersimonian_laird(ma);
    RemlScore cur = reml_score(tau2, ma);
    for (int iter = 0; iter < kRemlMaxIter; ++iter) {
        const double next = std::max(0.0, tau2 + cur.score / cur.information);
        if (std::abs(next - tau2) <= kRemlTolerance * (1.0 + tau2)) return next;
        const RemlScore nxt = reml_score(next, ma);
        if ((cur.score > 0.0) != (nxt.score > 0.0)) {
            // Scoring can overshoot and oscillate slowly around the root;
            // once two iterates bracket it, finish on the score itself.
            auto f = [&](double t) { return -reml_score(t, ma).score; };
            const double lo = std::min(tau2, next);
            const double hi = std::max(tau2, next);
            roots::Tolerance tol;
            tol.x_abs = kRemlTolerance;
            tol.x_rel = kRemlTolerance;
            return roots::brent(f, lo, hi, f(lo), f(hi), tol);
        }
        tau2 = next;
        cur = nxt;
        if (tau2 == 0.0 && cur.score <= 0.0) return 0.0;
    }
    throw NumericError("REML did not converge within " + std::to_string(kRemlMaxIter) +
                       " iterations");
}

ConfidenceInterval q_profile_ci(const MetaAnalysis& ma, double level) {
    if (!(level > 0.0 && level < 1.0)) throw InputError("confidence level must lie in (0, 1)");
    const double df = static_cast<double>(ma.size() - 1);
    const double alpha = 1.0 - level;
    ConfidenceInterval ci;
    ci.level = level;
    ci.lower = tau2_for_q(dist::chi2_quantile(1.0 - 0.5 * alpha, df), ma);
    ci.upper = tau2_for_q(dist::chi2_quantile(0.5 * alpha, df), ma);
    return ci;
}

Tau2ConfidenceDistribution::Tau2ConfidenceDistribution(MetaAnalysis ma)
    : ma_(std::move(ma)),
      df_(static_cast<int>(ma_.size()) - 1),
      q0_(generalized_q(0.0, ma_)),
      atom_(dist::chi2_sf(q0_, df_)) {}

double Tau2ConfidenceDistribution::density(double tau2) const {
    if (tau2 < 0.0) return 0.0;
    if (q0_ <= 0.0) return 0.0;
    return dist::chi2_pdf(q(tau2), df_) * std::abs(dq_dtau2(tau2, ma_));
}

double Tau2ConfidenceDistribution::cdf(double tau2) const {
    if (tau2 < 0.0) return 0.0;
    return dist::chi2_sf(q(tau2), df_);
}

double Tau2ConfidenceDistribution::quantile(double p) const {
    if (!(p >= 0.0 && p <= 1.0)) throw InputError("probability must lie in [0, 1]");
    if (p <= atom_) return 0.0;
    return from_pivot(dist::chi2_quantile(1.0 - p, df_));
}

double Tau2ConfidenceDistribution::window_quantile(double p, double upper) const {
    if (!(p > 0.0 && p < 1.0)) throw InputError("probability must lie in (0, 1)");
    if (!(upper > 0.0)) throw InputError("window upper bound must be positive");
    const double mass = cdf(upper) - atom_;
    if (!(mass > 0.0)) {
        throw NumericError("no continuous confidence mass inside the tau2 window");
    }
    auto f = [&](double t) { return (cdf(t) - atom_) / mass - p; };
    roots::Tolerance tol;
    tol.x_abs = 1e-14 * upper;
    tol.x_rel = 1e-12;
    return roots::brent(f, 0.0, upper, -p, 1.0 - p, tol);
}

double Tau2ConfidenceDistribution::from_pivot(double w) const {
    return tau2_for_q(w, ma_);
}

double Tau2ConfidenceDistribution::sample(RandomEngine& eng) const {
    std::chi_squared_distribution<double> chi2(static_cast<double>(df_));
    return from_pivot(chi2(eng));
}

double tau2_confidence_density(double tau2, const MetaAnalysis& ma) {
    return Tau2ConfidenceDistribution(ma).density(tau2);
}

double sample_tau2(const MetaAnalysis& ma, RandomEngine& eng) {
    return Tau2ConfidenceDistribution(ma).sample(eng);
}

}  // namespace cdmeta
