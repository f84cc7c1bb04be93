#include "cdmeta/marginal.hpp"

#include "cdmeta/distributions.hpp"
#include "cdmeta/heterogeneity.hpp"
#include "cdmeta/pvalfun.hpp"
#include "cdmeta/rng.hpp"
#include "cdmeta/roots.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <atomic>
#include <exception>
#include <cmath>
#include <numeric>
#include <mutex>
#include <queue>
#include <random>
#include <sstream>
#include <thread>

namespace cdmeta {

namespace {

constexpr std::size_t kBlockSize = 4096;

void check_level(double level) {
    if (!(level > 0.0 && level < 1.0)) throw InputError("confidence level must lie in (0, 1)");
}

}  // namespace

// ---------------------------------------------------------------------------
// Monte Carlo

ConfidenceDistributionSamples::ConfidenceDistributionSamples(std::vector<double> mu_draws,
                                                             std::vector<double> tau2_draws,
                                                             std::uint64_t seed,
                                                             std::uint64_t stream)
    : mu_(std::move(mu_draws)),
      tau2_(std::move(tau2_draws)),
      sorted_(mu_),
      seed_(seed),
      stream_(stream) {
    if (mu_.empty()) throw InputError("a Monte Carlo confidence distribution needs draws");
    std::sort(sorted_.begin(), sorted_.end());
}

double ConfidenceDistributionSamples::mean() const {
    return std::accumulate(mu_.begin(), mu_.end(), 0.0) / static_cast<double>(mu_.size());
}

double ConfidenceDistributionSamples::quantile(double p) const {
    if (!(p >= 0.0 && p <= 1.0)) throw InputError("probability must lie in [0, 1]");
    const double h = (static_cast<double>(sorted_.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted_.size() - 1);
    return sorted_[lo] + (h - static_cast<double>(lo)) * (sorted_[hi] - sorted_[lo]);
}

double ConfidenceDistributionSamples::cdf(double x) const {
    const auto it = std::upper_bound(sorted_.begin(), sorted_.end(), x);
    return static_cast<double>(it - sorted_.begin()) / static_cast<double>(sorted_.size());
}

ConfidenceDistributionSamples cd_edgington_mc(const MetaAnalysis& ma, const McOptions& opts) {
    if (ma.size() < 3) throw InputError("CD-Edgington needs at least 3 studies");
    if (opts.draws == 0) throw InputError("number of Monte Carlo draws must be positive");

    const Tau2ConfidenceDistribution tau2_cd(ma);
    const std::chi_squared_distribution<double> pivot_dist(static_cast<double>(tau2_cd.df()));
    std::vector<double> mu(opts.draws);
    std::vector<double> tau2(opts.draws);
    const std::size_t n_blocks = (opts.draws + kBlockSize - 1) / kBlockSize;

    auto run_block = [&](std::size_t block) {
        RandomEngine eng = make_stream(opts.seed, combine_stream_ids(opts.stream, block));
        auto chi2 = pivot_dist;
        const std::size_t end = std::min(opts.draws, (block + 1) * kBlockSize);
        for (std::size_t b = block * kBlockSize; b < end; ++b) {
            const double w = chi2(eng);
            const double u = uniform_open(eng);
            tau2[b] = tau2_cd.from_pivot(w);
            mu[b] = EdgingtonCd(ma, tau2[b]).quantile(u);
        }
    };

    const unsigned workers = std::max(1u, std::min<unsigned>(opts.workers, n_blocks));
    if (workers == 1) {
        for (std::size_t j = 0; j < n_blocks; ++j) run_block(j);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < workers; ++t) {
            pool.emplace_back([&] {
                for (std::size_t j = next++; j < n_blocks; j = next++) {
                    try {
                        run_block(j);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
        }
        pool.clear();
        if (failure) std::rethrow_exception(failure);
    }
    return ConfidenceDistributionSamples(std::move(mu), std::move(tau2), opts.seed, opts.stream);
}

// ---------------------------------------------------------------------------
// Global adaptive quadrature

namespace {

using Kronrod = boost::math::quadrature::gauss_kronrod<double, 21>;
using Gauss = boost::math::quadrature::gauss<double, 10>;

// One subinterval of the tau2 range with its Kronrod estimate per monitored
// component and the Gauss-Kronrod error.
struct Segment {
    double a;
    double b;
    std::vector<double> kronrod;
    double error;
};

struct SegmentOrder {
    bool operator()(const Segment& x, const Segment& y) const { return x.error < y.error; }
};

// Vector integrand c(tau2) * (1, C(mu_1 | tau2), ..., C(mu_m | tau2)).
class MonitoredIntegrand {
public:
    MonitoredIntegrand(const Tau2ConfidenceDistribution& cd, std::vector<double> probes)
        : cd_(cd), probes_(std::move(probes)) {}

    std::size_t size() const noexcept { return probes_.size() + 1; }

    void operator()(double tau2, std::vector<double>& out) const {
        out.assign(size(), 0.0);
        const double dens = cd_.density(tau2);
        if (!(dens > 0.0)) return;
        const EdgingtonCd cond(cd_.data(), tau2);
        out[0] = dens;
        for (std::size_t j = 0; j < probes_.size(); ++j) out[j + 1] = dens * cond.cdf(probes_[j]);
    }

private:
    const Tau2ConfidenceDistribution& cd_;
    std::vector<double> probes_;
};

Segment integrate_segment(const MonitoredIntegrand& f, double a, double b) {
    const auto& xk = Kronrod::abscissa();
    const auto& wk = Kronrod::weights();
    const auto& wg = Gauss::weights();
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    const std::size_t m = f.size();
    std::vector<double> k(m, 0.0), g(m, 0.0), v;
    for (std::size_t i = 0; i < xk.size(); ++i) {
        const int copies = xk[i] == 0.0 ? 1 : 2;
        for (int s = 0; s < copies; ++s) {
            const double x = s == 0 ? c + h * xk[i] : c - h * xk[i];
            f(x, v);
            for (std::size_t j = 0; j < m; ++j) {
                k[j] += wk[i] * v[j];
                // The 10-point Gauss nodes are the odd-indexed Kronrod abscissae.
                if (i % 2 == 1) g[j] += wg[i / 2] * v[j];
            }
        }
    }
    double err = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        k[j] *= h;
        err = std::max(err, std::abs(k[j] - h * g[j]));
    }
    return {a, b, std::move(k), err};
}

void append_nodes(const Tau2ConfidenceDistribution& cd, double a, double b,
                  std::vector<double>& nodes, std::vector<double>& weights) {
    const auto& xk = Kronrod::abscissa();
    const auto& wk = Kronrod::weights();
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    for (std::size_t i = 0; i < xk.size(); ++i) {
        const int copies = xk[i] == 0.0 ? 1 : 2;
        for (int s = 0; s < copies; ++s) {
            const double x = s == 0 ? c + h * xk[i] : c - h * xk[i];
            const double w = h * wk[i] * cd.density(x);
            if (w > 0.0) {
                nodes.push_back(x);
                weights.push_back(w);
            }
        }
    }
}

}  // namespace

double MarginalCDGaq::cdf_at(double mu) const {
    const std::size_t k = estimates_.size();
    const int ki = static_cast<int>(k);
    double total = 0.0;
    for (std::size_t n = 0; n < nodes_.size(); ++n) {
        double s = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            s += dist::normal_sf((estimates_[i] - mu) / std::sqrt(nodes_[n] + variances_[i]));
        }
        total += weights_[n] * irwin_hall_cdf(s, ki);
    }
    return std::clamp(total, 0.0, 1.0);
}

double MarginalCDGaq::density_at(double mu) const {
    double total = 0.0;
    for (std::size_t n = 0; n < nodes_.size(); ++n) {
        total += weights_[n] * EdgingtonCd(estimates_, variances_, nodes_[n]).density(mu);
    }
    return total;
}

double MarginalCDGaq::quantile(double p) const {
    if (!(p > 0.0 && p < 1.0)) throw InputError("probability must lie in (0, 1)");
    auto f = [&](double mu) { return cdf_at(mu) - p; };
    double lo = search_lo_;
    double hi = search_hi_;
    const auto [flo, fhi] = roots::expand_increasing(f, lo, hi, 60);
    roots::Tolerance tol;
    tol.f_tol = 1e-13;
    tol.x_abs = 1e-12 * (search_hi_ - search_lo_);
    tol.x_rel = 1e-12;
    return roots::brent(f, lo, hi, flo, fhi, tol);
}

double MarginalCDGaq::mean() const {
    double sum = 0.0;
    for (std::size_t j = 0; j + 1 < grid_.size(); ++j) {
        sum += 0.5 * (grid_[j] + grid_[j + 1]) * (cdf_[j + 1] - cdf_[j]);
    }
    return sum / (cdf_.back() - cdf_.front());
}

MarginalCDGaq cd_edgington_gaq(const MetaAnalysis& ma, const GaqOptions& opts) {
    if (ma.size() < 3) throw InputError("CD-Edgington needs at least 3 studies");
    if (opts.grid_points < 8) throw InputError("GAQ grid needs at least 8 points");
    if (!(opts.tol > 0.0)) throw InputError("quadrature tolerance must be positive");

    const Tau2ConfidenceDistribution cd(ma);
    const double df = static_cast<double>(cd.df());

    MarginalCDGaq out;
    out.mass_ = opts.mass;
    out.estimates_.assign(ma.estimates().begin(), ma.estimates().end());
    out.variances_.assign(ma.variances().begin(), ma.variances().end());

    const double tau2_max = cd.from_pivot(dist::chi2_quantile(opts.tau2_tail_mass, df));
    out.tau2_bounds_ = {0.0, tau2_max};
    const double continuous_mass = cd.cdf(tau2_max) - cd.atom();

    if (tau2_max > 0.0 && continuous_mass > 0.0) {
        // Monitor conditional CDFs at central and tail quantiles for a few
        // representative tau2 values so refinement follows every part of
        // the mu range that downstream summaries read.
        std::vector<double> probes;
        for (double t : {0.0, cd.quantile(0.5), cd.quantile(0.975)}) {
            const EdgingtonCd cond(ma, t);
            for (double p : {1e-3, 0.025, 0.16, 0.5, 0.84, 0.975, 0.999}) {
                probes.push_back(cond.quantile(p));
            }
        }
        const MonitoredIntegrand f(cd, std::move(probes));

        // Geometric initial partition: the density is concentrated near the
        // lower end while the upper limit can sit many orders of magnitude out.
        std::vector<double> breaks{tau2_max};
        while (breaks.back() > 1e-6 * tau2_max && breaks.size() < 24) {
            breaks.push_back(breaks.back() * 0.25);
        }
        breaks.push_back(0.0);
        std::reverse(breaks.begin(), breaks.end());

        std::priority_queue<Segment, std::vector<Segment>, SegmentOrder> queue;
        double total_error = 0.0;
        for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
            Segment s = integrate_segment(f, breaks[i], breaks[i + 1]);
            total_error += s.error;
            queue.push(std::move(s));
        }
        while (total_error > opts.tol &&
               queue.size() < static_cast<std::size_t>(opts.max_subintervals)) {
            Segment worst = queue.top();
            queue.pop();
            const double mid = 0.5 * (worst.a + worst.b);
            if (!(mid > worst.a && mid < worst.b)) {
                queue.push(std::move(worst));
                break;
            }
            Segment left = integrate_segment(f, worst.a, mid);
            Segment right = integrate_segment(f, mid, worst.b);
            total_error += left.error + right.error - worst.error;
            queue.push(std::move(left));
            queue.push(std::move(right));
        }
        out.error_ = std::max(0.0, total_error);
        if (total_error > opts.tol) {
            std::ostringstream msg;
            msg << "tau2 quadrature did not reach tolerance " << opts.tol << " (error estimate "
                << total_error << " over " << queue.size() << " subintervals, tau2 range [0, "
                << tau2_max << "])";
            throw NumericError(msg.str());
        }
        std::vector<Segment> segments;
        while (!queue.empty()) {
            segments.push_back(queue.top());
            queue.pop();
        }
        std::sort(segments.begin(), segments.end(),
                  [](const Segment& x, const Segment& y) { return x.a < y.a; });
        for (const auto& s : segments) append_nodes(cd, s.a, s.b, out.nodes_, out.weights_);
    }

    const bool with_atom = opts.mass == Tau2Mass::WithAtom || out.nodes_.empty();
    if (with_atom && cd.atom() > 0.0) {
        out.nodes_.insert(out.nodes_.begin(), 0.0);
        out.weights_.insert(out.weights_.begin(), cd.atom());
    }
    if (out.nodes_.empty()) {
        // Q is identically zero: every pivot draw lands on the atom.
        out.nodes_.push_back(0.0);
        out.weights_.push_back(1.0);
    }
    const double total = std::accumulate(out.weights_.begin(), out.weights_.end(), 0.0);
    for (double& w : out.weights_) w /= total;

    const double spread = std::sqrt(tau2_max + ma.max_variance());
    out.search_lo_ = ma.min_estimate() - 10.0 * spread;
    out.search_hi_ = ma.max_estimate() + 10.0 * spread;

    const double mu_lo = out.quantile(opts.mu_tail_mass);
    const double mu_hi = out.quantile(1.0 - opts.mu_tail_mass);
    const double center = out.quantile(0.5);
    double scale = 0.5 * (out.quantile(0.8413447460685429) - out.quantile(0.15865525393145707));
    if (!(scale > 0.0)) scale = std::max(mu_hi - mu_lo, 1e-12);

    // Points uniform in asinh((mu - center) / scale): dense around the bulk,
    // geometric spacing in the tails.
    const double t_lo = std::asinh((mu_lo - center) / scale);
    const double t_hi = std::asinh((mu_hi - center) / scale);
    const std::size_t n = opts.grid_points;
    out.grid_.resize(n);
    out.cdf_.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double t = t_lo + (t_hi - t_lo) * static_cast<double>(j) / static_cast<double>(n - 1);
        out.grid_[j] = center + scale * std::sinh(t);
        out.cdf_[j] = out.cdf_at(out.grid_[j]);
    }
    // Rounding can leave adjacent values out of order by ~1e-16.
    for (std::size_t j = 1; j < n; ++j) out.cdf_[j] = std::max(out.cdf_[j], out.cdf_[j - 1]);
    return out;
}

// ---------------------------------------------------------------------------
// Summaries

double point_estimate(const ConfidenceDistributionSamples& s) { return s.mean(); }
double point_estimate(const MarginalCDGaq& g) { return g.mean(); }

ConfidenceInterval equi_tailed_ci(const ConfidenceDistributionSamples& s, double level) {
    check_level(level);
    const double alpha = 1.0 - level;
    return {s.quantile(0.5 * alpha), s.quantile(1.0 - 0.5 * alpha), level};
}

ConfidenceInterval equi_tailed_ci(const MarginalCDGaq& g, double level) {
    check_level(level);
    const double alpha = 1.0 - level;
    return {g.quantile(0.5 * alpha), g.quantile(1.0 - 0.5 * alpha), level};
}

double marginal_cdf(const ConfidenceDistributionSamples& s, double mu0) { return s.cdf(mu0); }
double marginal_cdf(const MarginalCDGaq& g, double mu0) { return g.cdf_at(mu0); }

double marginal_p_value(const ConfidenceDistributionSamples& s, double mu0) {
    return two_sided_from_cdf(s.cdf(mu0));
}

double marginal_p_value(const MarginalCDGaq& g, double mu0) {
    return two_sided_from_cdf(g.cdf_at(mu0));
}

namespace {
template <class Cd>
EstimationResult summarize(const Cd& cd, Method method, double level) {
    EstimationResult r;
    r.method = method;
    r.estimate = point_estimate(cd);
    r.ci = equi_tailed_ci(cd, level);
    r.skewness = r.ci.width() > 0.0 ? ci_skewness(r.ci, r.estimate) : 0.0;
    r.p_value_at_zero = marginal_p_value(cd, 0.0);
    r.tau2_used = std::nullopt;
    return r;
}
}  // namespace

EstimationResult cd_edgington_result(const ConfidenceDistributionSamples& s, double level) {
    return summarize(s, Method::CDEdgingtonMC, level);
}

EstimationResult cd_edgington_result(const MarginalCDGaq& g, double level) {
    return summarize(g, Method::CDEdgingtonGAQ, level);
}

}  // namespace cdmeta
