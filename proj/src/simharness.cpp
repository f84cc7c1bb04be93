#include "cdmeta/simharness.hpp"

#include "cdmeta/classical.hpp"
#include "cdmeta/heterogeneity.hpp"
#include "cdmeta/pvalfun.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <iomanip>
#include <mutex>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

namespace cdmeta::sim {

namespace {

// Stream ids inside one iteration.
constexpr std::uint64_t kDataStream = 0;
constexpr std::uint64_t kMonteCarloStream = 1;

std::optional<double> safe_skewness(auto&& compute) {
    try {
        return compute();
    } catch (const NumericError&) {
        return std::nullopt;
    }
}

int sign_of(double x) { return x < 0.0 ? -1 : 1; }

Measure mean_and_mcse(const std::vector<double>& x) {
    Measure m;
    const double n = static_cast<double>(x.size());
    if (x.empty()) return {std::nan(""), std::nan("")};
    double sum = 0.0;
    for (double v : x) sum += v;
    m.value = sum / n;
    if (x.size() < 2) {
        m.mcse = std::nan("");
        return m;
    }
    double ss = 0.0;
    for (double v : x) ss += (v - m.value) * (v - m.value);
    m.mcse = std::sqrt(ss / (n - 1.0) / n);
    return m;
}

}  // namespace

void SimScenario::validate() const {
    if (k < 2) throw InputError("scenario needs k >= 2");
    if (k_large < 0 || k_large > k) throw InputError("k_large must lie in [0, k]");
    if (!(i2 >= 0.0 && i2 < 1.0)) throw InputError("I^2 must lie in [0, 1)");
    if (n_small < 2 || n_large < 2) throw InputError("study sizes must be at least 2");
    if (n_sim < 1) throw InputError("n_sim must be positive");
    if (!std::isfinite(mu_true)) throw InputError("mu_true must be finite");
}

std::vector<int> SimScenario::study_sizes() const {
    std::vector<int> n(static_cast<std::size_t>(k), n_small);
    std::fill_n(n.begin(), k_large, n_large);
    return n;
}

double draw_se2(int n, RandomEngine& eng) {
    if (n < 2) throw InputError("study size must be at least 2");
    std::chi_squared_distribution<double> chi2(2.0 * (n - 1));
    return chi2(eng) / (static_cast<double>(n - 1) * n);
}

double tau2_from_i2(const SimScenario& s) {
    if (!(s.i2 >= 0.0 && s.i2 < 1.0)) throw InputError("I^2 must lie in [0, 1)");
    double mean_var = 0.0;
    for (int n : s.study_sizes()) mean_var += 2.0 / n;
    mean_var /= s.k;
    return mean_var * s.i2 / (1.0 - s.i2);
}

std::vector<double> draw_true_effects(const SimScenario& s, double tau2, RandomEngine& eng) {
    if (!(tau2 >= 0.0)) throw InputError("tau2 must be non-negative");
    std::vector<double> theta(static_cast<std::size_t>(s.k), s.mu_true);
    if (tau2 == 0.0) return theta;
    std::normal_distribution<double> z(0.0, 1.0);
    if (s.effect_dist == EffectDistribution::Normal) {
        const double tau = std::sqrt(tau2);
        for (double& t : theta) t = s.mu_true + tau * z(eng);
        return theta;
    }
    const double delta = kSkewNormalAlpha / std::sqrt(1.0 + kSkewNormalAlpha * kSkewNormalAlpha);
    const double omega = std::sqrt(tau2 / (1.0 - 2.0 * delta * delta / std::numbers::pi));
    const double xi = s.mu_true - omega * delta * std::sqrt(2.0 / std::numbers::pi);
    for (double& t : theta) {
        const double u0 = z(eng);
        const double u1 = z(eng);
        t = xi + omega * (delta * std::abs(u0) + std::sqrt(1.0 - delta * delta) * u1);
    }
    return theta;
}

MetaAnalysis draw_estimates(const std::vector<double>& theta, const SimScenario& s,
                            RandomEngine& eng) {
    if (theta.size() != static_cast<std::size_t>(s.k)) {
        throw InputError("need one true effect per study");
    }
    const auto sizes = s.study_sizes();
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<Study> studies;
    studies.reserve(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double se2 = draw_se2(sizes[i], eng);
        const double est = theta[i] + std::sqrt(2.0 / sizes[i]) * z(eng);
        studies.emplace_back(est, std::sqrt(se2));
    }
    return MetaAnalysis(std::move(studies));
}

std::optional<double> cohen_kappa(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size() || a.size() < 2) {
        throw InputError("kappa needs two sign vectors of equal length >= 2");
    }
    const double n = static_cast<double>(a.size());
    double agree = 0.0, pos_a = 0.0, pos_b = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if ((a[i] != 1 && a[i] != -1) || (b[i] != 1 && b[i] != -1)) {
            throw InputError("signs must be -1 or +1");
        }
        agree += a[i] == b[i];
        pos_a += a[i] == 1;
        pos_b += b[i] == 1;
    }
    const double po = agree / n;
    const double pa = pos_a / n;
    const double pb = pos_b / n;
    const double pe = pa * pb + (1.0 - pa) * (1.0 - pb);
    if (pe >= 1.0) return std::nullopt;
    return (po - pe) / (1.0 - pe);
}

std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw InputError("correlation needs equal lengths");
    if (a.size() < 2) return std::nullopt;
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (!(saa > 0.0) || !(sbb > 0.0)) return std::nullopt;
    return sab / std::sqrt(saa * sbb);
}

namespace {

std::vector<Method> methods_for(const SimOptions& opts) {
    std::vector<Method> m{Method::IVW, Method::HKSJ, Method::Edgington, Method::CDEdgingtonMC};
    if (opts.include_gaq) m.push_back(Method::CDEdgingtonGAQ);
    return m;
}

MethodOutcome to_outcome(const EstimationResult& r) {
    return {true, r.estimate, r.ci.lower, r.ci.upper, r.skewness};
}

}  // namespace

IterationRecord run_iteration(const SimScenario& s, const SimOptions& opts, std::uint64_t iteration) {
    RandomEngine eng = make_stream(s.seed, combine_stream_ids(iteration, kDataStream));
    const double tau2 = tau2_from_i2(s);
    const auto theta = draw_true_effects(s, tau2, eng);
    const MetaAnalysis ma = draw_estimates(theta, s, eng);

    IterationRecord rec;
    try {
        rec.tau2_hat = reml_tau2(ma);
    } catch (const NumericError&) {
        rec.reml_failed = true;
        rec.tau2_hat = paule_mandel(ma);
    }
    rec.gamma_estimates = safe_skewness([&] { return fisher_weighted_skewness(ma); });
    rec.gamma_true = safe_skewness([&] { return fisher_skewness(theta); });

    for (Method m : methods_for(opts)) {
        MethodOutcome out;
        try {
            switch (m) {
                case Method::IVW: out = to_outcome(ivw_result(ma, rec.tau2_hat, opts.level)); break;
                case Method::HKSJ: out = to_outcome(hksj_result(ma, rec.tau2_hat, opts.level)); break;
                case Method::Edgington:
                    out = to_outcome(edgington_result(ma, rec.tau2_hat, opts.level));
                    break;
                case Method::CDEdgingtonMC: {
                    McOptions mc;
                    mc.draws = opts.mc_draws;
                    mc.seed = s.seed;
                    mc.stream = combine_stream_ids(iteration, kMonteCarloStream);
                    out = to_outcome(cd_edgington_result(cd_edgington_mc(ma, mc), opts.level));
                    break;
                }
                case Method::CDEdgingtonGAQ:
                    out = to_outcome(cd_edgington_result(cd_edgington_gaq(ma, opts.gaq), opts.level));
                    break;
            }
        } catch (const NumericError&) {
            out = MethodOutcome{};
        }
        rec.outcomes.push_back(out);
    }
    return rec;
}

SimResult run_scenario(const SimScenario& s, const SimOptions& opts) {
    s.validate();
    const auto n = static_cast<std::size_t>(s.n_sim);
    std::vector<IterationRecord> records(n);

    const unsigned workers = std::max(1u, std::min<unsigned>(opts.workers, s.n_sim));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) records[i] = run_iteration(s, opts, i);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        {
            std::vector<std::jthread> pool;
            for (unsigned t = 0; t < workers; ++t) {
                pool.emplace_back([&] {
                    for (std::size_t i = next++; i < n; i = next++) {
                        try {
                            records[i] = run_iteration(s, opts, i);
                        } catch (...) {
                            std::lock_guard lock(failure_mutex);
                            if (!failure) failure = std::current_exception();
                        }
                    }
                });
            }
        }
        if (failure) std::rethrow_exception(failure);
    }

    SimResult result;
    result.scenario = s;
    result.methods = methods_for(opts);
    for (const auto& r : records) result.reml_failures += r.reml_failed;

    for (std::size_t j = 0; j < result.methods.size(); ++j) {
        MethodPerformance perf;
        perf.method = result.methods[j];
        std::vector<double> covered, width, error, sq_error;
        std::vector<double> beta_e, gamma_e, beta_t, gamma_t;
        for (const auto& r : records) {
            const auto& o = r.outcomes[j];
            if (!o.ok) {
                ++perf.failures;
                continue;
            }
            covered.push_back(o.lower <= s.mu_true && s.mu_true <= o.upper ? 1.0 : 0.0);
            width.push_back(o.upper - o.lower);
            error.push_back(o.estimate - s.mu_true);
            sq_error.push_back(error.back() * error.back());
            if (r.gamma_estimates) {
                beta_e.push_back(o.skewness);
                gamma_e.push_back(*r.gamma_estimates);
            }
            if (r.gamma_true) {
                beta_t.push_back(o.skewness);
                gamma_t.push_back(*r.gamma_true);
            }
        }
        perf.n_ok = covered.size();
        perf.coverage = mean_and_mcse(covered);
        if (!covered.empty()) {
            const double c = perf.coverage.value;
            perf.coverage.mcse = std::sqrt(c * (1.0 - c) / static_cast<double>(covered.size()));
        }
        perf.width = mean_and_mcse(width);
        perf.bias = mean_and_mcse(error);
        perf.mse = mean_and_mcse(sq_error);
        perf.skew_r_estimates = pearson(beta_e, gamma_e);
        perf.skew_r_true = pearson(beta_t, gamma_t);
        auto kappa = [](const std::vector<double>& x, const std::vector<double>& y) {
            if (x.size() < 2) return std::optional<double>{};
            // Classical intervals are symmetric by construction; sign agreement is undefined.
            if (std::all_of(x.begin(), x.end(), [](double v) { return v == 0.0; })) {
                return std::optional<double>{};
            }
            std::vector<int> a, b;
            for (std::size_t i = 0; i < x.size(); ++i) {
                a.push_back(sign_of(x[i]));
                b.push_back(sign_of(y[i]));
            }
            return cohen_kappa(a, b);
        };
        perf.kappa_estimates = kappa(beta_e, gamma_e);
        perf.kappa_true = kappa(beta_t, gamma_t);
        result.performance.push_back(perf);
    }
    if (opts.keep_iterations) result.iterations = std::move(records);
    return result;
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

template <class T>
T parse_number(const std::string& text, int line, const std::string& key) {
    T value{};
    const char* first = text.data();
    const char* last = first + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || text.empty()) {
        throw InputError("config line " + std::to_string(line) + ": invalid value '" + text +
                         "' for " + key);
    }
    return value;
}

bool parse_bool(const std::string& text, int line, const std::string& key) {
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    throw InputError("config line " + std::to_string(line) + ": invalid boolean '" + text +
                     "' for " + key);
}

EffectDistribution parse_dist(const std::string& text, int line) {
    std::string t = text;
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
    if (t == "normal") return EffectDistribution::Normal;
    if (t == "skewnormal" || t == "skew-normal") return EffectDistribution::SkewNormal;
    throw InputError("config line " + std::to_string(line) + ": unknown effect distribution '" +
                     text + "'");
}

std::string_view dist_name(EffectDistribution d) {
    return d == EffectDistribution::Normal ? "normal" : "skewnormal";
}

}  // namespace

std::vector<SimScenario> SimConfig::scenarios() const {
    std::vector<SimScenario> out;
    for (int kk : k) {
        for (double ii : i2) {
            for (int kl : k_large) {
                if (kl > kk) continue;
                for (EffectDistribution d : effect_dist) {
                    SimScenario s;
                    s.k = kk;
                    s.i2 = ii;
                    s.k_large = kl;
                    s.effect_dist = d;
                    s.mu_true = mu_true;
                    s.n_small = n_small;
                    s.n_large = n_large;
                    s.n_sim = n_sim;
                    const auto cell = static_cast<std::uint64_t>(kk) * 1000000u +
                                      static_cast<std::uint64_t>(std::lround(ii * 1000.0)) * 100u +
                                      static_cast<std::uint64_t>(kl) * 10u +
                                      (d == EffectDistribution::Normal ? 0u : 1u);
                    s.seed = combine_stream_ids(seed, cell);
                    s.validate();
                    out.push_back(s);
                }
            }
        }
    }
    return out;
}

SimConfig parse_config(const std::string& text) {
    SimConfig cfg;
    std::stringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
        const std::string content = trim(raw);
        if (content.empty()) continue;
        const auto eq = content.find('=');
        if (eq == std::string::npos) {
            throw InputError("config line " + std::to_string(line) + ": expected key = value");
        }
        const std::string key = trim(content.substr(0, eq));
        const std::string value = trim(content.substr(eq + 1));
        auto ints = [&] {
            std::vector<int> v;
            for (const auto& item : split_list(value)) v.push_back(parse_number<int>(item, line, key));
            return v;
        };
        if (key == "k") {
            cfg.k = ints();
        } else if (key == "i2") {
            cfg.i2.clear();
            for (const auto& item : split_list(value)) {
                cfg.i2.push_back(parse_number<double>(item, line, key));
            }
        } else if (key == "k_large") {
            cfg.k_large = ints();
        } else if (key == "effect_dist") {
            cfg.effect_dist.clear();
            for (const auto& item : split_list(value)) cfg.effect_dist.push_back(parse_dist(item, line));
        } else if (key == "mu_true") {
            cfg.mu_true = parse_number<double>(value, line, key);
        } else if (key == "n_small") {
            cfg.n_small = parse_number<int>(value, line, key);
        } else if (key == "n_large") {
            cfg.n_large = parse_number<int>(value, line, key);
        } else if (key == "n_sim") {
            cfg.n_sim = parse_number<int>(value, line, key);
        } else if (key == "seed") {
            cfg.seed = parse_number<std::uint64_t>(value, line, key);
        } else if (key == "mc_draws") {
            cfg.options.mc_draws = parse_number<std::size_t>(value, line, key);
        } else if (key == "level") {
            cfg.options.level = parse_number<double>(value, line, key);
        } else if (key == "workers") {
            cfg.options.workers = parse_number<unsigned>(value, line, key);
        } else if (key == "include_gaq") {
            cfg.options.include_gaq = parse_bool(value, line, key);
        } else if (key == "gaq_mass") {
            if (value == "with-atom") {
                cfg.options.gaq.mass = Tau2Mass::WithAtom;
            } else if (value == "density-only") {
                cfg.options.gaq.mass = Tau2Mass::DensityOnly;
            } else {
                throw InputError("config line " + std::to_string(line) +
                                 ": gaq_mass must be with-atom or density-only");
            }
        } else if (key == "gaq_grid_points") {
            cfg.options.gaq.grid_points = parse_number<std::size_t>(value, line, key);
        } else if (key == "gaq_tol") {
            cfg.options.gaq.tol = parse_number<double>(value, line, key);
        } else {
            throw InputError("config line " + std::to_string(line) + ": unknown key '" + key + "'");
        }
    }
    if (cfg.k.empty() || cfg.i2.empty() || cfg.k_large.empty() || cfg.effect_dist.empty()) {
        throw InputError("config grid has an empty dimension");
    }
    if (cfg.options.mc_draws == 0) throw InputError("mc_draws must be positive");
    if (!(cfg.options.level > 0.0 && cfg.options.level < 1.0)) {
        throw InputError("level must lie in (0, 1)");
    }
    return cfg;
}

void write_csv(std::ostream& out, const std::vector<SimResult>& results) {
    const auto flags = out.flags();
    const auto prec = out.precision();
    out << std::setprecision(6);
    out << "k,i2,k_large,effect_dist,n_sim,method,measure,value,mcse\n";
    auto cell = [](const std::optional<double>& x, std::ostream& os) {
        if (x) os << *x;
        else os << "NA";
    };
    for (const auto& r : results) {
        const auto& s = r.scenario;
        auto prefix = [&](std::string_view method) -> std::ostream& {
            return out << s.k << ',' << s.i2 << ',' << s.k_large << ',' << dist_name(s.effect_dist)
                       << ',' << s.n_sim << ',' << method << ',';
        };
        for (const auto& p : r.performance) {
            const auto name = method_name(p.method);
            for (const auto& [measure, m] :
                 {std::pair<std::string_view, Measure>{"coverage", p.coverage},
                  {"width", p.width},
                  {"bias", p.bias},
                  {"mse", p.mse}}) {
                prefix(name) << measure << ',' << m.value << ',' << m.mcse << '\n';
            }
            for (const auto& [measure, v] :
                 {std::pair<std::string_view, std::optional<double>>{"skew_r_estimates",
                                                                     p.skew_r_estimates},
                  {"skew_r_true", p.skew_r_true},
                  {"kappa_estimates", p.kappa_estimates},
                  {"kappa_true", p.kappa_true}}) {
                prefix(name) << measure << ',';
                cell(v, out);
                out << ",NA\n";
            }
            prefix(name) << "failures," << p.failures << ",NA\n";
        }
        prefix("all") << "reml_fallbacks," << r.reml_failures << ",NA\n";
    }
    out.flags(flags);
    out.precision(prec);
}

}  // namespace cdmeta::sim
