#include "cdmeta/io.hpp"

#include "cdmeta/classical.hpp"
#include "cdmeta/distributions.hpp"
#include "cdmeta/heterogeneity.hpp"
#include "cdmeta/pvalfun.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <functional>
#include <iomanip>
#include <sstream>
#include <memory>

namespace cdmeta::io {

namespace {

using nlohmann::json;

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::string where(std::size_t line, std::string_view column) {
    return "line " + std::to_string(line) + ", column '" + std::string(column) + "'";
}

// Splits one CSV record. Double quotes delimit fields that contain commas;
// a doubled quote inside them is a literal quote.
std::vector<std::string> split_record(std::string_view line, std::size_t line_no) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    bool was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
            was_quoted = true;
        } else if (c == ',') {
            fields.push_back(was_quoted ? cur : trim(cur));
            cur.clear();
            was_quoted = false;
        } else {
            cur += c;
        }
    }
    if (quoted) throw InputError("line " + std::to_string(line_no) + ": unterminated quote");
    fields.push_back(was_quoted ? cur : trim(cur));
    return fields;
}

double parse_double(const std::string& text, std::size_t line, std::string_view column) {
    double v = 0.0;
    const char* first = text.data();
    const char* last = first + text.size();
    if (first != last && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (text.empty() || ec != std::errc() || ptr != last) {
        throw InputError(where(line, column) + ": '" + text + "' is not a number");
    }
    if (!std::isfinite(v)) throw InputError(where(line, column) + ": value must be finite");
    return v;
}

std::string shortest(double x) {
    std::array<char, 64> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
    return std::string(buf.data(), ptr);
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos && trim(s) == s) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

}  // namespace

MetaAnalysis parse_studies(std::string_view csv_text) {
    std::vector<std::pair<std::size_t, std::string>> lines;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= csv_text.size()) {
        const auto nl = csv_text.find('\n', pos);
        const auto end = nl == std::string_view::npos ? csv_text.size() : nl;
        ++line_no;
        std::string line(csv_text.substr(pos, end - pos));
        if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
        if (!trim(line).empty()) lines.emplace_back(line_no, std::move(line));
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    if (lines.empty()) throw InputError("empty input: expected a header 'study,estimate,se'");

    const auto header = split_record(lines.front().second, lines.front().first);
    std::optional<std::size_t> col_study, col_est, col_se;
    for (std::size_t j = 0; j < header.size(); ++j) {
        const auto name = lower(trim(header[j]));
        if (name == "study") col_study = j;
        else if (name == "estimate") col_est = j;
        else if (name == "se") col_se = j;
    }
    for (const auto& [col, name] : {std::pair{col_study, "study"}, {col_est, "estimate"}, {col_se, "se"}}) {
        if (!col) {
            throw InputError("line " + std::to_string(lines.front().first) +
                             ": header is missing column '" + name + "'");
        }
    }

    std::vector<Study> studies;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto& [ln, text] = lines[r];
        const auto f = split_record(text, ln);
        if (f.size() != header.size()) {
            throw InputError("line " + std::to_string(ln) + ": expected " +
                             std::to_string(header.size()) + " fields, found " +
                             std::to_string(f.size()));
        }
        const double est = parse_double(f[*col_est], ln, "estimate");
        const double se = parse_double(f[*col_se], ln, "se");
        if (!(se > 0.0)) throw InputError(where(ln, "se") + ": standard error must be positive");
        studies.emplace_back(est, se, f[*col_study]);
    }
    if (studies.size() < 2) {
        throw InputError("need at least 2 studies, found " + std::to_string(studies.size()));
    }
    return MetaAnalysis(std::move(studies));
}

std::string serialize_studies(const MetaAnalysis& ma) {
    std::string out = "study,estimate,se\n";
    for (const auto& s : ma.studies()) {
        out += csv_field(s.label()) + ',' + shortest(s.estimate()) + ',' + shortest(s.se()) + '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Analysis

bool AnalysisReport::any_failed() const {
    return std::any_of(methods.begin(), methods.end(), [](const MethodReport& m) { return !m.ok; });
}

namespace {

// CDF and optional density of one method's confidence distribution for mu.
struct MethodCd {
    std::function<double(double)> cdf;
    std::function<double(double)> density;
    std::function<double(double)> quantile;
};

Tau2Block heterogeneity_block(const MetaAnalysis& ma, double level) {
    Tau2Block b;
    try {
        b.reml = reml_tau2(ma);
    } catch (const NumericError& e) {
        b.reml_error = e.what();
    }
    b.paule_mandel = paule_mandel(ma);
    b.q_profile = q_profile_ci(ma, level);
    b.i2 = i_squared(ma);
    b.q0 = generalized_q(0.0, ma);
    b.heterogeneity_p = heterogeneity_p_value(ma);
    b.atom = Tau2ConfidenceDistribution(ma).atom();
    return b;
}

Curve make_curve(const MethodCd& cd, std::vector<double> grid, double median) {
    grid.push_back(median);
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    Curve c;
    c.mu = grid;
    for (double mu : grid) {
        const double value = cd.cdf(mu);
        c.cdf.push_back(value);
        c.confidence_curve.push_back(confidence_curve(value));
        c.p_two_sided.push_back(two_sided_from_cdf(value));
        if (cd.density) c.density.push_back(cd.density(mu));
    }
    return c;
}

}  // namespace

AnalysisReport analyze(const MetaAnalysis& ma, const AnalysisOptions& options) {
    if (!(options.level > 0.0 && options.level < 1.0)) {
        throw InputError("confidence level must lie in (0, 1)");
    }
    if (options.samples == 0) throw InputError("number of samples must be positive");

    AnalysisReport report;
    report.studies.assign(ma.studies().begin(), ma.studies().end());
    report.options = options;
    report.tau2 = heterogeneity_block(ma, options.level);

    const auto wants = [&](Method m) {
        return std::find(options.methods.begin(), options.methods.end(), m) != options.methods.end();
    };
    if (ma.size() == 2) {
        report.warnings.push_back(
            "only 2 studies: the tau2 pivot and the HKSJ t quantile have 1 degree of freedom, "
            "intervals are wide");
    }
    if (wants(Method::CDEdgingtonGAQ) && ma.size() <= 5) {
        report.warnings.push_back(
            "cd-edgington-mc is the recommended CD-Edgington variant with 5 or fewer studies");
    }
    if (wants(Method::CDEdgingtonMC) && options.samples < 10000) {
        report.warnings.push_back("fewer than 10000 Monte Carlo draws; quantiles are noisy");
    }

    std::vector<MethodCd> cds;
    for (Method m : options.methods) {
        MethodReport mr;
        mr.method = m;
        MethodCd cd;
        try {
            switch (m) {
                case Method::IVW:
                case Method::HKSJ:
                case Method::Edgington: {
                    if (!report.tau2.reml) {
                        throw NumericError("REML estimate unavailable: " + report.tau2.reml_error);
                    }
                    const double tau2 = *report.tau2.reml;
                    if (m == Method::Edgington) {
                        mr.result = edgington_result(ma, tau2, options.level);
                        auto e = std::make_shared<EdgingtonCd>(ma, tau2);
                        cd.cdf = [e](double x) { return e->cdf(x); };
                        cd.density = [e](double x) { return e->density(x); };
                        cd.quantile = [e](double p) { return e->quantile(p); };
                        break;
                    }
                    mr.result = m == Method::IVW ? ivw_result(ma, tau2, options.level)
                                                 : hksj_result(ma, tau2, options.level);
                    const double mu = mr.result.estimate;
                    const double z = m == Method::IVW
                                         ? dist::normal_quantile(1.0 - 0.5 * (1.0 - options.level))
                                         : dist::t_quantile(1.0 - 0.5 * (1.0 - options.level),
                                                            static_cast<double>(ma.size() - 1));
                    const double se = mr.result.ci.width() / (2.0 * z);
                    if (!(se > 0.0)) throw NumericError("zero standard error; no confidence distribution");
                    if (m == Method::IVW) {
                        cd.cdf = [=](double x) { return dist::normal_cdf((x - mu) / se); };
                        cd.density = [=](double x) { return dist::normal_pdf((x - mu) / se) / se; };
                        cd.quantile = [=](double p) { return mu + se * dist::normal_quantile(p); };
                    } else {
                        const double df = static_cast<double>(ma.size() - 1);
                        cd.cdf = [=](double x) { return dist::t_cdf((x - mu) / se, df); };
                        cd.density = [=](double x) { return dist::t_pdf((x - mu) / se, df) / se; };
                        cd.quantile = [=](double p) { return mu + se * dist::t_quantile(p, df); };
                    }
                    break;
                }
                case Method::CDEdgingtonMC: {
                    McOptions mc;
                    mc.draws = options.samples;
                    mc.seed = options.seed;
                    mc.workers = options.workers;
                    auto s = std::make_shared<ConfidenceDistributionSamples>(cd_edgington_mc(ma, mc));
                    mr.result = cd_edgington_result(*s, options.level);
                    cd.cdf = [s](double x) { return s->cdf(x); };
                    cd.quantile = [s](double p) { return s->quantile(p); };
                    break;
                }
                case Method::CDEdgingtonGAQ: {
                    auto g = std::make_shared<MarginalCDGaq>(cd_edgington_gaq(ma, options.gaq));
                    mr.result = cd_edgington_result(*g, options.level);
                    cd.cdf = [g](double x) { return g->cdf_at(x); };
                    cd.density = [g](double x) { return g->density_at(x); };
                    cd.quantile = [g](double p) { return g->quantile(p); };
                    break;
                }
            }
            if (options.prob_below) mr.prob_below = cd.cdf(*options.prob_below);
            mr.ok = true;
        } catch (const NumericError& e) {
            mr.ok = false;
            mr.error = e.what();
            cd = MethodCd{};
        } catch (const InputError& e) {
            // Method-specific preconditions such as k >= 3 for CD-Edgington.
            mr.ok = false;
            mr.error = e.what();
            cd = MethodCd{};
        }
        report.methods.push_back(std::move(mr));
        cds.push_back(std::move(cd));
    }

    if (options.curve_points >= 2) {
        // Common mu axis covering the central 99.9% of every method.
        double lo = INFINITY, hi = -INFINITY;
        for (std::size_t j = 0; j < cds.size(); ++j) {
            if (!report.methods[j].ok) continue;
            try {
                lo = std::min(lo, cds[j].quantile(0.0005));
                hi = std::max(hi, cds[j].quantile(0.9995));
            } catch (const NumericError&) {
            }
        }
        if (std::isfinite(lo) && std::isfinite(hi) && hi > lo) {
            std::vector<double> grid(options.curve_points);
            for (std::size_t i = 0; i < grid.size(); ++i) {
                grid[i] = lo + (hi - lo) * static_cast<double>(i) /
                                   static_cast<double>(grid.size() - 1);
            }
            for (std::size_t j = 0; j < cds.size(); ++j) {
                auto& mr = report.methods[j];
                if (!mr.ok) continue;
                try {
                    mr.curve = make_curve(cds[j], grid, cds[j].quantile(0.5));
                } catch (const NumericError& e) {
                    report.warnings.push_back(std::string(method_name(mr.method)) +
                                              ": curve export failed: " + e.what());
                }
            }
        }
    }
    return report;
}

namespace {

json interval_json(const ConfidenceInterval& ci) {
    return {{"lower", ci.lower}, {"upper", ci.upper}, {"level", ci.level}};
}

json optional_json(const std::optional<double>& x) { return x ? json(*x) : json(nullptr); }

json tau2_block_json(const Tau2Block& b) {
    json j;
    j["reml"] = optional_json(b.reml);
    if (!b.reml) j["reml_error"] = b.reml_error;
    j["paule_mandel"] = b.paule_mandel;
    j["q_profile_ci"] = interval_json(b.q_profile);
    j["i2"] = b.i2;
    j["q0"] = b.q0;
    j["heterogeneity_p_value"] = b.heterogeneity_p;
    j["atom_at_zero"] = b.atom;
    return j;
}

std::string fixed6(double x) {
    std::ostringstream os;
    os << std::setprecision(6) << x;
    return os.str();
}

}  // namespace

std::string to_json(const AnalysisReport& r) {
    json j;
    j["schema_version"] = kSchemaVersion;
    json studies = json::array();
    for (const auto& s : r.studies) {
        studies.push_back({{"study", s.label()}, {"estimate", s.estimate()}, {"se", s.se()}});
    }
    j["input"] = {{"k", r.studies.size()}, {"studies", studies}};
    json methods = json::array();
    for (Method m : r.options.methods) methods.push_back(method_name(m));
    j["settings"] = {{"level", r.options.level},
                     {"samples", r.options.samples},
                     {"seed", r.options.seed},
                     {"methods", methods}};
    if (r.options.prob_below) j["settings"]["prob_below"] = *r.options.prob_below;
    j["tau2"] = tau2_block_json(r.tau2);

    json results = json::array();
    for (const auto& m : r.methods) {
        json e;
        e["method"] = method_name(m.method);
        e["status"] = m.ok ? "ok" : "failed";
        if (!m.ok) {
            e["error"] = m.error;
            results.push_back(e);
            continue;
        }
        e["estimate"] = m.result.estimate;
        e["ci"] = interval_json(m.result.ci);
        e["skewness"] = m.result.skewness;
        e["p_value"] = m.result.p_value_at_zero;
        e["tau2_used"] = optional_json(m.result.tau2_used);
        if (m.prob_below) e["prob_below"] = *m.prob_below;
        if (m.curve) {
            const auto& c = *m.curve;
            e["curve"] = {{"mu", c.mu},
                          {"cdf", c.cdf},
                          {"density", c.density.empty() ? json(nullptr) : json(c.density)},
                          {"confidence_curve", c.confidence_curve},
                          {"p_two_sided", c.p_two_sided}};
        }
        results.push_back(e);
    }
    j["methods"] = results;
    j["warnings"] = r.warnings;
    return j.dump(2) + "\n";
}

std::string to_csv(const AnalysisReport& r) {
    std::ostringstream os;
    os << "method,status,estimate,lower,upper,level,skewness,p_value,tau2_used";
    if (r.options.prob_below) os << ",prob_below";
    os << '\n';
    for (const auto& m : r.methods) {
        os << method_name(m.method) << ',' << (m.ok ? "ok" : "failed");
        if (m.ok) {
            const auto& e = m.result;
            os << ',' << fixed6(e.estimate) << ',' << fixed6(e.ci.lower) << ',' << fixed6(e.ci.upper)
               << ',' << fixed6(e.ci.level) << ',' << fixed6(e.skewness) << ','
               << fixed6(e.p_value_at_zero) << ',' << (e.tau2_used ? fixed6(*e.tau2_used) : "NA");
            if (r.options.prob_below) os << ',' << (m.prob_below ? fixed6(*m.prob_below) : "NA");
        } else {
            os << ",NA,NA,NA,NA,NA,NA,NA";
            if (r.options.prob_below) os << ",NA";
        }
        os << '\n';
    }
    const bool curves = std::any_of(r.methods.begin(), r.methods.end(),
                                    [](const MethodReport& m) { return m.curve.has_value(); });
    if (curves) {
        os << "\nmethod,mu,cdf,density,confidence_curve,p_two_sided\n";
        for (const auto& m : r.methods) {
            if (!m.curve) continue;
            const auto& c = *m.curve;
            for (std::size_t i = 0; i < c.mu.size(); ++i) {
                os << method_name(m.method) << ',' << fixed6(c.mu[i]) << ',' << fixed6(c.cdf[i]) << ','
                   << (c.density.empty() ? "NA" : fixed6(c.density[i])) << ','
                   << fixed6(c.confidence_curve[i]) << ',' << fixed6(c.p_two_sided[i]) << '\n';
            }
        }
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// tau2 confidence distribution export

Tau2Report tau2_report(const MetaAnalysis& ma, const Tau2Options& options) {
    if (options.grid_points < 2) throw InputError("density grid needs at least 2 points");
    if (!(options.level > 0.0 && options.level < 1.0)) {
        throw InputError("confidence level must lie in (0, 1)");
    }
    if (options.tau2_max && !(*options.tau2_max > 0.0)) {
        throw InputError("tau2 upper bound must be positive");
    }
    const Tau2ConfidenceDistribution cd(ma);
    Tau2Report r;
    r.block = heterogeneity_block(ma, options.level);
    if (cd.low_information()) {
        r.warnings.push_back("only 2 studies: the confidence distribution of tau2 has 1 degree of freedom");
    }
    const double alpha = 1.0 - options.level;
    r.median = cd.quantile(0.5);
    r.ci = {cd.quantile(0.5 * alpha), cd.quantile(1.0 - 0.5 * alpha), options.level};

    double upper = options.tau2_max.value_or(cd.quantile(0.99));
    if (!(upper > 0.0)) upper = std::max(r.block.q_profile.upper, 4.0 * ma.max_variance());
    r.window_upper = upper;
    if (cd.cdf(upper) - cd.atom() > 0.0) {
        r.window_median = cd.window_quantile(0.5, upper);
        r.window_ci = ConfidenceInterval{cd.window_quantile(0.5 * alpha, upper),
                                         cd.window_quantile(1.0 - 0.5 * alpha, upper), options.level};
    }
    for (std::size_t i = 0; i < options.grid_points; ++i) {
        const double t = upper * static_cast<double>(i) / static_cast<double>(options.grid_points - 1);
        r.grid.push_back(t);
        r.density.push_back(cd.density(t));
        r.cdf.push_back(cd.cdf(t));
    }
    return r;
}

std::string to_json(const Tau2Report& r) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["tau2"] = tau2_block_json(r.block);
    j["confidence_distribution"] = {{"median", r.median}, {"ci", interval_json(r.ci)}};
    json w;
    w["upper"] = r.window_upper;
    w["median"] = optional_json(r.window_median);
    w["ci"] = r.window_ci ? interval_json(*r.window_ci) : json(nullptr);
    j["continuous_part"] = w;
    j["grid"] = {{"tau2", r.grid}, {"density", r.density}, {"cdf", r.cdf}};
    j["warnings"] = r.warnings;
    return j.dump(2) + "\n";
}

std::string to_csv(const Tau2Report& r) {
    std::ostringstream os;
    os << "tau2,density,cdf\n";
    for (std::size_t i = 0; i < r.grid.size(); ++i) {
        os << fixed6(r.grid[i]) << ',' << fixed6(r.density[i]) << ',' << fixed6(r.cdf[i]) << '\n';
    }
    return os.str();
}

}  // namespace cdmeta::io
