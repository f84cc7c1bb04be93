// Command-line front end: analyze, tau2, simulate, version.

#include "cdmeta/io.hpp"
#include "cdmeta/simharness.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#ifndef CDMETA_VERSION
#define CDMETA_VERSION "0.0.0"
#endif

namespace {

enum ExitCode { kOk = 0, kInputFailure = 1, kNumericFailure = 2 };

int report_error(std::string_view kind, std::string_view message, int code) {
    nlohmann::json j;
    j["error"] = {{"type", kind}, {"message", message}};
    std::cerr << j.dump() << '\n';
    return code;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw cdmeta::InputError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<cdmeta::Method> parse_methods(const std::vector<std::string>& names) {
    std::vector<cdmeta::Method> out;
    for (const auto& item : names) {
        std::stringstream ss(item);
        std::string name;
        while (std::getline(ss, name, ',')) {
            const auto m = cdmeta::parse_method(name);
            if (!m) throw cdmeta::InputError("unknown method '" + name + "'");
            if (std::find(out.begin(), out.end(), *m) == out.end()) out.push_back(*m);
        }
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Random-effects meta-analysis with Edgington confidence distributions"};
    app.require_subcommand(1);

    std::string csv_path;
    std::string out_format = "json";
    cdmeta::io::AnalysisOptions aopt;
    std::vector<std::string> method_names;
    std::optional<double> prob_below;
    auto* analyze = app.add_subcommand("analyze", "Estimate the average effect with every method");
    analyze->add_option("csv", csv_path, "CSV file with columns study,estimate,se")->required();
    analyze->add_option("--level", aopt.level, "Confidence level")->capture_default_str();
    analyze->add_option("--samples", aopt.samples, "Monte Carlo draws for cd-edgington-mc")
        ->capture_default_str();
    analyze->add_option("--seed", aopt.seed, "Random seed")->capture_default_str();
    analyze->add_option("--method", method_names,
                        "Methods: ivw, hksj, edgington, cd-edgington-mc, cd-edgington-gaq");
    analyze->add_option("--curves", aopt.curve_points, "Export p-value function grids with N points");
    analyze->add_option("--out", out_format, "Output format")
        ->check(CLI::IsMember({"json", "csv"}))
        ->capture_default_str();
    analyze->add_option("--prob-below", prob_below, "Report the confidence probability P(mu < x)");
    analyze->add_option("--workers", aopt.workers, "Worker threads for Monte Carlo")
        ->capture_default_str();

    std::string tau2_csv;
    std::string tau2_format = "json";
    cdmeta::io::Tau2Options topt;
    std::optional<double> tau2_max;
    auto* tau2 = app.add_subcommand("tau2", "Confidence distribution of the heterogeneity variance");
    tau2->add_option("csv", tau2_csv, "CSV file with columns study,estimate,se")->required();
    tau2->add_option("--density-grid", topt.grid_points, "Number of grid points")
        ->capture_default_str();
    tau2->add_option("--tau2-max", tau2_max, "Upper end of the grid and of the windowed summaries");
    tau2->add_option("--level", topt.level, "Confidence level")->capture_default_str();
    tau2->add_option("--out", tau2_format, "Output format")
        ->check(CLI::IsMember({"json", "csv"}))
        ->capture_default_str();

    std::string config_path;
    std::string sim_format = "csv";
    std::optional<unsigned> sim_workers;
    auto* simulate = app.add_subcommand("simulate", "Run a simulation grid from a key=value config");
    simulate->add_option("config", config_path, "Configuration file")->required();
    simulate->add_option("--out", sim_format, "Output format")->check(CLI::IsMember({"csv"}));
    simulate->add_option("--workers", sim_workers, "Worker threads");

    app.add_subcommand("version", "Print the version");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report_error("input", e.what(), kInputFailure);
    }

    try {
        if (*analyze) {
            if (!method_names.empty()) aopt.methods = parse_methods(method_names);
            aopt.prob_below = prob_below;
            const auto ma = cdmeta::io::parse_studies(read_file(csv_path));
            const auto report = cdmeta::io::analyze(ma, aopt);
            for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
            std::cout << (out_format == "csv" ? cdmeta::io::to_csv(report)
                                              : cdmeta::io::to_json(report));
            if (report.any_failed()) {
                for (const auto& m : report.methods) {
                    if (!m.ok) {
                        report_error("numeric", std::string(cdmeta::method_name(m.method)) + ": " + m.error,
                                     kNumericFailure);
                    }
                }
                return kNumericFailure;
            }
        } else if (*tau2) {
            topt.tau2_max = tau2_max;
            const auto ma = cdmeta::io::parse_studies(read_file(tau2_csv));
            const auto report = cdmeta::io::tau2_report(ma, topt);
            for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
            std::cout << (tau2_format == "csv" ? cdmeta::io::to_csv(report)
                                               : cdmeta::io::to_json(report));
        } else if (*simulate) {
            auto cfg = cdmeta::sim::parse_config(read_file(config_path));
            if (sim_workers) cfg.options.workers = *sim_workers;
            std::vector<cdmeta::sim::SimResult> results;
            for (const auto& s : cfg.scenarios()) {
                std::cerr << "scenario k=" << s.k << " i2=" << s.i2 << " k_large=" << s.k_large
                          << '\n';
                results.push_back(cdmeta::sim::run_scenario(s, cfg.options));
            }
            cdmeta::sim::write_csv(std::cout, results);
        } else {
            std::cout << "cdmeta " << CDMETA_VERSION << '\n';
        }
    } catch (const cdmeta::InputError& e) {
        return report_error("input", e.what(), kInputFailure);
    } catch (const cdmeta::NumericError& e) {
        return report_error("numeric", e.what(), kNumericFailure);
    }
    return kOk;
}
