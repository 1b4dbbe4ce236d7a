// nexlim: simulation laboratory for non-exchangeable particle systems and
// their continuum / mean-field limits.
//
//   nexlim run   --config FILE [--out DIR]
//   nexlim sweep --config FILE [--ns 25,50,100] [--seeds K] [--out DIR]
//   nexlim check --suite arrows|metrics|conservation --config FILE
//   nexlim rate  --in sweep.csv
//
// Exit codes: 0 success, 2 config error, 3 solver error, 4 check failure.

#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "nexlim/lab.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;
constexpr int kExitCheck = 4;

std::vector<std::size_t> parse_ns(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const long v = std::stol(item);
        if (v < 1) throw nexlim::config_error("--ns entries must be >= 1");
        out.push_back(static_cast<std::size_t>(v));
    }
    if (out.empty()) throw nexlim::config_error("--ns must not be empty");
    return out;
}

int cmd_run(const std::string& config, const std::string& out_dir) {
    auto cfg = nexlim::load_scenario(config);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    const auto artifacts = nexlim::run_scenario(cfg);
    for (const auto& f : artifacts.files) std::cout << "wrote " << f << "\n";
    return kExitOk;
}

int cmd_sweep(const std::string& config, const std::string& ns_text, long seeds,
              const std::string& out_dir) {
    auto cfg = nexlim::load_scenario(config);
    if (!ns_text.empty()) cfg.ns = parse_ns(ns_text);
    if (seeds > 0) cfg.seeds = static_cast<std::size_t>(seeds);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    cfg.validate();

    const auto result = nexlim::convergence_sweep(cfg);
    std::filesystem::create_directories(cfg.out_dir);
    const auto csv = (std::filesystem::path(cfg.out_dir) / "sweep.csv").string();
    const auto json = (std::filesystem::path(cfg.out_dir) / "sweep.json").string();
    nexlim::emit_sweep_csv(csv, result);
    nexlim::emit_sweep_json(json, result);
    std::cout << "wrote " << csv << "\nwrote " << json << "\n";
    std::printf("fit: slope %.6f intercept %.6f residual %.3e (points used: %zu)\n",
                result.fit.slope, result.fit.intercept, result.fit.residual, result.fit.used);
    return kExitOk;
}

int cmd_check(const std::string& suite, const std::string& config) {
    const auto cfg = nexlim::load_scenario(config);
    bool ok = true;
    if (suite == "arrows") {
        const auto report = nexlim::consistency_suite(cfg);
        for (const auto& a : report.arrows) {
            if (!a.applicable) {
                std::printf("SKIP %-36s %s\n", a.name.c_str(), a.reason.c_str());
            } else {
                std::printf("%s %-36s deviation %.3e (threshold %.1e)\n",
                            a.pass ? "PASS" : "FAIL", a.name.c_str(), a.deviation, a.threshold);
                ok = ok && a.pass;
            }
        }
    } else if (suite == "metrics") {
        for (const auto& c : nexlim::metrics_suite()) {
            std::printf("%s %-36s deviation %.3e (threshold %.1e)\n", c.pass ? "PASS" : "FAIL",
                        c.name.c_str(), c.value, c.threshold);
            ok = ok && c.pass;
        }
    } else if (suite == "conservation") {
        for (const auto& c : nexlim::conservation_suite(cfg)) {
            std::printf("%s %-36s drift %.3e (threshold %.1e)\n", c.pass ? "PASS" : "FAIL",
                        c.name.c_str(), c.value, c.threshold);
            ok = ok && c.pass;
        }
    } else {
        throw nexlim::config_error("unknown suite '" + suite + "'");
    }
    return ok ? kExitOk : kExitCheck;
}

int cmd_rate(const std::string& input) {
    std::vector<double> ns, errors;
    nexlim::load_sweep_csv(input, ns, errors);
    const auto fit = nexlim::fit_rate(ns, errors);
    std::printf("slope %.12f\nintercept %.12f\nresidual %.6e\npoints %zu (dropped %zu zero)\n",
                fit.slope, fit.intercept, fit.residual, fit.used, fit.dropped_zero);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nexlim: particle systems, graph limits and mean-field limits"};
    app.require_subcommand(1);

    std::string config, out_dir, ns_text, suite, input;
    long seeds = 0;

    auto* run = app.add_subcommand("run", "run one scenario and write its artifacts");
    run->add_option("--config", config, "scenario TOML file")->required();
    run->add_option("--out", out_dir, "output directory override");

    auto* sweep = app.add_subcommand("sweep", "convergence sweep over N (and seeds)");
    sweep->add_option("--config", config, "scenario TOML file")->required();
    sweep->add_option("--ns", ns_text, "comma-separated N ladder override");
    sweep->add_option("--seeds", seeds, "number of seeds per N");
    sweep->add_option("--out", out_dir, "output directory override");

    auto* check = app.add_subcommand("check", "consistency / metric / conservation suites");
    check->add_option("--suite", suite, "arrows | metrics | conservation")->required();
    check->add_option("--config", config, "scenario TOML file")->required();

    auto* rate = app.add_subcommand("rate", "fit a log-log rate to a sweep CSV");
    rate->add_option("--in", input, "sweep CSV with columns n, error")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config, out_dir);
        if (sweep->parsed()) return cmd_sweep(config, ns_text, seeds, out_dir);
        if (check->parsed()) return cmd_check(suite, config);
        if (rate->parsed()) return cmd_rate(input);
    } catch (const nexlim::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const nexlim::argument_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const nexlim::io_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitSolver;
    } catch (const std::exception& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return kExitSolver;
    }
    return kExitOk;
}
