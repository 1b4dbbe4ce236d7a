#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "nexlim/continuum.hpp"
#include "nexlim/dynamics.hpp"
#include "nexlim/kernels.hpp"
#include "nexlim/toml.hpp"

namespace nexlim {

// ---------------------------------------------------------------------------
// Scenario configuration. Everything a run or sweep needs, parsed from the
// TOML scenario file with field-level diagnostics.
// ---------------------------------------------------------------------------

enum class DynamicsKind { static_graph, general_label, opinion_weights, adaptive_kuramoto,
                          pairwise_competition };

enum class Discretization { pointwise, cell_average, sampled_w };

struct ScenarioConfig {
    std::string name;
    DynamicsKind dynamics = DynamicsKind::static_graph;

    // kernel
    std::string kernel_preset = "constant";
    double kernel_value = 1.0;
    double kernel_radius = 0.2;
    std::string kernel_file;

    // interaction and weight dynamics
    std::string phi_name = "linear_diff";
    double phi_lambda = 1.0;
    double phi_radius = 0.5;
    bool has_omega = false;
    double omega_value = 0.0;
    std::string psi_name = "none";     // none | conserving_s | pairwise_competition
    std::string s_name = "sgn";        // sgn | sin
    std::string S_name = "sin_diff";   // conserving-S preset (k = 1, antisymmetric)
    double S_gain = 1.0;
    double eps = 1.0;                  // adaptive relaxation rate
    std::string H_name = "neg_cos";    // neg_cos | zero

    // initial data
    std::string x0_name = "linear";    // constant | linear | sine | step | random
    double x0_offset = 0.0;
    double x0_slope = 1.0;
    double x0_amplitude = 1.0;
    double x0_frequency = 1.0;
    std::vector<double> x0_values;     // step profile
    std::uint64_t x0_seed = 1;
    double x0_lo = 0.0, x0_hi = 1.0;   // random profile range
    std::string m0_name = "constant";
    double m0_value = 1.0;
    double m0_slope = 0.0;
    std::string fiber_law = "uniform";
    double fiber_width = 0.0;
    std::size_t atoms_per_fiber = 1;
    double W0_value = 0.0;             // adaptive initial edge weight (constant)

    // integrator
    double dt = 1e-2;
    double T = 1.0;
    Scheme scheme = Scheme::rk4;

    // sweep
    std::vector<std::size_t> ns = {25, 50, 100, 200};
    std::size_t seeds = 1;
    SampleMode mode = SampleMode::rd;
    Discretization discretization = Discretization::cell_average;
    std::string metric = "l2";  // l2 | linf
    std::size_t checkpoints = 11;
    std::size_t run_n = 16;
    double tail_c = 1.0;        // tail threshold c/sqrt(N) in the Monte-Carlo study
    std::size_t ref_factor = 4; // M_ref = ref_factor * max(N)
    std::size_t ref_dt_divisor = 4;  // dt_ref = dt / divisor

    std::string out_dir = "out";
    std::string config_dir;  // directory of the scenario file, for relative paths

    void validate() const {
        if (ns.empty()) throw config_error("sweep.ns must not be empty");
        for (std::size_t i = 0; i + 1 < ns.size(); ++i)
            if (ns[i] >= ns[i + 1]) throw config_error("sweep.ns must be strictly increasing");
        if (!(dt > 0.0) || !(T >= 0.0)) throw config_error("integrator.dt/T out of range");
        const double steps = std::round(T / dt);
        if (std::fabs(steps * dt - T) > 1e-12 * std::max(1.0, T))
            throw config_error("integrator.T must be an integer multiple of dt");
        if (checkpoints < 2) throw config_error("sweep.checkpoints must be >= 2");
        if (run_n < 1) throw config_error("sweep.N must be >= 1");
    }
};

inline DynamicsKind dynamics_from_name(const std::string& s) {
    if (s == "static") return DynamicsKind::static_graph;
    if (s == "general_label") return DynamicsKind::general_label;
    if (s == "opinion_weights") return DynamicsKind::opinion_weights;
    if (s == "adaptive_kuramoto") return DynamicsKind::adaptive_kuramoto;
    if (s == "pairwise_competition") return DynamicsKind::pairwise_competition;
    throw config_error("unknown dynamics '" + s + "'");
}

inline ScenarioConfig scenario_from_toml(const TomlTable& t) {
    ScenarioConfig c;
    c.name = t.get_string("scenario.name", "scenario");
    c.dynamics = dynamics_from_name(t.get_string("scenario.dynamics", "static"));

    c.kernel_preset = t.get_string("kernel.preset", "constant");
    c.kernel_value = t.get_number("kernel.value", 1.0);
    c.kernel_radius = t.get_number("kernel.radius", 0.2);
    c.kernel_file = t.get_string("kernel.file", "");

    c.phi_name = t.get_string("dynamics.phi", "linear_diff");
    c.phi_lambda = t.get_number("dynamics.lambda", 1.0);
    c.phi_radius = t.get_number("dynamics.radius", 0.5);
    c.has_omega = t.has("dynamics.omega");
    c.omega_value = t.get_number("dynamics.omega", 0.0);
    c.psi_name = t.get_string("dynamics.psi", "none");
    c.s_name = t.get_string("dynamics.s", "sgn");
    c.S_name = t.get_string("dynamics.S", "sin_diff");
    c.S_gain = t.get_number("dynamics.S_gain", 1.0);
    c.eps = t.get_number("dynamics.eps", 1.0);
    c.H_name = t.get_string("dynamics.H", "neg_cos");

    c.x0_name = t.get_string("initial.x0", "linear");
    c.x0_offset = t.get_number("initial.offset", 0.0);
    c.x0_slope = t.get_number("initial.slope", 1.0);
    c.x0_amplitude = t.get_number("initial.amplitude", 1.0);
    c.x0_frequency = t.get_number("initial.frequency", 1.0);
    if (t.has("initial.values")) c.x0_values = t.get_number_array("initial.values");
    c.x0_seed = static_cast<std::uint64_t>(t.get_integer("initial.seed", 1));
    c.x0_lo = t.get_number("initial.lo", 0.0);
    c.x0_hi = t.get_number("initial.hi", 1.0);
    c.m0_name = t.get_string("initial.m0", "constant");
    c.m0_value = t.get_number("initial.m0_value", 1.0);
    c.m0_slope = t.get_number("initial.m0_slope", 0.0);
    c.fiber_law = t.get_string("initial.fiber_law", "uniform");
    c.fiber_width = t.get_number("initial.fiber_width", 0.0);
    c.atoms_per_fiber = static_cast<std::size_t>(t.get_integer("initial.atoms_per_fiber", 1));
    c.W0_value = t.get_number("initial.W0", 0.0);

    c.dt = t.get_number("integrator.dt", 1e-2);
    c.T = t.get_number("integrator.T", 1.0);
    c.scheme = scheme_from_name(t.get_string("integrator.scheme", "rk4"));

    if (t.has("sweep.ns")) {
        c.ns.clear();
        for (double v : t.get_number_array("sweep.ns")) {
            if (v < 1) throw config_error("sweep.ns entries must be >= 1");
            c.ns.push_back(static_cast<std::size_t>(std::lround(v)));
        }
    }
    c.seeds = static_cast<std::size_t>(t.get_integer("sweep.seeds", 1));
    const std::string mode = t.get_string("sweep.mode", "rd");
    if (mode == "rr")
        c.mode = SampleMode::rr;
    else if (mode == "rd")
        c.mode = SampleMode::rd;
    else
        throw config_error("sweep.mode must be rr or rd");
    const std::string disc = t.get_string("sweep.discretization", "cell_average");
    if (disc == "pointwise")
        c.discretization = Discretization::pointwise;
    else if (disc == "cell_average")
        c.discretization = Discretization::cell_average;
    else if (disc == "sampled" || disc == "sampled_w")
        c.discretization = Discretization::sampled_w;
    else
        throw config_error("unknown sweep.discretization '" + disc + "'");
    c.metric = t.get_string("sweep.metric", "l2");
    if (c.metric != "l2" && c.metric != "linf")
        throw config_error("sweep.metric must be l2 or linf");
    c.checkpoints = static_cast<std::size_t>(t.get_integer("sweep.checkpoints", 11));
    c.run_n = static_cast<std::size_t>(t.get_integer("sweep.N", 16));
    c.tail_c = t.get_number("sweep.tail_c", 1.0);
    c.ref_factor = static_cast<std::size_t>(t.get_integer("sweep.ref_factor", 4));
    c.ref_dt_divisor = static_cast<std::size_t>(t.get_integer("sweep.ref_dt_divisor", 4));
    if (c.ref_factor < 1 || c.ref_dt_divisor < 1)
        throw config_error("sweep.ref_factor and sweep.ref_dt_divisor must be >= 1");

    c.out_dir = t.get_string("output.dir", "out");
    c.validate();
    return c;
}

inline ScenarioConfig load_scenario(const std::string& path) {
    ScenarioConfig cfg = scenario_from_toml(load_toml(path));
    cfg.config_dir = std::filesystem::path(path).parent_path().string();
    return cfg;
}

// ---------------------------------------------------------------------------
// Builders from config fields
// ---------------------------------------------------------------------------

inline GraphonKernel make_kernel(const ScenarioConfig& c) {
    if (c.kernel_preset == "constant") return GraphonKernel::constant(c.kernel_value);
    if (c.kernel_preset == "torus_band") return GraphonKernel::torus_band(c.kernel_radius);
    if (c.kernel_preset == "product") return GraphonKernel::product();
    if (c.kernel_preset == "exp_abs_diff") return GraphonKernel::exp_abs_diff();
    if (c.kernel_preset == "half_plane") return GraphonKernel::half_plane();
    if (c.kernel_preset == "step") {
        if (c.kernel_file.empty()) throw config_error("kernel.file required for step kernels");
        std::filesystem::path p(c.kernel_file);
        if (p.is_relative() && !c.config_dir.empty()) p = std::filesystem::path(c.config_dir) / p;
        return load_step_csv(p.string());
    }
    throw config_error("unknown kernel preset '" + c.kernel_preset + "'");
}

inline Interaction make_phi(const ScenarioConfig& c) {
    if (c.phi_name == "zero") return Interaction::zero();
    if (c.phi_name == "linear_diff") return Interaction::linear_diff(c.phi_lambda);
    if (c.phi_name == "sine") return Interaction::sine();
    if (c.phi_name == "hk_bump") return Interaction::hk_bump(c.phi_radius);
    if (c.phi_name == "sgn_diff") return Interaction::sgn_diff();
    throw config_error("unknown interaction '" + c.phi_name + "'");
}

inline Omega make_omega(const ScenarioConfig& c) {
    return c.has_omega ? Omega::constant(c.omega_value) : Omega::none();
}

inline std::function<double(double)> make_s(const ScenarioConfig& c) {
    if (c.s_name == "sgn")
        return [](double u) { return u > 0 ? 1.0 : (u < 0 ? -1.0 : 0.0); };
    if (c.s_name == "sin") return [](double u) { return std::sin(u); };
    throw config_error("unknown competition kernel '" + c.s_name + "'");
}

inline WeightDynamics make_psi(const ScenarioConfig& c) {
    if (c.psi_name == "none") return WeightDynamics::none();
    if (c.psi_name == "conserving_s") {
        if (c.S_name != "sin_diff") throw config_error("unknown S preset '" + c.S_name + "'");
        const double gain = c.S_gain;
        return WeightDynamics::conserving1(
            [gain](std::span<const double> a, std::span<const double> b) {
                return gain * std::sin(b[0] - a[0]);
            });
    }
    if (c.psi_name == "pairwise_competition")
        return WeightDynamics::pairwise_competition(make_s(c), c.s_name == "sgn");
    throw config_error("unknown weight dynamics '" + c.psi_name + "'");
}

inline std::function<double(double, double)> make_H(const ScenarioConfig& c) {
    if (c.H_name == "neg_cos") return [](double x, double y) { return -std::cos(y - x); };
    if (c.H_name == "zero") return [](double, double) { return 0.0; };
    throw config_error("unknown adaptation target '" + c.H_name + "'");
}

inline InitialProfile make_x0(const ScenarioConfig& c) {
    if (c.x0_name == "constant") return InitialProfile::constant(c.x0_offset);
    if (c.x0_name == "linear") return InitialProfile::linear(c.x0_offset, c.x0_slope);
    if (c.x0_name == "sine")
        return InitialProfile::sine(c.x0_amplitude, c.x0_frequency, c.x0_offset);
    if (c.x0_name == "step") {
        if (c.x0_values.empty()) throw config_error("initial.values required for step x0");
        return InitialProfile::step(c.x0_values);
    }
    if (c.x0_name == "random") {
        const std::uint64_t seed = c.x0_seed;
        const double lo = c.x0_lo, hi = c.x0_hi;
        // frozen per-label noise: piecewise constant on a fine hidden grid so
        // that restriction at any N is well defined and reproducible
        return InitialProfile::custom([seed, lo, hi](double xi) {
            const auto cell = static_cast<std::uint64_t>(xi * 4096.0);
            return lo + (hi - lo) * counter_uniform(seed, Stream::init, cell, 0);
        });
    }
    throw config_error("unknown x0 preset '" + c.x0_name + "'");
}

inline InitialProfile make_m0(const ScenarioConfig& c) {
    if (c.m0_name == "constant") return InitialProfile::constant(c.m0_value);
    if (c.m0_name == "linear") return InitialProfile::linear(c.m0_value, c.m0_slope);
    throw config_error("unknown m0 preset '" + c.m0_name + "'");
}

}  // namespace nexlim
