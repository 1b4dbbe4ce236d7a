#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "nexlim/config.hpp"
#include "nexlim/continuum.hpp"
#include "nexlim/dynamics.hpp"
#include "nexlim/kernels.hpp"
#include "nexlim/meanfield.hpp"
#include "nexlim/measures.hpp"

namespace nexlim {

inline constexpr const char* kResultSchema = "nexlim.result.v1";

inline std::size_t thread_budget() {
    if (const char* env = std::getenv("NEXLIM_THREADS")) {
        const long v = std::atol(env);
        if (v >= 1) return static_cast<std::size_t>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

// Uniform checkpoint step indices over [0, steps], endpoints included. The
// theorems' sup over t is approximated by the max over these samples.
inline std::vector<std::size_t> checkpoint_steps(std::size_t steps, std::size_t count) {
    std::vector<std::size_t> idx;
    if (steps == 0) return {0};
    count = std::max<std::size_t>(count, 2);
    for (std::size_t j = 0; j < count; ++j) {
        const auto s = static_cast<std::size_t>(std::llround(
            static_cast<double>(j) * static_cast<double>(steps) / static_cast<double>(count - 1)));
        if (idx.empty() || idx.back() != s) idx.push_back(s);
    }
    return idx;
}

// ---------------------------------------------------------------------------
// Rate fitting: least squares on (log N, log error)
// ---------------------------------------------------------------------------

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double residual = 0.0;
    std::size_t used = 0;
    std::size_t dropped_zero = 0;
};

inline RateFit fit_rate(const std::vector<double>& ns, const std::vector<double>& errors) {
    if (ns.size() != errors.size()) throw argument_error("fit_rate: length mismatch");
    std::vector<double> lx, ly;
    RateFit fit;
    for (std::size_t i = 0; i < ns.size(); ++i) {
        if (errors[i] < 0.0) throw argument_error("fit_rate: errors must be >= 0");
        if (errors[i] == 0.0) {
            ++fit.dropped_zero;
            continue;
        }
        lx.push_back(std::log(ns[i]));
        ly.push_back(std::log(errors[i]));
    }
    fit.used = lx.size();
    if (fit.used < 3) throw argument_error("fit_rate: need at least 3 positive errors");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const auto n = static_cast<double>(lx.size());
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sx += lx[i];
        sy += ly[i];
        sxx += lx[i] * lx[i];
        sxy += lx[i] * ly[i];
    }
    const double denom = n * sxx - sx * sx;
    if (denom == 0.0) throw argument_error("fit_rate: degenerate abscissae");
    fit.slope = (n * sxy - sx * sy) / denom;
    fit.intercept = (sy - fit.slope * sx) / n;
    double rss = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        const double r = ly[i] - (fit.intercept + fit.slope * lx[i]);
        rss += r * r;
    }
    fit.residual = std::sqrt(rss / n);
    return fit;
}

// ---------------------------------------------------------------------------
// Reference solution and per-job error for convergence sweeps (static graph
// scenarios). Reference: continuum solve at M_ref = ref_factor * max(N) with
// dt_ref = dt / 4, sampled at the checkpoint grid.
// ---------------------------------------------------------------------------

struct ReferenceSolution {
    std::size_t M = 0;
    std::vector<ContinuumField> fields;  // one per checkpoint
};

inline ReferenceSolution sweep_reference(const ScenarioConfig& cfg, std::size_t threads = 1) {
    if (cfg.dynamics != DynamicsKind::static_graph)
        throw config_error("convergence sweeps cover static-graph scenarios");
    const std::size_t M = cfg.ref_factor * cfg.ns.back();
    const auto kernel = cfg.discretization == Discretization::sampled_w
                            ? first_moment_kernel(RandomGraphLaw::bernoulli(make_kernel(cfg)))
                            : make_kernel(cfg);
    const auto phi = make_phi(cfg);
    const auto omega = make_omega(cfg);
    const double dt_ref = cfg.dt / static_cast<double>(cfg.ref_dt_divisor);
    const std::size_t steps = step_count(dt_ref, cfg.T);
    const auto marks = checkpoint_steps(step_count(cfg.dt, cfg.T), cfg.checkpoints);

    const Matrix wbar = discretize_cell_average(kernel, M);
    ParticleState s0;
    s0.n = M;
    s0.d = 1;
    s0.x = restrict_cell_average(make_x0(cfg), M);

    ReferenceSolution ref;
    ref.M = M;
    ref.fields.reserve(marks.size());
    std::size_t next = 0;
    StaticGraphOde drv{&wbar, phi, omega, M, 1, true, threads};
    FlatOde ode;
    ode.rhs = [&](double t, const Vec& y, Vec& dy) { drv(t, y, dy); };
    ode.observe = [&](std::size_t step, double t, const Vec& y) {
        if (next < marks.size() && step == marks[next] * cfg.ref_dt_divisor) {
            ref.fields.push_back(embed_step(y, M, 1, nullptr, t));
            ++next;
        }
    };
    Vec y = s0.x;
    integrate_flat(y, 0.0, dt_ref, steps, cfg.scheme, ode);
    if (ref.fields.size() != marks.size())
        throw argument_error("sweep_reference: checkpoint collection out of sync");
    return ref;
}

struct SweepRow {
    std::size_t N = 0;
    std::uint64_t seed = 0;
    double error = 0.0;
    double wall_sec = 0.0;
};

// Run one microscopic job and return the sup-over-checkpoints error against
// the reference.
inline double sweep_job_error(const ScenarioConfig& cfg, const ReferenceSolution& ref,
                              std::size_t N, std::uint64_t seed) {
    const auto kernel = make_kernel(cfg);
    const auto phi = make_phi(cfg);
    const auto omega = make_omega(cfg);
    const auto profile = make_x0(cfg);

    Vec labels;
    Matrix W;
    switch (cfg.discretization) {
        case Discretization::pointwise:
            labels = midpoint_grid(N);
            W = discretize_pointwise(kernel, labels);
            break;
        case Discretization::cell_average:
            labels = midpoint_grid(N);
            W = discretize_cell_average(kernel, N);
            break;
        case Discretization::sampled_w:
            W = sample_w_random(kernel, N, cfg.mode, seed, &labels);
            break;
    }
    Vec x0(N);
    if (cfg.discretization == Discretization::cell_average)
        x0 = restrict_cell_average(profile, N);
    else
        for (std::size_t i = 0; i < N; ++i) x0[i] = profile.eval(labels[i]);

    const std::size_t steps = step_count(cfg.dt, cfg.T);
    const auto marks = checkpoint_steps(steps, cfg.checkpoints);
    const bool per_particle = cfg.discretization == Discretization::sampled_w;

    double worst = 0.0;
    std::size_t next = 0;
    StaticGraphOde drv{&W, phi, omega, N, 1, true, 1};
    FlatOde ode;
    ode.rhs = [&](double t, const Vec& y, Vec& dy) { drv(t, y, dy); };
    ode.observe = [&](std::size_t step, double, const Vec& y) {
        if (next >= marks.size() || step != marks[next]) return;
        const ContinuumField& rf = ref.fields[next];
        double err = 0.0;
        if (per_particle) {
            // || x^N - P_Z x(t, .) || at the sampled labels
            double acc = 0.0, mx = 0.0;
            for (std::size_t i = 0; i < N; ++i) {
                const double diff = y[i] - *sample_field(rf, labels[i]);
                acc += diff * diff;
                mx = std::max(mx, std::fabs(diff));
            }
            err = cfg.metric == "l2" ? std::sqrt(acc / static_cast<double>(N)) : mx;
        } else {
            const auto field = embed_step(y, N, 1);
            err = cfg.metric == "l2" ? l2_error(field, rf) : linf_error(field, rf);
        }
        worst = std::max(worst, err);
        ++next;
    };
    Vec y = x0;
    integrate_flat(y, 0.0, cfg.dt, steps, cfg.scheme, ode);
    return worst;
}

struct SweepResult {
    std::string scenario;
    std::string metric;
    std::vector<SweepRow> rows;  // sorted by (N, seed)
    RateFit fit;
    double reference_M = 0;
};

// Work pool over (N, seed) jobs; each job writes only its own slot, and the
// aggregation order is fixed, so results do not depend on the thread count.
inline SweepResult convergence_sweep(const ScenarioConfig& cfg) {
    cfg.validate();
    const std::size_t pool = thread_budget();
    const auto ref = sweep_reference(cfg, pool);
    for (std::size_t N : cfg.ns)
        if (ref.M % N != 0 && cfg.discretization != Discretization::sampled_w)
            throw config_error("reference resolution must nest every N (got M_ref = " +
                               std::to_string(ref.M) + ", N = " + std::to_string(N) + ")");

    std::vector<SweepRow> rows;
    for (std::size_t N : cfg.ns)
        for (std::uint64_t seed = 1; seed <= cfg.seeds; ++seed) rows.push_back({N, seed, 0.0, 0.0});

    std::atomic<std::size_t> cursor{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t j = cursor.fetch_add(1);
            if (j >= rows.size()) return;
            const auto start = std::chrono::steady_clock::now();
            rows[j].error = sweep_job_error(cfg, ref, rows[j].N, rows[j].seed);
            rows[j].wall_sec =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        }
    };
    if (pool <= 1 || rows.size() <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t t = 0; t < std::min(pool, rows.size()); ++t) threads.emplace_back(worker);
        for (auto& th : threads) th.join();
    }

    SweepResult out;
    out.scenario = cfg.name;
    out.metric = cfg.metric;
    out.rows = rows;
    out.reference_M = static_cast<double>(ref.M);

    // fit on per-N medians (equals the single value when seeds == 1)
    std::vector<double> ns, errs;
    for (std::size_t N : cfg.ns) {
        std::vector<double> per;
        for (const auto& r : rows)
            if (r.N == N) per.push_back(r.error);
        std::sort(per.begin(), per.end());
        ns.push_back(static_cast<double>(N));
        errs.push_back(per[per.size() / 2]);
    }
    std::size_t positive = 0;
    for (double e : errs)
        if (e > 0.0) ++positive;
    if (positive >= 3) out.fit = fit_rate(ns, errs);
    return out;
}

// ---------------------------------------------------------------------------
// Monte-Carlo random-graph study
// ---------------------------------------------------------------------------

struct TailStats {
    std::size_t N = 0;
    double q25 = 0.0, median = 0.0, q75 = 0.0;
    double tail_fraction = 0.0;  // share of trials with error >= c / sqrt(N)
    std::size_t trials = 0;
};

inline std::vector<TailStats> monte_carlo_random_graph(const ScenarioConfig& cfg,
                                                       std::size_t trials) {
    if (cfg.discretization != Discretization::sampled_w)
        throw config_error("monte_carlo_random_graph: sweep.discretization must be sampled");
    if (trials < 1) throw config_error("monte_carlo_random_graph: trials >= 1");
    const std::size_t pool = thread_budget();
    const auto ref = sweep_reference(cfg, pool);

    std::vector<TailStats> out;
    for (std::size_t N : cfg.ns) {
        std::vector<double> errs(trials, 0.0);
        std::atomic<std::size_t> cursor{0};
        auto worker = [&]() {
            for (;;) {
                const std::size_t j = cursor.fetch_add(1);
                if (j >= trials) return;
                errs[j] = sweep_job_error(cfg, ref, N, j + 1);
            }
        };
        if (pool <= 1 || trials <= 1) {
            worker();
        } else {
            std::vector<std::thread> threads;
            for (std::size_t t = 0; t < std::min(pool, trials); ++t) threads.emplace_back(worker);
            for (auto& th : threads) th.join();
        }
        std::sort(errs.begin(), errs.end());
        TailStats st;
        st.N = N;
        st.trials = trials;
        st.q25 = errs[trials / 4];
        st.median = errs[trials / 2];
        st.q75 = errs[(3 * trials) / 4];
        const double bar = cfg.tail_c / std::sqrt(static_cast<double>(N));
        std::size_t above = 0;
        for (double e : errs)
            if (e >= bar) ++above;
        st.tail_fraction = static_cast<double>(above) / static_cast<double>(trials);
        out.push_back(st);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cross-limit consistency suite (arrows 1-5)
// ---------------------------------------------------------------------------

struct ArrowReport {
    std::string name;
    bool applicable = false;
    std::string reason;  // set when skipped
    double deviation = 0.0;
    double threshold = 0.0;
    bool pass = false;
};

struct ConsistencyReport {
    std::vector<ArrowReport> arrows;
    bool all_pass() const {
        for (const auto& a : arrows)
            if (a.applicable && !a.pass) return false;
        return true;
    }
};

inline ConsistencyReport consistency_suite(const ScenarioConfig& cfg) {
    cfg.validate();
    ConsistencyReport report;
    const auto kernel = make_kernel(cfg);
    const auto phi = make_phi(cfg);
    const std::size_t K = cfg.run_n;
    const Vec x0 = restrict_cell_average(make_x0(cfg), K);
    const double dt = cfg.dt, T = cfg.T;
    const bool label_free = kernel.form == GraphonKernel::Form::constant;
    const bool linear_phi = phi.form == Interaction::Form::linear_diff;

    // Arrow 1: continuum run == single-atom-per-fiber mean-field run, bitwise.
    {
        ArrowReport a;
        a.name = "arrow1_continuum_to_nonexchangeable";
        a.threshold = 0.0;
        a.applicable = true;
        const auto kbar = step_from_matrix(discretize_cell_average(kernel, K));
        ContinuumField f0;
        f0.M = K;
        f0.d = 1;
        f0.x = x0;
        const auto cont = solve_continuum(kbar, phi, f0, dt, T);
        const auto mfl = solve_mfl_nonexchangeable(kbar, phi,
                                                   MFParticleEnsemble::single_atom(x0, K, 1), dt, T);
        double dev = 0.0;
        for (std::size_t s = 0; s < cont.size(); ++s)
            dev = std::max(dev, max_abs_diff(cont[s].x, mfl[s].x));
        a.deviation = dev;
        a.pass = dev <= a.threshold;
        report.arrows.push_back(a);
    }

    // Arrow 2: label-blind continuum run collapses onto the exchangeable run.
    {
        ArrowReport a;
        a.name = "arrow2_continuum_to_exchangeable";
        a.threshold = 1e-12;
        if (!label_free) {
            a.reason = "kernel is not constant (coupling depends on labels)";
        } else if (kernel.c != 1.0 && !linear_phi) {
            a.reason = "constant kernel with c != 1 needs a linear interaction to fold";
        } else {
            a.applicable = true;
            ContinuumField f0;
            f0.M = K;
            f0.d = 1;
            f0.x = x0;
            // scale phi by the constant coupling value
            Interaction cphi = phi;
            if (cphi.form == Interaction::Form::linear_diff) cphi.lambda *= kernel.c;
            const auto cont = solve_continuum(kernel, phi, f0, dt, T);
            AtomCloud c0;
            c0.d = 1;
            c0.x = x0;
            c0.a.assign(K, 1.0 / static_cast<double>(K));
            std::vector<AtomCloud> mfl;
            if (kernel.c == 1.0) {
                mfl = solve_mfl_exchangeable(phi, c0, dt, T);
            } else {
                mfl = solve_mfl_exchangeable(cphi, c0, dt, T);
            }
            double dev = 0.0;
            for (std::size_t s = 0; s < cont.size(); ++s)
                dev = std::max(dev, max_abs_diff(cont[s].x, mfl[s].x));
            a.deviation = dev;
            a.pass = dev <= a.threshold;
        }
        report.arrows.push_back(a);
    }

    // Arrow 3: first-moment closure for linear interactions on spread fibers.
    {
        ArrowReport a;
        a.name = "arrow3_first_moment_closure";
        a.threshold = 1e-8;
        if (!linear_phi) {
            a.reason = "interaction is not linear (no closed first-moment equation)";
        } else {
            a.applicable = true;
            // one shared coupling matrix for both solvers: pointwise values of
            // the pre-averaged step kernel equal its cell averages
            const auto kbar = step_from_matrix(discretize_cell_average(kernel, K));
            const std::size_t P = std::max<std::size_t>(cfg.atoms_per_fiber, 3);
            MFParticleEnsemble ens0;
            ens0.K = K;
            ens0.d = 1;
            ens0.off.resize(K + 1);
            for (std::size_t k = 0; k <= K; ++k) ens0.off[k] = k * P;
            ens0.x.resize(K * P);
            ens0.a.assign(K * P, 1.0 / static_cast<double>(P));
            const double width = cfg.fiber_width > 0 ? cfg.fiber_width : 0.2;
            for (std::size_t k = 0; k < K; ++k)
                for (std::size_t p = 0; p < P; ++p)
                    ens0.x[k * P + p] =
                        x0[k] + width * (counter_uniform(cfg.x0_seed, Stream::init, k, p) - 0.5);
            const auto mfl = solve_mfl_nonexchangeable(kbar, phi, ens0, dt, T);

            ContinuumField f0;
            f0.M = K;
            f0.d = 1;
            f0.x = fiber_mean(ens0.as_fibered());
            const auto cont = solve_continuum(kbar, phi, f0, dt, T);

            double dev = 0.0;
            for (std::size_t s = 0; s < cont.size(); ++s)
                dev = std::max(dev, max_abs_diff(fiber_mean(mfl[s].as_fibered()), cont[s].x));
            a.deviation = dev;
            a.pass = dev <= a.threshold;
        }
        report.arrows.push_back(a);
    }

    // Arrow 4: collapse of the non-exchangeable solution equals the
    // exchangeable solution for label-free coupling.
    {
        ArrowReport a;
        a.name = "arrow4_collapse_nonexchangeable";
        a.threshold = 1e-12;
        if (!label_free) {
            a.reason = "kernel is not constant (coupling depends on labels)";
        } else if (kernel.c != 1.0 && !linear_phi) {
            a.reason = "constant kernel with c != 1 needs a linear interaction to fold";
        } else {
            a.applicable = true;
            const std::size_t P = 2;
            MFParticleEnsemble ens0;
            ens0.K = K;
            ens0.d = 1;
            ens0.off.resize(K + 1);
            for (std::size_t k = 0; k <= K; ++k) ens0.off[k] = k * P;
            ens0.x.resize(K * P);
            ens0.a.assign(K * P, 1.0 / static_cast<double>(P));
            for (std::size_t k = 0; k < K; ++k)
                for (std::size_t p = 0; p < P; ++p)
                    ens0.x[k * P + p] =
                        x0[k] + 0.1 * (counter_uniform(cfg.x0_seed + 1, Stream::init, k, p) - 0.5);
            const auto mfl = solve_mfl_nonexchangeable(kernel, phi, ens0, dt, T);

            // atoms (x_b, a_b / K) in atom order form the collapsed measure
            AtomCloud c0;
            c0.d = 1;
            c0.x = ens0.x;
            c0.a.resize(K * P);
            for (std::size_t b = 0; b < K * P; ++b) c0.a[b] = ens0.a[b] / static_cast<double>(K);
            Interaction cphi = phi;
            if (cphi.form == Interaction::Form::linear_diff) cphi.lambda *= kernel.c;
            const auto exch = solve_mfl_exchangeable(kernel.c == 1.0 ? phi : cphi, c0, dt, T);

            double dev = 0.0;
            for (std::size_t s = 0; s < mfl.size(); ++s)
                dev = std::max(dev, max_abs_diff(mfl[s].x, exch[s].x));
            a.deviation = dev;
            a.pass = dev <= a.threshold;
        }
        report.arrows.push_back(a);
    }

    // Arrow 5: m-weighted collapse of the continuum-with-weights run equals
    // the weighted exchangeable mean-field run.
    {
        ArrowReport a;
        a.name = "arrow5_weighted_collapse";
        a.threshold = 1e-10;
        const auto psi = make_psi(cfg);
        if (!label_free) {
            a.reason = "kernel is not constant (coupling depends on labels)";
        } else if (psi.form != WeightDynamics::Form::conserving_S || psi.k != 1) {
            a.reason = "weight dynamics is not a k = 1 conserving S form";
        } else {
            a.applicable = true;
            ContinuumField f0;
            f0.M = K;
            f0.d = 1;
            f0.x = x0;
            f0.m = restrict_cell_average(make_m0(cfg), K);
            const auto cont = solve_continuum_weights(phi, psi, f0, dt, T);

            AtomCloud c0;
            c0.d = 1;
            c0.x = x0;
            c0.a.assign(K, 1.0 / static_cast<double>(K));
            c0.m = *f0.m;
            const auto mfl = solve_mfl_weighted(phi, psi, c0, dt, T);

            double dev = 0.0;
            for (std::size_t s = 0; s < cont.size(); ++s) {
                dev = std::max(dev, max_abs_diff(cont[s].x, mfl[s].x));
                dev = std::max(dev, max_abs_diff(*cont[s].m, *mfl[s].m));
            }
            a.deviation = dev;
            a.pass = dev <= a.threshold;
        }
        report.arrows.push_back(a);
    }

    return report;
}

// ---------------------------------------------------------------------------
// Scenario runner: trajectory/field CSVs plus a JSON summary
// ---------------------------------------------------------------------------

struct RunArtifacts {
    std::vector<std::string> files;
    nlohmann::json summary;
};

namespace detail {

inline void write_trajectory_csv(const std::string& path,
                                 const std::vector<ParticleState>& checkpoints) {
    std::ofstream os(path);
    if (!os) throw io_error("cannot open for writing: " + path);
    const bool has_m = !checkpoints.empty() && checkpoints.front().m.has_value();
    const std::size_t d = checkpoints.empty() ? 1 : checkpoints.front().d;
    os << "t,i";
    for (std::size_t c = 0; c < d; ++c) os << ",x" << c;
    if (has_m) os << ",m";
    os << "\n";
    for (const auto& st : checkpoints) {
        ParticleState out = reduced_output(st);
        for (std::size_t i = 0; i < out.n; ++i) {
            os << format_double(out.t) << ',' << i;
            for (std::size_t c = 0; c < d; ++c) os << ',' << format_double(out.x[i * d + c]);
            if (has_m) os << ',' << format_double((*out.m)[i]);
            os << "\n";
        }
    }
    if (!os) throw io_error("write failed: " + path);
}

inline void write_field_csv(const std::string& path,
                            const std::vector<ContinuumField>& checkpoints) {
    std::ofstream os(path);
    if (!os) throw io_error("cannot open for writing: " + path);
    const bool has_m = !checkpoints.empty() && checkpoints.front().m.has_value();
    const std::size_t d = checkpoints.empty() ? 1 : checkpoints.front().d;
    os << "t,xi";
    for (std::size_t c = 0; c < d; ++c) os << ",x" << c;
    if (has_m) os << ",m";
    os << "\n";
    for (const auto& f : checkpoints)
        for (std::size_t k = 0; k < f.M; ++k) {
            os << format_double(f.t) << ',' << format_double(f.midpoint(k));
            for (std::size_t c = 0; c < d; ++c) os << ',' << format_double(f.x[k * d + c]);
            if (has_m) os << ',' << format_double((*f.m)[k]);
            os << "\n";
        }
    if (!os) throw io_error("write failed: " + path);
}

inline void write_ensemble_csv(const std::string& path,
                               const std::vector<MFParticleEnsemble>& checkpoints) {
    std::ofstream os(path);
    if (!os) throw io_error("cannot open for writing: " + path);
    const bool has_m = !checkpoints.empty() && checkpoints.front().m.has_value();
    const std::size_t d = checkpoints.empty() ? 1 : checkpoints.front().d;
    os << "t,xi,atom_index";
    for (std::size_t c = 0; c < d; ++c) os << ",x" << c;
    os << ",a";
    if (has_m) os << ",m";
    os << "\n";
    for (const auto& e : checkpoints)
        for (std::size_t k = 0; k < e.K; ++k)
            for (std::size_t b = e.off[k]; b < e.off[k + 1]; ++b) {
                os << format_double(e.t) << ',' << format_double(e.midpoint(k)) << ','
                   << (b - e.off[k]);
                for (std::size_t c = 0; c < d; ++c) os << ',' << format_double(e.x[b * d + c]);
                os << ',' << format_double(e.a[b]);
                if (has_m) os << ',' << format_double((*e.m)[b]);
                os << "\n";
            }
    if (!os) throw io_error("write failed: " + path);
}

template <class State>
std::vector<State> pick_checkpoints(const std::vector<State>& traj, std::size_t count) {
    std::vector<State> out;
    for (std::size_t idx : checkpoint_steps(traj.size() - 1, count)) out.push_back(traj[idx]);
    return out;
}

}  // namespace detail

inline RunArtifacts run_scenario(const ScenarioConfig& cfg) {
    cfg.validate();
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    const auto t_start = std::chrono::steady_clock::now();
    const std::size_t N = cfg.run_n;
    const auto phi = make_phi(cfg);
    const auto omega = make_omega(cfg);
    const auto profile = make_x0(cfg);

    RunArtifacts out;
    out.summary["schema"] = kResultSchema;
    out.summary["scenario"] = cfg.name;
    out.summary["n"] = N;
    out.summary["dt"] = cfg.dt;
    out.summary["T"] = cfg.T;
    out.summary["checkpoints"] = cfg.checkpoints;
    out.summary["sup_over_t_note"] =
        "sup over t approximated by the max over the checkpoint grid";

    auto add_file = [&](const std::string& name) {
        const std::string path = (fs::path(cfg.out_dir) / name).string();
        out.files.push_back(path);
        return path;
    };

    switch (cfg.dynamics) {
        case DynamicsKind::static_graph:
        case DynamicsKind::general_label: {
            const auto kernel = make_kernel(cfg);
            Vec labels = midpoint_grid(N);
            Matrix W;
            Vec x0(N);
            if (cfg.discretization == Discretization::sampled_w) {
                W = sample_w_random(kernel, N, cfg.mode, 1, &labels);
                for (std::size_t i = 0; i < N; ++i) x0[i] = profile.eval(labels[i]);
            } else if (cfg.discretization == Discretization::pointwise) {
                W = discretize_pointwise(kernel, labels);
                for (std::size_t i = 0; i < N; ++i) x0[i] = profile.eval(labels[i]);
            } else {
                W = discretize_cell_average(kernel, N);
                x0 = restrict_cell_average(profile, N);
            }
            ParticleState s0;
            s0.n = N;
            s0.d = 1;
            s0.x = x0;
            const auto traj = run_static_graph(W, phi, omega, s0, cfg.dt, cfg.T, cfg.scheme);
            const auto marks = detail::pick_checkpoints(traj, cfg.checkpoints);
            detail::write_trajectory_csv(add_file("trajectory.csv"), marks);
            double spread0 = min_gap(traj.front()), spreadT = 0.0;
            double lo = traj.back().x[0], hi = traj.back().x[0];
            for (double v : traj.back().x) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            spreadT = hi - lo;
            lo = traj.front().x[0];
            hi = traj.front().x[0];
            for (double v : traj.front().x) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            out.summary["initial_spread"] = hi - lo;
            out.summary["terminal_spread"] = spreadT;
            out.summary["initial_min_gap"] = spread0;
            break;
        }
        case DynamicsKind::opinion_weights:
        case DynamicsKind::pairwise_competition: {
            ParticleState s0;
            s0.n = N;
            s0.d = 1;
            s0.x = restrict_cell_average(profile, N);
            s0.m = restrict_cell_average(make_m0(cfg), N);
            const auto psi = cfg.dynamics == DynamicsKind::pairwise_competition
                                 ? WeightDynamics::pairwise_competition(make_s(cfg),
                                                                        cfg.s_name == "sgn")
                                 : make_psi(cfg);
            const auto traj = run_opinion_weights(phi, psi, s0, cfg.dt, cfg.T, cfg.scheme);
            const auto marks = detail::pick_checkpoints(traj, cfg.checkpoints);
            detail::write_trajectory_csv(add_file("trajectory.csv"), marks);
            double total0 = 0.0, worst_drift = 0.0;
            for (double v : *s0.m) total0 += v;
            for (const auto& st : traj) {
                double tot = 0.0;
                for (double v : *st.m) tot += v;
                worst_drift = std::max(worst_drift, std::fabs(tot - total0));
            }
            out.summary["total_weight"] = total0;
            out.summary["total_weight_drift"] = worst_drift;
            break;
        }
        case DynamicsKind::adaptive_kuramoto: {
            CoupledNetworkState s0;
            s0.n = N;
            s0.x = restrict_cell_average(profile, N);
            s0.W = Matrix(N, N, cfg.W0_value);
            const auto traj = run_adaptive_kuramoto(omega, phi, make_H(cfg), cfg.eps, s0, cfg.dt,
                                                    cfg.T, cfg.scheme);
            const auto marks = detail::pick_checkpoints(traj, cfg.checkpoints);
            std::vector<ParticleState> phases;
            for (const auto& st : marks) {
                ParticleState p;
                p.t = st.t;
                p.n = N;
                p.d = 1;
                p.x = st.x;
                phases.push_back(std::move(p));
            }
            detail::write_trajectory_csv(add_file("trajectory.csv"), phases);
            for (std::size_t j = 0; j < marks.size(); ++j) {
                char name[64];
                std::snprintf(name, sizeof(name), "weights_%03zu.csv", j);
                save_matrix_csv(add_file(name), marks[j].W);
            }
            out.summary["eps"] = cfg.eps;
            break;
        }
    }

    out.summary["runtime_sec"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    out.summary["files"] = out.files;
    const std::string spath = (fs::path(cfg.out_dir) / "summary.json").string();
    std::ofstream os(spath);
    if (!os) throw io_error("cannot open for writing: " + spath);
    os << out.summary.dump(2) << "\n";
    out.files.push_back(spath);
    return out;
}

// ---------------------------------------------------------------------------
// Emission: stable column order, 17 significant digits, versioned JSON
// ---------------------------------------------------------------------------

inline void emit_sweep_csv(const std::string& path, const SweepResult& res) {
    std::ofstream os(path);
    if (!os) throw io_error("cannot open for writing: " + path);
    os << "n,seed,error,wall_sec\n";
    for (const auto& r : res.rows)
        os << r.N << ',' << r.seed << ',' << format_double(r.error) << ','
           << format_double(r.wall_sec) << "\n";
    if (!os) throw io_error("write failed: " + path);
}

inline nlohmann::json sweep_to_json(const SweepResult& res) {
    nlohmann::json j;
    j["schema"] = kResultSchema;
    j["scenario"] = res.scenario;
    j["metric"] = res.metric;
    j["reference_M"] = res.reference_M;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : res.rows)
        j["rows"].push_back({{"n", r.N}, {"seed", r.seed}, {"error", r.error},
                             {"wall_sec", r.wall_sec}});
    j["fit"] = {{"slope", res.fit.slope},
                {"intercept", res.fit.intercept},
                {"residual", res.fit.residual},
                {"used", res.fit.used},
                {"dropped_zero", res.fit.dropped_zero}};
    return j;
}

inline void emit_sweep_json(const std::string& path, const SweepResult& res) {
    std::ofstream os(path);
    if (!os) throw io_error("cannot open for writing: " + path);
    os << sweep_to_json(res).dump(2) << "\n";
}

inline SweepResult load_sweep_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open: " + path);
    nlohmann::json j;
    is >> j;
    if (j.value("schema", "") != kResultSchema)
        throw io_error(path + ": unexpected schema '" + j.value("schema", "") + "'");
    SweepResult res;
    res.scenario = j.value("scenario", "");
    res.metric = j.value("metric", "");
    res.reference_M = j.value("reference_M", 0.0);
    for (const auto& r : j["rows"])
        res.rows.push_back({r["n"].get<std::size_t>(), r["seed"].get<std::uint64_t>(),
                            r["error"].get<double>(), r["wall_sec"].get<double>()});
    res.fit.slope = j["fit"]["slope"].get<double>();
    res.fit.intercept = j["fit"]["intercept"].get<double>();
    res.fit.residual = j["fit"]["residual"].get<double>();
    res.fit.used = j["fit"]["used"].get<std::size_t>();
    res.fit.dropped_zero = j["fit"]["dropped_zero"].get<std::size_t>();
    return res;
}

// Sweep CSV reader for `rate --in`.
inline void load_sweep_csv(const std::string& path, std::vector<double>& ns,
                           std::vector<double>& errors) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open: " + path);
    std::string line;
    if (!std::getline(is, line)) throw io_error(path + ": empty file");
    const auto head = split_csv_line(line);
    std::size_t ncol = 0, ecol = 0;
    bool found_n = false, found_e = false;
    for (std::size_t c = 0; c < head.size(); ++c) {
        if (head[c] == "n") ncol = c, found_n = true;
        if (head[c] == "error") ecol = c, found_e = true;
    }
    if (!found_n || !found_e) throw io_error(path + ": need columns 'n' and 'error'");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() <= std::max(ncol, ecol)) throw io_error(path + ": ragged row");
        ns.push_back(std::stod(cells[ncol]));
        errors.push_back(std::stod(cells[ecol]));
    }
}


// ---------------------------------------------------------------------------
// Self-check suites shared by `nexlim check` and the acceptance harness
// ---------------------------------------------------------------------------

struct CheckLine {
    std::string name;
    double value = 0.0;      // measured worst-case deviation
    double threshold = 0.0;  // pass iff value <= threshold
    bool pass = false;
};

namespace detail {
inline LabeledEmpiricalMeasure random_probability_measure(std::uint64_t seed,
                                                          std::size_t max_atoms,
                                                          double span = 4.0) {
    const std::size_t n = 1 + counter_bits(seed, Stream::init, 0, 0) % max_atoms;
    LabeledEmpiricalMeasure mu;
    mu.d = 1;
    mu.xi.assign(n, 0.0);
    mu.x.resize(n);
    mu.mass.resize(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mu.x[i] = span * (counter_uniform(seed, Stream::init, i, 1) - 0.5);
        mu.mass[i] = 0.05 + counter_uniform(seed, Stream::init, i, 2);
        total += mu.mass[i];
    }
    for (double& m : mu.mass) m /= total;
    for (double m : mu.mass) mu.total += m;
    return mu;
}
}  // namespace detail

// Metric toolkit checks: W1 closed forms, LP agreement with the 1-d solver,
// two-point bounded-Lipschitz values, and the metric axioms.
inline std::vector<CheckLine> metrics_suite() {
    std::vector<CheckLine> lines;

    {
        CheckLine c{.name = "w1_1d_closed_forms", .threshold = 1e-12};
        double worst = std::fabs(wasserstein1_1d({0.0}, {1.0}, {1.0}, {1.0}) - 1.0);
        worst = std::max(worst,
                         std::fabs(wasserstein1_1d({0.0, 1.0}, {0.5, 0.5}, {0.5}, {1.0}) - 0.5));
        worst = std::max(worst, std::fabs(wasserstein1_1d({2.0, -1.0}, {0.25, 0.75},
                                                          {2.0, -1.0}, {0.25, 0.75})));
        c.value = worst;
        c.pass = c.value <= c.threshold;
        lines.push_back(c);
    }
    {
        CheckLine c{.name = "w1_lp_matches_1d_50_instances", .threshold = 1e-9};
        double worst = 0.0;
        for (std::uint64_t trial = 0; trial < 50; ++trial) {
            const auto mu = detail::random_probability_measure(52100 + trial, 20);
            const auto nu = detail::random_probability_measure(52400 + trial, 20);
            const double lp = wasserstein1_lp(mu, nu, GroundMetric::euclidean());
            const double cdf = wasserstein1_1d(mu.x, mu.mass, nu.x, nu.mass);
            worst = std::max(worst, std::fabs(lp - cdf));
        }
        c.value = worst;
        c.pass = c.value <= c.threshold;
        lines.push_back(c);
    }
    {
        CheckLine c{.name = "bl_two_point_min_dist_2", .threshold = 1e-9};
        double worst = 0.0;
        for (std::uint64_t trial = 0; trial < 100; ++trial) {
            const double a = 8.0 * (counter_uniform(trial, Stream::init, 5, 1) - 0.5);
            const double b = 8.0 * (counter_uniform(trial, Stream::init, 6, 2) - 0.5);
            LabeledEmpiricalMeasure mu, nu;
            mu.d = nu.d = 1;
            mu.xi = nu.xi = {0.0};
            mu.mass = nu.mass = {1.0};
            mu.total = nu.total = 1.0;
            mu.x = {a};
            nu.x = {b};
            const double d = bounded_lipschitz(mu, nu);
            worst = std::max(worst, std::fabs(d - std::min(std::fabs(a - b), 2.0)));
        }
        c.value = worst;
        c.pass = c.value <= c.threshold;
        lines.push_back(c);
    }
    {
        CheckLine c{.name = "metric_axioms_200_instances", .threshold = 1e-9};
        double worst = 0.0;
        const auto metric = GroundMetric::euclidean();
        for (std::uint64_t trial = 0; trial < 200; ++trial) {
            const auto a = detail::random_probability_measure(61000 + trial, 32);
            const auto b = detail::random_probability_measure(62000 + trial, 32);
            const auto cm = detail::random_probability_measure(63000 + trial, 32);
            const double wab = wasserstein1_lp(a, b, metric);
            const double wba = wasserstein1_lp(b, a, metric);
            const double wac = wasserstein1_lp(a, cm, metric);
            const double wcb = wasserstein1_lp(cm, b, metric);
            worst = std::max(worst, std::fabs(wab - wba));
            worst = std::max(worst, wab - (wac + wcb));
            worst = std::max(worst, wasserstein1_lp(a, a, metric));
            const double bab = bounded_lipschitz(a, b, metric);
            const double bba = bounded_lipschitz(b, a, metric);
            const double bac = bounded_lipschitz(a, cm, metric);
            const double bcb = bounded_lipschitz(cm, b, metric);
            worst = std::max(worst, std::fabs(bab - bba));
            worst = std::max(worst, bab - (bac + bcb));
            worst = std::max(worst, bounded_lipschitz(a, a, metric));
        }
        c.value = worst;
        c.pass = c.value <= c.threshold;
        lines.push_back(c);
    }
    return lines;
}

// Conservation checks for the configured weighted scenario plus the
// per-fiber transport-mass invariance of a mean-field run.
inline std::vector<CheckLine> conservation_suite(const ScenarioConfig& cfg) {
    cfg.validate();
    std::vector<CheckLine> lines;
    const auto phi = make_phi(cfg);
    const std::size_t N = cfg.run_n;

    {
        CheckLine c{.name = "total_weight_drift_" + cfg.psi_name, .threshold = 1e-10};
        ParticleState s0;
        s0.n = N;
        s0.d = 1;
        s0.x = restrict_cell_average(make_x0(cfg), N);
        s0.m = restrict_cell_average(make_m0(cfg), N);
        const auto psi = cfg.dynamics == DynamicsKind::pairwise_competition
                             ? WeightDynamics::pairwise_competition(make_s(cfg),
                                                                    cfg.s_name == "sgn")
                             : make_psi(cfg);
        const auto traj = run_opinion_weights(phi, psi, s0, cfg.dt, cfg.T, cfg.scheme);
        double total0 = 0.0;
        for (double v : *s0.m) total0 += v;
        double worst = 0.0;
        for (const auto& st : traj) {
            double tot = 0.0;
            for (double v : *st.m) tot += v;
            worst = std::max(worst, std::fabs(tot - total0));
        }
        c.value = worst / std::fabs(total0);
        c.pass = c.value <= c.threshold;
        lines.push_back(c);
    }
    {
        CheckLine c{.name = "mfl_transport_mass_drift", .threshold = 1e-12};
        const std::size_t K = std::min<std::size_t>(N, 16), P = 3;
        MFParticleEnsemble ens0;
        ens0.K = K;
        ens0.d = 1;
        ens0.off.resize(K + 1);
        for (std::size_t k = 0; k <= K; ++k) ens0.off[k] = k * P;
        ens0.x.resize(K * P);
        ens0.a.assign(K * P, 1.0 / static_cast<double>(P));
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t p = 0; p < P; ++p)
                ens0.x[k * P + p] = counter_uniform(3, Stream::init, k, p);
        const auto kernel = cfg.kernel_preset == "step" ? GraphonKernel::exp_abs_diff()
                                                        : make_kernel(cfg);
        const auto phi_mfl = phi.singular ? Interaction::sine() : phi;
        const auto traj = solve_mfl_nonexchangeable(kernel, phi_mfl, ens0, cfg.dt, cfg.T);
        double worst = 0.0;
        for (const auto& snap : traj)
            for (std::size_t k = 0; k < K; ++k) {
                double s = 0.0;
                for (std::size_t b = snap.off[k]; b < snap.off[k + 1]; ++b) s += snap.a[b];
                worst = std::max(worst, std::fabs(s - 1.0));
            }
        c.value = worst;
        c.pass = c.value <= c.threshold;
        lines.push_back(c);
    }
    return lines;
}

}  // namespace nexlim
