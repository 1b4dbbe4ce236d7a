#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "nexlim/dynamics.hpp"
#include "nexlim/kernels.hpp"
#include "nexlim/quadrature.hpp"

namespace nexlim {

// ---------------------------------------------------------------------------
// Continuum (graph-limit) solver on a uniform label grid. The semi-discrete
// system at M cells with the cell-average kernel IS the microscopic system at
// N = M, and both run through the same drivers, so the correspondence is
// exact to the last bit.
// ---------------------------------------------------------------------------

struct ContinuumField {
    double t = 0.0;
    std::size_t M = 0;
    std::size_t d = 1;
    Vec x;                 // M x d profile values on cell midpoints
    std::optional<Vec> m;  // weight profile

    double midpoint(std::size_t k) const {
        return (static_cast<double>(k) + 0.5) / static_cast<double>(M);
    }
    void validate() const {
        if (M < 1 || d < 1 || x.size() != M * d)
            throw argument_error("continuum field: x must hold M*d entries");
        if (!all_finite(x)) throw argument_error("continuum field: non-finite entry");
        if (m && (m->size() != M || !all_finite(*m)))
            throw argument_error("continuum field: weight profile must be M finite entries");
    }
};

// Piecewise-constant embedding of a particle vector: value x_i on cell i.
inline ContinuumField embed_step(const Vec& x, std::size_t n, std::size_t d,
                                 const Vec* m = nullptr, double t = 0.0) {
    if (n < 1 || d < 1 || x.size() != n * d) throw argument_error("embed_step: need n*d values");
    ContinuumField f;
    f.t = t;
    f.M = n;
    f.d = d;
    f.x = x;
    if (m) {
        if (m->size() != n) throw argument_error("embed_step: weight vector must have n entries");
        f.m = *m;
    }
    return f;
}

inline ContinuumField embed_step(const ParticleState& st) {
    return embed_step(st.x, st.n, st.d, st.m ? &*st.m : nullptr, st.t);
}

// Step evaluation of a field at an arbitrary label (cells are right-open).
inline const double* sample_field(const ContinuumField& f, double xi) {
    if (!(xi >= 0.0 && xi <= 1.0)) throw argument_error("sample_field: label in [0,1]");
    auto k = static_cast<std::size_t>(xi * static_cast<double>(f.M));
    if (k >= f.M) k = f.M - 1;
    return f.x.data() + k * f.d;
}

// ---------------------------------------------------------------------------
// Initial-data profiles. Structured forms so that cell averages of aligned
// step data are exact.
// ---------------------------------------------------------------------------

struct InitialProfile {
    enum class Form { constant, linear, sine, step, custom };
    Form form = Form::constant;
    double a = 0.0, b = 1.0;         // constant a; linear a + b*xi; sine a*sin(2pi b xi + c)
    double c = 0.0;
    std::vector<double> values;      // step values on equal cells
    std::function<double(double)> fn;

    static InitialProfile constant(double v) { return {Form::constant, v, 0, 0, {}, {}}; }
    static InitialProfile linear(double offset, double slope) {
        return {Form::linear, offset, slope, 0, {}, {}};
    }
    static InitialProfile sine(double amp, double freq, double phase = 0.0) {
        return {Form::sine, amp, freq, phase, {}, {}};
    }
    static InitialProfile step(std::vector<double> vals) {
        if (vals.empty()) throw argument_error("step profile: at least one value");
        return {Form::step, 0, 0, 0, std::move(vals), {}};
    }
    static InitialProfile custom(std::function<double(double)> f) {
        return {Form::custom, 0, 0, 0, {}, std::move(f)};
    }

    double eval(double xi) const {
        switch (form) {
            case Form::constant: return a;
            case Form::linear: return a + b * xi;
            case Form::sine: return a * std::sin(kTwoPi * b * xi + c);
            case Form::step: {
                auto k = static_cast<std::size_t>(xi * static_cast<double>(values.size()));
                if (k >= values.size()) k = values.size() - 1;
                return values[k];
            }
            case Form::custom: return fn(xi);
        }
        return 0.0;
    }
};

// Cell means of a label function (Gauss-Legendre(8) per cell; exact for
// constant, linear and grid-aligned step profiles).
inline Vec restrict_cell_average(const InitialProfile& x0, std::size_t N) {
    if (N < 1) throw argument_error("restrict_cell_average: N >= 1");
    Vec out(N);
    const double Nd = static_cast<double>(N);
    switch (x0.form) {
        case InitialProfile::Form::constant:
            std::fill(out.begin(), out.end(), x0.a);
            return out;
        case InitialProfile::Form::linear:
            for (std::size_t i = 0; i < N; ++i)
                out[i] = x0.a + x0.b * ((static_cast<double>(i) + 0.5) / Nd);
            return out;
        case InitialProfile::Form::step: {
            const std::size_t n = x0.values.size();
            if (N % n == 0) {
                for (std::size_t i = 0; i < N; ++i) out[i] = x0.values[i * n / N];
                return out;
            }
            for (std::size_t i = 0; i < N; ++i) {
                double num = 0.0, den = 0.0;
                const double a = static_cast<double>(i) / Nd, b = (static_cast<double>(i) + 1) / Nd;
                for (std::size_t p = 0; p < n; ++p) {
                    const double pa = static_cast<double>(p) / static_cast<double>(n);
                    const double pb = (static_cast<double>(p) + 1) / static_cast<double>(n);
                    const double len = std::min(b, pb) - std::max(a, pa);
                    if (len > 0.0) {
                        num += len * x0.values[p];
                        den += len;
                    }
                }
                out[i] = num / den;
            }
            return out;
        }
        default:
            for (std::size_t i = 0; i < N; ++i)
                out[i] = cell_mean_1d([&](double xi) { return x0.eval(xi); },
                                      static_cast<double>(i) / Nd, (static_cast<double>(i) + 1) / Nd);
            return out;
    }
}

inline Vec restrict_cell_average(const std::function<double(double)>& x0, std::size_t N) {
    return restrict_cell_average(InitialProfile::custom(x0), N);
}

// ---------------------------------------------------------------------------
// Continuum solvers (midpoint quadrature in zeta, weights 1/M; RK4 time
// stepping shared with the microscopic drivers)
// ---------------------------------------------------------------------------

inline std::vector<ContinuumField> solve_continuum(const GraphonKernel& kernel,
                                                   const Interaction& phi,
                                                   const ContinuumField& x0, double dt, double T,
                                                   const Omega& omega = Omega::none(),
                                                   Scheme scheme = Scheme::rk4,
                                                   std::size_t threads = 1) {
    x0.validate();
    const Matrix wbar = discretize_cell_average(kernel, x0.M);
    ParticleState s0;
    s0.t = x0.t;
    s0.n = x0.M;
    s0.d = x0.d;
    s0.x = x0.x;
    auto traj = run_static_graph(wbar, phi, omega, s0, dt, T, scheme, threads);
    std::vector<ContinuumField> out;
    out.reserve(traj.size());
    for (auto& st : traj) out.push_back(embed_step(st));
    return out;
}

inline std::vector<ContinuumField> solve_continuum_weights(const Interaction& phi,
                                                           const WeightDynamics& psi,
                                                           const ContinuumField& f0, double dt,
                                                           double T, Scheme scheme = Scheme::rk4,
                                                           std::size_t threads = 1) {
    f0.validate();
    if (!f0.m) throw argument_error("solve_continuum_weights: weight profile m required");
    for (double v : *f0.m)
        if (!(v > 0.0)) throw argument_error("solve_continuum_weights: m0 must be positive");
    ParticleState s0;
    s0.t = f0.t;
    s0.n = f0.M;
    s0.d = f0.d;
    s0.x = f0.x;
    s0.m = *f0.m;
    auto traj = run_opinion_weights(phi, psi, s0, dt, T, scheme, threads);
    std::vector<ContinuumField> out;
    out.reserve(traj.size());
    for (auto& st : traj) out.push_back(embed_step(st));
    return out;
}

struct AdaptiveContinuumSnapshot {
    ContinuumField field;
    GraphonKernel coupling;  // evolving step kernel on the solver grid
};

inline std::vector<AdaptiveContinuumSnapshot> solve_continuum_adaptive(
    const Omega& omega, const Interaction& phi, const std::function<double(double, double)>& H,
    double eps, const ContinuumField& x0, const GraphonKernel& W0, double dt, double T,
    Scheme scheme = Scheme::rk4, std::size_t threads = 1) {
    x0.validate();
    if (x0.d != 1) throw argument_error("solve_continuum_adaptive: scalar phases only");
    if (!W0.is_step() || W0.n != x0.M)
        throw argument_error("solve_continuum_adaptive: W0 must be a step kernel with n = M blocks");
    CoupledNetworkState s0;
    s0.t = x0.t;
    s0.n = x0.M;
    s0.x = x0.x;
    s0.W = Matrix(x0.M, x0.M);
    s0.W.a = W0.values;
    auto traj = run_adaptive_kuramoto(omega, phi, H, eps, s0, dt, T, scheme, threads);
    std::vector<AdaptiveContinuumSnapshot> out;
    out.reserve(traj.size());
    for (auto& st : traj) {
        AdaptiveContinuumSnapshot snap;
        snap.field = embed_step(st.x, st.n, 1, nullptr, st.t);
        snap.coupling = step_from_matrix(st.W);
        out.push_back(std::move(snap));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Field comparison (coarse fields prolong by step extension, never by
// interpolation) and Hoelder machinery
// ---------------------------------------------------------------------------

namespace detail {
inline void check_compatible(const ContinuumField& a, const ContinuumField& b) {
    if (a.d != b.d) throw argument_error("field comparison: dimensions differ");
    if (a.M == b.M) return;
    const std::size_t lo = std::min(a.M, b.M), hi = std::max(a.M, b.M);
    if (hi % lo != 0)
        throw argument_error("field comparison: resolutions must match or nest by an integer factor");
}
}  // namespace detail

inline double l2_error(const ContinuumField& a, const ContinuumField& b) {
    detail::check_compatible(a, b);
    const std::size_t M = std::max(a.M, b.M), d = a.d;
    const std::size_t ra = M / a.M, rb = M / b.M;
    double acc = 0.0;
    for (std::size_t k = 0; k < M; ++k) {
        const double* xa = a.x.data() + (k / ra) * d;
        const double* xb = b.x.data() + (k / rb) * d;
        double cell = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double diff = xa[c] - xb[c];
            cell += diff * diff;
        }
        acc += cell;
    }
    return std::sqrt(acc / static_cast<double>(M));
}

inline double linf_error(const ContinuumField& a, const ContinuumField& b) {
    detail::check_compatible(a, b);
    const std::size_t M = std::max(a.M, b.M), d = a.d;
    const std::size_t ra = M / a.M, rb = M / b.M;
    double best = 0.0;
    for (std::size_t k = 0; k < M; ++k) {
        const double* xa = a.x.data() + (k / ra) * d;
        const double* xb = b.x.data() + (k / rb) * d;
        double cell = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double diff = xa[c] - xb[c];
            cell += diff * diff;
        }
        best = std::max(best, cell);
    }
    return std::sqrt(best);
}

// Empirical alpha-Hoelder constant of grid samples:
// max_{k != l} |x_k - x_l| / |xi_k - xi_l|^alpha.
inline double holder_estimate(const ContinuumField& f, double alpha) {
    f.validate();
    if (!(alpha > 0.0 && alpha <= 1.0)) throw argument_error("holder_estimate: alpha in (0,1]");
    double best = 0.0;
    for (std::size_t k = 0; k < f.M; ++k)
        for (std::size_t l = k + 1; l < f.M; ++l) {
            double n2 = 0.0;
            for (std::size_t c = 0; c < f.d; ++c) {
                const double diff = f.x[k * f.d + c] - f.x[l * f.d + c];
                n2 += diff * diff;
            }
            const double dxi = f.midpoint(l) - f.midpoint(k);
            best = std::max(best, std::sqrt(n2) / std::pow(dxi, alpha));
        }
    return best;
}

}  // namespace nexlim
