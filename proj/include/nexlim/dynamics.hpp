#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "nexlim/engine.hpp"
#include "nexlim/errors.hpp"
#include "nexlim/integrate.hpp"
#include "nexlim/interaction.hpp"
#include "nexlim/matrix.hpp"

namespace nexlim {

inline constexpr double kGapFloor = 1e-9;
inline constexpr double kTwoPi = 6.283185307179586476925287;

// ---------------------------------------------------------------------------
// States
// ---------------------------------------------------------------------------

struct ParticleState {
    double t = 0.0;
    std::size_t n = 0;
    std::size_t d = 1;
    Vec x;                  // n x d positions (phases for torus models)
    std::optional<Vec> m;   // agent weights
    bool torus = false;

    void validate() const {
        if (n < 1 || d < 1 || x.size() != n * d)
            throw argument_error("particle state: x must hold n*d entries");
        if (!all_finite(x)) throw argument_error("particle state: non-finite position");
        if (m && (m->size() != n || !all_finite(*m)))
            throw argument_error("particle state: weights must be n finite entries");
    }
};

struct CoupledNetworkState {
    double t = 0.0;
    std::size_t n = 0;
    Vec x;      // n phases
    Matrix W;   // n x n evolving edge weights (not necessarily symmetric)

    void validate() const {
        if (n < 1 || x.size() != n || W.rows != n || W.cols != n)
            throw argument_error("coupled network state: dimensions disagree");
        if (!all_finite(x) || !all_finite(W.a.data(), W.a.size()))
            throw argument_error("coupled network state: non-finite entry");
    }
};

inline double reduce_phase(double x) {
    const double y = x - kTwoPi * std::floor(x / kTwoPi);
    return y >= kTwoPi ? 0.0 : y;
}

// Positions reduced to [0, 2pi) for output; internal states stay unwrapped.
inline ParticleState reduced_output(ParticleState s) {
    if (s.torus)
        for (double& v : s.x) v = reduce_phase(v);
    return s;
}

struct OpinionDerivative {
    Vec dx;
    Vec dm;
};

struct AdaptiveDerivative {
    Vec dx;
    Matrix dW;
};

// ---------------------------------------------------------------------------
// Right-hand sides
// ---------------------------------------------------------------------------

// Static weighted graph: dx_i = (1/N) sum_j W_ij phi(x_i, x_j), ascending j.
inline Vec rhs_static(const ParticleState& st, const Matrix& W, const Interaction& phi) {
    st.validate();
    if (W.rows != st.n || W.cols != st.n)
        throw argument_error("rhs_static: weight matrix must be N x N");
    Vec dx(st.n * st.d);
    pair_drift(W.a.data(), W.cols, phi, st.n, st.d, st.x.data(), nullptr,
               1.0 / static_cast<double>(st.n), dx.data(), /*allow_fused=*/false);
    return dx;
}

// Label-coupled system: dx_i = (1/N) sum_j G(t, i/N, j/N, x_i, x_j).
inline Vec rhs_general_label(const ParticleState& st, const GeneralCoupling& G) {
    st.validate();
    const std::size_t n = st.n, d = st.d;
    const double Nd = static_cast<double>(n);
    const double pref = 1.0 / Nd;
    Vec dx(n * d, 0.0);
    std::vector<double> g(d);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> acc(d, 0.0);
        const double xi = static_cast<double>(i + 1) / Nd;
        for (std::size_t j = 0; j < n; ++j) {
            const double zeta = static_cast<double>(j + 1) / Nd;
            G(st.t, xi, zeta, std::span<const double>(st.x.data() + i * d, d),
              std::span<const double>(st.x.data() + j * d, d), std::span<double>(g.data(), d));
            for (std::size_t k = 0; k < d; ++k) acc[k] += g[k];
        }
        for (std::size_t k = 0; k < d; ++k) dx[i * d + k] = pref * acc[k];
    }
    return dx;
}

namespace detail {

// dm for the k-fold conserving weight dynamics, literal nested sums
// (cost N^(k+1), k restricted to 2).
inline void conserving_dm(const WeightDynamics& psi, std::size_t n, std::size_t d,
                          const double* x, const double* m, double* dm) {
    const double Nd = static_cast<double>(n);
    if (psi.k == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                acc += m[j] * psi.S2(std::span<const double>(x + i * d, d),
                                     std::span<const double>(x + j * d, d));
            dm[i] = m[i] * (acc / Nd);
        }
    } else if (psi.k == 2) {
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j1 = 0; j1 < n; ++j1)
                for (std::size_t j2 = 0; j2 < n; ++j2)
                    acc += m[j1] * m[j2] *
                           psi.S3(std::span<const double>(x + i * d, d),
                                  std::span<const double>(x + j1 * d, d),
                                  std::span<const double>(x + j2 * d, d));
            dm[i] = m[i] * (acc / (Nd * Nd));
        }
    } else {
        throw capability_error("conserving_S: arity k <= 2 only");
    }
}

// dm for pairwise competition, factored to O(N^2):
//   dm_i = (1/(2N^2)) m_i [ P_i Q_i + sum_j m_j P_j s(x_i - x_j) ],
//   P_a = sum_k m_k phi(x_a, x_k),  Q_i = sum_j m_j s(x_i - x_j).
// The double sum over (k, j) factorizes because s does not involve k.
inline void pairwise_competition_dm(const Interaction& phi,
                                    const std::function<double(double)>& s, std::size_t n,
                                    const double* x, const double* m, const double* P,
                                    double* dm) {
    const double Nd = static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        double Q = 0.0, R = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double sij = s(x[i] - x[j]);
            Q += m[j] * sij;
            R += m[j] * P[j] * sij;
        }
        dm[i] = m[i] * ((P[i] * Q + R) / (2.0 * Nd * Nd));
    }
    (void)phi;
}

inline void weight_dm(const Interaction& phi, const WeightDynamics& psi, std::size_t n,
                      std::size_t d, const double* x, const double* m, const double* P,
                      double* dm) {
    switch (psi.form) {
        case WeightDynamics::Form::none:
            std::fill(dm, dm + n, 0.0);
            return;
        case WeightDynamics::Form::conserving_S:
            conserving_dm(psi, n, d, x, m, dm);
            return;
        case WeightDynamics::Form::pairwise_competition:
            if (d != 1) throw capability_error("pairwise competition: d = 1 only");
            pairwise_competition_dm(phi, psi.s, n, x, m, P, dm);
            return;
        default:
            throw argument_error("weight dynamics form not valid for agent weights");
    }
}

}  // namespace detail

// Opinion dynamics with agent weights: dx_i = (1/N) sum_j m_j phi(x_i, x_j),
// dm_i per the configured weight dynamics.
inline OpinionDerivative rhs_opinion_weights(const ParticleState& st, const Interaction& phi,
                                             const WeightDynamics& psi) {
    st.validate();
    if (!st.m) throw argument_error("rhs_opinion_weights: agent weights m required");
    if (psi.form != WeightDynamics::Form::none &&
        psi.form != WeightDynamics::Form::conserving_S &&
        psi.form != WeightDynamics::Form::pairwise_competition)
        throw argument_error("rhs_opinion_weights: psi must be none/conserving_S/pairwise");
    const std::size_t n = st.n, d = st.d;
    OpinionDerivative out;
    out.dx.resize(n * d);
    out.dm.resize(n);
    pair_drift(nullptr, 0, phi, n, d, st.x.data(), st.m->data(), 1.0 / static_cast<double>(n),
               out.dx.data(), /*allow_fused=*/false);
    if (psi.form == WeightDynamics::Form::pairwise_competition) {
        if (d != 1) throw capability_error("pairwise competition: d = 1 only");
        Vec P(n);
        for (std::size_t a = 0; a < n; ++a) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) acc += (*st.m)[k] * phi.eval1(st.x[a], st.x[k]);
            P[a] = acc;
        }
        detail::pairwise_competition_dm(phi, psi.s, n, st.x.data(), st.m->data(), P.data(),
                                        out.dm.data());
    } else {
        detail::weight_dm(phi, psi, n, d, st.x.data(), st.m->data(), nullptr, out.dm.data());
    }
    return out;
}

// Pairwise competition model (singular weight dynamics, d = 1).
inline OpinionDerivative rhs_pairwise_competition(const ParticleState& st, const Interaction& phi,
                                                  const std::function<double(double)>& s) {
    st.validate();
    if (st.d != 1) throw capability_error("pairwise competition: d = 1 only");
    if (!st.m) throw argument_error("pairwise competition: agent weights m required");
    const std::size_t n = st.n;
    OpinionDerivative out;
    out.dx.resize(n);
    out.dm.resize(n);
    Vec P(n);
    const double pref = 1.0 / static_cast<double>(n);
    for (std::size_t a = 0; a < n; ++a) {
        double acc = 0.0;
        for (std::size_t k = 0; k < n; ++k) acc += (*st.m)[k] * phi.eval1(st.x[a], st.x[k]);
        P[a] = acc;
        out.dx[a] = pref * acc;
    }
    detail::pairwise_competition_dm(phi, s, n, st.x.data(), st.m->data(), P.data(),
                                    out.dm.data());
    return out;
}

// Adaptive Kuramoto network: dx_i = omega(xi_i, x_i, t) + (1/N) sum_j W_ij
// phi(x_i, x_j), dW_ij = -eps (W_ij + H(x_i, x_j)). Labels are cell midpoints.
inline AdaptiveDerivative rhs_adaptive_kuramoto(const CoupledNetworkState& st, const Omega& omega,
                                                const Interaction& phi,
                                                const std::function<double(double, double)>& H,
                                                double eps) {
    st.validate();
    if (!(eps > 0.0)) throw argument_error("adaptive kuramoto: eps must be > 0");
    const std::size_t n = st.n;
    AdaptiveDerivative out;
    out.dx.resize(n);
    out.dW = Matrix(n, n);
    pair_drift(st.W.a.data(), n, phi, n, 1, st.x.data(), nullptr, 1.0 / static_cast<double>(n),
               out.dx.data(), /*allow_fused=*/false);
    if (omega.present())
        for (std::size_t i = 0; i < n; ++i)
            out.dx[i] = omega.eval((static_cast<double>(i) + 0.5) / static_cast<double>(n),
                                   st.x[i], st.t) +
                        out.dx[i];
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            out.dW(i, j) = -eps * (st.W(i, j) + H(st.x[i], st.x[j]));
    return out;
}

// Smallest pairwise opinion gap (d = 1).
inline double min_gap(const ParticleState& st) {
    if (st.d != 1) throw argument_error("min_gap: d = 1 only");
    if (st.n < 2) return std::numeric_limits<double>::infinity();
    Vec s = st.x;
    std::sort(s.begin(), s.end());
    double g = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < s.size(); ++i) g = std::min(g, s[i + 1] - s[i]);
    return g;
}

inline std::function<void(double, const Vec&)> separation_guard(std::size_t n,
                                                                double gap_floor = kGapFloor) {
    return [n, gap_floor](double t, const Vec& y) {
        Vec s(y.begin(), y.begin() + static_cast<long>(n));
        std::sort(s.begin(), s.end());
        for (std::size_t i = 0; i + 1 < n; ++i)
            if (s[i + 1] - s[i] < gap_floor)
                throw separation_error("singular dynamics: opinion gap fell below " +
                                       std::to_string(gap_floor) + " at t = " + std::to_string(t));
    };
}

// ---------------------------------------------------------------------------
// Solver drivers over flat state vectors (shared with the continuum and
// mean-field modules; identical floating-point paths on identical inputs).
// ---------------------------------------------------------------------------

struct StaticGraphOde {
    const Matrix* W;
    Interaction phi;
    Omega omega;
    std::size_t n, d;
    bool fused = true;
    std::size_t threads = 1;

    void operator()(double t, const Vec& y, Vec& dy) const {
        pair_drift(W->a.data(), W->cols, phi, n, d, y.data(), nullptr,
                   1.0 / static_cast<double>(n), dy.data(), fused, threads);
        if (omega.present()) {
            if (d != 1) throw argument_error("intrinsic omega: scalar states only");
            for (std::size_t i = 0; i < n; ++i)
                dy[i] = omega.eval((static_cast<double>(i) + 0.5) / static_cast<double>(n), y[i],
                                   t) +
                        dy[i];
        }
    }
};

struct OpinionOde {
    Interaction phi;
    WeightDynamics psi;
    std::size_t n, d;
    bool fused = true;
    std::size_t threads = 1;

    // layout: [x (n*d), m (n)]
    void operator()(double /*t*/, const Vec& y, Vec& dy) const {
        const double* x = y.data();
        const double* m = y.data() + n * d;
        if (psi.form == WeightDynamics::Form::pairwise_competition) {
            if (d != 1) throw capability_error("pairwise competition: d = 1 only");
            Vec P(n);
            const double pref = 1.0 / static_cast<double>(n);
            for (std::size_t a = 0; a < n; ++a) {
                double acc = 0.0;
                for (std::size_t k = 0; k < n; ++k) acc += m[k] * phi.eval1(x[a], x[k]);
                P[a] = acc;
                dy[a] = pref * acc;
            }
            detail::pairwise_competition_dm(phi, psi.s, n, x, m, P.data(), dy.data() + n);
            return;
        }
        pair_drift(nullptr, 0, phi, n, d, x, m, 1.0 / static_cast<double>(n), dy.data(), fused,
                   threads);
        detail::weight_dm(phi, psi, n, d, x, m, nullptr, dy.data() + n * d);
    }
};

struct AdaptiveKuramotoOde {
    Omega omega;
    Interaction phi;
    std::function<double(double, double)> H;
    double eps;
    std::size_t n;
    bool fused = true;
    std::size_t threads = 1;

    // layout: [x (n), W (n*n) row-major]
    void operator()(double t, const Vec& y, Vec& dy) const {
        const double* x = y.data();
        const double* W = y.data() + n;
        pair_drift(W, n, phi, n, 1, x, nullptr, 1.0 / static_cast<double>(n), dy.data(), fused,
                   threads);
        if (omega.present())
            for (std::size_t i = 0; i < n; ++i)
                dy[i] = omega.eval((static_cast<double>(i) + 0.5) / static_cast<double>(n), x[i],
                                   t) +
                        dy[i];
        double* dW = dy.data() + n;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                dW[i * n + j] = -eps * (W[i * n + j] + H(x[i], x[j]));
    }
};

// ---------------------------------------------------------------------------
// Trajectory-producing integrators
// ---------------------------------------------------------------------------

// Generic entry point: any rhs over particle states, fixed-step integration,
// states reported at every grid time. Torus states are reduced on output.
inline std::vector<ParticleState> integrate(
    const std::function<Vec(const ParticleState&)>& rhs, const ParticleState& s0, double dt,
    double T, Scheme scheme = Scheme::rk4, bool guard_separation = false,
    double gap_floor = kGapFloor) {
    s0.validate();
    const std::size_t steps = step_count(dt, T);
    std::vector<ParticleState> traj;
    traj.reserve(steps + 1);
    ParticleState cur = s0;
    Vec y = s0.x;
    FlatOde ode;
    ode.rhs = [&](double t, const Vec& yy, Vec& dy) {
        cur.t = t;
        cur.x = yy;
        dy = rhs(cur);
        if (dy.size() != yy.size()) throw argument_error("integrate: rhs size mismatch");
    };
    if (guard_separation) ode.guard = separation_guard(s0.n, gap_floor);
    ode.observe = [&](std::size_t, double t, const Vec& yy) {
        ParticleState snap = s0;
        snap.t = t;
        snap.x = yy;
        traj.push_back(reduced_output(std::move(snap)));
    };
    integrate_flat(y, s0.t, dt, steps, scheme, ode);
    return traj;
}

// Trajectory of a static-graph run (engine path, fused forms allowed).
inline std::vector<ParticleState> run_static_graph(const Matrix& W, const Interaction& phi,
                                                   const Omega& omega, const ParticleState& s0,
                                                   double dt, double T,
                                                   Scheme scheme = Scheme::rk4,
                                                   std::size_t threads = 1) {
    s0.validate();
    if (W.rows != s0.n || W.cols != s0.n)
        throw argument_error("run_static_graph: W must be N x N");
    const std::size_t steps = step_count(dt, T);
    std::vector<ParticleState> traj;
    traj.reserve(steps + 1);
    StaticGraphOde drv{&W, phi, omega, s0.n, s0.d, true, threads};
    FlatOde ode;
    ode.rhs = [&](double t, const Vec& y, Vec& dy) { drv(t, y, dy); };
    if (phi.singular) ode.guard = separation_guard(s0.n);
    ode.observe = [&](std::size_t, double t, const Vec& y) {
        ParticleState snap = s0;
        snap.t = t;
        snap.x = y;
        traj.push_back(std::move(snap));
    };
    Vec y = s0.x;
    integrate_flat(y, s0.t, dt, steps, scheme, ode);
    return traj;
}

// Trajectory of the opinion model with agent weights.
inline std::vector<ParticleState> run_opinion_weights(const Interaction& phi,
                                                      const WeightDynamics& psi,
                                                      const ParticleState& s0, double dt, double T,
                                                      Scheme scheme = Scheme::rk4,
                                                      std::size_t threads = 1) {
    s0.validate();
    if (!s0.m) throw argument_error("run_opinion_weights: weights m required");
    const std::size_t steps = step_count(dt, T);
    const std::size_t nx = s0.n * s0.d;
    std::vector<ParticleState> traj;
    traj.reserve(steps + 1);
    OpinionOde drv{phi, psi, s0.n, s0.d, true, threads};
    FlatOde ode;
    ode.rhs = [&](double t, const Vec& y, Vec& dy) { drv(t, y, dy); };
    if (phi.singular || psi.singular()) ode.guard = separation_guard(s0.n);
    ode.observe = [&](std::size_t, double t, const Vec& y) {
        ParticleState snap = s0;
        snap.t = t;
        snap.x.assign(y.begin(), y.begin() + static_cast<long>(nx));
        snap.m = Vec(y.begin() + static_cast<long>(nx), y.end());
        traj.push_back(std::move(snap));
    };
    Vec y(nx + s0.n);
    std::copy(s0.x.begin(), s0.x.end(), y.begin());
    std::copy(s0.m->begin(), s0.m->end(), y.begin() + static_cast<long>(nx));
    integrate_flat(y, s0.t, dt, steps, scheme, ode);
    return traj;
}

// Trajectory of the adaptive Kuramoto network (phases + full weight matrix).
inline std::vector<CoupledNetworkState> run_adaptive_kuramoto(
    const Omega& omega, const Interaction& phi, const std::function<double(double, double)>& H,
    double eps, const CoupledNetworkState& s0, double dt, double T, Scheme scheme = Scheme::rk4,
    std::size_t threads = 1) {
    s0.validate();
    if (!(eps > 0.0)) throw argument_error("run_adaptive_kuramoto: eps must be > 0");
    const std::size_t steps = step_count(dt, T);
    const std::size_t n = s0.n;
    std::vector<CoupledNetworkState> traj;
    traj.reserve(steps + 1);
    AdaptiveKuramotoOde drv{omega, phi, H, eps, n, true, threads};
    FlatOde ode;
    ode.rhs = [&](double t, const Vec& y, Vec& dy) { drv(t, y, dy); };
    ode.observe = [&](std::size_t, double t, const Vec& y) {
        CoupledNetworkState snap;
        snap.t = t;
        snap.n = n;
        snap.x.assign(y.begin(), y.begin() + static_cast<long>(n));
        snap.W = Matrix(n, n);
        std::copy(y.begin() + static_cast<long>(n), y.end(), snap.W.a.begin());
        traj.push_back(std::move(snap));
    };
    Vec y(n + n * n);
    std::copy(s0.x.begin(), s0.x.end(), y.begin());
    std::copy(s0.W.a.begin(), s0.W.a.end(), y.begin() + static_cast<long>(n));
    integrate_flat(y, s0.t, dt, steps, scheme, ode);
    return traj;
}

// ---------------------------------------------------------------------------
// Variation-of-constants reconstruction of adaptive Kuramoto weights:
//   W_ij(t_n) = e^(-eps t_n) W_ij(0) - I_ij(t_n),
//   I_ij(t)   = eps * integral_0^t e^(-eps (t-s)) H(x_i(s), x_j(s)) ds,
// accumulated by the exponential trapezoid recurrence
//   I_(n+1) = e^(-eps dt) I_n + (eps dt / 2) (e^(-eps dt) H_n + H_(n+1)).
// ---------------------------------------------------------------------------
inline std::vector<Matrix> weights_variation_of_constants(
    const std::vector<Vec>& x_traj, double dt, const Matrix& W0,
    const std::function<double(double, double)>& H, double eps) {
    if (x_traj.empty()) throw argument_error("variation of constants: empty trajectory");
    const std::size_t n = x_traj.front().size();
    if (W0.rows != n || W0.cols != n)
        throw argument_error("variation of constants: W0 must match trajectory width");
    if (!(dt > 0.0)) throw argument_error("variation of constants: dt must be > 0");
    const double damp = std::exp(-eps * dt);
    auto eval_H = [&](const Vec& x, Matrix& out) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) out(i, j) = H(x[i], x[j]);
    };
    std::vector<Matrix> W(x_traj.size(), Matrix(n, n));
    Matrix I(n, n, 0.0), Hprev(n, n), Hcur(n, n);
    eval_H(x_traj[0], Hprev);
    W[0] = W0;
    for (std::size_t step = 1; step < x_traj.size(); ++step) {
        eval_H(x_traj[step], Hcur);
        const double t = static_cast<double>(step) * dt;
        const double decay = std::exp(-eps * t);
        const double half = 0.5 * eps * dt;
        for (std::size_t idx = 0; idx < n * n; ++idx) {
            I.a[idx] = damp * I.a[idx] + half * (damp * Hprev.a[idx] + Hcur.a[idx]);
            W[step].a[idx] = decay * W0.a[idx] - I.a[idx];
        }
        std::swap(Hprev, Hcur);
    }
    return W;
}

}  // namespace nexlim
