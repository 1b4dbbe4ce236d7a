#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "nexlim/continuum.hpp"
#include "nexlim/dynamics.hpp"
#include "nexlim/kernels.hpp"
#include "nexlim/measures.hpp"

namespace nexlim {

// ---------------------------------------------------------------------------
// Characteristics (particle) solvers for the mean-field equations. Transport
// acts on atom positions only; transport masses never change, which realizes
// the constant-label-marginal property exactly.
// ---------------------------------------------------------------------------

struct MFParticleEnsemble {
    double t = 0.0;
    std::size_t K = 0;
    std::size_t d = 1;
    std::vector<std::size_t> off;  // K+1 atom offsets per fiber
    Vec x;                         // atom positions, total x d
    Vec a;                         // transport masses, per-fiber sum 1
    std::optional<Vec> m;          // evolving charisma weights, > 0

    std::size_t atoms() const { return a.size(); }
    std::size_t fiber_of(std::size_t atom) const {
        std::size_t k = 0;
        while (off[k + 1] <= atom) ++k;
        return k;
    }
    double midpoint(std::size_t k) const {
        return (static_cast<double>(k) + 0.5) / static_cast<double>(K);
    }

    void validate() const {
        if (K < 1 || off.size() != K + 1 || x.size() != atoms() * d)
            throw argument_error("ensemble: fiber table / atom arrays disagree");
        for (std::size_t k = 0; k < K; ++k) {
            double s = 0.0;
            for (std::size_t b = off[k]; b < off[k + 1]; ++b) {
                if (!(a[b] >= 0.0)) throw argument_error("ensemble: transport masses >= 0");
                s += a[b];
            }
            if (std::fabs(s - 1.0) > kMassTol)
                throw argument_error("ensemble: fiber " + std::to_string(k) +
                                     " transport mass != 1");
        }
        if (m) {
            if (m->size() != atoms()) throw argument_error("ensemble: m size mismatch");
            for (double v : *m)
                if (!(v > 0.0)) throw argument_error("ensemble: charisma weights must be > 0");
        }
    }

    // Single atom of mass 1 per fiber at the given grid values.
    static MFParticleEnsemble single_atom(const Vec& x0, std::size_t K, std::size_t d,
                                          const Vec* m0 = nullptr) {
        if (x0.size() != K * d) throw argument_error("single_atom ensemble: K*d values required");
        MFParticleEnsemble e;
        e.K = K;
        e.d = d;
        e.off.resize(K + 1);
        for (std::size_t k = 0; k <= K; ++k) e.off[k] = k;
        e.x = x0;
        e.a.assign(K, 1.0);
        if (m0) e.m = *m0;
        return e;
    }

    FiberedMeasure as_fibered() const {
        FiberedMeasure f;
        f.K = K;
        f.d = d;
        f.off = off;
        f.x = x;
        f.mass = a;
        return f;
    }
};

// Unlabeled atom cloud for the exchangeable solvers.
struct AtomCloud {
    double t = 0.0;
    std::size_t d = 1;
    Vec x;                 // n x d
    Vec a;                 // transport masses
    std::optional<Vec> m;  // charisma weights

    std::size_t size() const { return a.size(); }

    static AtomCloud from_measure(const PointMeasure& p) {
        AtomCloud c;
        c.d = p.d;
        c.x = p.x;
        c.a = p.mass;
        return c;
    }
};

namespace detail {
inline std::size_t label_cell(double zeta, std::size_t K) {
    auto k = static_cast<std::size_t>(zeta * static_cast<double>(K));
    return k >= K ? K - 1 : k;
}
}  // namespace detail

// The mean-field vector field V[ens](xi, x). Graphon kernels integrate
// w(xi, zeta_l) against the label grid (weights 1/K); fiber kernels use their
// atom masses in place of w d(zeta).
inline Vec velocity_field(const MFParticleEnsemble& ens, const GraphonKernel& kernel,
                          const Interaction& phi, double xi, const double* x) {
    Vec row(ens.K);
    for (std::size_t l = 0; l < ens.K; ++l) row[l] = kernel.eval(xi, ens.midpoint(l));
    FiberedSources src;
    src.K = ens.K;
    src.d = ens.d;
    src.off = ens.off.data();
    src.y = ens.x.data();
    src.w = ens.a.data();
    Vec out(ens.d);
    fibered_drift(row.data(), 0, phi, src, 1, x, 1.0 / static_cast<double>(ens.K), out.data(),
                  /*allow_fused=*/false);
    return out;
}

inline Vec velocity_field(const MFParticleEnsemble& ens, const FiberKernel& fk,
                          const Interaction& phi, double xi, const double* x) {
    if (fk.K != ens.K) throw argument_error("velocity_field: fiber kernel grid must match ensemble");
    const std::size_t k = detail::label_cell(xi, fk.K);
    Vec out(ens.d, 0.0), inner(ens.d), ph(ens.d);
    for (const auto& atom : fk.fibers[k]) {
        const std::size_t l = detail::label_cell(atom.zeta, ens.K);
        std::fill(inner.begin(), inner.end(), 0.0);
        for (std::size_t b = ens.off[l]; b < ens.off[l + 1]; ++b) {
            phi.evald(ens.d, x, ens.x.data() + b * ens.d, ph.data());
            for (std::size_t c = 0; c < ens.d; ++c) inner[c] += ens.a[b] * ph[c];
        }
        for (std::size_t c = 0; c < ens.d; ++c) out[c] += atom.mass * inner[c];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Non-exchangeable mean-field solver (graphon coupling)
// ---------------------------------------------------------------------------

inline std::vector<MFParticleEnsemble> solve_mfl_nonexchangeable(
    const GraphonKernel& kernel, const Interaction& phi, const MFParticleEnsemble& ens0, double dt,
    double T, const Omega& omega = Omega::none(), Scheme scheme = Scheme::rk4,
    std::size_t threads = 1) {
    ens0.validate();
    const std::size_t steps = step_count(dt, T);
    const std::size_t total = ens0.atoms(), d = ens0.d, K = ens0.K;

    Matrix Wmat(K, K);
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t l = 0; l < K; ++l) Wmat(k, l) = kernel.eval(ens0.midpoint(k), ens0.midpoint(l));
    std::vector<std::size_t> trow(total);
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t b = ens0.off[k]; b < ens0.off[k + 1]; ++b) trow[b] = k;

    std::vector<MFParticleEnsemble> traj;
    traj.reserve(steps + 1);
    FlatOde ode;
    ode.rhs = [&](double t, const Vec& y, Vec& dy) {
        FiberedSources src;
        src.K = K;
        src.d = d;
        src.off = ens0.off.data();
        src.y = y.data();
        src.w = ens0.a.data();
        fibered_drift(Wmat.a.data(), K, phi, src, total, y.data(),
                      1.0 / static_cast<double>(K), dy.data(), /*allow_fused=*/true, threads,
                      trow.data());
        if (omega.present()) {
            if (d != 1) throw argument_error("intrinsic omega: scalar states only");
            for (std::size_t b = 0; b < total; ++b)
                dy[b] = omega.eval(ens0.midpoint(trow[b]), y[b], t) + dy[b];
        }
    };
    ode.observe = [&](std::size_t, double t, const Vec& y) {
        MFParticleEnsemble snap = ens0;
        snap.t = t;
        snap.x = y;
        traj.push_back(std::move(snap));
    };
    Vec y = ens0.x;
    integrate_flat(y, ens0.t, dt, steps, scheme, ode);
    return traj;
}

// Digraph-measure (graphop) coupling: the zeta-integral runs over the fiber
// kernel's atoms.
inline std::vector<MFParticleEnsemble> solve_mfl_fiber_kernel(
    const FiberKernel& fk, const Interaction& phi, const MFParticleEnsemble& ens0, double dt,
    double T, Scheme scheme = Scheme::rk4) {
    ens0.validate();
    fk.validate();
    if (fk.K != ens0.K) throw argument_error("solve_mfl_fiber_kernel: grids must match");
    const std::size_t steps = step_count(dt, T);
    const std::size_t total = ens0.atoms(), d = ens0.d;
    std::vector<std::size_t> trow(total);
    for (std::size_t k = 0; k < ens0.K; ++k)
        for (std::size_t b = ens0.off[k]; b < ens0.off[k + 1]; ++b) trow[b] = k;

    std::vector<MFParticleEnsemble> traj;
    traj.reserve(steps + 1);
    MFParticleEnsemble work = ens0;
    FlatOde ode;
    ode.rhs = [&](double, const Vec& y, Vec& dy) {
        work.x = y;
        for (std::size_t b = 0; b < total; ++b) {
            const Vec v = velocity_field(work, fk, phi, work.midpoint(trow[b]), y.data() + b * d);
            for (std::size_t c = 0; c < d; ++c) dy[b * d + c] = v[c];
        }
    };
    ode.observe = [&](std::size_t, double t, const Vec& y) {
        MFParticleEnsemble snap = ens0;
        snap.t = t;
        snap.x = y;
        traj.push_back(std::move(snap));
    };
    Vec y = ens0.x;
    integrate_flat(y, ens0.t, dt, steps, scheme, ode);
    return traj;
}

// ---------------------------------------------------------------------------
// Exchangeable mean-field solvers
// ---------------------------------------------------------------------------

inline std::vector<AtomCloud> solve_mfl_exchangeable(const Interaction& phi, const AtomCloud& c0,
                                                     double dt, double T,
                                                     Scheme scheme = Scheme::rk4) {
    if (c0.size() == 0) throw argument_error("solve_mfl_exchangeable: empty cloud");
    const std::size_t steps = step_count(dt, T);
    const std::size_t n = c0.size(), d = c0.d;
    std::vector<AtomCloud> traj;
    traj.reserve(steps + 1);
    FlatOde ode;
    ode.rhs = [&](double, const Vec& y, Vec& dy) {
        pair_drift(nullptr, 0, phi, n, d, y.data(), c0.a.data(), 1.0, dy.data());
    };
    ode.observe = [&](std::size_t, double t, const Vec& y) {
        AtomCloud snap = c0;
        snap.t = t;
        snap.x = y;
        traj.push_back(std::move(snap));
    };
    Vec y = c0.x;
    integrate_flat(y, c0.t, dt, steps, scheme, ode);
    return traj;
}

// Weighted transport with source: atoms carry evolving charisma m; the vector
// field weighs neighbours by a*m and the source is the k-fold mass-weighted
// mean of S.
inline std::vector<AtomCloud> solve_mfl_weighted(const Interaction& phi, const WeightDynamics& psi,
                                                 const AtomCloud& c0, double dt, double T,
                                                 Scheme scheme = Scheme::rk4) {
    if (!c0.m) throw argument_error("solve_mfl_weighted: charisma weights m required");
    if (psi.form != WeightDynamics::Form::conserving_S)
        throw argument_error("solve_mfl_weighted: weight dynamics must be a conserving S form");
    if (psi.k > 2) throw capability_error("solve_mfl_weighted: arity k <= 2 only");
    for (double v : *c0.m)
        if (!(v > 0.0)) throw argument_error("solve_mfl_weighted: m(0) must be positive");
    const std::size_t steps = step_count(dt, T);
    const std::size_t n = c0.size(), d = c0.d;
    std::vector<AtomCloud> traj;
    traj.reserve(steps + 1);
    Vec coef(n);
    FlatOde ode;
    ode.rhs = [&](double, const Vec& y, Vec& dy) {
        const double* x = y.data();
        const double* m = y.data() + n * d;
        for (std::size_t b = 0; b < n; ++b) coef[b] = c0.a[b] * m[b];
        pair_drift(nullptr, 0, phi, n, d, x, coef.data(), 1.0, dy.data());
        double* dm = dy.data() + n * d;
        if (psi.k == 1) {
            for (std::size_t b = 0; b < n; ++b) {
                double acc = 0.0;
                for (std::size_t cidx = 0; cidx < n; ++cidx)
                    acc += coef[cidx] * psi.S2(std::span<const double>(x + b * d, d),
                                               std::span<const double>(x + cidx * d, d));
                dm[b] = m[b] * acc;
            }
        } else {
            for (std::size_t b = 0; b < n; ++b) {
                double acc = 0.0;
                for (std::size_t c1 = 0; c1 < n; ++c1)
                    for (std::size_t c2 = 0; c2 < n; ++c2)
                        acc += coef[c1] * coef[c2] *
                               psi.S3(std::span<const double>(x + b * d, d),
                                      std::span<const double>(x + c1 * d, d),
                                      std::span<const double>(x + c2 * d, d));
                dm[b] = m[b] * acc;
            }
        }
    };
    ode.observe = [&](std::size_t, double t, const Vec& y) {
        AtomCloud snap = c0;
        snap.t = t;
        snap.x.assign(y.begin(), y.begin() + static_cast<long>(n * d));
        snap.m = Vec(y.begin() + static_cast<long>(n * d), y.end());
        traj.push_back(std::move(snap));
    };
    Vec y(n * d + n);
    std::copy(c0.x.begin(), c0.x.end(), y.begin());
    std::copy(c0.m->begin(), c0.m->end(), y.begin() + static_cast<long>(n * d));
    integrate_flat(y, c0.t, dt, steps, scheme, ode);
    return traj;
}

// ---------------------------------------------------------------------------
// Adaptive Kuramoto mean-field: the decoupled integral form. The coupling at
// time t is e^(-eps(t-t0)) eta0 minus the exponential-memory average of H,
// kept as one running history integral per (atom, target fiber):
//   I_(n+1) = e^(-eps dt) I_n + (eps dt / 2)(e^(-eps dt) Hbar_n + Hbar_(n+1)).
// ---------------------------------------------------------------------------

inline std::vector<MFParticleEnsemble> solve_mfl_adaptive_kuramoto(
    const MFParticleEnsemble& ens0, const FiberKernel& eta0, const Omega& omega,
    const Interaction& phi, const std::function<double(double, double)>& H, double eps, double dt,
    double T, Scheme scheme = Scheme::rk4) {
    ens0.validate();
    eta0.validate();
    if (ens0.d != 1) throw argument_error("adaptive kuramoto mean-field: scalar phases only");
    if (eta0.K != ens0.K)
        throw argument_error("adaptive kuramoto mean-field: eta0 grid must match ensemble");
    if (!(eps >= 0.0)) throw argument_error("adaptive kuramoto mean-field: eps >= 0 required");
    const std::size_t steps = step_count(dt, T);
    const std::size_t total = ens0.atoms(), K = ens0.K;
    const double t0 = ens0.t;

    std::vector<std::size_t> trow(total);
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t b = ens0.off[k]; b < ens0.off[k + 1]; ++b) trow[b] = k;

    // eta0 atom -> ensemble fiber resolution, done once.
    struct Edge {
        std::size_t fiber;
        double mass;
    };
    std::vector<std::vector<Edge>> eta(K);
    for (std::size_t k = 0; k < K; ++k)
        for (const auto& atom : eta0.fibers[k])
            eta[k].push_back({detail::label_cell(atom.zeta, K), atom.mass});

    Matrix I(total, K, 0.0), Hbar(total, K, 0.0), Hnew(total, K, 0.0);
    double t_grid = t0;

    auto fill_Hbar = [&](const Vec& y, Matrix& out) {
        for (std::size_t b = 0; b < total; ++b)
            for (std::size_t l = 0; l < K; ++l) {
                double acc = 0.0;
                for (std::size_t c = ens0.off[l]; c < ens0.off[l + 1]; ++c)
                    acc += ens0.a[c] * H(y[b], y[c]);
                out(b, l) = acc;
            }
    };
    fill_Hbar(ens0.x, Hbar);

    std::vector<MFParticleEnsemble> traj;
    traj.reserve(steps + 1);
    const double damp_dt = std::exp(-eps * dt);

    FlatOde ode;
    ode.rhs = [&](double tau, const Vec& y, Vec& dy) {
        const double delta = tau - t_grid;
        const double damp0 = std::exp(-eps * (tau - t0));
        const double dampd = std::exp(-eps * delta);
        Vec inner(K);
        for (std::size_t b = 0; b < total; ++b) {
            const double x = y[b];
            // per-target-fiber interaction averages at the current positions
            for (std::size_t l = 0; l < K; ++l) {
                double acc = 0.0;
                for (std::size_t c = ens0.off[l]; c < ens0.off[l + 1]; ++c)
                    acc += ens0.a[c] * phi.eval1(x, y[c]);
                inner[l] = acc;
            }
            double eta_acc = 0.0;
            for (const auto& e : eta[trow[b]]) eta_acc += e.mass * inner[e.fiber];
            double hist_acc = 0.0;
            for (std::size_t l = 0; l < K; ++l) {
                const double Ihat = dampd * I(b, l) + eps * delta * Hbar(b, l);
                hist_acc += Ihat * inner[l];
            }
            double v = damp0 * eta_acc - hist_acc / static_cast<double>(K);
            if (omega.present()) v = omega.eval(ens0.midpoint(trow[b]), x, tau) + v;
            dy[b] = v;
        }
    };
    ode.observe = [&](std::size_t step, double t, const Vec& y) {
        if (step > 0) {
            fill_Hbar(y, Hnew);
            const double half = 0.5 * eps * dt;
            for (std::size_t idx = 0; idx < total * K; ++idx)
                I.a[idx] = damp_dt * I.a[idx] + half * (damp_dt * Hbar.a[idx] + Hnew.a[idx]);
            std::swap(Hbar.a, Hnew.a);
            t_grid = t;
        }
        MFParticleEnsemble snap = ens0;
        snap.t = t;
        snap.x = y;
        traj.push_back(std::move(snap));
    };
    Vec y = ens0.x;
    integrate_flat(y, t0, dt, steps, scheme, ode);
    return traj;
}

// ---------------------------------------------------------------------------
// Bridging constructions
// ---------------------------------------------------------------------------

// Step label function on (generally unequal) intervals.
struct StepLabelFunction {
    std::size_t d = 1;
    Vec breaks;  // n+1 ascending breakpoints, breaks[0] = 0
    Vec values;  // n x d
    Vec masses;  // original atom masses (interval lengths, exact)

    const double* eval(double xi) const {
        if (!(xi >= 0.0 && xi <= 1.0)) throw argument_error("step label function: xi in [0,1]");
        auto it = std::upper_bound(breaks.begin(), breaks.end(), xi);
        std::size_t idx = it == breaks.begin() ? 0 : static_cast<std::size_t>(it - breaks.begin()) - 1;
        const std::size_t n = masses.size();
        if (idx >= n) idx = n - 1;
        return values.data() + idx * d;
    }

    // Push-forward of Lebesgue measure: reproduces the defining atoms.
    PointMeasure pushforward() const {
        PointMeasure out;
        out.d = d;
        out.x = values;
        out.mass = masses;
        for (double m : masses) out.total += m;
        return out;
    }
};

// Dirac decomposition: atoms (x_i, a_i) with sum a_i = 1 become the step
// function x0 = x_i on [b_i, b_(i+1)), b_i the cumulative masses.
inline StepLabelFunction dirac_decomposition(const PointMeasure& atoms) {
    const std::size_t n = atoms.size();
    if (n == 0) throw argument_error("dirac_decomposition: empty measure");
    double total = 0.0;
    for (double m : atoms.mass) {
        if (m < 0.0) throw argument_error("dirac_decomposition: masses must be >= 0");
        total += m;
    }
    if (std::fabs(total - 1.0) > kMassTol)
        throw argument_error("dirac_decomposition: masses must sum to 1");
    StepLabelFunction f;
    f.d = atoms.d;
    f.values = atoms.x;
    f.masses = atoms.mass;
    f.breaks.resize(n + 1);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        f.breaks[i] = acc;
        acc += atoms.mass[i];
    }
    f.breaks[n] = std::max(acc, 1.0);
    return f;
}

// Shifted cumulative mass function of a weighted configuration:
//   F_N(x) = -1/2 + (1/N) sum_j m_j H(x - x_j),  H(0) = 1.
inline Vec burgers_primitive(const ParticleState& st, const Vec& query) {
    st.validate();
    if (st.d != 1) throw argument_error("burgers_primitive: d = 1 only");
    if (!st.m) throw argument_error("burgers_primitive: weights m required");
    const std::size_t n = st.n;
    std::vector<std::pair<double, double>> atoms(n);
    for (std::size_t i = 0; i < n; ++i) atoms[i] = {st.x[i], (*st.m)[i]};
    std::sort(atoms.begin(), atoms.end());
    Vec prefix(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + atoms[i].second;
    Vec out(query.size());
    const double Nd = static_cast<double>(n);
    for (std::size_t q = 0; q < query.size(); ++q) {
        // count atoms with x_j <= query (right-continuous)
        std::size_t lo = 0, hi = n;
        while (lo < hi) {
            const std::size_t mid = (lo + hi) / 2;
            if (atoms[mid].first <= query[q])
                lo = mid + 1;
            else
                hi = mid;
        }
        out[q] = -0.5 + prefix[lo] / Nd;
    }
    return out;
}

}  // namespace nexlim
