#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "nexlim/csv.hpp"
#include "nexlim/dynamics.hpp"
#include "nexlim/errors.hpp"
#include "nexlim/matrix.hpp"
#include "nexlim/transport.hpp"

namespace nexlim {

inline constexpr double kMassTol = 1e-10;
inline constexpr double kMergeTol = 1e-12;
inline constexpr std::size_t kTransportMaxSupport = 512;

// ---------------------------------------------------------------------------
// Discrete measure representations
// ---------------------------------------------------------------------------

// Atoms (label, position, mass) on I x Omega.
struct LabeledEmpiricalMeasure {
    std::size_t d = 1;
    Vec xi;    // labels, n
    Vec x;     // positions, n x d
    Vec mass;  // n, >= 0
    double total = 0.0;
    bool probability = false;

    std::size_t size() const { return mass.size(); }

    void validate() const {
        const std::size_t n = mass.size();
        if (xi.size() != n || x.size() != n * d)
            throw argument_error("measure: atom arrays disagree");
        double s = 0.0;
        for (double m : mass) {
            if (!(m >= 0.0) || !std::isfinite(m)) throw argument_error("measure: masses >= 0");
            s += m;
        }
        if (std::fabs(s - total) > 1e-12 * std::max(1.0, std::fabs(total)))
            throw argument_error("measure: recorded total out of sync");
        if (probability && std::fabs(total - 1.0) > kMassTol)
            throw argument_error("measure: probability flag requires total mass 1");
    }
};

// Measure on Omega alone (labels dropped).
struct PointMeasure {
    std::size_t d = 1;
    Vec x;     // n x d
    Vec mass;  // n
    double total = 0.0;

    std::size_t size() const { return mass.size(); }
};

// Label-fibered measure: one normalized measure on Omega per label cell.
struct FiberedMeasure {
    std::size_t K = 0;
    std::size_t d = 1;
    std::vector<std::size_t> off;  // K+1
    Vec x;                         // atoms across fibers
    Vec mass;

    double midpoint(std::size_t k) const {
        return (static_cast<double>(k) + 0.5) / static_cast<double>(K);
    }

    void validate() const {
        if (K < 1 || off.size() != K + 1) throw argument_error("fibered measure: bad fiber table");
        for (std::size_t k = 0; k < K; ++k) {
            double s = 0.0;
            for (std::size_t b = off[k]; b < off[k + 1]; ++b) {
                if (!(mass[b] >= 0.0)) throw argument_error("fibered measure: masses >= 0");
                s += mass[b];
            }
            if (std::fabs(s - 1.0) > kMassTol)
                throw argument_error("fibered measure: fiber " + std::to_string(k) +
                                     " mass != 1 (disintegration normalization)");
        }
    }
};

// ---------------------------------------------------------------------------
// Construction from particle states
// ---------------------------------------------------------------------------

enum class Weighting { uniform, agent_weights };

inline LabeledEmpiricalMeasure from_particles(const ParticleState& st, Weighting w,
                                              const Vec* labels = nullptr) {
    st.validate();
    if (w == Weighting::agent_weights && !st.m)
        throw argument_error("from_particles: agent_weights requires m");
    LabeledEmpiricalMeasure mu;
    mu.d = st.d;
    mu.x = st.x;
    mu.xi.resize(st.n);
    mu.mass.resize(st.n);
    const double Nd = static_cast<double>(st.n);
    for (std::size_t i = 0; i < st.n; ++i) {
        mu.xi[i] = labels ? (*labels)[i] : static_cast<double>(i + 1) / Nd;
        mu.mass[i] = (w == Weighting::uniform ? 1.0 : (*st.m)[i]) / Nd;
        mu.total += mu.mass[i];
    }
    return mu;
}

// Fibered empirical measure: N = n*m particles, fiber i holds the i-th block
// of m particles with mass 1/m each.
inline FiberedMeasure fibered_from_particles(const ParticleState& st, std::size_t n_fibers,
                                             std::size_t per_fiber) {
    st.validate();
    if (n_fibers * per_fiber != st.n)
        throw argument_error("fibered_from_particles: N must equal n*m");
    FiberedMeasure nu;
    nu.K = n_fibers;
    nu.d = st.d;
    nu.off.resize(n_fibers + 1);
    nu.x = st.x;
    nu.mass.assign(st.n, 1.0 / static_cast<double>(per_fiber));
    for (std::size_t k = 0; k <= n_fibers; ++k) nu.off[k] = k * per_fiber;
    return nu;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

// W1 on the real line via the CDF integral of sorted atoms. Exact.
inline double wasserstein1_1d(const Vec& x1, const Vec& m1, const Vec& x2, const Vec& m2) {
    double t1 = 0.0, t2 = 0.0;
    for (double m : m1) t1 += m;
    for (double m : m2) t2 += m;
    if (std::fabs(t1 - t2) > kMassTol * std::max(1.0, std::max(t1, t2)))
        throw argument_error("wasserstein1_1d: totals must agree");
    struct Ev {
        double x, dmu, dnu;
    };
    std::vector<Ev> ev;
    ev.reserve(x1.size() + x2.size());
    for (std::size_t i = 0; i < x1.size(); ++i) ev.push_back({x1[i], m1[i], 0.0});
    for (std::size_t i = 0; i < x2.size(); ++i) ev.push_back({x2[i], 0.0, m2[i]});
    std::sort(ev.begin(), ev.end(), [](const Ev& a, const Ev& b) { return a.x < b.x; });
    double diff = 0.0, result = 0.0;
    for (std::size_t i = 0; i + 1 <= ev.size(); ++i) {
        diff += ev[i].dmu - ev[i].dnu;
        if (i + 1 < ev.size()) result += std::fabs(diff) * (ev[i + 1].x - ev[i].x);
    }
    return result;
}

inline double wasserstein1_1d(const LabeledEmpiricalMeasure& mu,
                              const LabeledEmpiricalMeasure& nu) {
    if (mu.d != 1 || nu.d != 1) throw argument_error("wasserstein1_1d: d = 1 only");
    return wasserstein1_1d(mu.x, mu.mass, nu.x, nu.mass);
}

// Ground metric on I x Omega (or Omega alone).
struct GroundMetric {
    enum class Form { product, euclidean, custom };
    Form form = Form::product;
    std::function<double(double, const double*, double, const double*, std::size_t)> fn;

    static GroundMetric product() { return {}; }
    static GroundMetric euclidean() {
        GroundMetric g;
        g.form = Form::euclidean;
        return g;
    }
    static GroundMetric custom(
        std::function<double(double, const double*, double, const double*, std::size_t)> f) {
        GroundMetric g;
        g.form = Form::custom;
        g.fn = std::move(f);
        return g;
    }

    double operator()(double xia, const double* xa, double xib, const double* xb,
                      std::size_t d) const {
        switch (form) {
            case Form::custom: return fn(xia, xa, xib, xb, d);
            case Form::product:
            case Form::euclidean: {
                double n2 = 0.0;
                for (std::size_t k = 0; k < d; ++k) {
                    const double u = xa[k] - xb[k];
                    n2 += u * u;
                }
                const double base = std::sqrt(n2);
                return form == Form::product ? std::fabs(xia - xib) + base : base;
            }
        }
        return 0.0;
    }
};

// W1 on the product space by exact optimal transport.
inline double wasserstein1_lp(const LabeledEmpiricalMeasure& mu, const LabeledEmpiricalMeasure& nu,
                              const GroundMetric& metric = GroundMetric::product()) {
    mu.validate();
    nu.validate();
    if (mu.d != nu.d) throw argument_error("wasserstein1_lp: dimensions differ");
    if (mu.size() + nu.size() > kTransportMaxSupport)
        throw capability_error("wasserstein1_lp: combined support exceeds 512 atoms");
    if (std::fabs(mu.total - nu.total) > kMassTol * std::max(1.0, std::max(mu.total, nu.total)))
        throw argument_error("wasserstein1_lp: totals must agree");
    const std::size_t A = mu.size(), B = nu.size(), d = mu.d;
    if (A == 0 || B == 0) return 0.0;
    Matrix cost(A, B);
    for (std::size_t a = 0; a < A; ++a)
        for (std::size_t b = 0; b < B; ++b)
            cost(a, b) = metric(mu.xi[a], mu.x.data() + a * d, nu.xi[b], nu.x.data() + b * d, d);
    return min_cost_transport(mu.mass, nu.mass, cost);
}

// Bounded-Lipschitz distance: sup of integral f d(mu - nu) over |f| <= 1,
// Lip(f) <= 1. Computed through the strong LP dual, an optimal transport with
// unit-cost mass disposal/creation (the extra node below). Handles unequal
// totals.
inline double bounded_lipschitz(const LabeledEmpiricalMeasure& mu,
                                const LabeledEmpiricalMeasure& nu,
                                const GroundMetric& metric = GroundMetric::euclidean()) {
    mu.validate();
    nu.validate();
    if (mu.d != nu.d) throw argument_error("bounded_lipschitz: dimensions differ");
    if (mu.size() + nu.size() > kTransportMaxSupport)
        throw capability_error("bounded_lipschitz: combined support exceeds 512 atoms");
    const std::size_t A = mu.size(), B = nu.size(), d = mu.d;
    if (A == 0 && B == 0) return 0.0;
    Matrix cost(A + 1, B + 1);
    for (std::size_t a = 0; a < A; ++a)
        for (std::size_t b = 0; b < B; ++b)
            cost(a, b) = metric(mu.xi[a], mu.x.data() + a * d, nu.xi[b], nu.x.data() + b * d, d);
    for (std::size_t a = 0; a < A; ++a) cost(a, B) = 1.0;  // dispose surplus
    for (std::size_t b = 0; b < B; ++b) cost(A, b) = 1.0;  // create deficit
    cost(A, B) = 0.0;
    Vec supply(A + 1), demand(B + 1);
    double tmu = 0.0, tnu = 0.0;
    for (std::size_t a = 0; a < A; ++a) tmu += (supply[a] = mu.mass[a]);
    for (std::size_t b = 0; b < B; ++b) tnu += (demand[b] = nu.mass[b]);
    supply[A] = tnu;
    demand[B] = tmu;
    return min_cost_transport(std::move(supply), std::move(demand), cost);
}

namespace detail {
inline LabeledEmpiricalMeasure fiber_slice(const FiberedMeasure& f, std::size_t k) {
    LabeledEmpiricalMeasure m;
    m.d = f.d;
    const std::size_t lo = f.off[k], hi = f.off[k + 1];
    m.xi.assign(hi - lo, 0.0);
    m.x.assign(f.x.begin() + static_cast<long>(lo * f.d), f.x.begin() + static_cast<long>(hi * f.d));
    m.mass.assign(f.mass.begin() + static_cast<long>(lo), f.mass.begin() + static_cast<long>(hi));
    for (double v : m.mass) m.total += v;
    return m;
}
}  // namespace detail

// Fiberwise L1-BL distance: (1/K) sum_k d_BL(mu^k, nu^k).
inline double l1_bl_fibered(const FiberedMeasure& mu, const FiberedMeasure& nu,
                            const GroundMetric& metric = GroundMetric::euclidean()) {
    mu.validate();
    nu.validate();
    if (mu.K != nu.K) throw argument_error("l1_bl_fibered: fiber counts differ");
    double acc = 0.0;
    for (std::size_t k = 0; k < mu.K; ++k)
        acc += bounded_lipschitz(detail::fiber_slice(mu, k), detail::fiber_slice(nu, k), metric);
    return acc / static_cast<double>(mu.K);
}

// ---------------------------------------------------------------------------
// Marginals, means, collapses
// ---------------------------------------------------------------------------

// Marginal on I: (label, mass) aggregated over exactly equal labels.
inline std::vector<std::pair<double, double>> label_marginal(const LabeledEmpiricalMeasure& mu) {
    std::vector<std::pair<double, double>> atoms;
    atoms.reserve(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) atoms.emplace_back(mu.xi[i], mu.mass[i]);
    std::sort(atoms.begin(), atoms.end());
    std::vector<std::pair<double, double>> out;
    for (const auto& [xi, m] : atoms) {
        if (!out.empty() && out.back().first == xi)
            out.back().second += m;
        else
            out.emplace_back(xi, m);
    }
    return out;
}

// Per-fiber mass-weighted mean positions (K x d).
inline Vec fiber_mean(const FiberedMeasure& f) {
    Vec out(f.K * f.d, 0.0);
    for (std::size_t k = 0; k < f.K; ++k) {
        const std::size_t lo = f.off[k], hi = f.off[k + 1];
        if (lo == hi) throw argument_error("fiber_mean: empty fiber " + std::to_string(k));
        double msum = 0.0;
        for (std::size_t b = lo; b < hi; ++b) {
            msum += f.mass[b];
            for (std::size_t c = 0; c < f.d; ++c) out[k * f.d + c] += f.mass[b] * f.x[b * f.d + c];
        }
        for (std::size_t c = 0; c < f.d; ++c) out[k * f.d + c] /= msum;
    }
    return out;
}

namespace detail {
inline PointMeasure merge_points(std::size_t d, Vec xs, Vec ms, double total) {
    const std::size_t n = ms.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        for (std::size_t c = 0; c < d; ++c) {
            if (xs[a * d + c] < xs[b * d + c]) return true;
            if (xs[a * d + c] > xs[b * d + c]) return false;
        }
        return false;
    });
    PointMeasure out;
    out.d = d;
    out.total = total;
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t i = idx[r];
        bool merged = false;
        if (!out.mass.empty()) {
            const std::size_t lastoff = (out.mass.size() - 1) * d;
            bool close = true;
            for (std::size_t c = 0; c < d && close; ++c)
                close = std::fabs(out.x[lastoff + c] - xs[i * d + c]) <= kMergeTol;
            if (close) {
                out.mass.back() += ms[i];
                merged = true;
            }
        }
        if (!merged) {
            for (std::size_t c = 0; c < d; ++c) out.x.push_back(xs[i * d + c]);
            out.mass.push_back(ms[i]);
        }
    }
    return out;
}
}  // namespace detail

// Forget the labels; coincident positions (within 1e-12) merge their mass.
inline PointMeasure collapse_labels(const LabeledEmpiricalMeasure& mu) {
    return detail::merge_points(mu.d, mu.x, mu.mass, mu.total);
}

inline PointMeasure collapse_labels(const FiberedMeasure& f) {
    double total = 0.0;
    for (double m : f.mass) total += m;
    return detail::merge_points(f.d, f.x, f.mass, total);
}

inline LabeledEmpiricalMeasure as_labeled(const PointMeasure& p) {
    LabeledEmpiricalMeasure mu;
    mu.d = p.d;
    mu.x = p.x;
    mu.mass = p.mass;
    mu.xi.assign(p.mass.size(), 0.0);
    mu.total = p.total;
    return mu;
}

// ---------------------------------------------------------------------------
// CSV: columns xi, x (d columns), mass
// ---------------------------------------------------------------------------

inline void save_measure_csv(const std::string& path, const LabeledEmpiricalMeasure& mu) {
    std::ofstream os(path);
    if (!os) throw io_error("cannot open for writing: " + path);
    os << "xi";
    for (std::size_t c = 0; c < mu.d; ++c) os << ",x" << c;
    os << ",mass\n";
    for (std::size_t i = 0; i < mu.size(); ++i) {
        os << format_double(mu.xi[i]);
        for (std::size_t c = 0; c < mu.d; ++c) os << ',' << format_double(mu.x[i * mu.d + c]);
        os << ',' << format_double(mu.mass[i]) << "\n";
    }
    if (!os) throw io_error("write failed: " + path);
}

inline LabeledEmpiricalMeasure load_measure_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open: " + path);
    std::string line;
    if (!std::getline(is, line)) throw io_error(path + ": empty file");
    const auto head = split_csv_line(line);
    if (head.size() < 3 || head.front() != "xi" || head.back() != "mass")
        throw io_error(path + ": expected header xi,x...,mass");
    LabeledEmpiricalMeasure mu;
    mu.d = head.size() - 2;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != head.size()) throw io_error(path + ": ragged row");
        mu.xi.push_back(std::stod(cells.front()));
        for (std::size_t c = 0; c < mu.d; ++c) mu.x.push_back(std::stod(cells[1 + c]));
        mu.mass.push_back(std::stod(cells.back()));
        mu.total += mu.mass.back();
    }
    return mu;
}

}  // namespace nexlim
