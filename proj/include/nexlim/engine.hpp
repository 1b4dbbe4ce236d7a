#pragma once

#include <cmath>
#include <cstddef>
#include <thread>
#include <vector>

#include "nexlim/interaction.hpp"
#include "nexlim/matrix.hpp"

namespace nexlim {

// Shared pairwise-coupling core. The microscopic, continuum and mean-field
// solvers all evaluate their drifts through this one function, which is what
// makes the discrete<->continuum correspondence hold bit-for-bit: with equal
// inputs the three entry points execute identical floating-point operations.

struct FiberedSources {
    std::size_t K = 0;        // number of source fibers
    std::size_t d = 1;        // state dimension
    const std::size_t* off;   // K+1 offsets into y / w
    const double* y;          // atom positions, flattened (total x d)
    const double* w;          // atom weights (transport mass, mass*charisma, or 1)
};

// Optional map from target index to coupling-matrix row (atoms of fiber k use
// row k); nullptr means the identity map.
using TargetRow = const std::size_t*;

inline std::size_t pick_threads(std::size_t requested, std::size_t work_items) {
    if (requested <= 1 || work_items < 64) return 1;
    return std::min(requested, work_items);
}

// Chunked parallel map over [0, n). Each index is processed exactly once by
// one thread; output slots are disjoint, so results do not depend on the
// thread count.
template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& body) {
    threads = pick_threads(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    const std::size_t chunk = (n + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
        const std::size_t lo = t * chunk, hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &body] {
            for (std::size_t i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

namespace detail {

// Generic path: out_t = pref * sum_l rowW(t,l) * sum_b w_lb * phi(x_t, y_lb),
// all sums in ascending order.
inline void fibered_drift_generic(const double* W, std::size_t ldw, TargetRow trow,
                                  const Interaction& phi, const FiberedSources& src,
                                  std::size_t n_t, const double* xt, double pref, double* out,
                                  std::size_t threads) {
    const std::size_t d = src.d;
    parallel_for(n_t, threads, [&](std::size_t i) {
        const double* x = xt + i * d;
        const double* row = W ? W + (trow ? trow[i] : i) * ldw : nullptr;
        double accbuf[8];
        std::vector<double> accdyn;
        double* acc = d <= 8 ? accbuf : (accdyn.resize(d), accdyn.data());
        double phibuf[8];
        std::vector<double> phidyn;
        double* ph = d <= 8 ? phibuf : (phidyn.resize(d), phidyn.data());
        double innbuf[8];
        std::vector<double> inndyn;
        double* inner = d <= 8 ? innbuf : (inndyn.resize(d), inndyn.data());
        for (std::size_t k = 0; k < d; ++k) acc[k] = 0.0;
        for (std::size_t l = 0; l < src.K; ++l) {
            const double wl = row ? row[l] : 1.0;
            for (std::size_t k = 0; k < d; ++k) inner[k] = 0.0;
            for (std::size_t b = src.off[l]; b < src.off[l + 1]; ++b) {
                phi.evald(d, x, src.y + b * d, ph);
                const double wb = src.w[b];
                for (std::size_t k = 0; k < d; ++k) inner[k] += wb * ph[k];
            }
            if (W) {
                for (std::size_t k = 0; k < d; ++k) acc[k] += wl * inner[k];
            } else {
                for (std::size_t k = 0; k < d; ++k) acc[k] += inner[k];
            }
        }
        for (std::size_t k = 0; k < d; ++k) out[i * d + k] = pref * acc[k];
    });
}

// Fused sine path (d = 1): sin(y - x) = cos(x) sin(y) - sin(x) cos(y) turns
// the row sums into two plain weighted sums over the per-fiber aggregates
// S_l = sum_b w_lb sin(y_lb), C_l = sum_b w_lb cos(y_lb).
inline void fibered_drift_sine(const double* W, std::size_t ldw, TargetRow trow,
                               const FiberedSources& src, std::size_t n_t, const double* xt,
                               double pref, double* out, std::size_t threads) {
    std::vector<double> S(src.K), C(src.K);
    for (std::size_t l = 0; l < src.K; ++l) {
        double sl = 0.0, cl = 0.0;
        for (std::size_t b = src.off[l]; b < src.off[l + 1]; ++b) {
            sl += src.w[b] * std::sin(src.y[b]);
            cl += src.w[b] * std::cos(src.y[b]);
        }
        S[l] = sl;
        C[l] = cl;
    }
    if (!W) {
        double SS = 0.0, CC = 0.0;
        for (std::size_t l = 0; l < src.K; ++l) {
            SS += S[l];
            CC += C[l];
        }
        parallel_for(n_t, threads, [&](std::size_t i) {
            const double x = xt[i];
            out[i] = pref * (std::cos(x) * SS - std::sin(x) * CC);
        });
        return;
    }
    parallel_for(n_t, threads, [&](std::size_t i) {
        const double* row = W + (trow ? trow[i] : i) * ldw;
        double accS = 0.0, accC = 0.0;
        for (std::size_t l = 0; l < src.K; ++l) {
            accS += row[l] * S[l];
            accC += row[l] * C[l];
        }
        const double x = xt[i];
        out[i] = pref * (std::cos(x) * accS - std::sin(x) * accC);
    });
}

// Fused linear path: lambda (y - x) folds into the first-moment aggregates
// Y_l = sum_b w_lb y_lb and A_l = sum_b w_lb.
inline void fibered_drift_linear(const double* W, std::size_t ldw, TargetRow trow,
                                 double lambda, const FiberedSources& src, std::size_t n_t,
                                 const double* xt, double pref, double* out,
                                 std::size_t threads) {
    const std::size_t d = src.d;
    std::vector<double> Y(src.K * d), A(src.K);
    for (std::size_t l = 0; l < src.K; ++l) {
        double al = 0.0;
        for (std::size_t k = 0; k < d; ++k) Y[l * d + k] = 0.0;
        for (std::size_t b = src.off[l]; b < src.off[l + 1]; ++b) {
            al += src.w[b];
            for (std::size_t k = 0; k < d; ++k) Y[l * d + k] += src.w[b] * src.y[b * d + k];
        }
        A[l] = al;
    }
    if (!W) {
        std::vector<double> Ysum(d, 0.0);
        double Asum = 0.0;
        for (std::size_t l = 0; l < src.K; ++l) {
            Asum += A[l];
            for (std::size_t k = 0; k < d; ++k) Ysum[k] += Y[l * d + k];
        }
        parallel_for(n_t, threads, [&](std::size_t i) {
            for (std::size_t k = 0; k < d; ++k)
                out[i * d + k] = pref * (lambda * (Ysum[k] - xt[i * d + k] * Asum));
        });
        return;
    }
    parallel_for(n_t, threads, [&](std::size_t i) {
        const double* row = W + (trow ? trow[i] : i) * ldw;
        double accbuf[8];
        std::vector<double> accdyn;
        double* accY = d <= 8 ? accbuf : (accdyn.resize(d), accdyn.data());
        for (std::size_t k = 0; k < d; ++k) accY[k] = 0.0;
        double accA = 0.0;
        for (std::size_t l = 0; l < src.K; ++l) {
            accA += row[l] * A[l];
            for (std::size_t k = 0; k < d; ++k) accY[k] += row[l] * Y[l * d + k];
        }
        for (std::size_t k = 0; k < d; ++k)
            out[i * d + k] = pref * (lambda * (accY[k] - xt[i * d + k] * accA));
    });
}

}  // namespace detail

// out_t = pref * sum_l rowW(t, l) * sum_b w_lb * phi(x_t, y_lb).  W == nullptr
// drops the matrix factor. allow_fused selects the algebraically identical
// factored evaluation for the sine and linear forms (different rounding, same
// summation direction); reference operations pass false to keep the literal
// term order.
inline void fibered_drift(const double* W, std::size_t ldw, const Interaction& phi,
                          const FiberedSources& src, std::size_t n_t, const double* xt,
                          double pref, double* out, bool allow_fused = true,
                          std::size_t threads = 1, TargetRow trow = nullptr) {
    if (allow_fused && phi.form == Interaction::Form::sine && src.d == 1) {
        detail::fibered_drift_sine(W, ldw, trow, src, n_t, xt, pref, out, threads);
        return;
    }
    if (allow_fused && phi.form == Interaction::Form::linear_diff) {
        detail::fibered_drift_linear(W, ldw, trow, phi.lambda, src, n_t, xt, pref, out, threads);
        return;
    }
    detail::fibered_drift_generic(W, ldw, trow, phi, src, n_t, xt, pref, out, threads);
}

// Single-atom view: particles/grid cells coupled through a weight matrix
// (W mode) or through per-source coefficients only (coef mode, W == nullptr).
struct SingleAtomSources {
    std::vector<std::size_t> off;
    std::vector<double> ones;

    FiberedSources view(std::size_t n, std::size_t d, const double* x, const double* coef) {
        off.resize(n + 1);
        for (std::size_t i = 0; i <= n; ++i) off[i] = i;
        FiberedSources s;
        s.K = n;
        s.d = d;
        s.off = off.data();
        s.y = x;
        if (coef) {
            s.w = coef;
        } else {
            ones.assign(n, 1.0);
            s.w = ones.data();
        }
        return s;
    }
};

inline void pair_drift(const double* W, std::size_t ldw, const Interaction& phi, std::size_t n,
                       std::size_t d, const double* x, const double* coef, double pref,
                       double* out, bool allow_fused = true, std::size_t threads = 1) {
    SingleAtomSources tmp;
    const FiberedSources src = tmp.view(n, d, x, coef);
    fibered_drift(W, ldw, phi, src, n, x, pref, out, allow_fused, threads);
}

}  // namespace nexlim
