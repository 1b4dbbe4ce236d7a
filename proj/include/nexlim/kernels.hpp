#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "nexlim/csv.hpp"
#include "nexlim/errors.hpp"
#include "nexlim/matrix.hpp"
#include "nexlim/quadrature.hpp"
#include "nexlim/rng.hpp"

namespace nexlim {

// ---------------------------------------------------------------------------
// Graph-limit objects: graphons, step (pixel) kernels, fiber-measure kernels,
// random-graph laws, and the cut-norm machinery.
// ---------------------------------------------------------------------------

// A bounded kernel w on [0,1]^2. Step kernels use right-open equal-area cells
// [(i-1)/n, i/n); torus_band is the indicator of torus distance <= r.
struct GraphonKernel {
    enum class Form { constant, torus_band, product, exp_abs_diff, half_plane, step, analytic };

    Form form = Form::constant;
    double c = 1.0;                           // constant value
    double r = 0.25;                          // torus band radius, in (0, 1/2)
    std::size_t n = 0;                        // step block count
    std::vector<double> values;               // step values, row-major n x n
    std::function<double(double, double)> fn; // analytic form
    double bound = 1.0;                       // L-inf bound on |w|
    bool symmetric = true;

    static GraphonKernel constant(double value) {
        GraphonKernel k;
        k.form = Form::constant;
        k.c = value;
        k.bound = std::fabs(value);
        return k;
    }
    static GraphonKernel torus_band(double radius) {
        if (!(radius > 0.0 && radius < 0.5))
            throw argument_error("torus_band: radius must lie in (0, 1/2)");
        GraphonKernel k;
        k.form = Form::torus_band;
        k.r = radius;
        k.bound = 1.0;
        return k;
    }
    static GraphonKernel product() {
        GraphonKernel k;
        k.form = Form::product;
        k.bound = 1.0;
        return k;
    }
    static GraphonKernel exp_abs_diff() {
        GraphonKernel k;
        k.form = Form::exp_abs_diff;
        k.bound = 1.0;
        return k;
    }
    static GraphonKernel half_plane() {
        GraphonKernel k;
        k.form = Form::half_plane;
        k.bound = 1.0;
        return k;
    }
    static GraphonKernel step(std::size_t blocks, std::vector<double> vals) {
        if (blocks < 1 || vals.size() != blocks * blocks)
            throw argument_error("step kernel: need n>=1 and n*n values");
        if (!all_finite(vals.data(), vals.size()))
            throw argument_error("step kernel: values must be finite");
        GraphonKernel k;
        k.form = Form::step;
        k.n = blocks;
        k.values = std::move(vals);
        k.bound = 0.0;
        k.symmetric = true;
        for (std::size_t i = 0; i < blocks; ++i)
            for (std::size_t j = 0; j < blocks; ++j) {
                k.bound = std::max(k.bound, std::fabs(k.values[i * blocks + j]));
                if (k.values[i * blocks + j] != k.values[j * blocks + i]) k.symmetric = false;
            }
        return k;
    }
    static GraphonKernel analytic(std::function<double(double, double)> f, double linf_bound,
                                  bool is_symmetric) {
        GraphonKernel k;
        k.form = Form::analytic;
        k.fn = std::move(f);
        k.bound = linf_bound;
        k.symmetric = is_symmetric;
        return k;
    }

    bool is_step() const { return form == Form::step; }

    std::size_t step_cell(double xi) const {
        const auto i = static_cast<std::size_t>(xi * static_cast<double>(n));
        return i >= n ? n - 1 : i;
    }

    double eval(double xi, double zeta) const {
        if (!(xi >= 0.0 && xi <= 1.0 && zeta >= 0.0 && zeta <= 1.0))
            throw argument_error("graphon eval: labels must lie in [0,1]");
        switch (form) {
            case Form::constant: return c;
            case Form::torus_band: {
                const double d = std::fabs(xi - zeta);
                return std::min(d, 1.0 - d) <= r ? 1.0 : 0.0;
            }
            case Form::product: return xi * zeta;
            case Form::exp_abs_diff: return std::exp(-std::fabs(xi - zeta));
            case Form::half_plane: return xi + zeta <= 1.0 ? 1.0 : 0.0;
            case Form::step: return values[step_cell(xi) * n + step_cell(zeta)];
            case Form::analytic: return fn(xi, zeta);
        }
        return 0.0;
    }
};

// Desk-scale digraph measure / graphop: one finite positive measure on labels
// per label-grid cell.
struct FiberKernel {
    struct Atom {
        double zeta;
        double mass;
    };
    std::size_t K = 0;
    std::vector<std::vector<Atom>> fibers;

    double midpoint(std::size_t k) const { return (static_cast<double>(k) + 0.5) / static_cast<double>(K); }

    void validate() const {
        if (K < 1 || fibers.size() != K) throw argument_error("fiber kernel: K >= 1 fibers required");
        for (const auto& f : fibers)
            for (const auto& a : f) {
                if (!(a.mass >= 0.0) || !std::isfinite(a.mass))
                    throw argument_error("fiber kernel: masses must be finite and >= 0");
                if (!(a.zeta >= 0.0 && a.zeta <= 1.0))
                    throw argument_error("fiber kernel: atom labels must lie in [0,1]");
            }
    }
};

// Law of a q-weighted random graph: per-edge weight distribution on R+.
struct RandomGraphLaw {
    enum class Form { bernoulli, scaled_bernoulli, uniform_band };
    Form form = Form::bernoulli;
    GraphonKernel p;      // bernoulli probability kernel (values in [0,1])
    double scale = 1.0;   // scaled_bernoulli factor, > 0
    GraphonKernel center; // uniform_band center kernel, >= 0
    double halfwidth = 0.0;

    static RandomGraphLaw bernoulli(GraphonKernel prob) {
        RandomGraphLaw q;
        q.form = Form::bernoulli;
        q.p = std::move(prob);
        return q;
    }
    static RandomGraphLaw scaled_bernoulli(GraphonKernel prob, double c) {
        if (!(c > 0.0)) throw argument_error("scaled_bernoulli: scale must be > 0");
        RandomGraphLaw q;
        q.form = Form::scaled_bernoulli;
        q.p = std::move(prob);
        q.scale = c;
        return q;
    }
    static RandomGraphLaw uniform_band(GraphonKernel ctr, double h) {
        if (!(h >= 0.0)) throw argument_error("uniform_band: halfwidth must be >= 0");
        RandomGraphLaw q;
        q.form = Form::uniform_band;
        q.center = std::move(ctr);
        q.halfwidth = h;
        return q;
    }
};

enum class SampleMode { rr, rd };

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

inline double eval(const GraphonKernel& k, double xi, double zeta) { return k.eval(xi, zeta); }

inline GraphonKernel step_from_matrix(const Matrix& W) {
    if (W.rows < 1 || !W.square()) throw argument_error("step_from_matrix: square matrix required");
    if (!all_finite(W.a.data(), W.a.size()))
        throw argument_error("step_from_matrix: entries must be finite");
    return GraphonKernel::step(W.rows, W.a);
}

// Ring coupling of width k: w_ij = 1 iff 1 <= min(|i-j|, N-|i-j|) <= k.
inline Matrix ring_adjacency(std::size_t N, std::size_t k) {
    if (N < 1) throw argument_error("ring_adjacency: N >= 1 required");
    if (k < 1 || 2 * k >= N) throw argument_error("ring_adjacency: need 1 <= k < N/2");
    Matrix W(N, N, 0.0);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) {
            const std::size_t diff = i > j ? i - j : j - i;
            const std::size_t dist = std::min(diff, N - diff);
            if (dist >= 1 && dist <= k) W(i, j) = 1.0;
        }
    return W;
}

inline Matrix discretize_pointwise(const GraphonKernel& k, const Vec& gridpoints) {
    const std::size_t N = gridpoints.size();
    if (N < 1) throw argument_error("discretize_pointwise: at least one gridpoint");
    for (double g : gridpoints)
        if (!(g >= 0.0 && g <= 1.0)) throw argument_error("discretize_pointwise: gridpoints in [0,1]");
    Matrix W(N, N);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) W(i, j) = k.eval(gridpoints[i], gridpoints[j]);
    return W;
}

inline Vec midpoint_grid(std::size_t N) {
    Vec g(N);
    for (std::size_t i = 0; i < N; ++i) g[i] = (static_cast<double>(i) + 0.5) / static_cast<double>(N);
    return g;
}

namespace detail {

// area{ (x,y) in [x0,x1]x[y0,y1] : y - x <= c }, exact piecewise formula.
inline double area_below_shift(double x0, double x1, double y0, double y1, double c) {
    const double lo = std::clamp(y0 - c, x0, x1);
    const double hi = std::clamp(y1 - c, x0, x1);
    const double ramp = 0.5 * (hi * hi - lo * lo) + (c - y0) * (hi - lo);
    return ramp + (x1 - hi) * (y1 - y0);
}

// Exact cell mean of the torus-band indicator over [x0,x1]x[y0,y1].
inline double torus_band_cell_mean(double r, double x0, double x1, double y0, double y1) {
    const double area = (x1 - x0) * (y1 - y0);
    const double near_band = area_below_shift(x0, x1, y0, y1, r) - area_below_shift(x0, x1, y0, y1, -r);
    const double wrap_hi = area - area_below_shift(x0, x1, y0, y1, 1.0 - r);
    const double wrap_lo = area_below_shift(x0, x1, y0, y1, r - 1.0);
    return (near_band + wrap_hi + wrap_lo) / area;
}

// Exact overlap-weighted mean of a step kernel over the (i,j) cell of an N-grid.
inline double step_cell_mean(const GraphonKernel& k, std::size_t N, std::size_t i, std::size_t j) {
    const double Nd = static_cast<double>(N), nd = static_cast<double>(k.n);
    auto axis = [&](std::size_t cell, std::vector<std::pair<std::size_t, double>>& out) {
        out.clear();
        const double a = static_cast<double>(cell) / Nd, b = static_cast<double>(cell + 1) / Nd;
        const auto p0 = static_cast<std::size_t>(
            std::min(std::floor(a * nd), nd - 1.0));
        for (std::size_t p = p0; p < k.n; ++p) {
            const double pa = static_cast<double>(p) / nd, pb = static_cast<double>(p + 1) / nd;
            const double len = std::min(b, pb) - std::max(a, pa);
            if (len <= 0.0) {
                if (pa >= b) break;
                continue;
            }
            out.emplace_back(p, len);
        }
    };
    std::vector<std::pair<std::size_t, double>> ox, oy;
    axis(i, ox);
    axis(j, oy);
    double num = 0.0, denx = 0.0, deny = 0.0;
    for (const auto& [p, lx] : ox) {
        denx += lx;
        for (const auto& [q, ly] : oy) num += lx * ly * k.values[p * k.n + q];
    }
    for (const auto& [q, ly] : oy) deny += ly;
    return num / (denx * deny);
}

}  // namespace detail

// L^1 discretization: w_ij = N^2 * integral of w over cell (i,j). Step kernels
// aligned with the grid are reproduced exactly; the discontinuous presets use
// exact cell geometry; smooth forms use the tensor Gauss-Legendre(8) rule.
inline Matrix discretize_cell_average(const GraphonKernel& k, std::size_t N) {
    if (N < 1) throw argument_error("discretize_cell_average: N >= 1 required");
    Matrix W(N, N);
    const double Nd = static_cast<double>(N);
    switch (k.form) {
        case GraphonKernel::Form::constant:
            std::fill(W.a.begin(), W.a.end(), k.c);
            return W;
        case GraphonKernel::Form::half_plane:
            for (std::size_t i = 0; i < N; ++i)
                for (std::size_t j = 0; j < N; ++j)
                    W(i, j) = (i + j + 2 <= N) ? 1.0 : (i + j + 1 == N ? 0.5 : 0.0);
            return W;
        case GraphonKernel::Form::torus_band:
            for (std::size_t i = 0; i < N; ++i)
                for (std::size_t j = 0; j < N; ++j)
                    W(i, j) = detail::torus_band_cell_mean(k.r, i / Nd, (i + 1) / Nd, j / Nd,
                                                           (j + 1) / Nd);
            return W;
        case GraphonKernel::Form::step:
            if (k.n == N) {
                W.a = k.values;
                return W;
            }
            if (N % k.n == 0) {
                for (std::size_t i = 0; i < N; ++i)
                    for (std::size_t j = 0; j < N; ++j)
                        W(i, j) = k.values[(i * k.n / N) * k.n + (j * k.n / N)];
                return W;
            }
            for (std::size_t i = 0; i < N; ++i)
                for (std::size_t j = 0; j < N; ++j) W(i, j) = detail::step_cell_mean(k, N, i, j);
            return W;
        case GraphonKernel::Form::exp_abs_diff:
            // Diagonal cells carry the |xi - zeta| kink; their mean has the
            // elementary closed form 2 (h - 1 + e^-h) / h^2. Off-diagonal
            // cells are smooth and the tensor rule is exact to round-off.
            for (std::size_t i = 0; i < N; ++i)
                for (std::size_t j = 0; j < N; ++j) {
                    if (i == j) {
                        const double h = 1.0 / Nd;
                        W(i, j) = 2.0 * (h - 1.0 + std::exp(-h)) / (h * h);
                    } else {
                        W(i, j) = cell_mean_2d([&](double x, double y) { return k.eval(x, y); },
                                               i / Nd, (i + 1) / Nd, j / Nd, (j + 1) / Nd);
                    }
                }
            return W;
        default:
            for (std::size_t i = 0; i < N; ++i)
                for (std::size_t j = 0; j < N; ++j)
                    W(i, j) = cell_mean_2d([&](double x, double y) { return k.eval(x, y); },
                                           i / Nd, (i + 1) / Nd, j / Nd, (j + 1) / Nd);
            return W;
    }
}

namespace detail {
inline Vec sample_labels(std::size_t N, SampleMode mode, std::uint64_t seed) {
    Vec z(N);
    for (std::size_t i = 0; i < N; ++i)
        z[i] = mode == SampleMode::rr
                   ? counter_uniform(seed, Stream::label, i + 1, 0)
                   : (static_cast<double>(i) + 0.5) / static_cast<double>(N);
    return z;
}
}  // namespace detail

// w-random graph: insert edge (i,j) with probability w(Z_i, Z_j). Zero
// diagonal; symmetric kernels sample i<j and mirror.
inline Matrix sample_w_random(const GraphonKernel& k, std::size_t N, SampleMode mode,
                              std::uint64_t seed, Vec* labels_out = nullptr) {
    if (N < 1) throw argument_error("sample_w_random: N >= 1 required");
    const Vec z = detail::sample_labels(N, mode, seed);
    if (labels_out) *labels_out = z;
    Matrix W(N, N, 0.0);
    auto draw = [&](std::size_t i, std::size_t j) {
        const double p = k.eval(z[i], z[j]);
        if (!(p >= 0.0 && p <= 1.0))
            throw argument_error("sample_w_random: kernel value outside [0,1]");
        return counter_uniform(seed, Stream::edge, i + 1, j + 1) < p ? 1.0 : 0.0;
    };
    if (k.symmetric) {
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t j = i + 1; j < N; ++j) W(i, j) = W(j, i) = draw(i, j);
    } else {
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t j = 0; j < N; ++j)
                if (i != j) W(i, j) = draw(i, j);
    }
    return W;
}

// q-weighted random graph: each ordered edge draws a nonnegative weight from
// the law at (Z_i, Z_j). Directed: all N^2 entries are drawn independently.
inline Matrix sample_q_weighted(const RandomGraphLaw& q, std::size_t N, SampleMode mode,
                                std::uint64_t seed, Vec* labels_out = nullptr) {
    if (N < 1) throw argument_error("sample_q_weighted: N >= 1 required");
    const Vec z = detail::sample_labels(N, mode, seed);
    if (labels_out) *labels_out = z;
    Matrix W(N, N, 0.0);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) {
            const double u = counter_uniform(seed, Stream::edge, i + 1, j + 1);
            double w = 0.0;
            switch (q.form) {
                case RandomGraphLaw::Form::bernoulli:
                case RandomGraphLaw::Form::scaled_bernoulli: {
                    const double p = q.p.eval(z[i], z[j]);
                    if (!(p >= 0.0 && p <= 1.0))
                        throw argument_error("sample_q_weighted: bernoulli kernel outside [0,1]");
                    w = (u < p ? 1.0 : 0.0) *
                        (q.form == RandomGraphLaw::Form::scaled_bernoulli ? q.scale : 1.0);
                    break;
                }
                case RandomGraphLaw::Form::uniform_band: {
                    const double ctr = q.center.eval(z[i], z[j]);
                    if (ctr - q.halfwidth < -1e-15)
                        throw argument_error("sample_q_weighted: uniform band reaches below 0");
                    w = ctr + q.halfwidth * (2.0 * u - 1.0);
                    if (w < 0.0) w = 0.0;  // guard round-off at the boundary
                    break;
                }
            }
            W(i, j) = w;
        }
    return W;
}

// First moment of the weighted random graph law: the limit graphon.
inline GraphonKernel first_moment_kernel(const RandomGraphLaw& q) {
    switch (q.form) {
        case RandomGraphLaw::Form::bernoulli: return q.p;
        case RandomGraphLaw::Form::scaled_bernoulli: {
            if (q.p.is_step()) {
                std::vector<double> v = q.p.values;
                for (double& x : v) x *= q.scale;
                return GraphonKernel::step(q.p.n, std::move(v));
            }
            GraphonKernel p = q.p;
            const double c = q.scale;
            return GraphonKernel::analytic(
                [p, c](double xi, double zeta) { return c * p.eval(xi, zeta); }, c * p.bound,
                p.symmetric);
        }
        case RandomGraphLaw::Form::uniform_band: return q.center;
    }
    throw argument_error("first_moment_kernel: unknown law");
}

// ---------------------------------------------------------------------------
// Cut-norm and cut-distance on step kernels
// ---------------------------------------------------------------------------

namespace detail {

// Best |sum over S x T| for fixed row subset: collect columns by partial-sum
// sign (zero columns included, which leaves the value unchanged).
inline double best_rectangle(const std::vector<double>& colsum) {
    double pos = 0.0, neg = 0.0;
    for (double s : colsum) {
        if (s >= 0.0) pos += s;
        if (s <= 0.0) neg += s;
    }
    return std::max(pos, -neg);
}

}  // namespace detail

inline constexpr std::size_t kCutNormExactMaxBlocks = 24;

// Exact cut-norm of a step kernel: max over all 2^n row subsets, with the
// optimal column subset chosen in closed form for each sign. Gray-code
// enumeration keeps the column sums incremental.
inline double cut_norm_exact(const GraphonKernel& k) {
    if (!k.is_step()) throw argument_error("cut_norm_exact: step kernel required");
    const std::size_t n = k.n;
    if (n > kCutNormExactMaxBlocks)
        throw capability_error("cut_norm_exact: n > 24; use cut_norm_lower");
    std::vector<double> colsum(n, 0.0);
    double best = 0.0;
    const std::uint64_t total = 1ULL << n;
    std::uint64_t code = 0;
    for (std::uint64_t step = 1; step < total; ++step) {
        const auto row = static_cast<std::size_t>(std::countr_zero(step));
        const bool added = !(code & (1ULL << row));
        code ^= 1ULL << row;
        const double sgn = added ? 1.0 : -1.0;
        for (std::size_t j = 0; j < n; ++j) colsum[j] += sgn * k.values[row * n + j];
        best = std::max(best, detail::best_rectangle(colsum));
    }
    return best / (static_cast<double>(n) * static_cast<double>(n));
}

// Heuristic lower bound: alternating closed-form improvement of (S, T) from
// random restarts. Every evaluated rectangle is feasible, so the result never
// exceeds the exact cut-norm.
inline double cut_norm_lower(const GraphonKernel& k, std::size_t restarts, std::uint64_t seed) {
    if (!k.is_step()) throw argument_error("cut_norm_lower: step kernel required");
    const std::size_t n = k.n;
    std::vector<char> S(n), T(n);
    double best = 0.0;
    for (std::size_t trial = 0; trial < std::max<std::size_t>(restarts, 1); ++trial) {
        for (std::size_t i = 0; i < n; ++i)
            S[i] = counter_uniform(seed, Stream::search, trial * 2 + 1, i) < 0.5;
        for (double sign : {1.0, -1.0}) {
            for (std::size_t sweep = 0; sweep < 64; ++sweep) {
                bool changed = false;
                for (std::size_t j = 0; j < n; ++j) {  // best T given S
                    double s = 0.0;
                    for (std::size_t i = 0; i < n; ++i)
                        if (S[i]) s += k.values[i * n + j];
                    const char want = sign * s >= 0.0;
                    if (want != T[j]) T[j] = want, changed = true;
                }
                for (std::size_t i = 0; i < n; ++i) {  // best S given T
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j)
                        if (T[j]) s += k.values[i * n + j];
                    const char want = sign * s >= 0.0;
                    if (want != S[i]) S[i] = want, changed = true;
                }
                if (!changed) break;
            }
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                if (S[i])
                    for (std::size_t j = 0; j < n; ++j)
                        if (T[j]) total += k.values[i * n + j];
            best = std::max(best, std::fabs(total));
        }
    }
    return best / (static_cast<double>(n) * static_cast<double>(n));
}

inline constexpr std::size_t kCutDistanceMaxBlocks = 8;

// Cut-distance restricted to block permutations: min over relabelings phi of
// ||a - b o phi||_cut.
inline double cut_distance_exact(const GraphonKernel& a, const GraphonKernel& b) {
    if (!a.is_step() || !b.is_step())
        throw argument_error("cut_distance_exact: step kernels required");
    if (a.n != b.n) throw argument_error("cut_distance_exact: block counts must match");
    const std::size_t n = a.n;
    if (n > kCutDistanceMaxBlocks)
        throw capability_error("cut_distance_exact: n > 8 not supported");
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    std::vector<double> diff(n * n);
    do {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                diff[i * n + j] = a.values[i * n + j] - b.values[perm[i] * n + perm[j]];
        best = std::min(best, cut_norm_exact(GraphonKernel::step(n, diff)));
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

inline double l1_norm(const GraphonKernel& k) {
    if (!k.is_step()) throw argument_error("l1_norm: step kernel required");
    double s = 0.0;
    for (double v : k.values) s += std::fabs(v);
    return s / (static_cast<double>(k.n) * static_cast<double>(k.n));
}

// Discrete graphop built from a graphon: fiber k carries atoms at midpoints
// zeta_j with mass w(xi_k, zeta_j) / atoms_per_fiber.
inline FiberKernel fiber_from_graphon(const GraphonKernel& k, std::size_t K,
                                      std::size_t atoms_per_fiber) {
    if (K < 1 || atoms_per_fiber < 1)
        throw argument_error("fiber_from_graphon: K and atoms_per_fiber must be >= 1");
    FiberKernel fk;
    fk.K = K;
    fk.fibers.resize(K);
    const double P = static_cast<double>(atoms_per_fiber);
    for (std::size_t kk = 0; kk < K; ++kk) {
        const double xi = fk.midpoint(kk);
        fk.fibers[kk].reserve(atoms_per_fiber);
        for (std::size_t j = 0; j < atoms_per_fiber; ++j) {
            const double zeta = (static_cast<double>(j) + 0.5) / P;
            fk.fibers[kk].push_back({zeta, k.eval(xi, zeta) / P});
        }
    }
    return fk;
}

// Step kernels persist as CSV matrices with header "n,<count>".
inline void save_step_csv(const std::string& path, const GraphonKernel& k) {
    if (!k.is_step()) throw argument_error("save_step_csv: step kernel required");
    Matrix m(k.n, k.n);
    m.a = k.values;
    save_matrix_csv(path, m);
}

inline GraphonKernel load_step_csv(const std::string& path) {
    return step_from_matrix(load_matrix_csv(path));
}

}  // namespace nexlim
