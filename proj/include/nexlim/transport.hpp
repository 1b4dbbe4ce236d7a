#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "nexlim/errors.hpp"
#include "nexlim/matrix.hpp"

namespace nexlim {

// Exact optimal transport between discrete measures: successive shortest
// augmenting paths with node potentials on the complete bipartite
// transportation network. Costs are arbitrary nonnegative reals; masses are
// real-valued. Small dense instances only (the metric ops cap the support).
inline double min_cost_transport(Vec supply, Vec demand, const Matrix& cost) {
    const std::size_t A = supply.size(), B = demand.size();
    if (cost.rows != A || cost.cols != B)
        throw argument_error("min_cost_transport: cost matrix shape mismatch");
    double total_sup = 0.0, total_dem = 0.0;
    for (double s : supply) total_sup += s;
    for (double t : demand) total_dem += t;
    const double mass_eps = 1e-15 * std::max({total_sup, total_dem, 1.0});
    const double inf = std::numeric_limits<double>::infinity();

    Matrix flow(A, B, 0.0);
    Vec pot(A + B, 0.0);
    std::vector<double> dist(A + B);
    std::vector<int> parent(A + B);
    std::vector<char> done(A + B);

    const std::size_t max_aug = 64 * (A + B + 2);
    for (std::size_t round = 0;; ++round) {
        double remaining = 0.0;
        for (double t : demand) remaining += t;
        if (remaining <= mass_eps) break;
        if (round >= max_aug)
            throw capability_error("min_cost_transport: augmentation cap exceeded");

        // Multi-source Dijkstra on the residual network with reduced costs.
        for (std::size_t v = 0; v < A + B; ++v) {
            dist[v] = v < A && supply[v] > mass_eps ? 0.0 : inf;
            parent[v] = -1;
            done[v] = 0;
        }
        for (std::size_t iter = 0; iter < A + B; ++iter) {
            std::size_t u = A + B;
            double best = inf;
            for (std::size_t v = 0; v < A + B; ++v)
                if (!done[v] && dist[v] < best) best = dist[v], u = v;
            if (u == A + B) break;
            done[u] = 1;
            if (u < A) {
                for (std::size_t b = 0; b < B; ++b) {
                    double rc = cost(u, b) + pot[u] - pot[A + b];
                    if (rc < 0.0) rc = 0.0;  // absorb round-off in the potentials
                    if (dist[u] + rc < dist[A + b]) {
                        dist[A + b] = dist[u] + rc;
                        parent[A + b] = static_cast<int>(u);
                    }
                }
            } else {
                const std::size_t b = u - A;
                for (std::size_t a = 0; a < A; ++a) {
                    if (flow(a, b) <= 0.0) continue;
                    double rc = -cost(a, b) + pot[A + b] - pot[a];
                    if (rc < 0.0) rc = 0.0;
                    if (dist[u] + rc < dist[a]) {
                        dist[a] = dist[u] + rc;
                        parent[a] = static_cast<int>(u);
                    }
                }
            }
        }

        // Nearest sink that still wants mass.
        std::size_t target = A + B;
        double bestd = inf;
        for (std::size_t b = 0; b < B; ++b)
            if (demand[b] > mass_eps && dist[A + b] < bestd) {
                bestd = dist[A + b];
                target = A + b;
            }
        if (target == A + B) break;  // disconnected remainder (supplies exhausted)

        for (std::size_t v = 0; v < A + B; ++v)
            if (dist[v] < inf) pot[v] += std::min(dist[v], bestd);

        // Bottleneck along the augmenting path.
        double delta = demand[target - A];
        for (std::size_t v = target; parent[v] != -1;) {
            const auto p = static_cast<std::size_t>(parent[v]);
            if (v >= A && p < A) {
                // forward arc p -> v: unlimited
            } else {
                delta = std::min(delta, flow(v, p - A));  // backward arc (v source, p sink)
            }
            v = p;
            if (parent[v] == -1) delta = std::min(delta, supply[v]);
        }
        if (!(delta > 0.0)) break;

        for (std::size_t v = target; parent[v] != -1;) {
            const auto p = static_cast<std::size_t>(parent[v]);
            if (v >= A && p < A)
                flow(p, v - A) += delta;
            else
                flow(v, p - A) -= delta;
            v = p;
            if (parent[v] == -1) supply[v] -= delta;
        }
        demand[target - A] -= delta;
    }

    double value = 0.0;
    for (std::size_t a = 0; a < A; ++a)
        for (std::size_t b = 0; b < B; ++b)
            if (flow(a, b) != 0.0) value += flow(a, b) * cost(a, b);
    return value;
}

}  // namespace nexlim
