#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>

#include "nexlim/errors.hpp"
#include "nexlim/matrix.hpp"

namespace nexlim {

enum class Scheme { rk4, euler };

inline Scheme scheme_from_name(const std::string& s) {
    if (s == "rk4") return Scheme::rk4;
    if (s == "euler") return Scheme::euler;
    throw argument_error("unknown scheme: " + s);
}

// Number of fixed steps; T must be an integer multiple of dt to round-off.
inline std::size_t step_count(double dt, double T) {
    if (!(dt > 0.0)) throw argument_error("integrate: dt must be > 0");
    if (!(T >= 0.0)) throw argument_error("integrate: T must be >= 0");
    const double steps = std::round(T / dt);
    if (std::fabs(steps * dt - T) > 1e-12 * std::max(1.0, std::fabs(T)))
        throw argument_error("integrate: T must be an integer multiple of dt");
    return static_cast<std::size_t>(steps);
}

struct FlatOde {
    // rhs(t, y, dy): writes the derivative of the flat state vector.
    std::function<void(double, const Vec&, Vec&)> rhs;
    // Optional guard, called after every accepted step; throws to halt.
    std::function<void(double, const Vec&)> guard;
    // Observer at every grid time, including t0.
    std::function<void(std::size_t, double, const Vec&)> observe;
};

// Classical fixed-step RK4 (or explicit Euler) on a flat state vector.
// Deterministic: fixed update expressions, grid times computed as t0 + n*dt.
inline void integrate_flat(Vec& y, double t0, double dt, std::size_t steps, Scheme scheme,
                           const FlatOde& ode) {
    const std::size_t n = y.size();
    if (ode.observe) ode.observe(0, t0, y);
    Vec k1(n), k2(n), k3(n), k4(n), tmp(n);
    for (std::size_t step = 0; step < steps; ++step) {
        const double t = t0 + static_cast<double>(step) * dt;
        if (scheme == Scheme::euler) {
            ode.rhs(t, y, k1);
            for (std::size_t i = 0; i < n; ++i) y[i] += dt * k1[i];
        } else {
            const double half = 0.5 * dt;
            ode.rhs(t, y, k1);
            for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + half * k1[i];
            ode.rhs(t + half, tmp, k2);
            for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + half * k2[i];
            ode.rhs(t + half, tmp, k3);
            for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + dt * k3[i];
            ode.rhs(t + dt, tmp, k4);
            const double w = dt / 6.0;
            for (std::size_t i = 0; i < n; ++i)
                y[i] += w * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        const double tn = t0 + static_cast<double>(step + 1) * dt;
        if (!all_finite(y))
            throw divergence_error("integrate: state left the finite range at t = " +
                                   std::to_string(tn));
        if (ode.guard) ode.guard(tn, y);
        if (ode.observe) ode.observe(step + 1, tn, y);
    }
}

}  // namespace nexlim
