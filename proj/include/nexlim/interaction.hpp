#pragma once

#include <cmath>
#include <functional>
#include <span>

#include "nexlim/errors.hpp"
#include "nexlim/matrix.hpp"

namespace nexlim {

// Pairwise interaction phi(x, y). Difference-form models enter as
// phi(x, y) := phi~(y - x); sgn uses the convention sgn(0) = 0.
struct Interaction {
    enum class Form { zero, linear_diff, sine, hk_bump, sgn_diff, custom };

    Form form = Form::zero;
    double lambda = 1.0;  // linear_diff gain
    double radius = 1.0;  // hk_bump confidence radius
    std::function<double(double, double)> fn;  // custom scalar phi(x,y), d=1
    double lipschitz = 0.0;
    bool singular = false;

    static Interaction zero() { return {}; }
    static Interaction linear_diff(double lam) {
        Interaction p;
        p.form = Form::linear_diff;
        p.lambda = lam;
        p.lipschitz = std::fabs(lam);
        return p;
    }
    static Interaction sine() {
        Interaction p;
        p.form = Form::sine;
        p.lipschitz = 1.0;
        return p;
    }
    static Interaction hk_bump(double R) {
        if (!(R > 0.0)) throw argument_error("hk_bump: radius must be > 0");
        Interaction p;
        p.form = Form::hk_bump;
        p.radius = R;
        p.lipschitz = 1.0;  // within the confidence region
        return p;
    }
    static Interaction sgn_diff() {
        Interaction p;
        p.form = Form::sgn_diff;
        p.singular = true;
        return p;
    }
    static Interaction custom(std::function<double(double, double)> f, double lip) {
        Interaction p;
        p.form = Form::custom;
        p.fn = std::move(f);
        p.lipschitz = lip;
        return p;
    }

    double eval1(double x, double y) const {
        switch (form) {
            case Form::zero: return 0.0;
            case Form::linear_diff: return lambda * (y - x);
            case Form::sine: return std::sin(y - x);
            case Form::hk_bump: {
                const double u = y - x;
                return std::fabs(u) <= radius ? u : 0.0;
            }
            case Form::sgn_diff: {
                const double u = y - x;
                return u > 0.0 ? 1.0 : (u < 0.0 ? -1.0 : 0.0);
            }
            case Form::custom: return fn(x, y);
        }
        return 0.0;
    }

    // d-dimensional evaluation, writes phi(x, y) into out.
    void evald(std::size_t d, const double* x, const double* y, double* out) const {
        if (d == 1) {
            out[0] = eval1(x[0], y[0]);
            return;
        }
        switch (form) {
            case Form::zero:
                for (std::size_t k = 0; k < d; ++k) out[k] = 0.0;
                return;
            case Form::linear_diff:
                for (std::size_t k = 0; k < d; ++k) out[k] = lambda * (y[k] - x[k]);
                return;
            case Form::hk_bump: {
                double nrm2 = 0.0;
                for (std::size_t k = 0; k < d; ++k) {
                    const double u = y[k] - x[k];
                    nrm2 += u * u;
                }
                const bool in = nrm2 <= radius * radius;
                for (std::size_t k = 0; k < d; ++k) out[k] = in ? (y[k] - x[k]) : 0.0;
                return;
            }
            default:
                throw argument_error("interaction: this form is scalar-only (d = 1)");
        }
    }
};

// Intrinsic drift omega(xi, x, t); scalar states only.
struct Omega {
    enum class Form { none, constant, fn };
    Form form = Form::none;
    double u = 0.0;
    std::function<double(double, double, double)> f;  // (xi, x, t)

    static Omega none() { return {}; }
    static Omega constant(double value) {
        Omega o;
        o.form = Form::constant;
        o.u = value;
        return o;
    }
    static Omega of(std::function<double(double, double, double)> fun) {
        Omega o;
        o.form = Form::fn;
        o.f = std::move(fun);
        return o;
    }

    bool present() const { return form != Form::none; }
    double eval(double xi, double x, double t) const {
        switch (form) {
            case Form::none: return 0.0;
            case Form::constant: return u;
            case Form::fn: return f(xi, x, t);
        }
        return 0.0;
    }
};

// Dynamics of agent weights m_i (charisma) or edge weights.
struct WeightDynamics {
    enum class Form { none, conserving_S, pairwise_competition, relaxation_H, general_edge };

    Form form = Form::none;
    int k = 1;  // conserving_S arity, <= 2
    std::function<double(std::span<const double>, std::span<const double>)> S2;
    std::function<double(std::span<const double>, std::span<const double>, std::span<const double>)> S3;
    std::function<double(double)> s;  // pairwise competition kernel, odd
    bool s_singular = false;
    double eps = 1.0;
    std::function<double(double, double)> H;  // relaxation target on phases
    std::function<double(std::size_t, std::size_t, const Vec&, const Matrix&)> psi_edge;

    static WeightDynamics none() { return {}; }
    static WeightDynamics conserving1(
        std::function<double(std::span<const double>, std::span<const double>)> S) {
        WeightDynamics w;
        w.form = Form::conserving_S;
        w.k = 1;
        w.S2 = std::move(S);
        return w;
    }
    static WeightDynamics conserving2(
        std::function<double(std::span<const double>, std::span<const double>,
                             std::span<const double>)> S) {
        WeightDynamics w;
        w.form = Form::conserving_S;
        w.k = 2;
        w.S3 = std::move(S);
        return w;
    }
    static WeightDynamics pairwise_competition(std::function<double(double)> sfun, bool singular) {
        WeightDynamics w;
        w.form = Form::pairwise_competition;
        w.s = std::move(sfun);
        w.s_singular = singular;
        return w;
    }
    static WeightDynamics relaxation(double eps, std::function<double(double, double)> target) {
        if (!(eps > 0.0)) throw argument_error("relaxation_H: eps must be > 0");
        WeightDynamics w;
        w.form = Form::relaxation_H;
        w.eps = eps;
        w.H = std::move(target);
        return w;
    }

    bool singular() const { return form == Form::pairwise_competition && s_singular; }
};

// Label-coupled interaction G(t, xi, zeta, x, y) of the general particle system.
using GeneralCoupling = std::function<void(double, double, double, std::span<const double>,
                                           std::span<const double>, std::span<double>)>;

}  // namespace nexlim
