#pragma once

#include <array>
#include <cstddef>

namespace nexlim {

// 8-point Gauss-Legendre rule on [-1, 1].
struct GaussLegendre8 {
    static constexpr std::array<double, 8> node = {
        -0.9602898564975362316835609, -0.7966664774136267395915539,
        -0.5255324099163289858177390, -0.1834346424956498049394761,
        0.1834346424956498049394761,  0.5255324099163289858177390,
        0.7966664774136267395915539,  0.9602898564975362316835609};
    static constexpr std::array<double, 8> weight = {
        0.1012285362903762591525314, 0.2223810344533744705443560,
        0.3137066458778872873379622, 0.3626837833783619829651504,
        0.3626837833783619829651504, 0.3137066458778872873379622,
        0.2223810344533744705443560, 0.1012285362903762591525314};
};

// Mean of f over [a, b]. Self-normalizing, so constants are reproduced exactly.
template <class F>
double cell_mean_1d(F&& f, double a, double b) {
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double num = 0.0, den = 0.0;
    for (std::size_t p = 0; p < 8; ++p) {
        num += GaussLegendre8::weight[p] * f(mid + half * GaussLegendre8::node[p]);
        den += GaussLegendre8::weight[p];
    }
    return num / den;
}

// Mean of f over the cell [a, b] x [c, d] by the tensor rule.
template <class F>
double cell_mean_2d(F&& f, double a, double b, double c, double d) {
    const double mx = 0.5 * (a + b), hx = 0.5 * (b - a);
    const double my = 0.5 * (c + d), hy = 0.5 * (d - c);
    double num = 0.0, den = 0.0;
    for (std::size_t p = 0; p < 8; ++p) {
        const double xi = mx + hx * GaussLegendre8::node[p];
        double rnum = 0.0;
        for (std::size_t q = 0; q < 8; ++q)
            rnum += GaussLegendre8::weight[q] * f(xi, my + hy * GaussLegendre8::node[q]);
        num += GaussLegendre8::weight[p] * rnum;
        den += GaussLegendre8::weight[p];
    }
    return num / (den * den);
}

}  // namespace nexlim
