#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "nexlim/meanfield.hpp"
#include "nexlim/rng.hpp"

using namespace nexlim;

namespace {

Vec random_vec(std::uint64_t seed, std::size_t n, double lo, double hi) {
    Vec v(n);
    for (std::size_t i = 0; i < n; ++i)
        v[i] = lo + (hi - lo) * counter_uniform(seed, Stream::init, i, 13);
    return v;
}

// Ensemble with P atoms per fiber spread around a profile.
MFParticleEnsemble spread_ensemble(const Vec& centers, std::size_t P, double width,
                                   std::uint64_t seed) {
    const std::size_t K = centers.size();
    MFParticleEnsemble e;
    e.K = K;
    e.d = 1;
    e.off.resize(K + 1);
    for (std::size_t k = 0; k <= K; ++k) e.off[k] = k * P;
    e.x.resize(K * P);
    e.a.assign(K * P, 1.0 / static_cast<double>(P));
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t p = 0; p < P; ++p)
            e.x[k * P + p] =
                centers[k] + width * (counter_uniform(seed, Stream::init, k, p) - 0.5);
    return e;
}

}  // namespace

TEST_CASE("velocity field") {
    const auto centers = random_vec(3, 4, -1.0, 1.0);
    const auto ens = MFParticleEnsemble::single_atom(centers, 4, 1);

    SECTION("zero interaction gives zero velocity") {
        const auto v = velocity_field(ens, GraphonKernel::constant(1.0), Interaction::zero(), 0.3,
                                      &centers[0]);
        CHECK(v[0] == 0.0);
    }
    SECTION("all-ones kernel with single atoms equals the grid RHS") {
        const auto phi = Interaction::linear_diff(1.0);
        Matrix W(4, 4, 1.0);
        Vec grid_rhs(4);
        pair_drift(W.a.data(), 4, phi, 4, 1, centers.data(), nullptr, 0.25, grid_rhs.data(),
                   false);
        for (std::size_t k = 0; k < 4; ++k) {
            const auto v = velocity_field(ens, GraphonKernel::constant(1.0), phi,
                                          ens.midpoint(k), &centers[k]);
            CHECK(v[0] == Catch::Approx(grid_rhs[k]).margin(1e-15));
        }
    }
    SECTION("zero fiber kernel gives zero") {
        FiberKernel fk;
        fk.K = 4;
        fk.fibers.resize(4);
        const auto v = velocity_field(ens, fk, Interaction::sine(), 0.9, &centers[2]);
        CHECK(v[0] == 0.0);
    }
}

TEST_CASE("non-exchangeable mean-field: arrow 1 is a bitwise identity") {
    const std::size_t K = 20;
    const Vec x0 = restrict_cell_average(InitialProfile::sine(2.5, 1.0), K);
    const auto kernel = GraphonKernel::exp_abs_diff();
    // cell-average the kernel first: its pointwise values at midpoints are then
    // exactly the continuum solver's coupling matrix
    const auto kbar = step_from_matrix(discretize_cell_average(kernel, K));

    const auto ens0 = MFParticleEnsemble::single_atom(x0, K, 1);
    const auto mfl = solve_mfl_nonexchangeable(kbar, Interaction::sine(), ens0, 0.01, 1.0);

    ContinuumField f0;
    f0.M = K;
    f0.d = 1;
    f0.x = x0;
    const auto cont = solve_continuum(kbar, Interaction::sine(), f0, 0.01, 1.0);

    REQUIRE(mfl.size() == cont.size());
    for (std::size_t s = 0; s < mfl.size(); ++s) CHECK(mfl[s].x == cont[s].x);  // 0 ULP
}

TEST_CASE("non-exchangeable mean-field basics") {
    const std::size_t K = 6, P = 3;
    const auto ens0 = spread_ensemble(random_vec(4, K, -1.0, 1.0), P, 0.4, 99);

    SECTION("zero interaction freezes the ensemble") {
        const auto traj =
            solve_mfl_nonexchangeable(GraphonKernel::half_plane(), Interaction::zero(), ens0,
                                      0.1, 1.0);
        CHECK(traj.back().x == ens0.x);
    }
    SECTION("label marginal and transport masses are invariant") {
        const auto traj = solve_mfl_nonexchangeable(GraphonKernel::exp_abs_diff(),
                                                    Interaction::sine(), ens0, 0.05, 1.0);
        for (const auto& snap : traj) {
            CHECK(snap.a == ens0.a);      // per-fiber transport masses untouched
            CHECK(snap.off == ens0.off);  // fiber structure (the label marginal) untouched
        }
    }
    SECTION("fiber-kernel coupling at matching grids") {
        // graphop built from the constant kernel: every fiber integrates all
        // others uniformly, so single-atom dynamics match the all-ones grid RHS
        const auto fk = fiber_from_graphon(GraphonKernel::constant(1.0), K, K);
        const auto single = MFParticleEnsemble::single_atom(random_vec(8, K, -1, 1), K, 1);
        const auto traj = solve_mfl_fiber_kernel(fk, Interaction::linear_diff(1.0), single, 0.05,
                                                 1.0);
        Matrix W(K, K, 1.0);
        ParticleState s0;
        s0.n = K;
        s0.d = 1;
        s0.x = single.x;
        const auto micro = run_static_graph(W, Interaction::linear_diff(1.0), Omega::none(), s0,
                                            0.05, 1.0);
        for (std::size_t k = 0; k < K; ++k)
            CHECK(traj.back().x[k] == Catch::Approx(micro.back().x[k]).margin(1e-12));
    }
}

TEST_CASE("exchangeable mean-field") {
    SECTION("two atoms meet at the midpoint exponentially") {
        AtomCloud c0;
        c0.d = 1;
        c0.x = {0.0, 1.0};
        c0.a = {0.5, 0.5};
        const auto traj = solve_mfl_exchangeable(Interaction::linear_diff(1.0), c0, 0.01, 2.0);
        for (const auto& snap : traj) {
            const double expect_lo = 0.5 - 0.5 * std::exp(-snap.t);
            CHECK(snap.x[0] == Catch::Approx(expect_lo).margin(1e-6));
            CHECK(snap.x[1] == Catch::Approx(1.0 - expect_lo).margin(1e-6));
        }
    }
    SECTION("single atom is stationary iff phi(x, x) = 0") {
        AtomCloud c0;
        c0.d = 1;
        c0.x = {0.7};
        c0.a = {1.0};
        const auto still = solve_mfl_exchangeable(Interaction::sine(), c0, 0.1, 1.0);
        CHECK(still.back().x[0] == 0.7);
        const auto drifting = solve_mfl_exchangeable(
            Interaction::custom([](double, double) { return 1.0; }, 0.0), c0, 0.1, 1.0);
        CHECK(drifting.back().x[0] == Catch::Approx(1.7).margin(1e-12));
    }
    SECTION("subordination: label-blind continuum run collapses onto it") {
        const std::size_t M = 12;
        ContinuumField f0;
        f0.M = M;
        f0.d = 1;
        f0.x = restrict_cell_average(InitialProfile::linear(-1.0, 2.0), M);
        const auto cont = solve_continuum(GraphonKernel::constant(1.0), Interaction::sine(), f0,
                                          0.01, 1.0);
        AtomCloud c0;
        c0.d = 1;
        c0.x = f0.x;
        c0.a.assign(M, 1.0 / static_cast<double>(M));
        const auto mfl = solve_mfl_exchangeable(Interaction::sine(), c0, 0.01, 1.0);
        REQUIRE(cont.size() == mfl.size());
        for (std::size_t s = 0; s < cont.size(); ++s)
            for (std::size_t k = 0; k < M; ++k)
                CHECK(mfl[s].x[k] == Catch::Approx(cont[s].x[k]).margin(1e-12));
    }
}

TEST_CASE("weighted mean-field with source") {
    AtomCloud c0;
    c0.d = 1;
    c0.x = random_vec(21, 8, -1.0, 1.0);
    c0.a.assign(8, 0.125);
    c0.m = random_vec(22, 8, 0.5, 1.5);

    SECTION("S == 0 keeps m and transports") {
        const auto psi = WeightDynamics::conserving1(
            [](std::span<const double>, std::span<const double>) { return 0.0; });
        const auto traj = solve_mfl_weighted(Interaction::linear_diff(1.0), psi, c0, 0.01, 1.0);
        CHECK(*traj.back().m == *c0.m);
    }
    SECTION("single atom with S(x,x) = 0 keeps m") {
        AtomCloud one;
        one.d = 1;
        one.x = {0.3};
        one.a = {1.0};
        one.m = Vec{2.0};
        const auto psi = WeightDynamics::conserving1(
            [](std::span<const double> a, std::span<const double> b) {
                return std::sin(b[0] - a[0]);
            });
        const auto traj = solve_mfl_weighted(Interaction::linear_diff(1.0), psi, one, 0.1, 1.0);
        CHECK((*traj.back().m)[0] == 2.0);
    }
    SECTION("weighted mass sum a*m is conserved for antisymmetric S") {
        const auto psi = WeightDynamics::conserving1(
            [](std::span<const double> a, std::span<const double> b) {
                return std::sin(b[0] - a[0]);
            });
        const auto traj = solve_mfl_weighted(Interaction::sine(), psi, c0, 1e-3, 5.0);
        double em0 = 0.0;
        for (std::size_t i = 0; i < 8; ++i) em0 += c0.a[i] * (*c0.m)[i];
        for (const auto& snap : traj) {
            double em = 0.0;
            for (std::size_t i = 0; i < 8; ++i) em += snap.a[i] * (*snap.m)[i];
            CHECK(std::fabs(em - em0) <= 1e-10 * std::fabs(em0));
        }
    }
    SECTION("arity cap and positivity requirement") {
        WeightDynamics bad;
        bad.form = WeightDynamics::Form::conserving_S;
        bad.k = 3;
        CHECK_THROWS_AS(solve_mfl_weighted(Interaction::sine(), bad, c0, 0.1, 1.0),
                        capability_error);
        AtomCloud zero = c0;
        (*zero.m)[0] = 0.0;
        const auto psi = WeightDynamics::conserving1(
            [](std::span<const double>, std::span<const double>) { return 0.0; });
        CHECK_THROWS_AS(solve_mfl_weighted(Interaction::sine(), psi, zero, 0.1, 1.0),
                        argument_error);
    }
}

TEST_CASE("adaptive kuramoto mean-field") {
    const std::size_t K = 6;
    const Vec x0 = random_vec(31, K, 0.0, 6.0);
    const auto H = [](double x, double y) { return -std::cos(y - x); };

    SECTION("eps = 0 reduces to the static fiber-kernel dynamics") {
        const auto eta0 = fiber_from_graphon(GraphonKernel::exp_abs_diff(), K, K);
        const auto ens0 = MFParticleEnsemble::single_atom(x0, K, 1);
        const auto adapt = solve_mfl_adaptive_kuramoto(ens0, eta0, Omega::none(),
                                                       Interaction::sine(), H, 0.0, 0.02, 1.0);
        const auto stat = solve_mfl_fiber_kernel(eta0, Interaction::sine(), ens0, 0.02, 1.0);
        REQUIRE(adapt.size() == stat.size());
        for (std::size_t s = 0; s < adapt.size(); ++s) CHECK(adapt[s].x == stat[s].x);
    }
    SECTION("H == 0: coupling decays toward free rotation (closed form)") {
        const double eps = 0.9;
        // all-to-all eta0 with mass 1/2 per neighbour cell, two fibers
        const auto eta0 = fiber_from_graphon(GraphonKernel::constant(1.0), 2, 2);
        MFParticleEnsemble ens0 = MFParticleEnsemble::single_atom({0.0, 1.0}, 2, 1);
        const auto traj = solve_mfl_adaptive_kuramoto(ens0, eta0, Omega::none(),
                                                      Interaction::linear_diff(1.0),
                                                      [](double, double) { return 0.0; }, eps,
                                                      1e-3, 2.0);
        // diff' = -e^(-eps t) diff  =>  diff(t) = exp(-(1 - e^(-eps t))/eps)
        for (const auto& snap : traj) {
            const double expect = std::exp(-(1.0 - std::exp(-eps * snap.t)) / eps);
            CHECK(snap.x[1] - snap.x[0] == Catch::Approx(expect).margin(1e-6));
        }
    }
    SECTION("single-atom fibers track the microscopic adaptive network at O(dt^2)") {
        const double eps = 0.7;
        const std::size_t N = K;
        Matrix W0(N, N);
        for (std::size_t i = 0; i < N * N; ++i)
            W0.a[i] = counter_uniform(41, Stream::init, i, 0);

        // eta0 with fiber i = atoms {(zeta_j, W0_ij / N)}
        FiberKernel eta0;
        eta0.K = N;
        eta0.fibers.resize(N);
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t j = 0; j < N; ++j)
                eta0.fibers[i].push_back(
                    {(static_cast<double>(j) + 0.5) / N, W0(i, j) / static_cast<double>(N)});

        CoupledNetworkState s0;
        s0.n = N;
        s0.x = x0;
        s0.W = W0;

        double err_prev = 0.0;
        for (const double dt : {1e-2, 5e-3}) {
            const auto micro = run_adaptive_kuramoto(Omega::constant(0.4), Interaction::sine(), H,
                                                     eps, s0, dt, 2.0);
            const auto ens0 = MFParticleEnsemble::single_atom(x0, N, 1);
            const auto mfl = solve_mfl_adaptive_kuramoto(ens0, eta0, Omega::constant(0.4),
                                                         Interaction::sine(), H, eps, dt, 2.0);
            REQUIRE(micro.size() == mfl.size());
            double worst = 0.0;
            for (std::size_t s = 0; s < micro.size(); ++s)
                for (std::size_t i = 0; i < N; ++i)
                    worst = std::max(worst, std::fabs(micro[s].x[i] - mfl[s].x[i]));
            CHECK(worst <= 5.0 * dt * dt);
            if (err_prev > 0.0) {
                const double ratio = err_prev / worst;
                CHECK(ratio >= 2.5);  // second-order decay between the two dt values
                CHECK(ratio <= 6.5);
            }
            err_prev = worst;
        }
    }
}

TEST_CASE("dirac decomposition") {
    SECTION("two half atoms split the interval") {
        PointMeasure p;
        p.d = 1;
        p.x = {-1.0, 4.0};
        p.mass = {0.5, 0.5};
        p.total = 1.0;
        const auto f = dirac_decomposition(p);
        CHECK(*f.eval(0.0) == -1.0);
        CHECK(*f.eval(0.49) == -1.0);
        CHECK(*f.eval(0.5) == 4.0);
        CHECK(*f.eval(1.0) == 4.0);
        const auto back = f.pushforward();
        CHECK(back.x == p.x);
        CHECK(back.mass == p.mass);
    }
    SECTION("single atom is the constant function") {
        PointMeasure p;
        p.d = 1;
        p.x = {2.5};
        p.mass = {1.0};
        p.total = 1.0;
        const auto f = dirac_decomposition(p);
        CHECK(*f.eval(0.0) == 2.5);
        CHECK(*f.eval(0.77) == 2.5);
    }
    SECTION("cumulative breakpoints") {
        PointMeasure p;
        p.d = 1;
        p.x = {1.0, 2.0, 3.0};
        p.mass = {0.2, 0.3, 0.5};
        p.total = 1.0;
        const auto f = dirac_decomposition(p);
        CHECK(f.breaks[0] == 0.0);
        CHECK(f.breaks[1] == Catch::Approx(0.2).margin(1e-15));
        CHECK(f.breaks[2] == Catch::Approx(0.5).margin(1e-15));
        CHECK(*f.eval(0.19) == 1.0);
        CHECK(*f.eval(0.2) == 2.0);
        CHECK(*f.eval(0.6) == 3.0);
    }
    SECTION("negative mass rejected") {
        PointMeasure p;
        p.d = 1;
        p.x = {0.0, 1.0};
        p.mass = {1.5, -0.5};
        p.total = 1.0;
        CHECK_THROWS_AS(dirac_decomposition(p), argument_error);
    }
}

TEST_CASE("burgers primitive") {
    ParticleState s;
    s.n = 2;
    s.d = 1;
    s.x = {0.0, 1.0};
    s.m = Vec{1.0, 1.0};
    const Vec q = {-0.5, 0.0, 0.5, 0.99, 1.0, 2.0};
    const auto F = burgers_primitive(s, q);
    CHECK(F[0] == -0.5);
    CHECK(F[1] == 0.0);  // H(0) = 1 counts the atom at 0
    CHECK(F[2] == 0.0);
    CHECK(F[3] == 0.0);
    CHECK(F[4] == 0.5);
    CHECK(F[5] == 0.5);

    // boundary values are exactly -1/2 and +1/2 when the total mass is N
    ParticleState big;
    big.n = 50;
    big.d = 1;
    big.x = random_vec(71, 50, -2.0, 2.0);
    big.m = Vec(50, 1.0);
    const auto Fb = burgers_primitive(big, {-10.0, 10.0});
    CHECK(Fb[0] == -0.5);
    CHECK(Fb[1] == 0.5);

    // monotone nondecreasing in x for nonnegative masses
    Vec grid(101);
    for (std::size_t i = 0; i <= 100; ++i) grid[i] = -3.0 + 6.0 * static_cast<double>(i) / 100.0;
    const auto Fg = burgers_primitive(big, grid);
    for (std::size_t i = 0; i + 1 < Fg.size(); ++i) CHECK(Fg[i] <= Fg[i + 1]);
}
