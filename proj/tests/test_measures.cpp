#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>

#include "nexlim/measures.hpp"
#include "nexlim/rng.hpp"

using namespace nexlim;

namespace {

LabeledEmpiricalMeasure make1d(Vec xs, Vec ms, Vec labels = {}) {
    LabeledEmpiricalMeasure mu;
    mu.d = 1;
    mu.x = std::move(xs);
    mu.mass = std::move(ms);
    mu.xi = labels.empty() ? Vec(mu.mass.size(), 0.0) : std::move(labels);
    for (double m : mu.mass) mu.total += m;
    return mu;
}

LabeledEmpiricalMeasure random_prob_measure(std::uint64_t seed, std::size_t max_atoms,
                                            double span = 4.0) {
    const std::size_t n = 1 + counter_bits(seed, Stream::init, 0, 0) % max_atoms;
    Vec xs(n), ms(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = span * (counter_uniform(seed, Stream::init, i, 1) - 0.5);
        ms[i] = 0.05 + counter_uniform(seed, Stream::init, i, 2);
        total += ms[i];
    }
    for (double& m : ms) m /= total;
    auto mu = make1d(std::move(xs), std::move(ms));
    mu.total = 0.0;
    for (double m : mu.mass) mu.total += m;
    return mu;
}

ParticleState particles(Vec x, Vec m = {}) {
    ParticleState s;
    s.n = x.size();
    s.d = 1;
    s.x = std::move(x);
    if (!m.empty()) s.m = std::move(m);
    return s;
}

}  // namespace

TEST_CASE("from_particles") {
    auto s = particles({1.0, 2.0}, {2.0, 0.0});
    const auto uni = from_particles(s, Weighting::uniform);
    REQUIRE(uni.size() == 2);
    CHECK(uni.mass[0] == 0.5);
    CHECK(uni.mass[1] == 0.5);
    CHECK(uni.xi[0] == 0.5);
    CHECK(uni.xi[1] == 1.0);
    CHECK(uni.total == 1.0);

    const auto wei = from_particles(s, Weighting::agent_weights);
    CHECK(wei.mass[0] == 1.0);
    CHECK(wei.mass[1] == 0.0);
    CHECK(wei.total == 1.0);

    auto s3 = particles({0.0, 1.0, 2.0}, {1.0, 1.0, 1.0});
    CHECK(from_particles(s3, Weighting::agent_weights).total == Catch::Approx(1.0).margin(1e-15));

    auto bare = particles({0.0, 1.0});
    CHECK_THROWS_AS(from_particles(bare, Weighting::agent_weights), argument_error);
}

TEST_CASE("fibered_from_particles") {
    auto s = particles({1.0, 2.0, 3.0, 4.0});
    const auto f = fibered_from_particles(s, 2, 2);
    REQUIRE(f.K == 2);
    CHECK(f.off == std::vector<std::size_t>{0, 2, 4});
    CHECK(f.mass == Vec{0.5, 0.5, 0.5, 0.5});
    f.validate();

    const auto unit = fibered_from_particles(s, 4, 1);
    for (double m : unit.mass) CHECK(m == 1.0);

    const auto single = fibered_from_particles(s, 1, 4);
    CHECK(single.K == 1);
    CHECK(single.mass == Vec(4, 0.25));

    CHECK_THROWS_AS(fibered_from_particles(s, 3, 2), argument_error);
}

TEST_CASE("wasserstein1 in 1d") {
    CHECK(wasserstein1_1d({0.0}, {1.0}, {1.0}, {1.0}) == 1.0);
    CHECK(wasserstein1_1d({0.0, 1.0}, {0.5, 0.5}, {0.5}, {1.0}) == 0.5);
    const auto mu = random_prob_measure(5, 12);
    CHECK(wasserstein1_1d(mu.x, mu.mass, mu.x, mu.mass) == 0.0);
    CHECK_THROWS_AS(wasserstein1_1d({0.0}, {1.0}, {0.0}, {0.5}), argument_error);
}

TEST_CASE("wasserstein1 via optimal transport") {
    SECTION("trivial cases") {
        const auto a = make1d({0.7}, {1.0});
        CHECK(wasserstein1_lp(a, a) == 0.0);

        // product space: delta at (xi=0, x=0) vs (xi=1, x=0)
        auto p = make1d({0.0}, {1.0}, {0.0});
        auto q = make1d({0.0}, {1.0}, {1.0});
        CHECK(wasserstein1_lp(p, q) == Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("agrees with the exact 1d solver on 50 random instances") {
        for (std::uint64_t trial = 0; trial < 50; ++trial) {
            const auto mu = random_prob_measure(1000 + trial, 20);
            const auto nu = random_prob_measure(2000 + trial, 20);
            const double lp = wasserstein1_lp(mu, nu, GroundMetric::euclidean());
            const double cdf = wasserstein1_1d(mu.x, mu.mass, nu.x, nu.mass);
            CHECK(lp == Catch::Approx(cdf).margin(1e-9));
        }
    }
    SECTION("support cap and total mismatch") {
        Vec big(300, 0.0), bm(300, 1.0 / 300);
        auto mu = make1d(big, bm);
        auto nu = mu;
        CHECK_THROWS_AS(wasserstein1_lp(mu, nu), capability_error);
        CHECK_THROWS_AS(wasserstein1_lp(make1d({0.0}, {1.0}), make1d({0.0}, {0.7})),
                        argument_error);
    }
}

TEST_CASE("bounded lipschitz distance") {
    SECTION("two-point closed form min(|a-b|, 2)") {
        CHECK(bounded_lipschitz(make1d({0.0}, {1.0}), make1d({3.0}, {1.0})) ==
              Catch::Approx(2.0).margin(1e-12));
        CHECK(bounded_lipschitz(make1d({0.0}, {1.0}), make1d({0.5}, {1.0})) ==
              Catch::Approx(0.5).margin(1e-12));
        const auto mu = random_prob_measure(7, 10);
        CHECK(bounded_lipschitz(mu, mu) == Catch::Approx(0.0).margin(1e-12));
        for (std::uint64_t trial = 0; trial < 100; ++trial) {
            const double a = 8.0 * (counter_uniform(trial, Stream::init, 1, 1) - 0.5);
            const double b = 8.0 * (counter_uniform(trial, Stream::init, 2, 2) - 0.5);
            const double d = bounded_lipschitz(make1d({a}, {1.0}), make1d({b}, {1.0}));
            CHECK(d == Catch::Approx(std::min(std::fabs(a - b), 2.0)).margin(1e-9));
        }
    }
    SECTION("unequal totals: pure disposal") {
        const double d = bounded_lipschitz(make1d({0.0}, {2.0}), make1d({0.0}, {1.0}));
        CHECK(d == Catch::Approx(1.0).margin(1e-12));
        const double e = bounded_lipschitz(make1d({0.0}, {1.0}), LabeledEmpiricalMeasure{});
        CHECK(e == Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("dominated by W1 and by 2 on probability measures") {
        for (std::uint64_t trial = 0; trial < 50; ++trial) {
            const auto mu = random_prob_measure(3000 + trial, 16);
            const auto nu = random_prob_measure(4000 + trial, 16);
            const double bl = bounded_lipschitz(mu, nu);
            const double w1 = wasserstein1_lp(mu, nu, GroundMetric::euclidean());
            CHECK(bl <= w1 + 1e-9);
            CHECK(bl <= 2.0 + 1e-12);
        }
    }
    SECTION("primal feasible potentials never beat the dual value") {
        // f(x) = clamp(c + s (x - anchor), -1, 1) is feasible for |s| <= 1
        for (std::uint64_t trial = 0; trial < 40; ++trial) {
            const auto mu = random_prob_measure(5000 + trial, 10);
            const auto nu = random_prob_measure(6000 + trial, 10);
            const double bl = bounded_lipschitz(mu, nu);
            for (std::uint64_t probe = 0; probe < 25; ++probe) {
                const double anchor = 4.0 * (counter_uniform(trial, Stream::search, probe, 1) - 0.5);
                const double c = 2.0 * (counter_uniform(trial, Stream::search, probe, 2) - 0.5);
                const double slope = 2.0 * (counter_uniform(trial, Stream::search, probe, 3) - 0.5);
                auto f = [&](double x) {
                    return std::clamp(c + slope * (x - anchor), -1.0, 1.0);
                };
                double val = 0.0;
                for (std::size_t i = 0; i < mu.size(); ++i) val += f(mu.x[i]) * mu.mass[i];
                for (std::size_t i = 0; i < nu.size(); ++i) val -= f(nu.x[i]) * nu.mass[i];
                CHECK(val <= bl + 1e-9);
            }
        }
    }
}

TEST_CASE("metric axioms on random instances") {
    std::size_t checked = 0;
    for (std::uint64_t trial = 0; trial < 200; ++trial) {
        const auto a = random_prob_measure(7000 + trial, 32);
        const auto b = random_prob_measure(8000 + trial, 32);
        const auto c = random_prob_measure(9000 + trial, 32);
        const auto metric = GroundMetric::euclidean();

        const double wab = wasserstein1_lp(a, b, metric);
        const double wba = wasserstein1_lp(b, a, metric);
        const double wac = wasserstein1_lp(a, c, metric);
        const double wcb = wasserstein1_lp(c, b, metric);
        CHECK(std::fabs(wab - wba) <= 1e-9);
        CHECK(wab <= wac + wcb + 1e-9);
        CHECK(wasserstein1_lp(a, a, metric) <= 1e-9);

        const double bab = bounded_lipschitz(a, b, metric);
        const double bba = bounded_lipschitz(b, a, metric);
        const double bac = bounded_lipschitz(a, c, metric);
        const double bcb = bounded_lipschitz(c, b, metric);
        CHECK(std::fabs(bab - bba) <= 1e-9);
        CHECK(bab <= bac + bcb + 1e-9);
        CHECK(bounded_lipschitz(a, a, metric) <= 1e-9);
        ++checked;
    }
    CHECK(checked == 200);
}

TEST_CASE("fiberwise L1-BL distance") {
    FiberedMeasure mu;
    mu.K = 2;
    mu.d = 1;
    mu.off = {0, 1, 2};
    mu.x = {0.0, 0.0};
    mu.mass = {1.0, 1.0};
    CHECK(l1_bl_fibered(mu, mu) == 0.0);

    FiberedMeasure nu = mu;
    nu.x = {0.0, 1.0};  // one fiber differs by delta_0 vs delta_1
    CHECK(l1_bl_fibered(mu, nu) == Catch::Approx(0.5).margin(1e-9));

    FiberedMeasure far = mu;
    far.x = {3.0, 3.0};  // both fibers saturate the sup-norm cap
    CHECK(l1_bl_fibered(mu, far) == Catch::Approx(2.0).margin(1e-9));

    FiberedMeasure other;
    other.K = 3;
    other.d = 1;
    other.off = {0, 1, 2, 3};
    other.x = {0, 0, 0};
    other.mass = {1, 1, 1};
    CHECK_THROWS_AS(l1_bl_fibered(mu, other), argument_error);
}

TEST_CASE("label marginal") {
    auto s = particles({1.0, 2.0, 3.0, 4.0});
    const auto mu = from_particles(s, Weighting::uniform);
    const auto marg = label_marginal(mu);
    REQUIRE(marg.size() == 4);
    for (const auto& [xi, m] : marg) CHECK(m == 0.25);

    auto all_same = make1d({0.0, 1.0, 2.0}, {0.25, 0.5, 0.25}, {0.3, 0.3, 0.3});
    const auto merged = label_marginal(all_same);
    REQUIRE(merged.size() == 1);
    CHECK(merged[0].second == 1.0);
}

TEST_CASE("fiber mean") {
    FiberedMeasure f;
    f.K = 2;
    f.d = 1;
    f.off = {0, 2, 4};
    f.x = {0.0, 2.0, -1.0, 1.0};
    f.mass = {0.5, 0.5, 0.5, 0.5};
    const auto mean = fiber_mean(f);
    CHECK(mean[0] == 1.0);
    CHECK(mean[1] == 0.0);

    FiberedMeasure unit;
    unit.K = 3;
    unit.d = 1;
    unit.off = {0, 1, 2, 3};
    unit.x = {5.0, 6.0, 7.0};
    unit.mass = {1.0, 1.0, 1.0};
    const auto m2 = fiber_mean(unit);
    CHECK(m2 == Vec{5.0, 6.0, 7.0});

    FiberedMeasure empty;
    empty.K = 1;
    empty.d = 1;
    empty.off = {0, 0};
    CHECK_THROWS_AS(fiber_mean(empty), argument_error);
}

TEST_CASE("collapse labels") {
    SECTION("coincident positions merge") {
        auto mu = make1d({0.0, 0.0}, {0.5, 0.5}, {0.25, 0.75});
        const auto p = collapse_labels(mu);
        REQUIRE(p.size() == 1);
        CHECK(p.mass[0] == 1.0);
        CHECK(p.total == mu.total);
    }
    SECTION("disjoint supports concatenate") {
        auto mu = make1d({2.0, 0.0, 1.0}, {0.2, 0.3, 0.5}, {0.1, 0.5, 0.9});
        const auto p = collapse_labels(mu);
        REQUIRE(p.size() == 3);
        CHECK(p.x == Vec{0.0, 1.0, 2.0});  // sorted
        double total = 0.0;
        for (double m : p.mass) total += m;
        CHECK(total == Catch::Approx(mu.total).margin(1e-15));
    }
    SECTION("fibered collapse") {
        FiberedMeasure f;
        f.K = 2;
        f.d = 1;
        f.off = {0, 1, 2};
        f.x = {0.0, 0.0};
        f.mass = {1.0, 1.0};
        const auto p = collapse_labels(f);
        REQUIRE(p.size() == 1);
        CHECK(p.mass[0] == 2.0);
    }
}

TEST_CASE("measure csv round trip") {
    auto s = particles({1.5, -2.5, 0.75}, {1.0, 2.0, 3.0});
    const auto mu = from_particles(s, Weighting::agent_weights);
    const std::string path = "measure_test.csv";
    save_measure_csv(path, mu);
    const auto back = load_measure_csv(path);
    CHECK(back.xi == mu.xi);
    CHECK(back.x == mu.x);
    CHECK(back.mass == mu.mass);
    std::remove(path.c_str());
}
