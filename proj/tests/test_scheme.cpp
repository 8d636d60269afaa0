#include <doctest.h>

#include <cmath>

#include "truncllt/scheme.hpp"
#include "truncllt/stats.hpp"

using namespace truncllt;

namespace {

MixtureDecomposition uniform_1d() {
    MixtureDecomposition dc;
    dc.ball = {Vec{0.0}, std::sqrt(3.0)};
    dc.alpha = 1.0;
    dc.kappa = 4;
    return dc;
}

}  // namespace

TEST_CASE("euler step formula") {
    auto iid = make_iid_model(1).spec;
    CHECK(euler_step(Vec{0.0}, Vec{1.0}, iid, 4)[0] == doctest::Approx(0.5));
    CHECK(euler_step(Vec{0.7}, Vec{0.0}, iid, 4)[0] == doctest::Approx(0.7));
    auto m = make_constant_model(Vec{1.0}, Mat{2.0}).spec;
    CHECK(euler_step(Vec{0.0}, Vec{1.0}, m, 4)[0] == doctest::Approx(0.25 + 1.0));
}

TEST_CASE("deterministic replay is bitwise") {
    auto spec = make_trig_model(2).spec;
    MixtureDecomposition dc;
    dc.ball = {Vec{0.0, 0.0}, 2.0};
    dc.alpha = 1.0;
    GridPath a = simulate_path(spec, dc, Vec{0.1, -0.2}, 32, 12345, 7);
    GridPath b = simulate_path(spec, dc, Vec{0.1, -0.2}, 32, 12345, 7);
    CHECK(a.serialize() == b.serialize());
    GridPath c = simulate_path(spec, dc, Vec{0.1, -0.2}, 32, 12345, 8);
    CHECK(a.serialize() != c.serialize());
}

TEST_CASE("states satisfy the step recursion exactly") {
    auto spec = make_trig_model(1).spec;
    auto dc = uniform_1d();
    GridPath p = simulate_path(spec, dc, Vec{0.4}, 16, 99, 3);
    for (int k = 1; k <= 16; ++k) {
        const Vec want = euler_step(p.states[k - 1], p.noise[k - 1].xi, spec, 16);
        CHECK(p.states[k][0] == want[0]);
    }
    // deterministic drift: constant model with b = 0
    auto drift = make_constant_model(Vec{1.0}, Mat{0.0}).spec;
    GridPath q = simulate_path(drift, dc, Vec{0.0}, 8, 99, 0);
    CHECK(q.states[8][0] == doctest::Approx(1.0));
}

TEST_CASE("CLT normalization of the iid endpoint") {
    auto spec = make_iid_model(1).spec;
    auto dc = uniform_1d();
    Accumulator acc;
    const long N = 100000;
    for (long i = 0; i < N; ++i) {
        GridPath p = simulate_path(spec, dc, Vec{0.0}, 16, 4242, i);
        acc.add(p.states[16][0] * p.states[16][0]);
    }
    CHECK(std::abs(acc.mean() - 1.0) <= 3.0 * acc.se());
}

TEST_CASE("interpolation") {
    auto spec = make_iid_model(1).spec;
    auto dc = uniform_1d();
    GridPath p = simulate_path(spec, dc, Vec{0.0}, 2, 11, 0);
    p.states[0] = Vec{0.0};
    p.states[1] = Vec{1.0};
    p.states[2] = Vec{4.0};
    CHECK(interpolate(p, 0.5)[0] == doctest::Approx(1.0));
    CHECK(interpolate(p, 0.75)[0] == doctest::Approx(2.5));
    CHECK(interpolate(p, 0.3)[0] == doctest::Approx(0.6));
    CHECK(interpolate(p, 1.0)[0] == doctest::Approx(4.0));
    CHECK_THROWS_AS(interpolate(p, 1.5), ContractViolation);
}

TEST_CASE("n_star closed form") {
    auto dc = uniform_1d();
    CHECK(n_star(make_iid_model(1).spec, dc) == 1);
    ModelSpec m = make_iid_model(1).spec;
    m.grad_a_inf = 4.0;
    CHECK(n_star(m, dc) == 8);
    ModelSpec mb = make_trig_model(1).spec;
    ModelSpec mb2 = mb;
    mb2.grad_b_inf = 2.0 * mb.grad_b_inf;
    CHECK(n_star(mb2, dc) >= n_star(mb, dc));
}

TEST_CASE("truncation witness gates") {
    auto spec = make_iid_model(1).spec;
    auto dc = uniform_1d();
    GridPath p = simulate_path(spec, dc, Vec{0.0}, 64, 5, 0);
    // alpha = 1: all eps = 1, theta = 1; c = 0.5, p = 4 -> gate (2p+1)/c = 18
    CHECK(truncation_witness(p, 1.0, 0.5, 4, spec, dc) == 1);
    CHECK(truncation_witness(p, 0.25, 0.5, 4, spec, dc) == 0);  // [tn] = 16 <= 18
    CHECK(truncation_witness(p, 1.0, 0.5, 16, spec, dc) == 0);  // default p: gate 66 > 64
    GridPath q = p;
    q.theta = 0;
    CHECK(truncation_witness(q, 1.0, 0.5, 4, spec, dc) == 0);
    CHECK_THROWS_AS(truncation_witness(p, 1.0, 1.5, 4, spec, dc), ContractViolation);
}

TEST_CASE("remainder frequency decays for the heavy-tail mixture") {
    // alpha = 0.5, Pareto nu with kappa = 4 moments; remainder should decay
    // in n and stay under the fitted envelope shape
    MixtureDecomposition dc;
    dc.alpha = 0.5;
    dc.ball = {Vec{0.0}, std::sqrt(3.6)};
    dc.nu.kind = NuSpec::Kind::Pareto;
    dc.nu.xm = 2.0 / 3.0;
    dc.nu.exponent = 4.5;
    dc.kappa = 4;
    auto spec = make_iid_model(1).spec;
    const double c = 0.25;
    const int p = 3;
    double prev = 1.0;
    for (int n : {32, 64, 128}) {
        long bad = 0;
        const long N = 20000;
        for (long i = 0; i < N; ++i) {
            GridPath path = simulate_path(spec, dc, Vec{0.0}, n, 777, i);
            bad += truncation_witness(path, 1.0, c, p, spec, dc) == 0;
        }
        const double frac = static_cast<double>(bad) / N;
        CHECK(frac <= prev + 0.01);
        prev = frac;
    }
    CHECK(prev < 0.08);
}

TEST_CASE("path theta agrees with the indicator over its zeta record") {
    MixtureDecomposition dc;
    dc.alpha = 0.5;
    dc.ball = {Vec{0.0}, std::sqrt(6.0)};
    dc.nu.kind = NuSpec::Kind::Pareto;
    dc.nu.xm = 0.5;
    dc.nu.exponent = 4.5;
    dc.kappa = 4;
    auto spec = make_iid_model(1).spec;
    for (long i = 0; i < 50; ++i) {
        GridPath p = simulate_path(spec, dc, Vec{0.0}, 16, 321, i);
        std::vector<Vec> zetas;
        for (const auto& nd : p.noise) zetas.push_back(nd.zeta);
        CHECK(p.theta == theta_indicator(zetas, 16, dc));
    }
}

TEST_CASE("epsilon(kappa) values from the remainder exponent") {
    MixtureDecomposition k4;
    k4.kappa = 4;
    CHECK(k4.eps_kappa() == doctest::Approx(0.2));
    MixtureDecomposition k6;
    k6.kappa = 6;
    CHECK(k6.eps_kappa() == doctest::Approx(8.0 / 7.0));
}
