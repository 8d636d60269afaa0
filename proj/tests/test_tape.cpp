#include <doctest.h>

#include <cmath>

#include "truncllt/check.hpp"
#include "truncllt/tape.hpp"

using namespace truncllt;

namespace {

MixtureDecomposition uniform_1d() {
    MixtureDecomposition dc;
    dc.ball = {Vec{0.0}, std::sqrt(3.0)};
    dc.alpha = 1.0;
    dc.kappa = 4;
    return dc;
}

struct Fixture {
    ModelSpec spec;
    MixtureDecomposition dc;
    GridPath path;
    PathContext ctx;

    Fixture(std::size_t d, int n, std::uint64_t seed)
        : spec(d == 1 ? make_iid_model(1).spec : make_iid_model(2).spec) {
        dc.alpha = 1.0;
        dc.kappa = 4;
        dc.ball = d == 1 ? BallSpec{Vec{0.0}, std::sqrt(3.0)} : BallSpec{Vec{0.0, 0.0}, 2.0};
        path = simulate_path(spec, dc, Vec(d, 0.0), n, seed, 0);
        ctx = PathContext::from_path(path, dc);
    }
};

}  // namespace

TEST_CASE("lift_constant and products") {
    Fixture fx(1, 4, 100);
    auto c = lift_constant(fx.ctx, 2.5, 2);
    for (double v : c.t1) CHECK(v == 0.0);
    auto e = lift_coordinate(fx.ctx, 1, 0, 2);
    auto p = mul(c, e);
    CHECK(p.value == doctest::Approx(2.5 * e.value));
    for (std::size_t i = 0; i < p.t1.size(); ++i) CHECK(p.t1[i] == doctest::Approx(2.5 * e.t1[i]));
}

TEST_CASE("lift_coordinate tensors") {
    Fixture fx(1, 4, 101);
    const int k = 2;
    auto e = lift_coordinate(fx.ctx, k, 0, 3);
    CHECK(e.value == fx.ctx.eta[k][0]);
    CHECK(e.t1[k] == doctest::Approx(fx.ctx.psi_k[k]));
    // T2[(k),(k)] = psi(eta_k) dpsi(eta_k)
    CHECK(e.t2at(k, k) == doctest::Approx(fx.ctx.psi_k[k] * fx.ctx.dpsi_k[k][0]));
    // off-block entries vanish
    CHECK(e.t1[0] == 0.0);
    CHECK(e.t2at(0, k) == 0.0);
    CHECK(e.active_horizon() == k);
}

TEST_CASE("chain rule: x^2 equals the product route") {
    Fixture fx(1, 4, 102);
    auto e = lift_coordinate(fx.ctx, 1, 0, 3);
    auto direct = mul(e, e);
    const double v = e.value;
    auto chained = chain_unary(e, v * v, 2.0 * v, 2.0, 0.0);
    CHECK(direct.value == doctest::Approx(chained.value));
    for (std::size_t i = 0; i < direct.t1.size(); ++i)
        CHECK(direct.t1[i] == doctest::Approx(chained.t1[i]).epsilon(1e-12));
    for (std::size_t i = 0; i < direct.t2.size(); ++i)
        CHECK(direct.t2[i] == doctest::Approx(chained.t2[i]).epsilon(1e-12));
    for (std::size_t i = 0; i < direct.t3.size(); ++i)
        CHECK(direct.t3[i] == doctest::Approx(chained.t3[i]).epsilon(1e-12));
}

TEST_CASE("sum linearity and Leibnitz") {
    Fixture fx(1, 5, 103);
    auto a = lift_coordinate(fx.ctx, 0, 0, 3);
    auto b = lift_coordinate(fx.ctx, 3, 0, 3);
    auto s = add(a, b);
    for (std::size_t i = 0; i < s.t1.size(); ++i)
        CHECK(s.t1[i] == doctest::Approx(a.t1[i] + b.t1[i]));
    auto p = mul(a, b);
    for (std::size_t i = 0; i < p.t1.size(); ++i)
        CHECK(p.t1[i] == doctest::Approx(a.value * b.t1[i] + b.value * a.t1[i]));
}

TEST_CASE("divergence of a constant field reduces to -(rho, v)") {
    Fixture fx(1, 6, 104);
    const std::size_t N = fx.ctx.hdim();
    Family g;
    std::vector<double> vals;
    Rng rng(5, 0);
    for (std::size_t b = 0; b < N; ++b) {
        const double v = 2.0 * rng.uniform() - 1.0;
        vals.push_back(v);
        g.push_back(lift_constant(fx.ctx, v, 1));
    }
    const SobolevElement d = divergence(g, fx.ctx);
    double want = 0.0;
    for (std::size_t b = 0; b < N; ++b) want -= fx.ctx.rho[b] * vals[b];
    CHECK(d.value == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("b_operator on the ball weight is 2 theta^2 psi per block") {
    Fixture fx(2, 3, 105);
    const std::size_t N = fx.ctx.hdim();
    Family g;
    for (std::size_t b = 0; b < N; ++b) g.push_back(lift_constant(fx.ctx, 1.0, 2));
    Family bg = b_operator(g, fx.ctx);
    for (std::size_t a = 0; a < N; ++a) {
        const std::size_t k = a / 2;
        CHECK(bg[a].value == doctest::Approx(2.0 * fx.ctx.psi_k[k]));
    }
}

TEST_CASE("identity suite at tolerance 1e-10") {
    RunSetup setup;
    setup.entry = make_trig_model(1);
    setup.decomp = uniform_1d();
    setup.scheme.n = 6;
    setup.scheme.x0 = Vec{0.1};
    setup.scheme.paths = 1;
    IdentityReport rep = run_identity_suite(setup, 60, 20000, 2024);
    CHECK(rep.max_rel_commute_i <= 1e-10);
    CHECK(rep.max_rel_commute_ii <= 1e-10);
    CHECK(rep.max_rel_commute_iii <= 1e-10);
    CHECK(rep.max_rel_inverse <= 1e-10);
    CHECK(rep.max_fd_gap <= 1e-4);
    CHECK(rep.max_ladder_gap <= 1e-8);
    CHECK(rep.duality_z <= 3.0);
    CHECK(rep.ibp_z <= 3.0);
}

TEST_CASE("identity suite in dimension two") {
    RunSetup setup;
    setup.entry = make_trig_model(2);
    MixtureDecomposition dc;
    dc.ball = {Vec{0.0, 0.0}, 2.0};
    dc.alpha = 1.0;
    setup.decomp = dc;
    setup.scheme.n = 4;
    setup.scheme.x0 = Vec{0.0, 0.0};
    setup.scheme.paths = 1;
    IdentityReport rep = run_identity_suite(setup, 25, 5000, 11);
    CHECK(rep.max_rel_commute_i <= 1e-10);
    CHECK(rep.max_rel_commute_ii <= 1e-10);
    CHECK(rep.max_rel_commute_iii <= 1e-10);
    CHECK(rep.max_rel_inverse <= 1e-10);
}

TEST_CASE("scalar reciprocal matches the matrix inverse in d = 1") {
    Fixture fx(1, 4, 106);
    auto e = shift(mul(lift_coordinate(fx.ctx, 1, 0, 3), lift_coordinate(fx.ctx, 1, 0, 3)),
                   2.0);  // positive scalar
    const auto inv = inverse_with_derivative({e}, 1, true);
    const double v = e.value;
    auto chained = chain_unary(e, 1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v),
                               -6.0 / (v * v * v * v));
    CHECK(inv[0].value == doctest::Approx(chained.value));
    for (std::size_t i = 0; i < inv[0].t1.size(); ++i)
        CHECK(inv[0].t1[i] == doctest::Approx(chained.t1[i]).epsilon(1e-12));
    for (std::size_t i = 0; i < inv[0].t2.size(); ++i)
        CHECK(inv[0].t2[i] == doctest::Approx(chained.t2[i]).epsilon(1e-10));
}

TEST_CASE("divergence closes under the calculus: FD of delta(g)") {
    // delta output must itself validate against finite differences
    auto spec = make_iid_model(1).spec;
    auto dc = uniform_1d();
    GridPath path = simulate_path(spec, dc, Vec{0.0}, 4, 2044, 0);
    PathContext ctx = PathContext::from_path(path, dc);
    const std::size_t N = ctx.hdim();
    Family g;
    for (std::size_t b = 0; b < N; ++b) {
        auto e = lift_coordinate(ctx, static_cast<int>(b), 0, 3);
        g.push_back(mul(e, e));
    }
    SobolevElement dg = divergence(g, ctx);
    const double gap = finite_difference_gap(dg, [&](const PathContext& pc) {
        // rebuild delta(g) from the perturbed record
        Family g2;
        for (std::size_t b = 0; b < N; ++b) {
            auto e = lift_coordinate(pc, static_cast<int>(b), 0, 3);
            g2.push_back(mul(e, e));
        }
        return divergence(g2, pc).value;
    });
    CHECK(gap <= 1e-4);
}

TEST_CASE("sparsity: active horizon of X_n(t) stops at ceil(tn)") {
    auto spec = make_trig_model(1).spec;
    auto dc = uniform_1d();
    GridPath path = simulate_path(spec, dc, Vec{0.0}, 8, 2055, 0);
    PathContext ctx = PathContext::from_path(path, dc);
    auto f = tape_functional(path, spec, ctx, 0.5, 2);
    CHECK(f[0].active_horizon() <= 3);  // ceil(0.5 * 8) = 4 steps, block index <= 3
    auto g = tape_functional(path, spec, ctx, 1.0, 2);
    CHECK(g[0].active_horizon() == 7);
}

TEST_CASE("debug dump lists nonzero multi-index entries") {
    Fixture fx(1, 3, 108);
    auto e = lift_coordinate(fx.ctx, 1, 0, 2);
    const std::string dump = e.debug_dump();
    CHECK(dump.find("value") != std::string::npos);
    CHECK(dump.find("(1)") != std::string::npos);      // t1 entry at index 1
    CHECK(dump.find("(1,1)") != std::string::npos);    // same-block t2 entry
}

TEST_CASE("basis independence spot check under value-space rotation") {
    // |D f|_{H (x) Y} is invariant when the Y basis rotates
    Fixture fx(2, 3, 107);
    auto f = tape_functional(fx.path, fx.spec, fx.ctx, 1.0, 1);
    const double c = std::cos(0.7), s = std::sin(0.7);
    auto g0 = add(scale(f[0], c), scale(f[1], -s));
    auto g1 = add(scale(f[0], s), scale(f[1], c));
    double n1 = 0.0, n2 = 0.0;
    for (std::size_t b = 0; b < fx.ctx.hdim(); ++b) {
        n1 += f[0].t1[b] * f[0].t1[b] + f[1].t1[b] * f[1].t1[b];
        n2 += g0.t1[b] * g0.t1[b] + g1.t1[b] * g1.t1[b];
    }
    CHECK(n1 == doctest::Approx(n2).epsilon(1e-12));
}
