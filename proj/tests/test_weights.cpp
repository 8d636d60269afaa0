#include <doctest.h>

#include <cmath>

#include "truncllt/check.hpp"
#include "truncllt/stats.hpp"
#include "truncllt/weights.hpp"

using namespace truncllt;

namespace {

MixtureDecomposition uniform_d(std::size_t d) {
    MixtureDecomposition dc;
    dc.alpha = 1.0;
    dc.kappa = 4;
    dc.ball.center = Vec(d, 0.0);
    dc.ball.radius = std::sqrt(static_cast<double>(d) + 2.0);
    return dc;
}

}  // namespace

TEST_CASE("constant-coefficient record collapses to the injection") {
    auto entry = make_constant_model(Vec{0.0}, Mat{1.4});
    auto dc = uniform_d(1);
    const int n = 8;
    GridPath path = simulate_path(entry.spec, dc, Vec{0.0}, n, 31, 2);
    DerivativeRecord rec = derivative_recursion(path, entry.spec, dc, 1.0, 2);
    CHECK(rec.diag);
    for (int k = 0; k < n; ++k) {
        const double want = path.theta * path.noise[k].eps *
                            psi(path.noise[k].eta, dc.ball) * 1.4 / std::sqrt(8.0);
        CHECK(rec.y(k, 0) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("theta = 0 kills the derivative record") {
    MixtureDecomposition dc;
    dc.alpha = 0.5;
    dc.ball = {Vec{0.0}, std::sqrt(6.0)};
    dc.nu.kind = NuSpec::Kind::Pareto;
    dc.nu.xm = 1.0;
    dc.nu.exponent = 4.5;
    dc.kappa = 4;
    auto spec = make_trig_model(1).spec;
    // hunt for a path with theta = 0
    for (long i = 0; i < 4000; ++i) {
        GridPath path = simulate_path(spec, dc, Vec{0.0}, 8, 900, i);
        if (path.theta) continue;
        DerivativeRecord rec = derivative_recursion(path, spec, dc, 1.0, 2);
        for (double v : rec.Y) CHECK(v == 0.0);
        for (double v : rec.Y2) CHECK(v == 0.0);
        return;
    }
    FAIL("no theta = 0 path found");
}

TEST_CASE("dense recursion matches the tape tensors exactly") {
    auto spec = make_trig_model(2).spec;
    auto dc = uniform_d(2);
    GridPath path = simulate_path(spec, dc, Vec{0.1, -0.3}, 5, 77, 1);
    PathContext ctx = PathContext::from_path(path, dc);
    DerivativeRecord rec = derivative_recursion(path, spec, dc, 1.0, 3);
    auto f = tape_functional(path, spec, ctx, 1.0, 3);
    const std::size_t N = rec.N();
    double worst1 = 0.0, worst2 = 0.0, worst3 = 0.0;
    for (std::size_t b = 0; b < N; ++b)
        for (std::size_t i = 0; i < 2; ++i)
            worst1 = std::max(worst1, std::abs(rec.y(b, i) - f[i].t1[b]));
    for (std::size_t a = 0; a < N; ++a)
        for (std::size_t b = 0; b < N; ++b)
            for (std::size_t i = 0; i < 2; ++i)
                worst2 = std::max(worst2, std::abs(rec.y2(a, b, i) - f[i].t2at(a, b)));
    for (std::size_t e = 0; e < N; ++e)
        for (std::size_t a = 0; a < N; ++a)
            for (std::size_t b = 0; b < N; ++b)
                for (std::size_t i = 0; i < 2; ++i)
                    worst3 =
                        std::max(worst3, std::abs(rec.y3(e, a, b, i) - f[i].t3at(e, a, b)));
    CHECK(worst1 <= 1e-12);
    CHECK(worst2 <= 1e-12);
    CHECK(worst3 <= 1e-11);
}

TEST_CASE("recursion against finite differences on the trig model") {
    RunSetup setup;
    setup.entry = make_trig_model(2);
    setup.decomp = uniform_d(2);
    setup.scheme.n = 16;
    setup.scheme.x0 = Vec{0.0, 0.0};
    setup.scheme.seed = 5;
    DerivFdReport rep = derivative_fd_check(setup, 1.0, 2, 1e-6, 1e-4);
    CHECK(rep.pass);
    CHECK(rep.max_rel_y1 <= 1e-4);
    CHECK(rep.max_rel_y2 <= 1e-4);
}

TEST_CASE("stochastic exponent: constant coefficients give the identity") {
    auto entry = make_constant_model(Vec{0.5}, Mat{2.0});
    auto dc = uniform_d(1);
    GridPath path = simulate_path(entry.spec, dc, Vec{0.0}, 8, 41, 0);
    ExponentFamily fam = stochastic_exponent(path, entry.spec, 1.0, dc);
    for (const auto& m : fam.plain) CHECK(m[0] == doctest::Approx(1.0));
    for (const auto& m : fam.tilde_inv) CHECK(m[0] == doctest::Approx(1.0));
}

TEST_CASE("stochastic exponent cocycle and censoring") {
    auto spec = make_trig_model(2).spec;
    auto dc = uniform_d(2);
    GridPath path = simulate_path(spec, dc, Vec{0.2, 0.1}, 12, 43, 3);
    // cocycle E_{i,j} = E_{k,j} E_{i,k}
    const Mat e04 = exponent_between(path, spec, 0, 4, false, dc);
    const Mat e48 = exponent_between(path, spec, 4, 8, false, dc);
    const Mat e08 = exponent_between(path, spec, 0, 8, false, dc);
    const Mat prod = matmul(e48, e04, 2);
    for (std::size_t i = 0; i < 4; ++i) CHECK(prod[i] == doctest::Approx(e08[i]).epsilon(1e-12));
    // theta = 1 here (alpha = 1, no zeta), so censored equals plain
    CHECK(path.theta == 1);
    const Mat t08 = exponent_between(path, spec, 0, 8, true, dc);
    for (std::size_t i = 0; i < 4; ++i) CHECK(t08[i] == doctest::Approx(e08[i]));
}

TEST_CASE("malliavin matrix: iid closed form and exponent representation") {
    auto spec = make_iid_model(1).spec;
    auto dc = uniform_d(1);
    const int n = 16;
    GridPath path = simulate_path(spec, dc, Vec{0.0}, n, 47, 4);
    DerivativeRecord rec = derivative_recursion(path, spec, dc, 1.0, 2);
    MalliavinState st = malliavin_matrix(rec, 1);
    double want = 0.0;
    for (int k = 0; k < n; ++k) {
        const double p = psi(path.noise[k].eta, dc.ball);
        want += p * p * path.noise[k].eps;
    }
    want /= n;
    CHECK(st.sigma[0] == doctest::Approx(want).epsilon(1e-12));
    const Mat alt = malliavin_matrix_from_exponent(path, spec, dc, 1.0);
    CHECK(alt[0] == doctest::Approx(st.sigma[0]).epsilon(1e-10));
}

TEST_CASE("malliavin matrix representation for a general model") {
    auto spec = make_trig_model(2).spec;
    auto dc = uniform_d(2);
    GridPath path = simulate_path(spec, dc, Vec{0.0, 0.0}, 12, 53, 9);
    DerivativeRecord rec = derivative_recursion(path, spec, dc, 1.0, 2);
    MalliavinState st = malliavin_matrix(rec, 1);
    const Mat alt = malliavin_matrix_from_exponent(path, spec, dc, 1.0);
    for (std::size_t i = 0; i < 4; ++i) {
        const double scale = std::max({1e-12, std::abs(st.sigma[i]), std::abs(alt[i])});
        CHECK(std::abs(st.sigma[i] - alt[i]) / scale <= 1e-10);
    }
    // symmetry and positive semidefiniteness
    CHECK(st.sigma[1] == doctest::Approx(st.sigma[2]));
    CHECK(st.det_sigma >= 0.0);
}

TEST_CASE("ladder equals the generic tape ladder, d = 1 with gradient") {
    auto spec = make_trig_model(1).spec;
    auto dc = uniform_d(1);
    for (long i = 0; i < 6; ++i) {
        GridPath path = simulate_path(spec, dc, Vec{0.3}, 6, 59, i);
        PathContext ctx = PathContext::from_path(path, dc);
        DerivativeRecord rec = derivative_recursion(path, spec, dc, 1.0, 3);
        MalliavinState st = malliavin_matrix(rec, 1);
        LadderResult lr = weight_ladder(st, rec, ctx, true);
        auto f = tape_functional(path, spec, ctx, 1.0, 3);
        auto tl = tape_weight_ladder(f, ctx, true, true);
        const double s1 = std::max({1.0, std::abs(lr.upsilon), std::abs(tl.upsilon.value)});
        CHECK(std::abs(lr.upsilon - tl.upsilon.value) / s1 <= 1e-8);
        const double g1 = (*lr.upsilon_i)[0], g2 = tl.upsilon_i[0].value;
        const double s2 = std::max({1.0, std::abs(g1), std::abs(g2)});
        CHECK(std::abs(g1 - g2) / s2 <= 1e-8);
    }
}

TEST_CASE("ladder equals the generic tape ladder, d = 2") {
    auto spec = make_trig_model(2).spec;
    auto dc = uniform_d(2);
    for (long i = 0; i < 4; ++i) {
        GridPath path = simulate_path(spec, dc, Vec{0.0, 0.0}, 5, 61, i);
        PathContext ctx = PathContext::from_path(path, dc);
        DerivativeRecord rec = derivative_recursion(path, spec, dc, 1.0, 3);
        MalliavinState st = malliavin_matrix(rec, 1);
        LadderResult lr = weight_ladder(st, rec, ctx, false);
        auto f = tape_functional(path, spec, ctx, 1.0, 3);
        auto tl = tape_weight_ladder(f, ctx, true, false);
        const double s1 = std::max({1.0, std::abs(lr.upsilon), std::abs(tl.upsilon.value)});
        CHECK(std::abs(lr.upsilon - tl.upsilon.value) / s1 <= 1e-8);
    }
}

TEST_CASE("diag ladder equals dense ladder on a constant model") {
    auto entry = make_constant_model(Vec{0.2}, Mat{1.1});
    auto dc = uniform_d(1);
    auto dense_spec = entry.spec;
    dense_spec.constant_coeffs = false;  // force the dense path
    for (long i = 0; i < 5; ++i) {
        GridPath path = simulate_path(entry.spec, dc, Vec{0.0}, 8, 67, i);
        PathContext ctx = PathContext::from_path(path, dc);
        DerivativeRecord rd = derivative_recursion(path, entry.spec, dc, 1.0, 3);
        DerivativeRecord rf = derivative_recursion(path, dense_spec, dc, 1.0, 3);
        CHECK(rd.diag);
        CHECK_FALSE(rf.diag);
        MalliavinState sd = malliavin_matrix(rd, 1);
        MalliavinState sf = malliavin_matrix(rf, 1);
        LadderResult ld = weight_ladder(sd, rd, ctx, true);
        LadderResult lf = weight_ladder(sf, rf, ctx, true);
        CHECK(ld.upsilon == doctest::Approx(lf.upsilon).epsilon(1e-10));
        CHECK((*ld.upsilon_i)[0] == doctest::Approx((*lf.upsilon_i)[0]).epsilon(1e-10));
    }
}

TEST_CASE("off the truncation set the weight vanishes exactly") {
    auto spec = make_iid_model(1).spec;
    auto dc = uniform_d(1);
    GridPath path = simulate_path(spec, dc, Vec{0.0}, 8, 71, 0);
    PathContext ctx = PathContext::from_path(path, dc);
    DerivativeRecord rec = derivative_recursion(path, spec, dc, 1.0, 2);
    MalliavinState st = malliavin_matrix(rec, 0);
    LadderResult lr = weight_ladder(st, rec, ctx, false);
    CHECK(lr.upsilon == 0.0);
}

TEST_CASE("iid two-step closed form for Upsilon") {
    // n = 2, d = 1, b = 1: sigma = (psi_1^2 e_1 + psi_2^2 e_2)/2 and the
    // hand expansion of delta(theta) in eta_1, eta_2
    auto spec = make_iid_model(1).spec;
    auto dc = uniform_d(1);
    GridPath path = simulate_path(spec, dc, Vec{0.0}, 2, 73, 1);
    PathContext ctx = PathContext::from_path(path, dc);
    DerivativeRecord rec = derivative_recursion(path, spec, dc, 1.0, 2);
    MalliavinState st = malliavin_matrix(rec, 1);
    LadderResult lr = weight_ladder(st, rec, ctx, false);

    const double r2 = dc.ball.radius * dc.ball.radius;
    const double e1 = path.noise[0].eta[0], e2 = path.noise[1].eta[0];
    const double p1 = r2 - e1 * e1, p2 = r2 - e2 * e2;
    const double q = std::sqrt(2.0);
    const double sg = (p1 * p1 + p2 * p2) / 2.0;
    // theta_b = sigma^{-1} psi_b / sqrt(2); Upsilon = -sum_b [rho_b theta_b
    // + D_b theta_b] with D_b = psi_b d/d eta_b
    auto dtheta = [&](double pb, double dpb, double dsg_b) {
        return (dpb / q) / sg - (pb / q) * dsg_b / (sg * sg);
    };
    const double dp1 = -2.0 * e1, dp2 = -2.0 * e2;
    const double ds1 = p1 * dp1;  // d sigma / d eta_1 = psi_1 psi_1'
    const double ds2 = p2 * dp2;
    const double ups_hand = -(dp1 * (p1 / q) / sg + dp2 * (p2 / q) / sg +
                              p1 * dtheta(p1, dp1, ds1) + p2 * dtheta(p2, dp2, ds2));
    CHECK(lr.upsilon == doctest::Approx(ups_hand).epsilon(1e-10));
}

TEST_CASE("non-grid t: recursion matches the tape through the interpolation") {
    auto spec = make_trig_model(1).spec;
    auto dc = uniform_d(1);
    GridPath path = simulate_path(spec, dc, Vec{0.2}, 6, 83, 2);
    PathContext ctx = PathContext::from_path(path, dc);
    const double t = 0.55;  // tn = 3.3, off the grid
    DerivativeRecord rec = derivative_recursion(path, spec, dc, t, 2);
    auto f = tape_functional(path, spec, ctx, t, 2);
    CHECK(f[0].value == doctest::Approx(interpolate(path, t)[0]).epsilon(1e-12));
    const std::size_t N = rec.N();
    for (std::size_t b = 0; b < N; ++b)
        CHECK(rec.y(b, 0) == doctest::Approx(f[0].t1[b]).epsilon(1e-12));
    for (std::size_t a = 0; a < N; ++a)
        for (std::size_t b = 0; b < N; ++b)
            CHECK(rec.y2(a, b, 0) == doctest::Approx(f[0].t2at(a, b)).epsilon(1e-11));
}

TEST_CASE("norm accumulator sanity on a degenerate sample set") {
    auto entry = make_constant_model(Vec{0.0}, Mat{1.0});
    auto dc = uniform_d(1);
    GridPath path = simulate_path(entry.spec, dc, Vec{0.0}, 8, 79, 0);
    DerivativeRecord rec = derivative_recursion(path, entry.spec, dc, 1.0, 2);
    MalliavinState st = malliavin_matrix(rec, 1);
    NormAccumulator acc(1, 2);
    acc.add(rec, st);
    acc.add(rec, st);
    const auto norms = rec.tensor_norms_by_coord();
    CHECK(acc.finish().N_d == doctest::Approx(std::max(norms[0][0], norms[1][0])));
}
