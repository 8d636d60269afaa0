#include <doctest.h>

#include <cmath>

#include "truncllt/decomp.hpp"

using namespace truncllt;

namespace {

MixtureDecomposition uniform_1d() {
    MixtureDecomposition dc;
    dc.ball = {Vec{0.0}, std::sqrt(3.0)};
    dc.alpha = 1.0;
    dc.kappa = 4;
    return dc;
}

MixtureDecomposition point_mix_1d() {
    // alpha pi_U + (1-alpha) delta_0 calibrated to mean 0, covariance 1
    MixtureDecomposition dc;
    dc.alpha = 0.5;
    dc.ball = {Vec{0.0}, std::sqrt(6.0)};
    dc.nu.kind = NuSpec::Kind::Point;
    dc.nu.point = Vec{0.0};
    dc.kappa = 4;
    return dc;
}

}  // namespace

TEST_CASE("psi geometry") {
    BallSpec ball{Vec{0.5, -1.0}, 2.0};
    CHECK(psi(ball.center, ball) == doctest::Approx(4.0));
    CHECK(psi(Vec{2.5, -1.0}, ball) == doctest::Approx(0.0));
    // gradient against finite differences
    const Vec x{1.1, -0.4};
    const Vec g = grad_psi(x, ball);
    const double h = 1e-6;
    for (std::size_t r = 0; r < 2; ++r) {
        Vec xp = x, xm = x;
        xp[r] += h;
        xm[r] -= h;
        CHECK(g[r] == doctest::Approx((psi(xp, ball) - psi(xm, ball)) / (2 * h)).epsilon(1e-6));
    }
    // rotation invariance about the center
    const double rr = 0.7;
    CHECK(psi(Vec{0.5 + rr, -1.0}, ball) ==
          doctest::Approx(psi(Vec{0.5, -1.0 + rr}, ball)));
}

TEST_CASE("noise composition identity and degenerate mixture") {
    auto dc = uniform_1d();
    Rng rng(11, 0);
    for (int i = 0; i < 200; ++i) {
        const NoiseDraw nd = sample_noise(dc, rng);
        CHECK(nd.eps == 1);  // alpha = 1
        CHECK(nd.xi[0] == nd.eta[0]);
        CHECK(std::abs(nd.eta[0]) < std::sqrt(3.0));
    }
    auto mix = point_mix_1d();
    Rng rng2(12, 0);
    for (int i = 0; i < 500; ++i) {
        const NoiseDraw nd = sample_noise(mix, rng2);
        const double composed = nd.eps * nd.eta[0] + (1 - nd.eps) * nd.zeta[0];
        CHECK(nd.xi[0] == composed);
    }
}

TEST_CASE("moment audit: mean zero covariance identity") {
    CHECK(audit_moments(uniform_1d(), 1000000, 5).pass);
    CHECK(audit_moments(point_mix_1d(), 1000000, 6).pass);
    // d = 2 uniform disk with radius 2 has unit covariance
    MixtureDecomposition d2;
    d2.ball = {Vec{0.0, 0.0}, 2.0};
    d2.alpha = 1.0;
    CHECK(audit_moments(d2, 500000, 7).pass);
}

TEST_CASE("eps frequency matches alpha") {
    auto mix = point_mix_1d();
    Rng rng(21, 0);
    long n = 200000, cnt = 0;
    for (long i = 0; i < n; ++i) cnt += sample_noise(mix, rng).eps;
    const double freq = static_cast<double>(cnt) / n;
    CHECK(std::abs(freq - mix.alpha) < 4.0 * std::sqrt(0.25 / n));
}

TEST_CASE("theta indicator thresholds") {
    auto dc = point_mix_1d();
    const int n = 16;
    std::vector<Vec> zetas(n, Vec{0.0});
    CHECK(theta_indicator(zetas, n, dc) == 1);
    const double vs = dc.varsigma();
    CHECK(vs == doctest::Approx(0.3));  // kappa = 4
    zetas[7][0] = 2.0 * std::pow(16.0, vs);
    CHECK(theta_indicator(zetas, n, dc) == 0);
    CHECK_THROWS_AS(theta_indicator(zetas, n + 1, dc), ContractViolation);
    // exp-moment regime switches to delta sqrt(n)
    auto de = dc;
    de.exp_moment = true;
    de.delta = 2.0;
    CHECK(de.theta_threshold(16) == doctest::Approx(8.0));
}

TEST_CASE("rho vector components") {
    BallSpec ball{Vec{0.0}, 1.0};
    std::vector<NoiseDraw> draws(2);
    draws[0].eta = Vec{0.5};
    draws[1].eta = Vec{-0.25};
    auto rho = rho_vector(draws, 1, ball);
    CHECK(rho[0] == doctest::Approx(-1.0));
    CHECK(rho[1] == doctest::Approx(0.5));
    auto rho0 = rho_vector(draws, 0, ball);
    CHECK(rho0[0] == 0.0);
    CHECK(rho0[1] == 0.0);
    draws[0].eta = Vec{0.0};
    draws[1].eta = Vec{0.0};
    for (double v : rho_vector(draws, 1, ball)) CHECK(v == 0.0);
}

TEST_CASE("bernoulli tail bound values") {
    auto bt = bernoulli_tail_bound(0.5, 0.25, 1);
    CHECK(bt.psi_value == doctest::Approx(0.87738).epsilon(1e-4));
    CHECK(bt.rho == doctest::Approx(0.0654).epsilon(1e-2));
    CHECK(bernoulli_tail_bound(0.5, 0.25, 0).bound == doctest::Approx(1.0));
    // Psi < 1 on a grid of (c, alpha); Psi -> 1 as c -> alpha, so the grid
    // stops short of the corner
    for (double alpha = 0.1; alpha < 0.95; alpha += 0.1)
        for (double c = alpha / 8; c <= 0.9 * alpha; c += alpha / 8)
            CHECK(bernoulli_tail_bound(alpha, c, 1).psi_value < 1.0);
    CHECK_THROWS_AS(bernoulli_tail_bound(0.5, 0.6, 1), ContractViolation);
}

TEST_CASE("empirical bernoulli tail dominated by the bound") {
    auto mix = point_mix_1d();  // alpha = 0.5
    const double c = 0.25;
    for (int k : {16, 64, 256}) {
        Rng rng(31 + k, 0);
        const long trials = 100000;
        long hits = 0;
        for (long tr = 0; tr < trials; ++tr) {
            int cnt = 0;
            for (int j = 0; j < k; ++j) cnt += sample_noise(mix, rng).eps;
            hits += cnt < c * k;
        }
        const double phat = static_cast<double>(hits) / trials;
        const double se = std::sqrt(phat * (1 - phat) / trials + 1e-12);
        CHECK(phat <= bernoulli_tail_bound(mix.alpha, c, k).bound + 3 * se);
    }
}
