#include <doctest.h>

#include <cmath>

#include "truncllt/estimator.hpp"

using namespace truncllt;

namespace {

RunSetup iid_setup(long paths, int n) {
    RunSetup s;
    s.entry = make_iid_model(1);
    s.decomp.alpha = 1.0;
    s.decomp.kappa = 4;
    s.decomp.ball = {Vec{0.0}, std::sqrt(3.0)};
    s.scheme.n = n;
    s.scheme.t = 1.0;
    s.scheme.x0 = Vec{0.0};
    s.scheme.paths = paths;
    s.scheme.c = 0.5;
    s.scheme.p = 4;
    s.scheme.seed = 9001;
    s.workers = 2;
    return s;
}

}  // namespace

TEST_CASE("accumulator merge is order-stable and exact at desk scale") {
    Rng rng(3, 0);
    std::vector<double> xs(1000);
    for (auto& v : xs) v = 2.0 * rng.uniform() - 1.0;
    Accumulator a, b, c;
    for (int i = 0; i < 400; ++i) a.add(xs[i]);
    for (int i = 400; i < 700; ++i) b.add(xs[i]);
    for (int i = 700; i < 1000; ++i) c.add(xs[i]);
    Accumulator left = a;
    left.merge(b);
    left.merge(c);
    Accumulator bc = b;
    bc.merge(c);
    Accumulator right = a;
    right.merge(bc);
    CHECK(left.sum.value() == right.sum.value());
    CHECK(left.sumsq.value() == right.sumsq.value());
    Accumulator whole;
    for (double v : xs) whole.add(v);
    CHECK(left.sum.value() == doctest::Approx(whole.sum.value()).epsilon(1e-15));
}

TEST_CASE("orthant selection geometry") {
    std::vector<Vec> pilot;
    Rng rng(5, 0);
    for (int i = 0; i < 4000; ++i) pilot.push_back(Vec{rng.gauss(), rng.gauss()});
    // far upper-right corner: the {f >= y} event is rarest -> alpha = (0,0)
    auto a = orthant_select(pilot, Vec{2.5, 2.5});
    CHECK(a[0] == 0);
    CHECK(a[1] == 0);
    auto b = orthant_select(pilot, Vec{-2.5, -2.5});
    CHECK(b[0] == 1);
    CHECK(b[1] == 1);
}

TEST_CASE("density estimate hits the normal oracle at modest scale") {
    RunSetup s = iid_setup(150000, 64);
    std::vector<SliceRequest> reqs{{1.0, {Vec{0.0}, Vec{1.0}, Vec{-1.0}}, false, 0}};
    auto out = run_density(s, reqs);
    REQUIRE(out.size() == 1);
    const auto& dens = out[0].density;
    CHECK(std::abs(dens[0].q_hat - 0.3989) < std::max(0.012, 4 * dens[0].se));
    CHECK(std::abs(dens[1].q_hat - 0.2420) < std::max(0.012, 4 * dens[1].se));
    CHECK(std::abs(dens[2].q_hat - 0.2420) < std::max(0.012, 4 * dens[2].se));
    CHECK(out[0].remainder.remainder_hat == 0.0);  // alpha = 1, bounded xi, gates pass
    CHECK(out[0].n_on_xi == s.scheme.paths);
    for (const auto& de : dens) CHECK(de.q_hat >= -3.0 * de.se);  // nonnegative within noise
}

TEST_CASE("gradient estimate: symmetry zero and the -phi(1) slope") {
    RunSetup s = iid_setup(200000, 64);
    std::vector<SliceRequest> reqs{{1.0, {Vec{0.0}, Vec{1.0}}, true, 0}};
    auto out = run_density(s, reqs);
    const auto& grad = out[0].gradient;
    CHECK(std::abs(grad[0].q_hat - 0.0) < std::max(0.02, 4 * grad[0].se));
    CHECK(std::abs(grad[1].q_hat - (-0.2420)) < std::max(0.02, 4 * grad[1].se));
}

TEST_CASE("worker count does not change the statistics") {
    RunSetup s1 = iid_setup(20000, 32);
    s1.scheme.p = 2;
    RunSetup s3 = s1;
    s1.workers = 1;
    s3.workers = 3;
    std::vector<SliceRequest> reqs{{1.0, {Vec{0.0}, Vec{0.5}}, false, 0}};
    auto r1 = run_density(s1, reqs);
    auto r3 = run_density(s3, reqs);
    for (std::size_t i = 0; i < reqs[0].ys.size(); ++i) {
        CHECK(r1[0].density[i].q_hat == r3[0].density[i].q_hat);
        CHECK(r1[0].density[i].se == r3[0].density[i].se);
    }
}

TEST_CASE("orthant invariance of the estimate") {
    // two complementary patterns give the same density within noise; run the
    // same ensemble twice with forced starts x0 so the auto-selection picks
    // different patterns at symmetric points
    RunSetup s = iid_setup(150000, 64);
    std::vector<SliceRequest> reqs{{1.0, {Vec{0.3}, Vec{-0.3}}, false, 0}};
    auto out = run_density(s, reqs);
    // the two symmetric points have mirrored patterns and must agree within
    // combined error
    const auto& d0 = out[0].density[0];
    const auto& d1 = out[0].density[1];
    CHECK(std::abs(d0.q_hat - d1.q_hat) <= 4.0 * std::sqrt(d0.se * d0.se + d1.se * d1.se) + 0.004);
}

TEST_CASE("zero paths on the truncation set is reported, not fabricated") {
    RunSetup s = iid_setup(50, 8);  // gate (2p+1)/c = 18 > 8 = [tn]
    std::vector<SliceRequest> reqs{{1.0, {Vec{0.0}}, false, 0}};
    CHECK_THROWS_AS(run_density(s, reqs), SamplingError);
}

TEST_CASE("remainder mass for the heavy-tail mixture decays in n") {
    RunSetup s;
    s.entry = make_iid_model(1);
    s.decomp.alpha = 0.5;
    s.decomp.kappa = 4;
    s.decomp.ball = {Vec{0.0}, std::sqrt(3.6)};
    s.decomp.nu.kind = NuSpec::Kind::Pareto;
    s.decomp.nu.xm = 2.0 / 3.0;
    s.decomp.nu.exponent = 4.5;
    s.scheme.t = 1.0;
    s.scheme.x0 = Vec{0.0};
    s.scheme.paths = 30000;
    s.scheme.c = 0.25;
    s.scheme.p = 3;
    s.scheme.seed = 4;
    s.workers = 2;
    double prev = 1.0;
    for (int n : {32, 64}) {
        s.scheme.n = n;
        RemainderReport rep = remainder_mass(s, 1.0);
        CHECK(rep.remainder_hat <= prev + 3.0 * rep.remainder_se);
        CHECK(rep.eps_kappa == doctest::Approx(0.2));
        CHECK(rep.rho_used == doctest::Approx(0.0654).epsilon(0.01));
        prev = rep.remainder_hat;
    }
}

TEST_CASE("tail probe is monotone and Gaussian in the body") {
    RunSetup s = iid_setup(120000, 32);
    s.scheme.p = 2;
    std::vector<double> levels;
    for (double y = 0.0; y <= 2.5 + 1e-9; y += 0.25) levels.push_back(y);
    TailResult res = tail_probe(s, 1.0, levels);
    CHECK(res.rows.front().prob == doctest::Approx(res.p_theta));
    for (std::size_t i = 1; i < res.rows.size(); ++i)
        CHECK(res.rows[i].prob <= res.rows[i - 1].prob + 1e-12);
    CHECK(res.gaussian_fit.r2 > 0.98);
}

TEST_CASE("mgf probe approximates the Gaussian limit") {
    RunSetup s = iid_setup(120000, 32);
    s.scheme.p = 2;
    std::vector<Vec> lambdas;
    for (double l = 0.0; l <= 2.0 + 1e-9; l += 0.5) lambdas.push_back(Vec{l});
    MgfResult res = mgf_probe(s, 1.0, lambdas);
    CHECK(res.rows.front().value == doctest::Approx(1.0));  // P(theta = 1) = 1 here
    for (const auto& row : res.rows) {
        if (row.lambda[0] == 0.0) continue;
        const double want = std::exp(0.5 * row.lambda[0] * row.lambda[0]);
        CHECK(std::abs(std::log(row.value) - std::log(want)) < 0.1 * std::log(want) + 0.02);
    }
    CHECK(res.quad_coeff == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("weight replaced by one returns an orthant probability, not a density") {
    // the documented misuse guard: with unit weights the estimator's mean is
    // the closed-orthant probability
    RunSetup s = iid_setup(40000, 32);
    s.scheme.p = 2;
    Accumulator acc;
    const int nstar = n_star(s.entry.spec, s.decomp);
    for (long i = 0; i < s.scheme.paths; ++i) {
        GridPath p = simulate_path(s.entry.spec, s.decomp, s.scheme.x0, 32, s.scheme.seed, i);
        const int wit = truncation_witness_gated(p, 1.0, 0.5, 2, nstar);
        acc.add(wit && p.states[32][0] >= 0.0 ? 1.0 : 0.0);
    }
    CHECK(acc.mean() == doctest::Approx(0.5).epsilon(0.02));  // P(f >= 0), nothing like phi(0)
}

TEST_CASE("mgf probe rejects lambda outside the window") {
    RunSetup s = iid_setup(100, 32);
    s.scheme.p = 2;
    // window = n^{1/(kappa+1)} = 2 at n = 32, kappa = 4
    CHECK_THROWS_AS(mgf_probe(s, 1.0, {Vec{3.0}}), ContractViolation);
}

TEST_CASE("trapezoid integral on a product grid") {
    std::vector<DensityEstimate> ests;
    for (int i = 0; i <= 10; ++i)
        for (int j = 0; j <= 10; ++j) {
            DensityEstimate de;
            de.y = Vec{i * 0.1, j * 0.1};
            de.q_hat = 1.0;
            ests.push_back(de);
        }
    CHECK(trapezoid_integral(ests, 2) == doctest::Approx(1.0));
}
