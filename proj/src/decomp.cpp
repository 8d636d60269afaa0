#include "truncllt/decomp.hpp"

#include <cmath>

namespace truncllt {

Vec sample_uniform_ball(const BallSpec& ball, Rng& rng) {
    const std::size_t d = ball.dim();
    Vec x(d);
    if (d == 1) {
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        const double rad = ball.radius * rng.uniform();
        x[0] = ball.center[0] + sign * rad;
        return x;
    }
    // direction from normalized gaussians, radius by the power inverse transform
    double nrm = 0.0;
    do {
        nrm = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            x[i] = rng.gauss();
            nrm += x[i] * x[i];
        }
    } while (nrm == 0.0);
    nrm = std::sqrt(nrm);
    const double rad = ball.radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
    for (std::size_t i = 0; i < d; ++i) x[i] = ball.center[i] + rad * x[i] / nrm;
    return x;
}

Vec sample_nu(const NuSpec& nu, std::size_t d, Rng& rng) {
    switch (nu.kind) {
        case NuSpec::Kind::None:
            return Vec(d, 0.0);
        case NuSpec::Kind::Point:
            if (nu.point.size() != d) throw SamplingError("nu point mass has wrong dimension");
            return nu.point;
        case NuSpec::Kind::Uniform: {
            if (nu.lo.size() != d || nu.hi.size() != d)
                throw SamplingError("nu uniform bounds have wrong dimension");
            Vec x(d);
            for (std::size_t i = 0; i < d; ++i) {
                if (!(nu.hi[i] >= nu.lo[i])) throw SamplingError("nu uniform: hi < lo");
                x[i] = nu.lo[i] + (nu.hi[i] - nu.lo[i]) * rng.uniform();
            }
            return x;
        }
        case NuSpec::Kind::Ball: {
            if (nu.ball_center.size() != d)
                throw SamplingError("nu ball has wrong dimension");
            BallSpec b{nu.ball_center, nu.ball_radius};
            return sample_uniform_ball(b, rng);
        }
        case NuSpec::Kind::Pareto: {
            if (!(nu.exponent > 2.0)) throw SamplingError("nu pareto: exponent must be > 2");
            const double r = nu.xm * std::pow(rng.uniform_pos(), -1.0 / nu.exponent);
            Vec x(d);
            if (d == 1) {
                x[0] = (rng.uniform() < 0.5 ? -1.0 : 1.0) * r;
                return x;
            }
            double nrm = 0.0;
            do {
                nrm = 0.0;
                for (std::size_t i = 0; i < d; ++i) {
                    x[i] = rng.gauss();
                    nrm += x[i] * x[i];
                }
            } while (nrm == 0.0);
            nrm = std::sqrt(nrm);
            for (std::size_t i = 0; i < d; ++i) x[i] = r * x[i] / nrm;
            return x;
        }
    }
    throw SamplingError("nu: unknown kind");
}

NoiseDraw sample_noise(const MixtureDecomposition& decomp, Rng& rng) {
    const std::size_t d = decomp.dim();
    NoiseDraw nd;
    // eta and zeta are drawn unconditionally on every step: the product
    // measure of the calculus populates all three blocks even when eps
    // deselects one of them.
    nd.eta = sample_uniform_ball(decomp.ball, rng);
    nd.eps = (decomp.alpha >= 1.0) ? 1 : (rng.uniform() < decomp.alpha ? 1 : 0);
    nd.zeta = (decomp.alpha >= 1.0) ? Vec(d, 0.0) : sample_nu(decomp.nu, d, rng);
    nd.xi.resize(d);
    for (std::size_t i = 0; i < d; ++i)
        nd.xi[i] = nd.eps ? nd.eta[i] : nd.zeta[i];
    return nd;
}

int theta_indicator(const std::vector<Vec>& zetas, int n, const MixtureDecomposition& decomp) {
    if (static_cast<int>(zetas.size()) != n)
        throw ContractViolation("theta_indicator: zeta record length != n");
    const double thr = decomp.theta_threshold(n);
    for (const auto& z : zetas)
        if (norm2(z) > thr) return 0;
    return 1;
}

std::vector<double> rho_vector(const std::vector<NoiseDraw>& draws, int theta,
                               const BallSpec& ball) {
    const std::size_t d = ball.dim();
    std::vector<double> rho(draws.size() * d, 0.0);
    if (!theta) return rho;
    for (std::size_t k = 0; k < draws.size(); ++k) {
        const Vec g = grad_psi(draws[k].eta, ball);
        for (std::size_t r = 0; r < d; ++r) rho[k * d + r] = g[r];
    }
    return rho;
}

BernoulliTail bernoulli_tail_bound(double alpha, double c, long k) {
    if (!(c > 0.0 && c < alpha && alpha < 1.0))
        throw ContractViolation("bernoulli_tail_bound: need 0 < c < alpha < 1");
    if (k < 0) throw ContractViolation("bernoulli_tail_bound: k must be >= 0");
    const double lnpsi =
        (1.0 - c) * std::log((1.0 - alpha) / (1.0 - c)) + c * std::log(alpha / c);
    BernoulliTail out;
    out.psi_value = std::exp(lnpsi);
    out.rho = -0.5 * lnpsi;
    out.bound = std::exp(static_cast<double>(k) * lnpsi);
    return out;
}

MomentAudit audit_moments(const MixtureDecomposition& decomp, std::size_t samples,
                          std::uint64_t seed) {
    const std::size_t d = decomp.dim();
    Rng rng(seed, 0);
    Vec sum(d, 0.0), sum2(d * d, 0.0);
    Vec sum_sq(d, 0.0);        // per-coordinate squares, for the mean SE
    Mat sum2_sq(d * d, 0.0);   // squares of products, for the cov SE
    for (std::size_t s = 0; s < samples; ++s) {
        const NoiseDraw nd = sample_noise(decomp, rng);
        for (std::size_t i = 0; i < d; ++i) {
            sum[i] += nd.xi[i];
            sum_sq[i] += nd.xi[i] * nd.xi[i];
            for (std::size_t j = 0; j < d; ++j) {
                const double p = nd.xi[i] * nd.xi[j];
                sum2[i * d + j] += p;
                sum2_sq[i * d + j] += p * p;
            }
        }
    }
    const double n = static_cast<double>(samples);
    MomentAudit a;
    a.mean.resize(d);
    a.mean_se.resize(d);
    a.cov.resize(d * d);
    a.cov_se.resize(d * d);
    a.pass = true;
    for (std::size_t i = 0; i < d; ++i) {
        a.mean[i] = sum[i] / n;
        const double var = std::max(0.0, sum_sq[i] / n - a.mean[i] * a.mean[i]);
        a.mean_se[i] = std::sqrt(var / n);
        if (std::abs(a.mean[i]) > 4.0 * std::max(a.mean_se[i], 1e-12)) a.pass = false;
    }
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double m = sum2[i * d + j] / n;
            a.cov[i * d + j] = m - a.mean[i] * a.mean[j];
            const double var = std::max(0.0, sum2_sq[i * d + j] / n - m * m);
            a.cov_se[i * d + j] = std::sqrt(var / n);
            const double target = (i == j) ? 1.0 : 0.0;
            if (std::abs(a.cov[i * d + j] - target) >
                4.0 * std::max(a.cov_se[i * d + j], 1e-12))
                a.pass = false;
        }
    return a;
}

}  // namespace truncllt
