#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "truncllt/linalg.hpp"
#include "truncllt/rng.hpp"

namespace truncllt {

struct ContractViolation : std::logic_error {
    using std::logic_error::logic_error;
};

struct SamplingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Open ball U = B(z, r) carrying the weight psi(x) = r^2 - |x - z|^2.
struct BallSpec {
    Vec center;
    double radius = 1.0;

    std::size_t dim() const { return center.size(); }
    void validate() const {
        if (radius <= 0.0) throw ContractViolation("BallSpec: radius must be > 0");
        if (center.empty()) throw ContractViolation("BallSpec: empty center");
    }
    // sup over U of |x|
    double sup_norm() const { return norm2(center) + radius; }
};

inline double psi(const Vec& x, const BallSpec& ball) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double u = x[i] - ball.center[i];
        s += u * u;
    }
    return ball.radius * ball.radius - s;
}

inline Vec grad_psi(const Vec& x, const BallSpec& ball) {
    Vec g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = -2.0 * (x[i] - ball.center[i]);
    return g;
}

// d^2 psi / dx_r dx_s = -2 * delta_{rs}, constant for the ball weight.
inline double hess_psi(std::size_t r, std::size_t s) { return r == s ? -2.0 : 0.0; }

// The singular-part sampler nu. Built-in kinds:
//   none     - alpha must be 1, zeta == 0 and never used
//   point    - point mass at a fixed vector
//   uniform  - product of uniforms on per-axis intervals [lo_i, hi_i]
//   ball     - uniform on a second ball (handy for cumulant-calibrated
//              bounded mixtures)
//   pareto   - radial law r * omega with Pareto(x_m, kappa + 0.5) radius and
//              uniform direction; exactly kappa finite moments
struct NuSpec {
    enum class Kind { None, Point, Uniform, Ball, Pareto } kind = Kind::None;
    Vec point;           // Point
    Vec lo, hi;          // Uniform
    Vec ball_center;     // Ball
    double ball_radius = 1.0;
    double xm = 1.0;     // Pareto scale
    double exponent = 4.5;  // Pareto tail exponent (kappa + 0.5)
};

struct MixtureDecomposition {
    double alpha = 1.0;
    BallSpec ball;
    NuSpec nu;
    int kappa = 4;
    bool exp_moment = false;
    double delta = 1.0;  // truncation scale in the exp-moment regime

    std::size_t dim() const { return ball.dim(); }

    void validate() const {
        ball.validate();
        if (!(alpha > 0.0 && alpha <= 1.0))
            throw ContractViolation("MixtureDecomposition: alpha must lie in (0,1]");
        if (kappa < 4) throw ContractViolation("MixtureDecomposition: kappa must be >= 4");
        if (alpha < 1.0 && nu.kind == NuSpec::Kind::None)
            throw ContractViolation("MixtureDecomposition: alpha < 1 requires a nu sampler");
        if (delta <= 0.0) throw ContractViolation("MixtureDecomposition: delta must be > 0");
    }

    // varsigma = (kappa-1)/(2 kappa + 2)
    double varsigma() const { return (kappa - 1.0) / (2.0 * kappa + 2.0); }

    // epsilon(kappa) = (kappa^2 - 3 kappa - 2)/(2 kappa + 2)
    double eps_kappa() const {
        const double k = kappa;
        return (k * k - 3.0 * k - 2.0) / (2.0 * k + 2.0);
    }

    // zeta-norm threshold entering theta_n
    double theta_threshold(int n) const {
        return exp_moment ? delta * std::sqrt(static_cast<double>(n))
                          : std::pow(static_cast<double>(n), varsigma());
    }
};

struct NoiseDraw {
    Vec eta;   // uniform on U, always drawn
    int eps;   // Bernoulli(alpha)
    Vec zeta;  // ~ nu, always drawn (zero when nu is None)
    Vec xi;    // eps*eta + (1-eps)*zeta
};

Vec sample_uniform_ball(const BallSpec& ball, Rng& rng);
Vec sample_nu(const NuSpec& nu, std::size_t d, Rng& rng);
NoiseDraw sample_noise(const MixtureDecomposition& decomp, Rng& rng);

// theta_n over a zeta record: 1 iff max_k |zeta_k| <= threshold.
int theta_indicator(const std::vector<Vec>& zetas, int n, const MixtureDecomposition& decomp);

// rho in H = R^{n d}: component (k,r) equals theta * d_r psi(eta_k).
std::vector<double> rho_vector(const std::vector<NoiseDraw>& draws, int theta,
                               const BallSpec& ball);

// Psi(alpha,c) = ((1-alpha)/(1-c))^{1-c} (alpha/c)^c; the bound is Psi^k and
// rho = -ln(Psi)/2 drives the exponential remainder term.
struct BernoulliTail {
    double psi_value;  // Psi(alpha, c), < 1 on 0 < c < alpha < 1
    double rho;        // -0.5 ln Psi
    double bound;      // Psi^k
};
BernoulliTail bernoulli_tail_bound(double alpha, double c, long k);

// Monte Carlo audit of the standing normalization: the composed xi law must
// have mean 0 and identity covariance. The module audits, it does not fix.
struct MomentAudit {
    Vec mean;
    Mat cov;
    Vec mean_se;
    Mat cov_se;
    bool pass;  // every entry within 4 standard errors of the target
};
MomentAudit audit_moments(const MixtureDecomposition& decomp, std::size_t samples,
                          std::uint64_t seed);

}  // namespace truncllt
