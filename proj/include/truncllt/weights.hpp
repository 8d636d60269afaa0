#pragma once

#include <optional>
#include <vector>

#include "truncllt/scheme.hpp"
#include "truncllt/tape.hpp"

namespace truncllt {

// psi-weighted derivative arrays of X_n(t). Entry conventions match the tape:
//   Y[b*d + i]            = D_b X_i(t)
//   Y2(a,b)[i]            = D_a D_b X_i(t)   (outer derivative first)
//   Y3(e,c,b)[i]          = D_e D_c D_b X_i(t)
// Constant-coefficient models make all higher arrays block-diagonal (every
// nonzero entry has all H-indices in one step block), which is what the
// `diag` storage exploits; general models use the dense layout.
struct DerivativeRecord {
    int n = 0;
    std::size_t d = 1;
    double t = 1.0;
    int order = 1;
    bool diag = false;
    std::vector<double> Y;    // N*d
    std::vector<double> Y2;   // dense: N*N*d, diag: n*d*d*d
    std::vector<double> Y3;   // dense: N*N*N*d, diag: n*d*d*d*d

    std::size_t N() const { return static_cast<std::size_t>(n) * d; }

    double y(std::size_t b, std::size_t i) const { return Y[b * d + i]; }
    double y2(std::size_t a, std::size_t b, std::size_t i) const {
        if (diag) {
            const std::size_t ka = a / d;
            if (ka != b / d) return 0.0;
            return Y2[((ka * d + a % d) * d + b % d) * d + i];
        }
        return Y2[(a * N() + b) * d + i];
    }
    double y3(std::size_t e, std::size_t c, std::size_t b, std::size_t i) const {
        if (diag) {
            const std::size_t ke = e / d;
            if (ke != c / d || ke != b / d) return 0.0;
            return Y3[(((ke * d + e % d) * d + c % d) * d + b % d) * d + i];
        }
        const std::size_t NN = N();
        return Y3[((e * NN + c) * NN + b) * d + i];
    }

    // Frobenius norms per derivative order and coordinate:
    // norms[m-1][i] = ||D^m X_i||_{H^{(x) m}}
    std::vector<Vec> tensor_norms_by_coord() const;
};

DerivativeRecord derivative_recursion(const GridPath& path, const ModelSpec& spec,
                                      const MixtureDecomposition& decomp, double t,
                                      int max_order);

// Difference analogue of the stochastic exponent at the step k = [tn]:
// E[j] = E_{j,k} for j = 0..k, the censored (tilde) variant and its
// factorwise inverses.
struct ExponentFamily {
    int k = 0;
    std::size_t d = 1;
    std::vector<Mat> plain;        // E_{j,k}
    std::vector<Mat> tilde;        // censored innovations
    std::vector<Mat> tilde_inv;    // [tilde E_{j,k}]^{-1}
    double max_inv_norm = 0.0;     // max_j ||tilde E_{j,k}^{-1}||
};
ExponentFamily stochastic_exponent(const GridPath& path, const ModelSpec& spec, double t,
                                   const MixtureDecomposition& decomp, bool need_inverse = true);

// E_{i,j} by direct forward multiplication, for the cocycle tests
Mat exponent_between(const GridPath& path, const ModelSpec& spec, int i, int j, bool tilde,
                     const MixtureDecomposition& decomp);

struct MalliavinState {
    std::size_t d = 1;
    bool on_xi = false;
    Mat sigma;                     // values (Df_i, Df_j)_H
    std::vector<Mat> dsigma;       // D sigma per direction a (size N)
    std::vector<Mat> d2sigma;      // dense: N*N, diag: n*d*d entries
    bool diag = false;
    Mat rho_inv;                   // sigma^{-1} on Xi, zero matrix off it
    double det_sigma = 0.0;
    double inv_norm = 0.0;         // max-abs entry of rho_inv

    const Mat& d2s(std::size_t c, std::size_t a, std::size_t n, std::size_t d_) const {
        static const Mat zero4 = Mat(4, 0.0);
        if (diag) {
            const std::size_t kc = c / d_;
            if (kc != a / d_) return zero4;
            return d2sigma[(kc * d_ + c % d_) * d_ + a % d_];
        }
        return d2sigma[c * (n * d_) + a];
    }
};

// sigma from the record contractions, with first/second derivative arrays;
// rho_inv gated by the truncation witness.
MalliavinState malliavin_matrix(const DerivativeRecord& rec, int witness);

// sigma via the stochastic-exponent representation (independent formula,
// used as a cross-check against the record contraction)
Mat malliavin_matrix_from_exponent(const GridPath& path, const ModelSpec& spec,
                                   const MixtureDecomposition& decomp, double t);

struct LadderResult {
    double upsilon = 0.0;            // Upsilon^{f,Xi}; exactly 0 off Xi
    std::optional<Vec> upsilon_i;    // gradient weights, d = 1 only
};

// The iterated-divergence ladder evaluated per sample on the record arrays.
// Needs record order >= d+1 (>= d+2 with gradient).
LadderResult weight_ladder(const MalliavinState& state, const DerivativeRecord& rec,
                           const PathContext& ctx, bool want_gradient);

// Second code path: the same ladder built from scratch on the dense tape.
struct TapeLadderResult {
    SobolevElement upsilon;
    std::vector<SobolevElement> upsilon_i;
};
std::vector<SobolevElement> tape_functional(const GridPath& path, const ModelSpec& spec,
                                            const PathContext& ctx, double t, int order);
TapeLadderResult tape_weight_ladder(const std::vector<SobolevElement>& f,
                                    const PathContext& ctx, bool on_xi, bool want_gradient);

// Monte Carlo moment diagnostics N_d / K_d (the unknown structural constant
// is treated as 1; these are relative monitors across n and t, not bounds).
struct NormDiagnostics {
    double N_d = 0.0;
    double K_d = 0.0;
};
class NormAccumulator {
public:
    NormAccumulator(std::size_t d, int order) : d_(d), order_(order) {}
    void add(const DerivativeRecord& rec, const MalliavinState& state);
    NormDiagnostics finish() const;
    std::size_t count() const { return count_; }

private:
    std::size_t d_;
    int order_;
    std::size_t count_ = 0;
    std::vector<double> moment_sums_;  // per (order, coord): E ||D^m f_i||^{2(d+1)(d+2)}
    std::vector<double> rho_moment_sums_;  // per M = 0..d: E ||rho||_max^{4(M+d)} 1_Xi
};

}  // namespace truncllt
