#pragma once

#include <cstddef>
#include <vector>

#include "truncllt/decomp.hpp"
#include "truncllt/scheme.hpp"

namespace truncllt {

// Per-path geometry consumed by the calculus: the eta record, the weight
// psi and its gradient at each eta_k, theta, and the vector rho of Eq-style
// log-derivative components. One context per path, never shared across
// workers.
struct PathContext {
    int n = 0;
    std::size_t d = 1;
    int theta = 1;
    BallSpec ball;
    std::vector<Vec> eta;          // n entries
    std::vector<int> eps;          // n entries
    Vec psi_k;                     // psi(eta_k)
    std::vector<Vec> dpsi_k;       // grad psi(eta_k)
    std::vector<double> rho;       // H-vector, rho[k*d+r] = theta * d_r psi(eta_k)

    std::size_t hdim() const { return static_cast<std::size_t>(n) * d; }

    static PathContext from_path(const GridPath& path, const MixtureDecomposition& decomp);
};

// A random functional carrying its value and psi-weighted derivative tensors
// up to order m (dense storage; this is the verification-grade
// representation, production weights use the recursion in weights.hpp).
//
// Index conventions over H = R^{n d}, flat index b = k*d + r:
//   t1[b]              = D_b f
//   t2[a*N + b]        = D_a D_b f            (outer derivative first)
//   t3[(e*N + c)*N + b] = D_e D_c D_b f
// The weighted second derivative is not symmetric: the weight attaches to the
// direction block, so only same-block entries pick up the extra d(psi) term.
struct SobolevElement {
    const PathContext* ctx = nullptr;
    int order = 0;
    double value = 0.0;
    std::vector<double> t1, t2, t3;

    std::size_t hdim() const { return ctx ? ctx->hdim() : 0; }
    double t2at(std::size_t a, std::size_t b) const { return t2[a * hdim() + b]; }
    double t3at(std::size_t e, std::size_t c, std::size_t b) const {
        const std::size_t N = hdim();
        return t3[(e * N + c) * N + b];
    }

    // largest step index with any nonzero tensor entry, -1 if none
    int active_horizon() const;

    // flat (multi-index, value) pairs of the nonzero tensor entries
    std::string debug_dump(double tol = 0.0) const;
};

using Family = std::vector<SobolevElement>;     // H-indexed, size N
using FamilyHH = std::vector<SobolevElement>;   // H x H indexed, [paired*N + spectator]

SobolevElement lift_constant(const PathContext& ctx, double v, int m);
SobolevElement lift_coordinate(const PathContext& ctx, int k, std::size_t r, int m);
SobolevElement lift_psi(const PathContext& ctx, int k, int m);

SobolevElement add(const SobolevElement& f, const SobolevElement& g);
SobolevElement sub(const SobolevElement& f, const SobolevElement& g);
SobolevElement scale(const SobolevElement& f, double c);
SobolevElement shift(const SobolevElement& f, double c);
SobolevElement mul(const SobolevElement& f, const SobolevElement& g);

// F(f) for scalar smooth F supplied with derivatives up to order 3
SobolevElement chain_unary(const SobolevElement& f, double F, double F1, double F2, double F3);

// view of Df as an H-indexed family of order (m-1) elements
Family derivative_family(const SobolevElement& f);
// Dg for an H-family g, stored [direction*N + component] (direction is the
// slot delta pairs with)
FamilyHH derivative_family_hh(const Family& g);
// transpose of the two H slots
FamilyHH kstar(const FamilyHH& k, std::size_t N);

// divergence of an H-family: delta(g) = -sum_b [ rho_b g_b + (D g_b, e_b) ],
// consumes one tensor order
SobolevElement divergence(const Family& g, const PathContext& ctx);
// delta applied slotwise to an HxH family, output an H-family
Family divergence_hh(const FamilyHH& k, const PathContext& ctx);

// random operator B of the commutation relations; block-diagonal, for the
// ball weight each block is 2 theta^2 psi(eta_k) I
Family b_operator(const Family& g, const PathContext& ctx);
FamilyHH b_operator_hh(const FamilyHH& k, const PathContext& ctx);

// Same-block commutator of the weighted derivative:
//   [D_a, D_b] = rho_a D_b - rho_b D_a   on the block k_a = k_b, zero across
// blocks. The commutation relation for D delta(g) therefore reads
//   D[delta(g)] = B g + delta([Dg]*) - C(g),
//   C(g)_a = sum_{b in block(a)} ( rho_a D_b g_b - rho_b D_a g_b ),
// which collapses to the block-free statement when d = 1.
Family commutator_correction(const Family& g, const PathContext& ctx);

// inverse of a d x d matrix of elements with tensors to order min(order,2),
// zero off the truncation set; throws if the value matrix is singular on it
std::vector<SobolevElement> inverse_with_derivative(const std::vector<SobolevElement>& sigma,
                                                    std::size_t d, bool on_truncation);

// max relative gap between t1 and a central finite difference of `rebuild`
// under eta-perturbations (weighted by theta psi); `rebuild` must recompute
// the functional value from a perturbed context
double finite_difference_gap(const SobolevElement& f,
                             const std::function<double(const PathContext&)>& rebuild,
                             double h = 1e-6);

}  // namespace truncllt
