#pragma once

#include <cstdint>

#include "truncllt/estimator.hpp"

namespace truncllt {

// Per-sample algebraic identity suite over random low-order inputs, plus the
// Monte Carlo duality and integration-by-parts checks. This is the cheapest
// strong oracle the calculus admits: every identity must hold exactly on
// every sample, so any propagation bug in the tensors surfaces immediately.
struct IdentityReport {
    double max_rel_commute_i = 0.0;    // delta(f g) = f delta(g) - (Df, g)
    double max_rel_commute_ii = 0.0;   // D delta(g) = B g + delta([Dg]*)
    double max_rel_commute_iii = 0.0;  // bilinear variant
    double max_rel_inverse = 0.0;      // sigma * inverse(sigma) = identity element
    double max_fd_gap = 0.0;           // first tensors against finite differences
    double max_ladder_gap = 0.0;       // contraction ladder vs generic tape ladder
    double duality_z = 0.0;            // |E(Df,g) - E f delta(g)| in SE units
    double ibp_z = 0.0;                // |E(Df,h) + E(rho,h) f| in SE units
    bool pass = false;
};

// samples_algebraic: random inputs for the exact identities (target 1e3);
// samples_mc: Monte Carlo sample count for duality/IBP (target 1e5).
// The suite runs at a reduced step count (n capped) because the identities
// are per-sample algebra, not asymptotics.
IdentityReport run_identity_suite(const RunSetup& setup, int samples_algebraic,
                                  long samples_mc, std::uint64_t seed);

// Derivative arrays against finite differences of the simulated path:
// first order directly, second order as central differences of the
// first-order recursion (step h on first-order outputs keeps full accuracy).
struct DerivFdReport {
    double max_rel_y1 = 0.0;
    double max_rel_y2 = 0.0;
    double max_rel_tape1 = 0.0;  // tape tensors against the same oracle
    double max_rel_tape2 = 0.0;
    bool pass = false;
};
DerivFdReport derivative_fd_check(const RunSetup& setup, double t, int paths, double h,
                                  double tol);

// replays the Euler recursion with a perturbed eta record (eps/zeta fixed)
GridPath replay_with_eta(const GridPath& path, const ModelSpec& spec,
                         const std::vector<Vec>& eta);

}  // namespace truncllt
