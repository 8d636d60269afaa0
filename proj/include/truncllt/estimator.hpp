#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "truncllt/model.hpp"
#include "truncllt/stats.hpp"
#include "truncllt/weights.hpp"

namespace truncllt {

struct RunSetup {
    ModelCatalogEntry entry;
    MixtureDecomposition decomp;
    SchemeParams scheme;
    int workers = 1;
    std::string dump_weights_path;  // per-path debug CSV when non-empty

    double c() const { return scheme.c_value(decomp.alpha); }
    int p() const { return scheme.p_value(entry.spec.d); }
    void validate() const;
};

struct DensityEstimate {
    Vec y;
    double q_hat = 0.0;
    double se = 0.0;
    std::vector<int> orthant;
    long n_paths = 0;
    long n_on_xi = 0;
    double remainder_hat = 0.0;
    double remainder_bound = 0.0;
};

struct RemainderReport {
    double remainder_hat = 0.0;
    double remainder_se = 0.0;
    double remainder_bound = 0.0;  // fitted_D * (n^{-eps(kappa)} + e^{-rho n t})
    double rho_used = 0.0;         // +inf when alpha = 1
    double eps_kappa = 0.0;
    double fitted_D = 0.0;
};

struct SliceRequest {
    double t = 1.0;
    std::vector<Vec> ys;
    bool gradient = false;            // d = 1 only
    std::size_t grad_coord = 0;
    std::vector<int> fixed_orthant;   // empty = per-point pilot selection
};

struct SliceResult {
    double t = 1.0;
    std::vector<DensityEstimate> density;
    std::vector<DensityEstimate> gradient;
    RemainderReport remainder;
    long n_paths = 0;
    long n_on_xi = 0;
};

// Orthant pattern minimizing the empirical frequency of the closed-orthant
// event among all 2^d sign patterns; ties break toward the all-zero pattern.
std::vector<int> orthant_select(const std::vector<Vec>& pilot, const Vec& y);

// One path ensemble serves every slice and every evaluation point (common
// random numbers). Weights are recomputed per slice time.
std::vector<SliceResult> run_density(const RunSetup& setup,
                                     const std::vector<SliceRequest>& requests);

RemainderReport remainder_mass(const RunSetup& setup, double t);

struct TailRow {
    double level = 0.0;
    double prob = 0.0;
    double se = 0.0;
};
struct TailResult {
    std::vector<TailRow> rows;
    LinearFit gaussian_fit;  // -log P against level^2 / t inside the window
    double p_theta = 0.0;    // P(theta = 1)
};
TailResult tail_probe(const RunSetup& setup, double t, const std::vector<double>& levels,
                      double fit_lo = 0.5, double fit_hi = 2.5);

struct MgfRow {
    Vec lambda;
    double value = 0.0;
    double se = 0.0;
    bool overflow = false;
};
struct MgfResult {
    std::vector<MgfRow> rows;
    double quad_coeff = 0.0;  // fitted growth of log MGF in |lambda|^2
};
// lambdas must satisfy |lambda| <= window_factor * n^{1/(kappa+1)}, the
// regime of the quadratic MGF bound
MgfResult mgf_probe(const RunSetup& setup, double t, const std::vector<Vec>& lambdas,
                    double window_factor = 1.0);

// trapezoid integral of the density estimates over their y-grid (d = 1) or a
// product grid (d = 2, row-major ys)
double trapezoid_integral(const std::vector<DensityEstimate>& estimates, std::size_t d);

}  // namespace truncllt
