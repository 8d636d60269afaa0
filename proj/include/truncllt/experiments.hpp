#pragma once

#include <functional>
#include <string>
#include <vector>

#include "truncllt/estimator.hpp"

namespace truncllt {

// Green-kernel weight of the W-measure condition
inline double w_kernel(std::size_t d, double r) {
    if (d == 1) return r;
    if (d == 2) return std::max(-std::log(r), 1.0);
    return std::pow(r, 2.0 - static_cast<double>(d));
}

// density family F_n approximating the target measure (d = 1 at desk scale)
struct WMeasureSpec {
    std::size_t d = 1;
    enum class Kind { DeltaBump, LebesgueInterval } kind = Kind::DeltaBump;
    double lo = -1.0, hi = 1.0;  // Lebesgue interval bounds
    double support_bound = 2.0;

    double density(int n, double x) const;
    double sup_density(int n) const;
};

struct WMeasureReport {
    bool sup_density_pass = false;          // (1/n) sup F_n decreasing to ~0
    std::vector<double> sup_density_values;
    bool kernel_pass = false;          // sup-integral trend in delta
    std::vector<double> kernel_sup_integrals;  // per delta (largest n in the ladder)
    std::vector<double> deltas;
};
WMeasureReport w_measure_check(const WMeasureSpec& wspec, const std::vector<int>& n_ladder,
                               const std::vector<double>& delta_ladder);

struct LocalTimeResult {
    double phi_mean = 0.0;       // E psi_n^{0,1}
    double phi_se = 0.0;
    double target = 0.0;         // closed form or quadrature oracle
    double gap = 0.0;            // |phi_mean - target| / target
    WMeasureReport conditions;
    // characteristic probe rows: |f_hat_n - f^tau| at (x, tau), with the
    // decomposition into the truncated-density part and the remainder part
    struct CharRow {
        double x, tau, f_hat, f_oracle, q_part, r_part, atom_part, gap;
    };
    std::vector<CharRow> characteristic;
};
LocalTimeResult local_time_run(const WMeasureSpec& wspec, const RunSetup& setup,
                               bool characteristic_probe);

struct SupGapRow {
    int n = 0;
    double sup_gap = 0.0;
    double max_se = 0.0;
    double grid_bound = 0.0;     // discretization allowance
    double remainder_hat = 0.0;
    double remainder_bound = 0.0;
    double rho = 0.0;
};
struct IidLltResult {
    std::vector<SupGapRow> rows;  // per n in the ladder
    std::vector<DensityEstimate> last_grid;  // estimates at the largest n
};
IidLltResult iid_llt_run(const MixtureDecomposition& decomp, const std::vector<int>& n_ladder,
                         long paths, std::uint64_t seed, int workers,
                         const std::vector<double>& ygrid);

struct OracleResult {
    struct Row {
        double t;
        double sup_gap;
        double max_se;
        double peak_q;     // estimate at the distribution center
        double peak_oracle;
    };
    std::vector<Row> rows;
    double peak_exponent;  // log peak vs log t slope, should be -d/2
    LinearFit peak_fit;
};
OracleResult gaussian_oracle_run(const RunSetup& setup, const std::vector<double>& t_grid,
                                 double grid_halfwidth_sds, std::size_t points_per_axis);

struct DoeblinResult {
    double overlap = 0.0;
    double se = 0.0;
    double oracle = 0.0;  // 2 Phi(-|x - x'|/2) for the unit constant model
};
DoeblinResult doeblin_overlap(const RunSetup& setup, const Vec& x, const Vec& xprime, double t,
                              const std::vector<double>& ygrid);

// Monte Carlo check of the small-ball inverse moment decay in k
struct SmallBallResult {
    std::vector<int> ks;
    std::vector<double> values;  // E {sum psi^2 1}^{-p} 1{sum eps >= ck}
    double slope = 0.0;          // log-log slope, expected ~ -p
};
SmallBallResult small_ball_run(const MixtureDecomposition& decomp, const std::vector<int>& ks,
                               int p, double c, long trials, std::uint64_t seed);

// E |D X_n(t)|^2 / t across (t, n) plus the N_d scaling in t
struct MomentScalingResult {
    struct Row {
        int n;
        double t;
        double ratio;  // E |D X_n(t)|^2 / t
        double n_d;
    };
    std::vector<Row> rows;
    double ratio_spread = 0.0;   // max/min of ratio
    double nd_slope = 0.0;       // log N_d vs log t slope, ~ 1/2
};
MomentScalingResult moment_scaling_run(const RunSetup& base, const std::vector<int>& ns,
                                       const std::vector<double>& ts, long paths);

// E |rho_inv|^p 1_Xi across t (inverse-moment scaling, expected ~ t^{-p})
struct RhoMomentResult {
    std::vector<double> ts;
    std::vector<double> values;
    double slope = 0.0;
};
RhoMomentResult rho_moment_run(const RunSetup& base, const std::vector<double>& ts, int p,
                               long paths);

}  // namespace truncllt
