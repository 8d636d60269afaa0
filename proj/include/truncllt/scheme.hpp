#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "truncllt/decomp.hpp"
#include "truncllt/model.hpp"

namespace truncllt {

// One Euler trajectory on the uniform grid {k/n} with its full noise record.
// The noise is kept because the weight machinery re-reads eta/eps/zeta and
// differentiates in eta; it is not an optional debug artifact.
struct GridPath {
    int n = 0;
    Vec x0;
    std::vector<Vec> states;        // n+1 entries, states[0] == x0
    std::vector<NoiseDraw> noise;   // n entries
    int theta = 0;
    std::vector<int> eps_prefix;    // eps_prefix[k] = sum_{j<=k} eps_j, k = 0..n (eps_prefix[0] = 0)
    std::uint64_t seed_tag = 0;     // (master seed, path index) hash for replay

    int eps_count_at(double t) const {
        const int kt = static_cast<int>(t * n);  // [tn]
        return eps_prefix[std::min(kt, n)];
    }

    // byte-stable text form used by the replay tests
    std::string serialize() const;
};

struct SchemeParams {
    int n = 64;
    double t = 1.0;
    Vec x0;
    long paths = 100000;
    double c = -1.0;  // < 0 means "default alpha/2"
    int p = -1;       // < 0 means "default 8(d+1)"
    std::uint64_t seed = 1;

    double c_value(double alpha) const { return c > 0.0 ? c : alpha / 2.0; }
    int p_value(std::size_t d) const { return p > 0 ? p : 8 * (static_cast<int>(d) + 1); }
};

// x + a(x)/n + b(x) xi / sqrt(n)
Vec euler_step(const Vec& x, const Vec& xi, const ModelSpec& spec, int n);

GridPath simulate_path(const ModelSpec& spec, const MixtureDecomposition& decomp, const Vec& x0,
                       int n, std::uint64_t master_seed, std::uint64_t path_index);

// piecewise-linear interpolation of the state record
Vec interpolate(const GridPath& path, double t);

// Smallest n such that |grad a|/n + d |grad b| (sup_U |x| + threshold(n)) / sqrt(n) <= 1/2.
// Closed-form sufficient bound; conservative relative to the implicit one.
int n_star(const ModelSpec& spec, const MixtureDecomposition& decomp);

// 1 iff theta = 1, the selected-count gate holds at time t, n >= n_star and
// [tn] > (2p+1)/c; otherwise the path belongs to the remainder.
int truncation_witness(const GridPath& path, double t, double c, int p,
                       const ModelSpec& spec, const MixtureDecomposition& decomp);

// same, with n_star precomputed once per run
int truncation_witness_gated(const GridPath& path, double t, double c, int p, int nstar);

}  // namespace truncllt
