#include "truncllt/scheme.hpp"

#include <cmath>
#include <cstdio>

namespace truncllt {

Vec euler_step(const Vec& x, const Vec& xi, const ModelSpec& spec, int n) {
    if (n < 1) throw ContractViolation("euler_step: n must be >= 1");
    const std::size_t d = spec.d;
    const double invn = 1.0 / static_cast<double>(n);
    const double invsq = 1.0 / std::sqrt(static_cast<double>(n));
    const Vec av = spec.a(x);
    const Mat bm = spec.b(x);
    Vec y(d);
    for (std::size_t i = 0; i < d; ++i) {
        double s = x[i] + av[i] * invn;
        for (std::size_t r = 0; r < d; ++r) s += bm[i * d + r] * xi[r] * invsq;
        y[i] = s;
    }
    for (double v : y)
        if (!std::isfinite(v)) {
            std::string msg = "euler_step: non-finite state from x = (";
            for (std::size_t i = 0; i < d; ++i) msg += (i ? ", " : "") + std::to_string(x[i]);
            msg += "), xi = (";
            for (std::size_t i = 0; i < d; ++i) msg += (i ? ", " : "") + std::to_string(xi[i]);
            throw SamplingError(msg + ")");
        }
    return y;
}

GridPath simulate_path(const ModelSpec& spec, const MixtureDecomposition& decomp, const Vec& x0,
                       int n, std::uint64_t master_seed, std::uint64_t path_index) {
    if (n < 1) throw ContractViolation("simulate_path: n must be >= 1");
    if (x0.size() != spec.d || decomp.dim() != spec.d)
        throw ContractViolation("simulate_path: dimension mismatch");
    GridPath path;
    path.n = n;
    path.x0 = x0;
    path.states.reserve(n + 1);
    path.states.push_back(x0);
    path.noise.reserve(n);
    path.eps_prefix.assign(1, 0);
    {
        std::uint64_t tag = master_seed;
        (void)splitmix64(tag);
        tag ^= 0x9e3779b97f4a7c15ULL * (path_index + 1);
        path.seed_tag = tag;
    }
    Rng rng(master_seed, path_index);
    const double thr = decomp.theta_threshold(n);
    int theta = 1;
    for (int k = 1; k <= n; ++k) {
        NoiseDraw nd = sample_noise(decomp, rng);
        if (norm2(nd.zeta) > thr) theta = 0;
        path.eps_prefix.push_back(path.eps_prefix.back() + nd.eps);
        path.states.push_back(euler_step(path.states.back(), nd.xi, spec, n));
        path.noise.push_back(std::move(nd));
    }
    path.theta = theta;
    return path;
}

Vec interpolate(const GridPath& path, double t) {
    if (t < 0.0 || t > 1.0) throw ContractViolation("interpolate: t must lie in [0,1]");
    const int n = path.n;
    const double u = t * n;
    const int k = std::min(static_cast<int>(std::floor(u)), n - 1);  // segment [k/n,(k+1)/n]
    const double w = u - k;
    const std::size_t d = path.x0.size();
    Vec y(d);
    for (std::size_t i = 0; i < d; ++i)
        y[i] = path.states[k][i] + w * (path.states[k + 1][i] - path.states[k][i]);
    return y;
}

int n_star(const ModelSpec& spec, const MixtureDecomposition& decomp) {
    const double ga = spec.grad_a_inf;
    const double gb = spec.grad_b_inf;
    const double d = static_cast<double>(spec.d);
    const double supu = decomp.ball.sup_norm();
    auto ok = [&](int n) {
        const double nn = static_cast<double>(n);
        const double pert = ga / nn + d * gb * (supu + decomp.theta_threshold(n)) / std::sqrt(nn);
        return pert <= 0.5;
    };
    // threshold grows like n^varsigma with varsigma < 1/2 (or delta sqrt(n) in
    // the exp regime, where the bound is solvable only for small delta), so
    // scan with doubling then refine.
    int hi = 1;
    while (!ok(hi)) {
        if (hi > (1 << 26))
            throw ContractViolation("n_star: perturbation bound unattainable for this model");
        hi *= 2;
    }
    int lo = hi / 2;
    while (lo + 1 < hi) {
        const int mid = lo + (hi - lo) / 2;
        if (ok(mid))
            hi = mid;
        else
            lo = mid;
    }
    return ok(1) ? 1 : hi;
}

int truncation_witness_gated(const GridPath& path, double t, double c, int p, int nstar) {
    if (!(c > 0.0 && c < 1.0))
        throw ContractViolation("truncation_witness: need 0 < c < alpha");
    if (p < 1) throw ContractViolation("truncation_witness: p must be >= 1");
    const int kt = static_cast<int>(t * path.n);  // [tn]
    if (kt <= (2.0 * p + 1.0) / c) return 0;
    if (path.n < nstar) return 0;
    if (!path.theta) return 0;
    if (path.eps_count_at(t) < c * kt) return 0;
    return 1;
}

int truncation_witness(const GridPath& path, double t, double c, int p,
                       const ModelSpec& spec, const MixtureDecomposition& decomp) {
    if (!(c > 0.0 && c < decomp.alpha))
        throw ContractViolation("truncation_witness: need 0 < c < alpha");
    return truncation_witness_gated(path, t, c, p, n_star(spec, decomp));
}

std::string GridPath::serialize() const {
    std::string out;
    char buf[64];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g,", v);
        out += buf;
    };
    std::snprintf(buf, sizeof buf, "n=%d;theta=%d;tag=%llu;", n, theta,
                  static_cast<unsigned long long>(seed_tag));
    out += buf;
    for (const auto& s : states)
        for (double v : s) put(v);
    out += ";";
    for (const auto& nd : noise) {
        for (double v : nd.eta) put(v);
        std::snprintf(buf, sizeof buf, "%d,", nd.eps);
        out += buf;
        for (double v : nd.zeta) put(v);
        for (double v : nd.xi) put(v);
    }
    return out;
}

}  // namespace truncllt
