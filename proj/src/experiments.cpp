#include "truncllt/experiments.hpp"

#include <algorithm>
#include <cmath>

#include "truncllt/parallel.hpp"

namespace truncllt {

double WMeasureSpec::density(int n, double x) const {
    if (kind == Kind::DeltaBump) {
        const double w = 1.0 / std::sqrt(static_cast<double>(n));
        const double u = std::abs(x) / w;
        return u >= 1.0 ? 0.0 : (1.0 - u) / w;
    }
    return (x >= lo && x <= hi) ? 1.0 : 0.0;
}

double WMeasureSpec::sup_density(int n) const {
    return kind == Kind::DeltaBump ? std::sqrt(static_cast<double>(n)) : 1.0;
}

WMeasureReport w_measure_check(const WMeasureSpec& wspec, const std::vector<int>& n_ladder,
                               const std::vector<double>& delta_ladder) {
    if (wspec.d != 1)
        throw ContractViolation("w_measure_check: quadrature implemented for d = 1");
    WMeasureReport rep;
    for (int n : n_ladder) rep.sup_density_values.push_back(wspec.sup_density(n) / n);
    rep.sup_density_pass = true;
    for (std::size_t i = 1; i < rep.sup_density_values.size(); ++i)
        rep.sup_density_pass = rep.sup_density_pass && rep.sup_density_values[i] <= rep.sup_density_values[i - 1] + 1e-12;
    rep.sup_density_pass = rep.sup_density_pass && rep.sup_density_values.back() < 0.1;

    rep.deltas = delta_ladder;
    const int nmax = *std::max_element(n_ladder.begin(), n_ladder.end());
    for (double dlt : delta_ladder) {
        // sup over x of int_{|y-x|<=delta} w_1(|y-x|) F_n(y) dy
        double sup = 0.0;
        const double span = wspec.support_bound + 1.0;
        for (double x = -span; x <= span; x += span / 64.0) {
            const double v = simpson(
                [&](double y) {
                    const double r = std::abs(y - x);
                    return r <= dlt ? w_kernel(1, r) * wspec.density(nmax, y) : 0.0;
                },
                x - dlt, x + dlt, 256);
            sup = std::max(sup, v);
        }
        rep.kernel_sup_integrals.push_back(sup);
    }
    rep.kernel_pass = true;
    for (std::size_t i = 1; i < rep.kernel_sup_integrals.size(); ++i)
        rep.kernel_pass =
            rep.kernel_pass && rep.kernel_sup_integrals[i] <= rep.kernel_sup_integrals[i - 1] + 1e-12;
    rep.kernel_pass = rep.kernel_pass && rep.kernel_sup_integrals.back() < 0.05;
    return rep;
}

namespace {

// E phi^{0,tau} for the Wiener target: integral of the transition density
// against the target measure over time
double characteristic_oracle(const WMeasureSpec& wspec, double x, double tau) {
    if (wspec.kind == WMeasureSpec::Kind::DeltaBump) {
        // mu = delta_0: f^tau(x) = int_0^tau p_s(x, 0) ds, integrable s^{-1/2}
        // singularity at x = 0 handled by substitution s = u^2
        return simpson(
            [&](double u) {
                const double s = u * u;
                if (s == 0.0) return x == 0.0 ? 2.0 / std::sqrt(2.0 * 3.14159265358979323846)
                                              : 0.0;
                return 2.0 * u * std::exp(-x * x / (2.0 * s)) /
                       std::sqrt(2.0 * 3.14159265358979323846 * s);
            },
            0.0, std::sqrt(tau), 2048);
    }
    // mu = Lebesgue on [lo,hi]: f^tau(x) = int_0^tau (Phi((hi-x)/sqrt(s)) -
    // Phi((lo-x)/sqrt(s))) ds
    return simpson(
        [&](double s) {
            if (s <= 0.0) return (x >= wspec.lo && x <= wspec.hi) ? 1.0 : 0.0;
            const double rs = std::sqrt(s);
            return normal_cdf((wspec.hi - x) / rs) - normal_cdf((wspec.lo - x) / rs);
        },
        0.0, tau, 2048);
}

}  // namespace

LocalTimeResult local_time_run(const WMeasureSpec& wspec, const RunSetup& setup,
                               bool characteristic_probe) {
    setup.validate();
    if (setup.entry.spec.d != 1)
        throw ContractViolation("local_time_run: d = 1 at desk scale");
    LocalTimeResult res;
    res.conditions = w_measure_check(wspec, {setup.scheme.n / 4, setup.scheme.n / 2,
                                             setup.scheme.n},
                                     {0.4, 0.2, 0.1, 0.05});
    if (!res.conditions.sup_density_pass || !res.conditions.kernel_pass)
        throw SamplingError("local_time_run: W-measure conditions failed");

    const int n = setup.scheme.n;
    Accumulator acc = parallel_blocks<Accumulator>(
        0, setup.scheme.paths, setup.workers, Accumulator{},
        [&](long i, Accumulator& a) {
            GridPath path =
                simulate_path(setup.entry.spec, setup.decomp, setup.scheme.x0, n,
                              setup.scheme.seed, static_cast<std::uint64_t>(i));
            // psi_n^{0,1} = phi_n^{0,1} at grid-aligned endpoints
            double phi = 0.0;
            for (int k = 0; k < n; ++k) phi += wspec.density(n, path.states[k][0]);
            a.add(phi / n);
        },
        [](Accumulator& x, const Accumulator& y) { x.merge(y); });
    res.phi_mean = acc.mean();
    res.phi_se = acc.se();
    res.target = wspec.kind == WMeasureSpec::Kind::DeltaBump
                     ? std::sqrt(2.0 / 3.14159265358979323846)
                     : characteristic_oracle(wspec, setup.scheme.x0[0], 1.0);
    res.gap = std::abs(res.phi_mean - res.target) / res.target;

    if (characteristic_probe) {
        // coarse (x, tau) grid; Q-part through estimated truncated densities,
        // remainder part through direct Monte Carlo
        const std::vector<double> xs = {0.5, 1.0};
        const std::vector<double> taus = {0.5, 1.0};
        for (double x : xs) {
            RunSetup probe = setup;
            probe.scheme.x0 = Vec{x};
            probe.scheme.paths = std::min<long>(setup.scheme.paths, 50000);
            // quadrature nodes covering the bump support
            const double w = 1.0 / std::sqrt(static_cast<double>(n));
            std::vector<Vec> nodes;
            const int nn = 9;
            for (int j = 0; j < nn; ++j)
                nodes.push_back(Vec{-w + 2.0 * w * j / (nn - 1)});
            // slices below the [tn] > (2p+1)/c gate have an empty truncation
            // set: their whole mass sits in the remainder part measured below
            const int kmin =
                static_cast<int>(std::floor((2.0 * probe.p() + 1.0) / probe.c())) + 1;
            std::vector<SliceRequest> reqs;
            for (int k = kmin; k <= n; ++k)
                reqs.push_back({static_cast<double>(k) / n, nodes, false, 0, {}});
            if (reqs.empty())
                throw SamplingError("local_time_run: probe gate excludes every slice");
            std::vector<SliceResult> slices = run_density(probe, reqs);
            // direct remainder part: (1/n) sum_k E F_n(X_{k/n}) (1 - witness)
            const int nstar = n_star(probe.entry.spec, probe.decomp);
            std::vector<Accumulator> rem = parallel_blocks<std::vector<Accumulator>>(
                0, probe.scheme.paths, probe.workers,
                std::vector<Accumulator>(static_cast<std::size_t>(n)),
                [&](long i, std::vector<Accumulator>& a) {
                    GridPath path = simulate_path(probe.entry.spec, probe.decomp,
                                                  probe.scheme.x0, n, probe.scheme.seed,
                                                  static_cast<std::uint64_t>(i));
                    for (int k = 1; k <= n; ++k) {
                        const double tk = static_cast<double>(k) / n;
                        const int wit = truncation_witness_gated(path, tk, probe.c(),
                                                                 probe.p(), nstar);
                        a[k - 1].add(wit ? 0.0
                                         : wspec.density(n, path.states[k][0]));
                    }
                },
                [](std::vector<Accumulator>& x, const std::vector<Accumulator>& y) {
                    for (std::size_t i = 0; i < x.size(); ++i) x[i].merge(y[i]);
                });
            for (double tau : taus) {
                LocalTimeResult::CharRow row{};
                row.x = x;
                row.tau = tau;
                row.atom_part = wspec.density(n, x) / n;
                double qpart = 0.0, rpart = 0.0;
                for (int k = 1; k < static_cast<int>(tau * n); ++k) {
                    rpart += rem[k - 1].mean() / n;
                    if (k < kmin) continue;
                    // trapezoid of F_n(y) q_hat(y) over the nodes
                    const auto& ests = slices[k - kmin].density;
                    double integ = 0.0;
                    for (std::size_t j = 1; j < ests.size(); ++j) {
                        const double h = ests[j].y[0] - ests[j - 1].y[0];
                        integ += 0.5 * h *
                                 (ests[j].q_hat * wspec.density(n, ests[j].y[0]) +
                                  ests[j - 1].q_hat * wspec.density(n, ests[j - 1].y[0]));
                    }
                    qpart += integ / n;
                }
                row.q_part = qpart;
                row.r_part = rpart;
                row.f_hat = row.atom_part + qpart + rpart;
                row.f_oracle = characteristic_oracle(wspec, x, tau);
                row.gap = std::abs(row.f_hat - row.f_oracle);
                res.characteristic.push_back(row);
            }
        }
    }
    return res;
}

IidLltResult iid_llt_run(const MixtureDecomposition& decomp, const std::vector<int>& n_ladder,
                         long paths, std::uint64_t seed, int workers,
                         const std::vector<double>& ygrid) {
    IidLltResult res;
    for (int n : n_ladder) {
        RunSetup setup;
        setup.entry = make_iid_model(decomp.dim());
        setup.decomp = decomp;
        setup.scheme.n = n;
        setup.scheme.t = 1.0;
        setup.scheme.x0 = Vec(decomp.dim(), 0.0);
        setup.scheme.paths = paths;
        setup.scheme.seed = seed;
        setup.scheme.c = decomp.alpha < 1.0 ? decomp.alpha / 2.0 : 0.5;
        // desk-scale override of p = 8(d+1); p = 3 keeps the [tn] > (2p+1)/c
        // gate open from n = 16 up (see README)
        setup.scheme.p = 3;
        setup.workers = workers;
        std::vector<Vec> ys;
        for (double y : ygrid) ys.push_back(Vec{y});
        std::vector<SliceRequest> reqs{{1.0, ys, false, 0, {}}};
        auto slices = run_density(setup, reqs);
        SupGapRow row;
        row.n = n;
        for (const auto& de : slices[0].density) {
            const double gap = std::abs(de.q_hat - normal_pdf(de.y[0]));
            row.sup_gap = std::max(row.sup_gap, gap);
            row.max_se = std::max(row.max_se, de.se);
        }
        // grid allowance: max |phi'| x half spacing
        const double h = ygrid.size() > 1 ? ygrid[1] - ygrid[0] : 0.0;
        row.grid_bound = 0.242 * h * 0.5;
        row.remainder_hat = slices[0].remainder.remainder_hat;
        row.remainder_bound = slices[0].remainder.remainder_bound;
        row.rho = slices[0].remainder.rho_used;
        res.rows.push_back(row);
        if (n == n_ladder.back()) res.last_grid = slices[0].density;
    }
    return res;
}

OracleResult gaussian_oracle_run(const RunSetup& setup, const std::vector<double>& t_grid,
                                 double grid_halfwidth_sds, std::size_t points_per_axis) {
    setup.validate();
    if (!setup.entry.oracle)
        throw ContractViolation("gaussian_oracle_run: catalog model with oracle required");
    const std::size_t d = setup.entry.spec.d;
    const Vec a0 = setup.entry.spec.a(setup.scheme.x0);
    const Mat b0 = setup.entry.spec.b(setup.scheme.x0);
    double sd1 = 0.0;  // largest axis standard deviation scale of b0 b0*
    for (std::size_t i = 0; i < d; ++i) {
        double s = 0.0;
        for (std::size_t r = 0; r < d; ++r) s += b0[i * d + r] * b0[i * d + r];
        sd1 = std::max(sd1, std::sqrt(s));
    }

    std::vector<SliceRequest> reqs;
    for (double t : t_grid) {
        const double sd = sd1 * std::sqrt(t);
        std::vector<Vec> ys;
        if (d == 1) {
            for (std::size_t j = 0; j < points_per_axis; ++j) {
                const double u = -grid_halfwidth_sds +
                                 2.0 * grid_halfwidth_sds * j / (points_per_axis - 1);
                ys.push_back(Vec{setup.scheme.x0[0] + a0[0] * t + u * sd});
            }
        } else {
            for (std::size_t j1 = 0; j1 < points_per_axis; ++j1)
                for (std::size_t j2 = 0; j2 < points_per_axis; ++j2) {
                    const double u1 = -grid_halfwidth_sds +
                                      2.0 * grid_halfwidth_sds * j1 / (points_per_axis - 1);
                    const double u2 = -grid_halfwidth_sds +
                                      2.0 * grid_halfwidth_sds * j2 / (points_per_axis - 1);
                    ys.push_back(Vec{setup.scheme.x0[0] + a0[0] * t + u1 * sd,
                                     setup.scheme.x0[1] + a0[1] * t + u2 * sd});
                }
        }
        reqs.push_back({t, ys, false, 0, {}});
    }
    auto slices = run_density(setup, reqs);

    OracleResult res;
    std::vector<double> lx, ly;
    for (std::size_t s = 0; s < slices.size(); ++s) {
        OracleResult::Row row{};
        row.t = slices[s].t;
        Vec center(d);
        for (std::size_t i = 0; i < d; ++i)
            center[i] = setup.scheme.x0[i] + a0[i] * row.t;
        double best = 1e300;
        for (const auto& de : slices[s].density) {
            const double oracle = (*setup.entry.oracle)(row.t, setup.scheme.x0, de.y);
            row.sup_gap = std::max(row.sup_gap, std::abs(de.q_hat - oracle));
            row.max_se = std::max(row.max_se, de.se);
            Vec diff(d);
            for (std::size_t i = 0; i < d; ++i) diff[i] = de.y[i] - center[i];
            if (norm2(diff) < best) {
                best = norm2(diff);
                row.peak_q = de.q_hat;
                row.peak_oracle = oracle;
            }
        }
        res.rows.push_back(row);
        if (row.peak_q > 0.0) {
            lx.push_back(std::log(row.t));
            ly.push_back(std::log(row.peak_q));
        }
    }
    if (lx.size() >= 2) {
        res.peak_fit = linear_fit(lx, ly);
        res.peak_exponent = res.peak_fit.slope;
    }
    return res;
}

DoeblinResult doeblin_overlap(const RunSetup& setup, const Vec& x, const Vec& xprime, double t,
                              const std::vector<double>& ygrid) {
    if (setup.entry.spec.d > 2) throw ContractViolation("doeblin_overlap: d <= 2");
    std::vector<Vec> ys;
    for (double y : ygrid) ys.push_back(Vec{y});

    auto one = [&](const Vec& start, std::uint64_t seed) {
        RunSetup s2 = setup;
        s2.scheme.x0 = start;
        s2.scheme.seed = seed;
        std::vector<SliceRequest> reqs{{t, ys, false, 0, {}}};
        return run_density(s2, reqs)[0];
    };
    const SliceResult ra = one(x, setup.scheme.seed);
    const SliceResult rb = one(xprime, setup.scheme.seed + 1);

    DoeblinResult res;
    double integ = 0.0, err = 0.0;
    for (std::size_t j = 1; j < ys.size(); ++j) {
        const double h = ygrid[j] - ygrid[j - 1];
        const double m1 = std::min(ra.density[j].q_hat, rb.density[j].q_hat);
        const double m0 = std::min(ra.density[j - 1].q_hat, rb.density[j - 1].q_hat);
        integ += 0.5 * h * (m1 + m0);
        err += 0.5 * h *
               (std::max(ra.density[j].se, rb.density[j].se) +
                std::max(ra.density[j - 1].se, rb.density[j - 1].se));
    }
    res.overlap = integ;
    res.se = err;
    // closed-form overlap of N(x, t) and N(x', t) for the unit constant model
    if (setup.entry.spec.d == 1) {
        Vec dxv(1);
        dxv[0] = xprime[0] - x[0];
        const double bb = setup.entry.spec.b(x)[0];
        res.oracle = 2.0 * normal_cdf(-std::abs(dxv[0]) / (2.0 * bb * std::sqrt(t)));
    }
    return res;
}

SmallBallResult small_ball_run(const MixtureDecomposition& decomp, const std::vector<int>& ks,
                               int p, double c, long trials, std::uint64_t seed) {
    SmallBallResult res;
    res.ks = ks;
    const int kmax = *std::max_element(ks.begin(), ks.end());
    std::vector<Accumulator> acc(ks.size());
    Rng rng(seed, 0);
    for (long tr = 0; tr < trials; ++tr) {
        double sum = 0.0;
        long eps_count = 0;
        std::size_t next = 0;
        for (int j = 1; j <= kmax && next < ks.size(); ++j) {
            const NoiseDraw nd = sample_noise(decomp, rng);
            if (nd.eps) {
                const double pv = psi(nd.eta, decomp.ball);
                sum += pv * pv;
                ++eps_count;
            }
            if (j == ks[next]) {
                const bool gate = eps_count >= c * ks[next];
                acc[next].add(gate && sum > 0.0 ? std::pow(sum, -p) : 0.0);
                ++next;
            }
        }
    }
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        res.values.push_back(acc[i].mean());
        lx.push_back(std::log(static_cast<double>(ks[i])));
        ly.push_back(std::log(acc[i].mean()));
    }
    res.slope = linear_fit(lx, ly).slope;
    return res;
}

MomentScalingResult moment_scaling_run(const RunSetup& base, const std::vector<int>& ns,
                                       const std::vector<double>& ts, long paths) {
    MomentScalingResult res;
    double rmin = 1e300, rmax = 0.0;
    std::vector<double> lt, lnd;
    for (int n : ns)
        for (double t : ts) {
            RunSetup setup = base;
            setup.scheme.n = n;
            setup.scheme.paths = paths;
            const int nstar = n_star(setup.entry.spec, setup.decomp);
            // sequential fold: these runs are cheap
            Accumulator dn2;
            NormAccumulator norms(setup.entry.spec.d, 1);
            for (long i = 0; i < paths; ++i) {
                GridPath path = simulate_path(setup.entry.spec, setup.decomp, setup.scheme.x0,
                                              n, setup.scheme.seed,
                                              static_cast<std::uint64_t>(i));
                DerivativeRecord rec =
                    derivative_recursion(path, setup.entry.spec, setup.decomp, t, 1);
                double s = 0.0;
                for (double v : rec.Y) s += v * v;
                dn2.add(s);
                const int wit =
                    truncation_witness_gated(path, t, setup.c(), setup.p(), nstar);
                MalliavinState st = malliavin_matrix(rec, wit);
                norms.add(rec, st);
            }
            MomentScalingResult::Row row{};
            row.n = n;
            row.t = t;
            row.ratio = dn2.mean() / t;
            row.n_d = norms.finish().N_d;
            res.rows.push_back(row);
            rmin = std::min(rmin, row.ratio);
            rmax = std::max(rmax, row.ratio);
            if (n == ns.back()) {
                lt.push_back(std::log(t));
                lnd.push_back(std::log(row.n_d));
            }
        }
    res.ratio_spread = rmax / rmin;
    if (lt.size() >= 2) res.nd_slope = linear_fit(lt, lnd).slope;
    return res;
}

RhoMomentResult rho_moment_run(const RunSetup& base, const std::vector<double>& ts, int p,
                               long paths) {
    RhoMomentResult res;
    res.ts = ts;
    const int nstar = n_star(base.entry.spec, base.decomp);
    for (double t : ts) {
        Accumulator acc;
        for (long i = 0; i < paths; ++i) {
            GridPath path = simulate_path(base.entry.spec, base.decomp, base.scheme.x0,
                                          base.scheme.n, base.scheme.seed,
                                          static_cast<std::uint64_t>(i));
            const int wit = truncation_witness_gated(path, t, base.c(), base.p(), nstar);
            if (!wit) {
                acc.add(0.0);
                continue;
            }
            DerivativeRecord rec =
                derivative_recursion(path, base.entry.spec, base.decomp, t, 1);
            MalliavinState st = malliavin_matrix(rec, wit);
            acc.add(std::pow(st.inv_norm, p));
        }
        res.values.push_back(acc.mean());
    }
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        lx.push_back(std::log(ts[i]));
        ly.push_back(std::log(res.values[i]));
    }
    res.slope = linear_fit(lx, ly).slope;
    return res;
}

}  // namespace truncllt
