#include "truncllt/check.hpp"

#include <cmath>

namespace truncllt {

GridPath replay_with_eta(const GridPath& path, const ModelSpec& spec,
                         const std::vector<Vec>& eta) {
    GridPath out = path;
    const std::size_t d = spec.d;
    for (int k = 0; k < path.n; ++k) {
        out.noise[k].eta = eta[k];
        for (std::size_t r = 0; r < d; ++r)
            out.noise[k].xi[r] =
                out.noise[k].eps ? eta[k][r] : out.noise[k].zeta[r];
    }
    for (int k = 1; k <= path.n; ++k)
        out.states[k] = euler_step(out.states[k - 1], out.noise[k - 1].xi, spec, path.n);
    return out;
}

namespace {

// scaled per-sample comparison of two elements over all available tensors
double element_gap(const SobolevElement& l, const SobolevElement& r) {
    double scale = 1.0, gap = 0.0;
    auto upd = [&](double a, double b) {
        scale = std::max({scale, std::abs(a), std::abs(b)});
        gap = std::max(gap, std::abs(a - b));
    };
    upd(l.value, r.value);
    const std::size_t m1 = std::min(l.t1.size(), r.t1.size());
    for (std::size_t i = 0; i < m1; ++i) upd(l.t1[i], r.t1[i]);
    const std::size_t m2 = std::min(l.t2.size(), r.t2.size());
    for (std::size_t i = 0; i < m2; ++i) upd(l.t2[i], r.t2[i]);
    return gap / scale;
}

SobolevElement random_element(const PathContext& ctx, Rng& rng, int order) {
    auto coin = [&]() { return 2.0 * rng.uniform() - 1.0; };
    const int k1 = static_cast<int>(rng.uniform() * ctx.n);
    const int k2 = static_cast<int>(rng.uniform() * ctx.n);
    const std::size_t r1 = static_cast<std::size_t>(rng.uniform() * ctx.d);
    const std::size_t r2 = static_cast<std::size_t>(rng.uniform() * ctx.d);
    SobolevElement a = lift_coordinate(ctx, std::min(k1, ctx.n - 1), r1, order);
    SobolevElement b = lift_coordinate(ctx, std::min(k2, ctx.n - 1), r2, order);
    SobolevElement e = shift(scale(a, coin()), coin());
    e = add(e, scale(mul(a, b), coin()));
    e = add(e, scale(lift_psi(ctx, std::min(k2, ctx.n - 1), order), coin()));
    // a smooth non-polynomial layer so the identities are exercised beyond
    // polynomial algebra
    const double v = e.value;
    e = add(e, scale(chain_unary(e, std::sin(v), std::cos(v), -std::sin(v), -std::cos(v)),
                     0.5));
    return e;
}

Family random_family(const PathContext& ctx, Rng& rng, int order) {
    Family g;
    g.reserve(ctx.hdim());
    for (std::size_t b = 0; b < ctx.hdim(); ++b) g.push_back(random_element(ctx, rng, order));
    return g;
}

}  // namespace

IdentityReport run_identity_suite(const RunSetup& setup, int samples_algebraic,
                                  long samples_mc, std::uint64_t seed) {
    IdentityReport rep;
    const ModelSpec& spec = setup.entry.spec;
    const std::size_t d = spec.d;

    // the identities are per-sample algebra; a reduced step count keeps the
    // dense order-3 tensors small without weakening the check
    RunSetup small = setup;
    small.scheme.n = std::min(setup.scheme.n, 6);

    Rng rng(seed, 0);
    for (int s = 0; s < samples_algebraic; ++s) {
        GridPath path = simulate_path(spec, small.decomp, small.scheme.x0, small.scheme.n,
                                      small.scheme.seed + 17, static_cast<std::uint64_t>(s));
        PathContext ctx = PathContext::from_path(path, small.decomp);
        const std::size_t N = ctx.hdim();

        Family g = random_family(ctx, rng, 3);
        SobolevElement f = random_element(ctx, rng, 3);

        {  // I: delta(f g) = f delta(g) - (Df, g)_H
            Family fg;
            fg.reserve(N);
            for (std::size_t b = 0; b < N; ++b) fg.push_back(mul(f, g[b]));
            const SobolevElement lhs = divergence(fg, ctx);
            Family df = derivative_family(f);
            SobolevElement inner = lift_constant(ctx, 0.0, 2);
            for (std::size_t b = 0; b < N; ++b) inner = add(inner, mul(df[b], g[b]));
            const SobolevElement rhs = sub(mul(f, divergence(g, ctx)), inner);
            rep.max_rel_commute_i = std::max(rep.max_rel_commute_i, element_gap(lhs, rhs));
        }
        {  // II: D[delta(g)] = B g + delta([Dg]*) - C(g); C vanishes for d = 1
            const SobolevElement dg = divergence(g, ctx);
            Family lhs = derivative_family(dg);
            Family bg = b_operator(g, ctx);
            Family dstar = divergence_hh(kstar(derivative_family_hh(g), N), ctx);
            Family corr = commutator_correction(g, ctx);
            for (std::size_t a = 0; a < N; ++a) {
                const SobolevElement rhs = sub(add(bg[a], dstar[a]), corr[a]);
                rep.max_rel_commute_ii =
                    std::max(rep.max_rel_commute_ii, element_gap(lhs[a], rhs));
            }
        }
        {  // III: the bilinear variant, with the same block commutator term
            Family g1 = g;
            Family g2 = random_family(ctx, rng, 3);
            Family dd = derivative_family(divergence(g1, ctx));
            SobolevElement lhs = lift_constant(ctx, 0.0, 1);
            for (std::size_t a = 0; a < N; ++a) lhs = add(lhs, mul(dd[a], g2[a]));
            Family bg1 = b_operator(g1, ctx);
            Family corr1 = commutator_correction(g1, ctx);
            SobolevElement rhs = lift_constant(ctx, 0.0, 1);
            for (std::size_t a = 0; a < N; ++a)
                rhs = add(rhs, mul(sub(bg1[a], corr1[a]), g2[a]));
            // K(b) = sum_a D_a(g1_b) g2_a, the direction slot contracted
            FamilyHH dg1 = derivative_family_hh(g1);
            Family K;
            K.reserve(N);
            for (std::size_t b = 0; b < N; ++b) {
                SobolevElement acc = lift_constant(ctx, 0.0, 2);
                for (std::size_t a = 0; a < N; ++a) acc = add(acc, mul(dg1[a * N + b], g2[a]));
                K.push_back(std::move(acc));
            }
            rhs = add(rhs, divergence(K, ctx));
            FamilyHH dg2 = derivative_family_hh(g2);
            SobolevElement frob = lift_constant(ctx, 0.0, 1);
            for (std::size_t a = 0; a < N; ++a)
                for (std::size_t b = 0; b < N; ++b)
                    frob = add(frob, mul(dg1[a * N + b], dg2[b * N + a]));
            rhs = add(rhs, frob);
            rep.max_rel_commute_iii =
                std::max(rep.max_rel_commute_iii, element_gap(lhs, rhs));
        }
        {  // matrix inverse identity: sigma * inverse(sigma) = I
            std::vector<SobolevElement> m;
            for (std::size_t i = 0; i < d * d; ++i) m.push_back(random_element(ctx, rng, 3));
            std::vector<SobolevElement> sigma;
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j) {
                    SobolevElement acc = lift_constant(ctx, i == j ? 0.5 : 0.0, 3);
                    for (std::size_t k = 0; k < d; ++k)
                        acc = add(acc, mul(m[i * d + k], m[j * d + k]));
                    sigma.push_back(std::move(acc));
                }
            const auto rho = inverse_with_derivative(sigma, d, true);
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j) {
                    SobolevElement acc = lift_constant(ctx, i == j ? -1.0 : 0.0, 2);
                    for (std::size_t k = 0; k < d; ++k)
                        acc = add(acc, mul(sigma[i * d + k], rho[k * d + j]));
                    rep.max_rel_inverse = std::max(
                        rep.max_rel_inverse, element_gap(acc, lift_constant(ctx, 0.0, 2)));
                }
        }
    }

    {  // finite differences and ladder cross-check on a few full paths
        for (int s = 0; s < 4; ++s) {
            GridPath path =
                simulate_path(spec, small.decomp, small.scheme.x0, small.scheme.n,
                              small.scheme.seed + 31, static_cast<std::uint64_t>(s));
            PathContext ctx = PathContext::from_path(path, small.decomp);
            auto f = tape_functional(path, spec, ctx, 1.0, 3);
            for (std::size_t i = 0; i < d; ++i) {
                const std::size_t coord = i;
                rep.max_fd_gap = std::max(
                    rep.max_fd_gap,
                    finite_difference_gap(f[i], [&](const PathContext& pc) {
                        GridPath rp = replay_with_eta(path, spec, pc.eta);
                        return interpolate(rp, 1.0)[coord];
                    }));
            }
            // gates are asymptotic bookkeeping; for the per-sample identity the
            // two code paths only need an agreed invertibility flag
            DerivativeRecord rec = derivative_recursion(path, spec, small.decomp, 1.0, 3);
            MalliavinState probe = malliavin_matrix(rec, 0);
            const int wit = (path.theta && probe.det_sigma > 1e-8) ? 1 : 0;
            const auto tl = tape_weight_ladder(f, ctx, wit != 0, d == 1);
            MalliavinState st = malliavin_matrix(rec, wit);
            LadderResult lr = weight_ladder(st, rec, ctx, d == 1);
            const double scl = std::max({1.0, std::abs(lr.upsilon), std::abs(tl.upsilon.value)});
            rep.max_ladder_gap =
                std::max(rep.max_ladder_gap, std::abs(lr.upsilon - tl.upsilon.value) / scl);
            if (d == 1 && lr.upsilon_i) {
                const double scl2 = std::max(
                    {1.0, std::abs((*lr.upsilon_i)[0]), std::abs(tl.upsilon_i[0].value)});
                rep.max_ladder_gap = std::max(
                    rep.max_ladder_gap,
                    std::abs((*lr.upsilon_i)[0] - tl.upsilon_i[0].value) / scl2);
            }
        }
    }

    {  // Monte Carlo duality and integration by parts
        RunSetup tiny = small;
        tiny.scheme.n = std::min(small.scheme.n, 4);
        const std::size_t N = static_cast<std::size_t>(tiny.scheme.n) * d;
        Vec gfield(N), hfield(N);
        Rng crng(seed ^ 0x5bd1e995u, 1);
        for (auto& v : gfield) v = 2.0 * crng.uniform() - 1.0;
        for (auto& v : hfield) v = 2.0 * crng.uniform() - 1.0;
        Accumulator dual_diff, ibp_diff;
        for (long s = 0; s < samples_mc; ++s) {
            GridPath path = simulate_path(spec, tiny.decomp, tiny.scheme.x0, tiny.scheme.n,
                                          tiny.scheme.seed + 47, static_cast<std::uint64_t>(s));
            PathContext ctx = PathContext::from_path(path, tiny.decomp);
            auto xels = tape_functional(path, spec, ctx, 1.0, 1);
            // f = exp(-|X_n(1) - x0|^2 / 2), bounded and smooth in eta
            SobolevElement q = lift_constant(ctx, 0.0, 1);
            for (std::size_t i = 0; i < d; ++i) {
                SobolevElement u = shift(xels[i], -tiny.scheme.x0[i]);
                q = add(q, mul(u, u));
            }
            const double qv = 0.5 * q.value;
            SobolevElement f =
                chain_unary(scale(q, 0.5), std::exp(-qv), -std::exp(-qv), std::exp(-qv),
                            -std::exp(-qv));
            double df_g = 0.0, rho_g = 0.0, df_h = 0.0, rho_h = 0.0;
            for (std::size_t b = 0; b < N; ++b) {
                df_g += f.t1[b] * gfield[b];
                rho_g += ctx.rho[b] * gfield[b];
                df_h += f.t1[b] * hfield[b];
                rho_h += ctx.rho[b] * hfield[b];
            }
            // delta(g) for a deterministic field reduces to -(rho, g)
            dual_diff.add(df_g - f.value * (-rho_g));
            ibp_diff.add(df_h + rho_h * f.value);
        }
        rep.duality_z = std::abs(dual_diff.mean()) / std::max(dual_diff.se(), 1e-300);
        rep.ibp_z = std::abs(ibp_diff.mean()) / std::max(ibp_diff.se(), 1e-300);
    }

    rep.pass = rep.max_rel_commute_i <= 1e-10 && rep.max_rel_commute_ii <= 1e-10 &&
               rep.max_rel_commute_iii <= 1e-10 && rep.max_rel_inverse <= 1e-10 &&
               rep.max_fd_gap <= 1e-4 && rep.max_ladder_gap <= 1e-8 && rep.duality_z <= 3.0 &&
               rep.ibp_z <= 3.0;
    return rep;
}

DerivFdReport derivative_fd_check(const RunSetup& setup, double t, int paths, double h,
                                  double tol) {
    DerivFdReport rep;
    const ModelSpec& spec = setup.entry.spec;
    const std::size_t d = spec.d;
    for (int pi = 0; pi < paths; ++pi) {
        GridPath path = simulate_path(spec, setup.decomp, setup.scheme.x0, setup.scheme.n,
                                      setup.scheme.seed, static_cast<std::uint64_t>(pi));
        PathContext ctx = PathContext::from_path(path, setup.decomp);
        DerivativeRecord rec = derivative_recursion(path, spec, setup.decomp, t, 2);
        auto f = tape_functional(path, spec, ctx, t, 2);
        const std::size_t N = rec.N();

        double scale1 = 1e-12, scale2 = 1e-12;
        for (double v : rec.Y) scale1 = std::max(scale1, std::abs(v));
        for (std::size_t a = 0; a < N; ++a)
            for (std::size_t b = 0; b < N; ++b)
                for (std::size_t i = 0; i < d; ++i)
                    scale2 = std::max(scale2, std::abs(rec.y2(a, b, i)));

        for (std::size_t b = 0; b < N; ++b) {
            const std::size_t k = b / d, r = b % d;
            auto etap = ctx.eta, etam = ctx.eta;
            etap[k][r] += h;
            etam[k][r] -= h;
            const GridPath pp = replay_with_eta(path, spec, etap);
            const GridPath pm = replay_with_eta(path, spec, etam);
            const Vec fp = interpolate(pp, t), fm = interpolate(pm, t);
            for (std::size_t i = 0; i < d; ++i) {
                const double want = ctx.theta * ctx.psi_k[k] * (fp[i] - fm[i]) / (2.0 * h);
                rep.max_rel_y1 =
                    std::max(rep.max_rel_y1, std::abs(rec.y(b, i) - want) / scale1);
                rep.max_rel_tape1 =
                    std::max(rep.max_rel_tape1, std::abs(f[i].t1[b] - want) / scale1);
            }
            // second order: differentiate the first-order recursion itself
            DerivativeRecord rp = derivative_recursion(pp, spec, setup.decomp, t, 1);
            DerivativeRecord rm = derivative_recursion(pm, spec, setup.decomp, t, 1);
            const std::size_t a = b;  // reuse the same perturbation direction index
            (void)a;
            for (std::size_t bb = 0; bb < N; ++bb)
                for (std::size_t i = 0; i < d; ++i) {
                    const double want =
                        ctx.theta * ctx.psi_k[k] * (rp.y(bb, i) - rm.y(bb, i)) / (2.0 * h);
                    rep.max_rel_y2 =
                        std::max(rep.max_rel_y2, std::abs(rec.y2(b, bb, i) - want) / scale2);
                    rep.max_rel_tape2 = std::max(
                        rep.max_rel_tape2,
                        std::abs(f[i].t2[b * N + bb] - want) / scale2);
                }
        }
    }
    rep.pass = rep.max_rel_y1 <= tol && rep.max_rel_y2 <= tol && rep.max_rel_tape1 <= tol &&
               rep.max_rel_tape2 <= tol;
    return rep;
}

}  // namespace truncllt
