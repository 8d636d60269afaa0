#include "truncllt/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "truncllt/parallel.hpp"

namespace truncllt {

void RunSetup::validate() const {
    entry.spec.validate();
    decomp.validate();
    if (entry.spec.d != decomp.dim()) throw ContractViolation("RunSetup: dimension mismatch");
    if (scheme.n < 1) throw ContractViolation("RunSetup: n must be >= 1");
    if (scheme.paths < 1) throw ContractViolation("RunSetup: paths must be >= 1");
    const double cc = c();
    if (!(cc > 0.0 && cc < decomp.alpha))
        throw ContractViolation("RunSetup: c must lie in (0, alpha)");
}

std::vector<int> orthant_select(const std::vector<Vec>& pilot, const Vec& y) {
    const std::size_t d = y.size();
    const std::size_t patterns = 1u << d;
    std::vector<long> counts(patterns, 0);
    for (const auto& f : pilot)
        for (std::size_t pat = 0; pat < patterns; ++pat) {
            bool inside = true;
            for (std::size_t i = 0; i < d && inside; ++i) {
                const double s = (pat >> i) & 1u ? -1.0 : 1.0;
                inside = s * (f[i] - y[i]) >= 0.0;
            }
            counts[pat] += inside;
        }
    std::size_t best = 0;
    for (std::size_t pat = 1; pat < patterns; ++pat)
        if (counts[pat] < counts[best]) best = pat;  // ties keep the lower code
    std::vector<int> alpha(d);
    for (std::size_t i = 0; i < d; ++i) alpha[i] = (best >> i) & 1;
    return alpha;
}

namespace {

struct PathReading {
    Vec f;
    double ups = 0.0;
    Vec upsi;
    int witness = 0;
    int theta = 0;
    double det_sigma = 0.0;
    double inv_norm = 0.0;
};

struct SliceSpec {
    double t;
    int order;
    bool gradient;
};

// everything needed to process one path for a set of time slices
struct Scanner {
    const RunSetup& setup;
    std::vector<SliceSpec> slices;
    int nstar;

    std::vector<PathReading> scan(long path_index) const {
        const auto& spec = setup.entry.spec;
        GridPath path = simulate_path(spec, setup.decomp, setup.scheme.x0, setup.scheme.n,
                                      setup.scheme.seed, static_cast<std::uint64_t>(path_index));
        PathContext ctx = PathContext::from_path(path, setup.decomp);
        std::vector<PathReading> out(slices.size());
        for (std::size_t s = 0; s < slices.size(); ++s) {
            PathReading& r = out[s];
            const double t = slices[s].t;
            r.f = interpolate(path, t);
            r.theta = path.theta;
            r.witness = truncation_witness_gated(path, t, setup.c(), setup.p(), nstar);
            if (!r.witness) {
                r.upsi.assign(spec.d, 0.0);
                continue;
            }
            DerivativeRecord rec =
                derivative_recursion(path, spec, setup.decomp, t, slices[s].order);
            MalliavinState st = malliavin_matrix(rec, r.witness);
            LadderResult lr = weight_ladder(st, rec, ctx, slices[s].gradient);
            r.ups = lr.upsilon;
            r.upsi = lr.upsilon_i ? *lr.upsilon_i : Vec(spec.d, 0.0);
            r.det_sigma = st.det_sigma;
            r.inv_norm = st.inv_norm;
        }
        return out;
    }
};

struct SliceAcc {
    std::vector<Accumulator> per_y;        // signed weighted indicator per y
    std::vector<Accumulator> per_y_grad;
    Accumulator remainder;                 // 1 - witness
    long on_xi = 0;

    void merge(const SliceAcc& o) {
        for (std::size_t i = 0; i < per_y.size(); ++i) per_y[i].merge(o.per_y[i]);
        for (std::size_t i = 0; i < per_y_grad.size(); ++i)
            per_y_grad[i].merge(o.per_y_grad[i]);
        remainder.merge(o.remainder);
        on_xi += o.on_xi;
    }
};

int indicator(const Vec& f, const Vec& y, const std::vector<int>& alpha) {
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double s = alpha[i] ? -1.0 : 1.0;
        if (s * (f[i] - y[i]) < 0.0) return 0;  // boundary counts as inside
    }
    return 1;
}

double remainder_bound_value(const RunSetup& setup, double t, double remainder_hat,
                             double& rho_used, double& fitted_D) {
    const double eps = setup.decomp.eps_kappa();
    const int n = setup.scheme.n;
    double exp_term;
    if (setup.decomp.alpha >= 1.0) {
        rho_used = std::numeric_limits<double>::infinity();
        exp_term = 0.0;
    } else {
        rho_used = bernoulli_tail_bound(setup.decomp.alpha, setup.c(), 1).rho;
        exp_term = std::exp(-rho_used * n * t);
    }
    const double shape = std::pow(static_cast<double>(n), -eps) + exp_term;
    fitted_D = shape > 0.0 ? remainder_hat / shape : 0.0;
    return fitted_D * shape;
}

}  // namespace

std::vector<SliceResult> run_density(const RunSetup& setup,
                                     const std::vector<SliceRequest>& requests) {
    setup.validate();
    const auto& spec = setup.entry.spec;
    const std::size_t d = spec.d;
    if (d > 2) throw ContractViolation("run_density: d <= 2 supported");
    Scanner scanner{setup, {}, n_star(spec, setup.decomp)};
    for (const auto& rq : requests) {
        if (rq.gradient && d != 1)
            throw ContractViolation("run_density: gradient estimates support d = 1 only");
        scanner.slices.push_back(
            {rq.t, static_cast<int>(d) + (rq.gradient ? 2 : 1), rq.gradient});
    }

    const long npaths = setup.scheme.paths;
    const long pilot_n = std::min<long>(npaths, kBlockSize);

    // pilot pass, sequential: fixes the orthant patterns for every (slice, y)
    std::vector<std::vector<PathReading>> pilot;
    pilot.reserve(static_cast<std::size_t>(pilot_n));
    for (long i = 0; i < pilot_n; ++i) pilot.push_back(scanner.scan(i));

    std::vector<std::vector<std::vector<int>>> alphas(requests.size());
    for (std::size_t s = 0; s < requests.size(); ++s) {
        if (!requests[s].fixed_orthant.empty()) {
            if (requests[s].fixed_orthant.size() != d)
                throw ContractViolation("run_density: fixed orthant pattern length != d");
            alphas[s].assign(requests[s].ys.size(), requests[s].fixed_orthant);
            continue;
        }
        std::vector<Vec> pilot_f_xi, pilot_f_all;
        for (const auto& pr : pilot) {
            pilot_f_all.push_back(pr[s].f);
            if (pr[s].witness) pilot_f_xi.push_back(pr[s].f);
        }
        const auto& use = pilot_f_xi.size() >= 100 ? pilot_f_xi : pilot_f_all;
        for (const auto& y : requests[s].ys) alphas[s].push_back(orthant_select(use, y));
    }

    std::vector<SliceAcc> base(requests.size());
    for (std::size_t s = 0; s < requests.size(); ++s) {
        base[s].per_y.resize(requests[s].ys.size());
        if (requests[s].gradient) base[s].per_y_grad.resize(requests[s].ys.size());
    }

    auto accumulate = [&](const std::vector<PathReading>& readings,
                          std::vector<SliceAcc>& acc) {
        for (std::size_t s = 0; s < requests.size(); ++s) {
            const PathReading& r = readings[s];
            acc[s].remainder.add(r.witness ? 0.0 : 1.0);
            acc[s].on_xi += r.witness;
            for (std::size_t yi = 0; yi < requests[s].ys.size(); ++yi) {
                const auto& alpha = alphas[s][yi];
                int signsum = 0;
                for (int a : alpha) signsum += a;
                const int ind =
                    r.witness ? indicator(r.f, requests[s].ys[yi], alpha) : 0;
                const double sgn = (signsum % 2) ? -1.0 : 1.0;
                acc[s].per_y[yi].add(ind ? sgn * r.ups : 0.0);
                if (requests[s].gradient) {
                    const double sg =
                        ((signsum + alpha[requests[s].grad_coord] + 1) % 2) ? -1.0 : 1.0;
                    acc[s].per_y_grad[yi].add(
                        ind ? sg * r.upsi[requests[s].grad_coord] : 0.0);
                }
            }
        }
    };

    // the pilot block is block 0 of the ensemble; re-accumulate its stored
    // readings so every path enters exactly once
    std::vector<SliceAcc> acc0 = base;
    for (const auto& pr : pilot) accumulate(pr, acc0);

    std::vector<SliceAcc> rest = parallel_blocks<std::vector<SliceAcc>>(
        pilot_n, npaths, setup.workers, base,
        [&](long i, std::vector<SliceAcc>& a) { accumulate(scanner.scan(i), a); },
        [&](std::vector<SliceAcc>& into, const std::vector<SliceAcc>& from) {
            for (std::size_t s = 0; s < into.size(); ++s) into[s].merge(from[s]);
        });
    for (std::size_t s = 0; s < acc0.size(); ++s) acc0[s].merge(rest[s]);

    if (!setup.dump_weights_path.empty()) {
        if (npaths > 2'000'000)
            throw ContractViolation("dump-weights: refusing above 2e6 paths");
        std::ofstream out(setup.dump_weights_path);
        out << "path,t,det_sigma,inv_norm,upsilon,theta,witness\n";
        char buf[256];
        for (long i = 0; i < npaths; ++i) {
            const auto readings = scanner.scan(i);
            for (std::size_t s = 0; s < readings.size(); ++s) {
                const auto& r = readings[s];
                std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g,%.17g,%.17g,%d,%d\n", i,
                              requests[s].t, r.det_sigma, r.inv_norm, r.ups, r.theta,
                              r.witness);
                out << buf;
            }
        }
    }

    std::vector<SliceResult> results(requests.size());
    for (std::size_t s = 0; s < requests.size(); ++s) {
        SliceResult& sr = results[s];
        sr.t = requests[s].t;
        sr.n_paths = npaths;
        sr.n_on_xi = acc0[s].on_xi;
        RemainderReport rem;
        rem.remainder_hat = acc0[s].remainder.mean();
        rem.remainder_se = acc0[s].remainder.se();
        rem.eps_kappa = setup.decomp.eps_kappa();
        rem.remainder_bound = remainder_bound_value(setup, requests[s].t, rem.remainder_hat,
                                                    rem.rho_used, rem.fitted_D);
        sr.remainder = rem;
        if (sr.n_on_xi == 0 && !requests[s].ys.empty())
            throw SamplingError("density estimate undefined: zero paths on the truncation set");
        for (std::size_t yi = 0; yi < requests[s].ys.size(); ++yi) {
            DensityEstimate de;
            de.y = requests[s].ys[yi];
            de.q_hat = acc0[s].per_y[yi].mean();
            de.se = acc0[s].per_y[yi].se();
            de.orthant = alphas[s][yi];
            de.n_paths = npaths;
            de.n_on_xi = acc0[s].on_xi;
            de.remainder_hat = rem.remainder_hat;
            de.remainder_bound = rem.remainder_bound;
            sr.density.push_back(std::move(de));
        }
        if (requests[s].gradient)
            for (std::size_t yi = 0; yi < requests[s].ys.size(); ++yi) {
                DensityEstimate de;
                de.y = requests[s].ys[yi];
                de.q_hat = acc0[s].per_y_grad[yi].mean();
                de.se = acc0[s].per_y_grad[yi].se();
                de.orthant = alphas[s][yi];
                de.n_paths = npaths;
                de.n_on_xi = acc0[s].on_xi;
                de.remainder_hat = rem.remainder_hat;
                de.remainder_bound = rem.remainder_bound;
                sr.gradient.push_back(std::move(de));
            }
    }
    return results;
}

RemainderReport remainder_mass(const RunSetup& setup, double t) {
    setup.validate();
    const int nstar = n_star(setup.entry.spec, setup.decomp);
    Accumulator acc = parallel_blocks<Accumulator>(
        0, setup.scheme.paths, setup.workers, Accumulator{},
        [&](long i, Accumulator& a) {
            GridPath path =
                simulate_path(setup.entry.spec, setup.decomp, setup.scheme.x0, setup.scheme.n,
                              setup.scheme.seed, static_cast<std::uint64_t>(i));
            a.add(truncation_witness_gated(path, t, setup.c(), setup.p(), nstar) ? 0.0 : 1.0);
        },
        [](Accumulator& x, const Accumulator& y) { x.merge(y); });
    RemainderReport rem;
    rem.remainder_hat = acc.mean();
    rem.remainder_se = acc.se();
    rem.eps_kappa = setup.decomp.eps_kappa();
    rem.remainder_bound =
        remainder_bound_value(setup, t, rem.remainder_hat, rem.rho_used, rem.fitted_D);
    return rem;
}

TailResult tail_probe(const RunSetup& setup, double t, const std::vector<double>& levels,
                      double fit_lo, double fit_hi) {
    setup.validate();
    for (double l : levels)
        if (l < 0.0) throw ContractViolation("tail_probe: levels must be nonnegative");
    struct Acc {
        std::vector<Accumulator> per_level;
        Accumulator theta;
        void merge(const Acc& o) {
            for (std::size_t i = 0; i < per_level.size(); ++i)
                per_level[i].merge(o.per_level[i]);
            theta.merge(o.theta);
        }
    };
    Acc init;
    init.per_level.resize(levels.size());
    Acc acc = parallel_blocks<Acc>(
        0, setup.scheme.paths, setup.workers, init,
        [&](long i, Acc& a) {
            GridPath path =
                simulate_path(setup.entry.spec, setup.decomp, setup.scheme.x0, setup.scheme.n,
                              setup.scheme.seed, static_cast<std::uint64_t>(i));
            const Vec xt = interpolate(path, t);
            Vec diff(xt.size());
            for (std::size_t k = 0; k < xt.size(); ++k) diff[k] = xt[k] - setup.scheme.x0[k];
            const double r = norm2(diff);
            a.theta.add(path.theta ? 1.0 : 0.0);
            for (std::size_t li = 0; li < levels.size(); ++li)
                a.per_level[li].add((path.theta && r >= levels[li]) ? 1.0 : 0.0);
        },
        [](Acc& x, const Acc& y) { x.merge(y); });
    TailResult res;
    res.p_theta = acc.theta.mean();
    std::vector<double> fx, fy;
    for (std::size_t li = 0; li < levels.size(); ++li) {
        TailRow row{levels[li], acc.per_level[li].mean(), acc.per_level[li].se()};
        res.rows.push_back(row);
        if (row.prob > 0.0 && levels[li] >= fit_lo && levels[li] <= fit_hi) {
            fx.push_back(levels[li] * levels[li] / t);
            fy.push_back(-std::log(row.prob));
        }
    }
    if (fx.size() >= 3) res.gaussian_fit = linear_fit(fx, fy);
    return res;
}

MgfResult mgf_probe(const RunSetup& setup, double t, const std::vector<Vec>& lambdas,
                    double window_factor) {
    setup.validate();
    const double window =
        window_factor *
        std::pow(static_cast<double>(setup.scheme.n), 1.0 / (setup.decomp.kappa + 1.0));
    for (const auto& l : lambdas)
        if (norm2(l) > window + 1e-9)
            throw ContractViolation("mgf_probe: |lambda| outside the configured window");
    struct Acc {
        std::vector<Accumulator> per_lambda;
        std::vector<int> overflow;
        void merge(const Acc& o) {
            for (std::size_t i = 0; i < per_lambda.size(); ++i) {
                per_lambda[i].merge(o.per_lambda[i]);
                overflow[i] |= o.overflow[i];
            }
        }
    };
    Acc init;
    init.per_lambda.resize(lambdas.size());
    init.overflow.assign(lambdas.size(), 0);
    Acc acc = parallel_blocks<Acc>(
        0, setup.scheme.paths, setup.workers, init,
        [&](long i, Acc& a) {
            GridPath path =
                simulate_path(setup.entry.spec, setup.decomp, setup.scheme.x0, setup.scheme.n,
                              setup.scheme.seed, static_cast<std::uint64_t>(i));
            const Vec xt = interpolate(path, t);
            for (std::size_t li = 0; li < lambdas.size(); ++li) {
                double e = 0.0;
                for (std::size_t k = 0; k < xt.size(); ++k)
                    e += lambdas[li][k] * (xt[k] - setup.scheme.x0[k]);
                if (!path.theta) {
                    a.per_lambda[li].add(0.0);
                    continue;
                }
                if (e > 700.0) {
                    a.overflow[li] = 1;
                    a.per_lambda[li].add(0.0);
                    continue;
                }
                a.per_lambda[li].add(std::exp(e));
            }
        },
        [](Acc& x, const Acc& y) { x.merge(y); });
    MgfResult res;
    std::vector<double> fx, fy;
    for (std::size_t li = 0; li < lambdas.size(); ++li) {
        MgfRow row;
        row.lambda = lambdas[li];
        row.value = acc.per_lambda[li].mean();
        row.se = acc.per_lambda[li].se();
        row.overflow = acc.overflow[li] != 0;
        res.rows.push_back(row);
        const double l2 = dot(lambdas[li], lambdas[li]);
        if (!row.overflow && row.value > 0.0 && l2 > 0.0) {
            fx.push_back(l2);
            fy.push_back(std::log(row.value));
        }
    }
    if (fx.size() >= 2) res.quad_coeff = linear_fit(fx, fy).slope;
    return res;
}

double trapezoid_integral(const std::vector<DensityEstimate>& estimates, std::size_t d) {
    if (estimates.size() < 2) return 0.0;
    if (d == 1) {
        double s = 0.0;
        for (std::size_t i = 1; i < estimates.size(); ++i) {
            const double h = estimates[i].y[0] - estimates[i - 1].y[0];
            s += 0.5 * h * (estimates[i].q_hat + estimates[i - 1].q_hat);
        }
        return s;
    }
    if (d == 2) {
        // infer the row-major product grid
        std::size_t cols = 1;
        while (cols < estimates.size() && estimates[cols].y[0] == estimates[0].y[0]) ++cols;
        const std::size_t rows = estimates.size() / cols;
        double s = 0.0;
        for (std::size_t r = 0; r + 1 < rows; ++r)
            for (std::size_t c = 0; c + 1 < cols; ++c) {
                const auto& q00 = estimates[r * cols + c];
                const auto& q01 = estimates[r * cols + c + 1];
                const auto& q10 = estimates[(r + 1) * cols + c];
                const auto& q11 = estimates[(r + 1) * cols + c + 1];
                const double hx = q10.y[0] - q00.y[0];
                const double hy = q01.y[1] - q00.y[1];
                s += 0.25 * hx * hy * (q00.q_hat + q01.q_hat + q10.q_hat + q11.q_hat);
            }
        return s;
    }
    throw ContractViolation("trapezoid_integral: d <= 2");
}

}  // namespace truncllt
