#include "truncllt/weights.hpp"

#include <cmath>
#include <cstring>

namespace truncllt {

namespace {

struct StepCoeffs {
    Vec da, d2a, d3a, bmat, db, d2b, d3b;
    Vec xi;
};

// J_{iq} = delta_{iq} + d_q a_i / n + sum_r d_q b_{ir} xi_r / sqrt(n)
Mat one_step_jacobian(const StepCoeffs& sc, std::size_t d, double invn, double invsq) {
    Mat J = identity(d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t q = 0; q < d; ++q) {
            double v = sc.da[i * d + q] * invn;
            for (std::size_t r = 0; r < d; ++r)
                v += sc.db[(i * d + r) * d + q] * sc.xi[r] * invsq;
            J[i * d + q] += v;
        }
    return J;
}

}  // namespace

std::vector<Vec> DerivativeRecord::tensor_norms_by_coord() const {
    std::vector<Vec> out(order, Vec(d, 0.0));
    const std::size_t NN = N();
    for (std::size_t b = 0; b < NN; ++b)
        for (std::size_t i = 0; i < d; ++i) out[0][i] += y(b, i) * y(b, i);
    if (order >= 2)
        for (std::size_t i = 0; i < Y2.size(); ++i) out[1][i % d] += Y2[i] * Y2[i];
    if (order >= 3)
        for (std::size_t i = 0; i < Y3.size(); ++i) out[2][i % d] += Y3[i] * Y3[i];
    for (auto& v : out)
        for (auto& x : v) x = std::sqrt(x);
    return out;
}

namespace {

// Constant-coefficient fast path: every step contributes one closed-form
// block and nothing propagates (J = I).
DerivativeRecord recursion_diag(const GridPath& path, const ModelSpec& spec, double t,
                                int max_order, const BallSpec& ball) {
    const std::size_t d = spec.d;
    const int n = path.n;
    DerivativeRecord rec;
    rec.n = n;
    rec.d = d;
    rec.t = t;
    rec.order = max_order;
    rec.diag = true;
    const std::size_t NN = rec.N();
    rec.Y.assign(NN * d, 0.0);
    if (max_order >= 2) rec.Y2.assign(static_cast<std::size_t>(n) * d * d * d, 0.0);
    if (max_order >= 3) rec.Y3.assign(static_cast<std::size_t>(n) * d * d * d * d, 0.0);

    const double u = t * n;
    const int klo = static_cast<int>(std::floor(u));
    const double frac = u - klo;  // weight of the k_hi block
    const int khi = (frac > 0.0) ? klo + 1 : klo;
    const double invsq = 1.0 / std::sqrt(static_cast<double>(n));
    const double th = path.theta;
    const Mat b0 = spec.b(path.x0);

    for (int k = 1; k <= std::min(khi, n); ++k) {
        const NoiseDraw& nd = path.noise[k - 1];
        if (!nd.eps || !path.theta) continue;
        const double pk = psi(nd.eta, ball);
        const Vec dp = grad_psi(nd.eta, ball);
        const double blockw = (k > klo) ? frac : 1.0;
        const double w = th * blockw * pk * invsq;
        const std::size_t k0 = static_cast<std::size_t>(k - 1);
        for (std::size_t rb = 0; rb < d; ++rb)
            for (std::size_t i = 0; i < d; ++i) rec.Y[(k0 * d + rb) * d + i] = w * b0[i * d + rb];
        if (max_order >= 2)
            for (std::size_t ra = 0; ra < d; ++ra)
                for (std::size_t rb = 0; rb < d; ++rb)
                    for (std::size_t i = 0; i < d; ++i)
                        rec.Y2[((k0 * d + ra) * d + rb) * d + i] =
                            th * w * dp[ra] * b0[i * d + rb];
        if (max_order >= 3)
            for (std::size_t re = 0; re < d; ++re)
                for (std::size_t rc = 0; rc < d; ++rc)
                    for (std::size_t rb = 0; rb < d; ++rb) {
                        const double g = dp[re] * dp[rc] + pk * hess_psi(re, rc);
                        for (std::size_t i = 0; i < d; ++i)
                            rec.Y3[(((k0 * d + re) * d + rc) * d + rb) * d + i] =
                                th * w * g * b0[i * d + rb];
                    }
    }
    return rec;
}

struct DenseState {
    std::vector<double> Y, Y2, Y3;
};

}  // namespace

DerivativeRecord derivative_recursion(const GridPath& path, const ModelSpec& spec,
                                      const MixtureDecomposition& decomp, double t,
                                      int max_order) {
    if (max_order < 1 || max_order > 3)
        throw ContractViolation("derivative_recursion: max_order must be 1..3");
    if (max_order > spec.deriv_order)
        throw ContractViolation("derivative_recursion: model lacks the requested derivatives");
    if (!(t > 0.0 && t <= 1.0)) throw ContractViolation("derivative_recursion: t in (0,1]");
    if (spec.constant_coeffs) return recursion_diag(path, spec, t, max_order, decomp.ball);

    const std::size_t d = spec.d;
    const int n = path.n;
    const std::size_t NN = static_cast<std::size_t>(n) * d;
    const double invn = 1.0 / n;
    const double invsq = 1.0 / std::sqrt(static_cast<double>(n));
    const double th = path.theta;

    const double u = t * n;
    const int klo = static_cast<int>(std::floor(u));
    const double frac = u - klo;
    const int khi = std::min((frac > 0.0) ? klo + 1 : klo, n);

    DenseState cur, nxt, at_klo;
    cur.Y.assign(NN * d, 0.0);
    if (max_order >= 2) cur.Y2.assign(NN * NN * d, 0.0);
    if (max_order >= 3) cur.Y3.assign(NN * NN * NN * d, 0.0);

    for (int k = 1; k <= khi; ++k) {
        const std::size_t k0 = static_cast<std::size_t>(k - 1);
        const Vec& x = path.states[k - 1];
        const NoiseDraw& nd = path.noise[k - 1];
        StepCoeffs sc;
        sc.da = spec.da(x);
        sc.db = spec.db(x);
        if (max_order >= 2) {
            sc.d2a = spec.d2a(x);
            sc.d2b = spec.d2b(x);
        }
        if (max_order >= 3) {
            sc.d3a = spec.d3a(x);
            sc.d3b = spec.d3b(x);
        }
        sc.bmat = spec.b(x);
        sc.xi = nd.xi;
        const Mat J = one_step_jacobian(sc, d, invn, invsq);
        const double pk = psi(nd.eta, decomp.ball);
        const Vec dp = grad_psi(nd.eta, decomp.ball);
        const double w = th * nd.eps * pk * invsq;  // injection weight

        // G2_{ipq} = d_p d_q a_i/n + sum_r d_p d_q b_{ir} xi_r / sqrt(n), same shape one
        // order up for G3
        Vec g2cache(max_order >= 2 ? d * d * d : 0, 0.0);
        Vec g3cache(max_order >= 3 ? d * d * d * d : 0, 0.0);
        for (std::size_t i = 0; max_order >= 2 && i < d; ++i)
            for (std::size_t p = 0; p < d; ++p)
                for (std::size_t q = 0; q < d; ++q) {
                    double v = sc.d2a[(i * d + p) * d + q] * invn;
                    for (std::size_t r = 0; r < d; ++r)
                        v += sc.d2b[((i * d + r) * d + p) * d + q] * sc.xi[r] * invsq;
                    g2cache[(i * d + p) * d + q] = v;
                }
        for (std::size_t i = 0; max_order >= 3 && i < d; ++i)
            for (std::size_t p1 = 0; p1 < d; ++p1)
                for (std::size_t p2 = 0; p2 < d; ++p2)
                    for (std::size_t q = 0; q < d; ++q) {
                        double v = sc.d3a[((i * d + p1) * d + p2) * d + q] * invn;
                        for (std::size_t r = 0; r < d; ++r)
                            v += sc.d3b[(((i * d + r) * d + p1) * d + p2) * d + q] * sc.xi[r] *
                                 invsq;
                        g3cache[((i * d + p1) * d + p2) * d + q] = v;
                    }
        auto G2 = [&](std::size_t i, std::size_t p, std::size_t q) {
            return g2cache[(i * d + p) * d + q];
        };
        auto G3 = [&](std::size_t i, std::size_t p1, std::size_t p2, std::size_t q) {
            return g3cache[((i * d + p1) * d + p2) * d + q];
        };
        auto oldY = [&](std::size_t b, std::size_t i) { return cur.Y[b * d + i]; };
        auto oldY2 = [&](std::size_t a, std::size_t b, std::size_t i) {
            return cur.Y2[(a * NN + b) * d + i];
        };

        const std::size_t top = k0 * d;  // H-indices < top are "old"
        nxt = cur;

        // first order
        for (std::size_t b = 0; b < top; ++b)
            for (std::size_t i = 0; i < d; ++i) {
                double v = 0.0;
                for (std::size_t q = 0; q < d; ++q) v += J[i * d + q] * oldY(b, q);
                nxt.Y[b * d + i] = v;
            }
        for (std::size_t rb = 0; rb < d; ++rb)
            for (std::size_t i = 0; i < d; ++i)
                nxt.Y[(top + rb) * d + i] = w * sc.bmat[i * d + rb];

        // second order
        if (max_order >= 2) {
            // dJ(a)_{iq} = sum_p G2_{ipq} Y[a]_p, cached per old direction a
            std::vector<double> dJ(top * d * d, 0.0);
            for (std::size_t a = 0; a < top; ++a)
                for (std::size_t i = 0; i < d; ++i)
                    for (std::size_t q = 0; q < d; ++q) {
                        double v = 0.0;
                        for (std::size_t p = 0; p < d; ++p) v += G2(i, p, q) * oldY(a, p);
                        dJ[(a * d + i) * d + q] = v;
                    }
            for (std::size_t a = 0; a < top; ++a)
                for (std::size_t b = 0; b < top; ++b)
                    for (std::size_t i = 0; i < d; ++i) {
                        double v = 0.0;
                        for (std::size_t q = 0; q < d; ++q)
                            v += J[i * d + q] * oldY2(a, b, q) +
                                 dJ[(a * d + i) * d + q] * oldY(b, q);
                        nxt.Y2[(a * NN + b) * d + i] = v;
                    }
            for (std::size_t ra = 0; ra < d; ++ra) {
                const std::size_t a = top + ra;
                for (std::size_t b = 0; b < top; ++b)
                    for (std::size_t i = 0; i < d; ++i) {
                        double v = 0.0;
                        for (std::size_t q = 0; q < d; ++q)
                            v += sc.db[(i * d + ra) * d + q] * oldY(b, q);
                        nxt.Y2[(a * NN + b) * d + i] = w * v;
                    }
                for (std::size_t b = 0; b < top; ++b)
                    for (std::size_t i = 0; i < d; ++i) {
                        double v = 0.0;
                        for (std::size_t q = 0; q < d; ++q)
                            v += sc.db[(i * d + ra) * d + q] * oldY(b, q);
                        nxt.Y2[(b * NN + a) * d + i] = w * v;
                    }
                for (std::size_t rb = 0; rb < d; ++rb)
                    for (std::size_t i = 0; i < d; ++i)
                        nxt.Y2[(a * NN + top + rb) * d + i] =
                            th * w * dp[ra] * sc.bmat[i * d + rb];
            }
        }

        // third order
        if (max_order >= 3) {
            auto oldY3 = [&](std::size_t e, std::size_t c, std::size_t b, std::size_t i) {
                return cur.Y3[((e * NN + c) * NN + b) * d + i];
            };
            auto db_dot = [&](std::size_t rr, std::size_t b, std::size_t i) {
                double v = 0.0;
                for (std::size_t q = 0; q < d; ++q)
                    v += sc.db[(i * d + rr) * d + q] * oldY(b, q);
                return v;
            };
            auto db_dot2 = [&](std::size_t rr, std::size_t a, std::size_t b, std::size_t i) {
                double v = 0.0;
                for (std::size_t q = 0; q < d; ++q)
                    v += sc.db[(i * d + rr) * d + q] * oldY2(a, b, q);
                return v;
            };
            auto d2b_bilin = [&](std::size_t rr, std::size_t a, std::size_t b, std::size_t i) {
                double v = 0.0;
                for (std::size_t p = 0; p < d; ++p)
                    for (std::size_t q = 0; q < d; ++q)
                        v += sc.d2b[((i * d + rr) * d + p) * d + q] * oldY(a, p) * oldY(b, q);
                return v;
            };
            // propagation, all three directions old
            for (std::size_t e = 0; e < top; ++e)
                for (std::size_t c = 0; c < top; ++c)
                    for (std::size_t b = 0; b < top; ++b)
                        for (std::size_t i = 0; i < d; ++i) {
                            double v = 0.0;
                            for (std::size_t q = 0; q < d; ++q) {
                                // d2J(e,c)_{iq}
                                double d2j = 0.0;
                                for (std::size_t p1 = 0; p1 < d; ++p1) {
                                    for (std::size_t p2 = 0; p2 < d; ++p2)
                                        d2j += G3(i, p1, p2, q) * oldY(e, p1) * oldY(c, p2);
                                    d2j += G2(i, p1, q) * oldY2(e, c, p1);
                                }
                                double dj_c = 0.0, dj_e = 0.0;
                                for (std::size_t p = 0; p < d; ++p) {
                                    dj_c += G2(i, p, q) * oldY(c, p);
                                    dj_e += G2(i, p, q) * oldY(e, p);
                                }
                                v += d2j * oldY(b, q) + dj_c * oldY2(e, b, q) +
                                     dj_e * oldY2(c, b, q) + J[i * d + q] * oldY3(e, c, b, q);
                            }
                            nxt.Y3[((e * NN + c) * NN + b) * d + i] = v;
                        }
            // creation cases: at least one direction lives in the new block
            for (std::size_t re = 0; re < d; ++re) {
                const std::size_t ne = top + re;
                for (std::size_t c = 0; c < top; ++c)
                    for (std::size_t b = 0; b < top; ++b)
                        for (std::size_t i = 0; i < d; ++i)
                            nxt.Y3[((ne * NN + c) * NN + b) * d + i] =
                                w * (d2b_bilin(re, c, b, i) + db_dot2(re, c, b, i));
                for (std::size_t c = 0; c < top; ++c)
                    for (std::size_t b = 0; b < top; ++b)
                        for (std::size_t i = 0; i < d; ++i) {
                            nxt.Y3[((c * NN + ne) * NN + b) * d + i] =
                                w * (d2b_bilin(re, c, b, i) + db_dot2(re, c, b, i));
                            nxt.Y3[((c * NN + b) * NN + ne) * d + i] =
                                w * (d2b_bilin(re, c, b, i) + db_dot2(re, c, b, i));
                        }
                for (std::size_t rc = 0; rc < d; ++rc) {
                    const std::size_t nc = top + rc;
                    for (std::size_t b = 0; b < top; ++b)
                        for (std::size_t i = 0; i < d; ++i) {
                            // two new directions, one old component direction
                            nxt.Y3[((ne * NN + nc) * NN + b) * d + i] =
                                th * w * dp[re] * db_dot(rc, b, i);
                            nxt.Y3[((ne * NN + b) * NN + nc) * d + i] =
                                th * w * dp[re] * db_dot(rc, b, i);
                            nxt.Y3[((b * NN + ne) * NN + nc) * d + i] =
                                th * w * dp[re] * db_dot(rc, b, i);
                        }
                    for (std::size_t rb = 0; rb < d; ++rb) {
                        const double g = dp[re] * dp[rc] + pk * hess_psi(re, rc);
                        for (std::size_t i = 0; i < d; ++i)
                            nxt.Y3[((ne * NN + nc) * NN + top + rb) * d + i] =
                                th * w * g * sc.bmat[i * d + rb];
                    }
                }
            }
        }

        if (k == klo && frac > 0.0) at_klo = nxt;
        cur = std::move(nxt);
    }

    DerivativeRecord rec;
    rec.n = n;
    rec.d = d;
    rec.t = t;
    rec.order = max_order;
    rec.diag = false;
    if (frac > 0.0 && khi > klo) {
        // linear interpolation of the derivative arrays between grid knots
        auto blend = [&](const std::vector<double>& lo, const std::vector<double>& hi) {
            std::vector<double> out(hi.size());
            for (std::size_t i = 0; i < hi.size(); ++i)
                out[i] = lo.empty() ? frac * hi[i] : (1.0 - frac) * lo[i] + frac * hi[i];
            return out;
        };
        if (klo == 0) at_klo = DenseState{std::vector<double>(cur.Y.size(), 0.0),
                                          std::vector<double>(cur.Y2.size(), 0.0),
                                          std::vector<double>(cur.Y3.size(), 0.0)};
        rec.Y = blend(at_klo.Y, cur.Y);
        rec.Y2 = blend(at_klo.Y2, cur.Y2);
        rec.Y3 = blend(at_klo.Y3, cur.Y3);
    } else {
        rec.Y = std::move(cur.Y);
        rec.Y2 = std::move(cur.Y2);
        rec.Y3 = std::move(cur.Y3);
    }
    return rec;
}

ExponentFamily stochastic_exponent(const GridPath& path, const ModelSpec& spec, double t,
                                   const MixtureDecomposition& decomp, bool need_inverse) {
    const std::size_t d = spec.d;
    const int n = path.n;
    const int k = static_cast<int>(t * n);
    const double invn = 1.0 / n;
    const double invsq = 1.0 / std::sqrt(static_cast<double>(n));
    const double thr = decomp.theta_threshold(n);

    ExponentFamily fam;
    fam.k = k;
    fam.d = d;
    fam.plain.assign(k + 1, Mat());
    fam.tilde.assign(k + 1, Mat());
    fam.plain[k] = identity(d);
    fam.tilde[k] = identity(d);
    if (need_inverse) {
        fam.tilde_inv.assign(k + 1, Mat());
        fam.tilde_inv[k] = identity(d);
    }
    const int nstar = n_star(spec, decomp);
    for (int j = k; j >= 1; --j) {
        const Vec& x = path.states[j - 1];
        const NoiseDraw& nd = path.noise[j - 1];
        const Vec da = spec.da(x);
        const Vec db = spec.db(x);
        const bool keep = norm2(nd.zeta) <= thr;
        Mat A(d * d, 0.0), At(d * d, 0.0);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t q = 0; q < d; ++q) {
                double v = da[i * d + q] * invn;
                double vt = v;
                for (std::size_t r = 0; r < d; ++r) {
                    const double term = db[(i * d + r) * d + q] * nd.xi[r] * invsq;
                    v += term;
                    if (keep) vt += term;
                }
                A[i * d + q] = v;
                At[i * d + q] = vt;
            }
        Mat stepP = identity(d), stepT = identity(d);
        for (std::size_t i = 0; i < d * d; ++i) {
            stepP[i] += A[i];
            stepT[i] += At[i];
        }
        fam.plain[j - 1] = matmul(fam.plain[j], stepP, d);
        fam.tilde[j - 1] = matmul(fam.tilde[j], stepT, d);
        if (need_inverse) {
            if (path.theta && n >= nstar && op_norm(At, d) > 0.5)
                throw ContractViolation(
                    "stochastic_exponent: censored factor farther than 1/2 from identity "
                    "with theta = 1 and n >= n_star");
            fam.tilde_inv[j - 1] = matmul(inverse(stepT, d), fam.tilde_inv[j], d);
        }
    }
    if (need_inverse)
        for (const auto& m : fam.tilde_inv) fam.max_inv_norm = std::max(fam.max_inv_norm, op_norm(m, d));
    return fam;
}

Mat exponent_between(const GridPath& path, const ModelSpec& spec, int i, int j, bool tilde,
                     const MixtureDecomposition& decomp) {
    const std::size_t d = spec.d;
    const int n = path.n;
    const double invn = 1.0 / n;
    const double invsq = 1.0 / std::sqrt(static_cast<double>(n));
    const double thr = decomp.theta_threshold(n);
    Mat e = identity(d);
    for (int l = i + 1; l <= j; ++l) {
        const Vec& x = path.states[l - 1];
        const NoiseDraw& nd = path.noise[l - 1];
        const Vec da = spec.da(x);
        const Vec db = spec.db(x);
        const bool keep = !tilde || norm2(nd.zeta) <= thr;
        Mat step = identity(d);
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t q = 0; q < d; ++q) {
                double v = da[a * d + q] * invn;
                if (keep)
                    for (std::size_t r = 0; r < d; ++r)
                        v += db[(a * d + r) * d + q] * nd.xi[r] * invsq;
                else
                    v = da[a * d + q] * invn;
                step[a * d + q] += v;
            }
        e = matmul(step, e, d);
    }
    return e;
}

MalliavinState malliavin_matrix(const DerivativeRecord& rec, int witness) {
    const std::size_t d = rec.d;
    const std::size_t NN = rec.N();
    MalliavinState st;
    st.d = d;
    st.diag = rec.diag;
    st.sigma.assign(d * d, 0.0);
    for (std::size_t b = 0; b < NN; ++b)
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) st.sigma[i * d + j] += rec.y(b, i) * rec.y(b, j);

    if (rec.order >= 2) {
        st.dsigma.assign(NN, Mat(d * d, 0.0));
        for (std::size_t a = 0; a < NN; ++a) {
            Mat& m = st.dsigma[a];
            if (rec.diag) {
                const std::size_t k = a / d;
                for (std::size_t rb = 0; rb < d; ++rb) {
                    const std::size_t b = k * d + rb;
                    for (std::size_t i = 0; i < d; ++i)
                        for (std::size_t j = 0; j < d; ++j)
                            m[i * d + j] += rec.y2(a, b, i) * rec.y(b, j) +
                                            rec.y(b, i) * rec.y2(a, b, j);
                }
            } else {
                for (std::size_t b = 0; b < NN; ++b)
                    for (std::size_t i = 0; i < d; ++i)
                        for (std::size_t j = 0; j < d; ++j)
                            m[i * d + j] += rec.y2(a, b, i) * rec.y(b, j) +
                                            rec.y(b, i) * rec.y2(a, b, j);
            }
        }
    }
    if (rec.order >= 3) {
        auto fill = [&](std::size_t c, std::size_t a, Mat& m) {
            if (rec.diag) {
                const std::size_t k = c / d;
                for (std::size_t rb = 0; rb < d; ++rb) {
                    const std::size_t b = k * d + rb;
                    for (std::size_t i = 0; i < d; ++i)
                        for (std::size_t j = 0; j < d; ++j)
                            m[i * d + j] += rec.y3(c, a, b, i) * rec.y(b, j) +
                                            rec.y2(a, b, i) * rec.y2(c, b, j) +
                                            rec.y2(c, b, i) * rec.y2(a, b, j) +
                                            rec.y(b, i) * rec.y3(c, a, b, j);
                }
            } else {
                for (std::size_t b = 0; b < NN; ++b)
                    for (std::size_t i = 0; i < d; ++i)
                        for (std::size_t j = 0; j < d; ++j)
                            m[i * d + j] += rec.y3(c, a, b, i) * rec.y(b, j) +
                                            rec.y2(a, b, i) * rec.y2(c, b, j) +
                                            rec.y2(c, b, i) * rec.y2(a, b, j) +
                                            rec.y(b, i) * rec.y3(c, a, b, j);
            }
        };
        if (rec.diag) {
            st.d2sigma.assign(static_cast<std::size_t>(rec.n) * d * d, Mat(d * d, 0.0));
            for (std::size_t k = 0; k < static_cast<std::size_t>(rec.n); ++k)
                for (std::size_t rc = 0; rc < d; ++rc)
                    for (std::size_t ra = 0; ra < d; ++ra)
                        fill(k * d + rc, k * d + ra, st.d2sigma[(k * d + rc) * d + ra]);
        } else {
            st.d2sigma.assign(NN * NN, Mat(d * d, 0.0));
            for (std::size_t c = 0; c < NN; ++c)
                for (std::size_t a = 0; a < NN; ++a) fill(c, a, st.d2sigma[c * NN + a]);
        }
    }

    st.det_sigma = det(st.sigma, d);
    st.on_xi = witness != 0;
    if (st.on_xi) {
        if (st.det_sigma <= 0.0)
            throw ContractViolation(
                "malliavin_matrix: singular sigma on the truncation set (witness bug)");
        st.rho_inv = inverse(st.sigma, d);
        st.inv_norm = max_abs(st.rho_inv);
    } else {
        st.rho_inv.assign(d * d, 0.0);
        st.inv_norm = 0.0;
    }
    return st;
}

Mat malliavin_matrix_from_exponent(const GridPath& path, const ModelSpec& spec,
                                   const MixtureDecomposition& decomp, double t) {
    const std::size_t d = spec.d;
    const int n = path.n;
    const int k = static_cast<int>(t * n);
    ExponentFamily fam = stochastic_exponent(path, spec, t, decomp, false);
    Mat sigma(d * d, 0.0);
    if (!path.theta) return sigma;
    for (int j = 1; j <= k; ++j) {
        const NoiseDraw& nd = path.noise[j - 1];
        if (!nd.eps) continue;
        const double p = psi(nd.eta, decomp.ball);
        const Mat bm = spec.b(path.states[j - 1]);
        Mat bbt(d * d, 0.0);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t jj = 0; jj < d; ++jj) {
                double s = 0.0;
                for (std::size_t r = 0; r < d; ++r) s += bm[i * d + r] * bm[jj * d + r];
                bbt[i * d + jj] = s;
            }
        const Mat m = matmul(matmul(fam.plain[j], bbt, d), transpose(fam.plain[j], d), d);
        const double w = p * p / n;
        for (std::size_t i = 0; i < d * d; ++i) sigma[i] += w * m[i];
    }
    return sigma;
}

namespace {

// shared second-rung evaluation: given ups = delta(theta_{lprev} ladder
// element) it returns delta(ups * theta_{lnext})
double second_rung(const MalliavinState& st, const DerivativeRecord& rec,
                   const PathContext& ctx, double ups, std::size_t lprev, std::size_t lnext) {
    const std::size_t d = rec.d;
    const std::size_t NN = rec.N();
    const Mat& rho_inv = st.rho_inv;

    Vec vprev(d), vnext(d);
    for (std::size_t i = 0; i < d; ++i) {
        vprev[i] = rho_inv[i * d + lprev];
        vnext[i] = rho_inv[i * d + lnext];
    }
    // M[a] = rho_inv * Dsigma[a]; q[b] = M[b] vprev; s = sum_b M[b]^T Y[b];
    // P1_{ij} = sum_b Y[b]_i q[b]_j; S2 = sum_b Y2[b,b]; w = sum_b rho_b Y[b]
    std::vector<Mat> M(NN);
    for (std::size_t a = 0; a < NN; ++a) M[a] = matmul(rho_inv, st.dsigma[a], d);
    std::vector<Vec> q(NN, Vec(d, 0.0));
    Vec s(d, 0.0), S2(d, 0.0), wv(d, 0.0);
    Mat P1(d * d, 0.0);
    std::vector<Vec> Yb(NN, Vec(d));
    for (std::size_t b = 0; b < NN; ++b) {
        for (std::size_t i = 0; i < d; ++i) Yb[b][i] = rec.y(b, i);
        q[b] = matvec(M[b], vprev);
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                s[i] += M[b][j * d + i] * Yb[b][j];
                P1[i * d + j] += Yb[b][i] * q[b][j];
            }
            S2[i] += rec.y2(b, b, i);
            wv[i] += ctx.rho[b] * Yb[b][i];
        }
    }

    // theta_l[b] scalars
    auto theta_at = [&](const Vec& col, std::size_t b) { return dot(col, Yb[b]); };

    // T1 ups[a]
    Vec t1ups(NN, 0.0);
    for (std::size_t a = 0; a < NN; ++a) {
        const std::size_t ka = a / d, ra = a % d;
        double A = 0.0;
        for (std::size_t rb = 0; rb < d; ++rb) {
            const double drho = ctx.theta * ctx.psi_k[ka] * hess_psi(ra, rb);
            if (drho != 0.0) A += drho * theta_at(vprev, ka * d + rb);
        }
        const Vec Mavp = matvec(M[a], vprev);
        // B = (Drho_inv[a] e_l) . w + v_l . (sum_b rho_b Y2[a,b])
        double B = -dot(Mavp, wv);
        if (rec.diag) {
            for (std::size_t rb = 0; rb < d; ++rb) {
                const std::size_t b = ka * d + rb;
                double dotv = 0.0;
                for (std::size_t i = 0; i < d; ++i) dotv += vprev[i] * rec.y2(a, b, i);
                B += ctx.rho[b] * dotv;
            }
        } else {
            for (std::size_t b = 0; b < NN; ++b) {
                double dotv = 0.0;
                for (std::size_t i = 0; i < d; ++i) dotv += vprev[i] * rec.y2(a, b, i);
                B += ctx.rho[b] * dotv;
            }
        }
        // C1a = <M[a], P1>, C1b = s . (M[a] vprev)
        double C1 = 0.0;
        for (std::size_t i = 0; i < d * d; ++i) C1 += M[a][i] * P1[i];
        C1 += dot(s, Mavp);
        // C1c = -sum_b G[b]^T D2sigma[a,b] vprev, G[b] = rho_inv Y[b]
        double C1c = 0.0;
        auto c1c_term = [&](std::size_t b) {
            const Mat& d2 = st.d2s(a, b, rec.n, d);
            const Vec g = matvec(rho_inv, Yb[b]);
            double v = 0.0;
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j) v += g[i] * d2[i * d + j] * vprev[j];
            return v;
        };
        if (rec.diag) {
            for (std::size_t rb = 0; rb < d; ++rb) C1c -= c1c_term(ka * d + rb);
        } else {
            for (std::size_t b = 0; b < NN; ++b) C1c -= c1c_term(b);
        }
        // C2 = -sum_b q[b] . Y2[a,b]
        double C2 = 0.0;
        if (rec.diag) {
            for (std::size_t rb = 0; rb < d; ++rb) {
                const std::size_t b = ka * d + rb;
                for (std::size_t i = 0; i < d; ++i) C2 -= q[b][i] * rec.y2(a, b, i);
            }
        } else {
            for (std::size_t b = 0; b < NN; ++b)
                for (std::size_t i = 0; i < d; ++i) C2 -= q[b][i] * rec.y2(a, b, i);
        }
        // C3 = (Drho_inv[a] vprev-col) . S2
        const double C3 = -dot(Mavp, S2);
        // C4 = vprev . sum_b Y3[a,b,b]
        double C4 = 0.0;
        auto c4_term = [&](std::size_t b) {
            for (std::size_t i = 0; i < d; ++i) C4 += vprev[i] * rec.y3(a, b, b, i);
        };
        if (rec.diag) {
            for (std::size_t rb = 0; rb < d; ++rb) c4_term(ka * d + rb);
        } else {
            for (std::size_t b = 0; b < NN; ++b) c4_term(b);
        }
        t1ups[a] = -(A + B + C1 + C1c + C2 + C3 + C4);
    }

    // delta(ups * theta_{lnext})
    double out = 0.0;
    for (std::size_t b = 0; b < NN; ++b) {
        const double th_b = theta_at(vnext, b);
        const Vec Mbvn = matvec(M[b], vnext);
        double t1th_bb = -dot(Mbvn, Yb[b]);
        for (std::size_t i = 0; i < d; ++i) t1th_bb += vnext[i] * rec.y2(b, b, i);
        out += (ctx.rho[b] * ups + t1ups[b]) * th_b + ups * t1th_bb;
    }
    return -out;
}

}  // namespace

LadderResult weight_ladder(const MalliavinState& st, const DerivativeRecord& rec,
                           const PathContext& ctx, bool want_gradient) {
    LadderResult res;
    if (!st.on_xi) {
        res.upsilon = 0.0;  // rho_inv vanishes off the truncation set
        if (want_gradient) res.upsilon_i = Vec(rec.d, 0.0);
        return res;
    }
    const std::size_t d = rec.d;
    if (d > 2) throw ContractViolation("weight_ladder: density weights support d <= 2");
    if (rec.order < static_cast<int>(d) + 1)
        throw ContractViolation("weight_ladder: record order too low for the density weight");
    if (want_gradient && (d != 1 || rec.order < 3))
        throw ContractViolation("weight_ladder: gradient weights support d = 1, order 3");
    const std::size_t NN = rec.N();

    // first rung: ups_2 = delta(theta_1)
    Vec v1(d);
    for (std::size_t i = 0; i < d; ++i) v1[i] = st.rho_inv[i * d + 0];
    double ups2 = 0.0;
    for (std::size_t b = 0; b < NN; ++b) {
        Vec yb(d);
        for (std::size_t i = 0; i < d; ++i) yb[i] = rec.y(b, i);
        const double th_b = dot(v1, yb);
        // T1 theta_1 [b,b] = (Drho_inv[b] e_1) . Y[b] + v1 . Y2[b,b]
        const Mat Mb = matmul(st.rho_inv, st.dsigma[b], d);
        double t1 = -dot(matvec(Mb, v1), yb);
        for (std::size_t i = 0; i < d; ++i) t1 += v1[i] * rec.y2(b, b, i);
        ups2 += ctx.rho[b] * th_b + t1;
    }
    ups2 = -ups2;

    if (d == 1) {
        res.upsilon = ups2;
        if (want_gradient) {
            res.upsilon_i = Vec(1);
            (*res.upsilon_i)[0] = second_rung(st, rec, ctx, ups2, 0, 0);
        }
        return res;
    }
    // d == 2: Upsilon = delta(ups_2 * theta_2)
    res.upsilon = second_rung(st, rec, ctx, ups2, 0, 1);
    return res;
}

std::vector<SobolevElement> tape_functional(const GridPath& path, const ModelSpec& spec,
                                            const PathContext& ctx, double t, int order) {
    const std::size_t d = spec.d;
    const int n = path.n;
    const double invn = 1.0 / n;
    const double invsq = 1.0 / std::sqrt(static_cast<double>(n));
    const double u = t * n;
    const int klo = static_cast<int>(std::floor(u));
    const double frac = u - klo;
    const int khi = std::min((frac > 0.0) ? klo + 1 : klo, n);

    // multivariate chain for one scalar coefficient entry
    auto chain_coeff = [&](const std::vector<SobolevElement>& args, double F, const Vec& g1,
                           const Vec& g2, const Vec& g3) {
        SobolevElement e = lift_constant(ctx, 0.0, order);
        const std::size_t N = ctx.hdim();
        e.value = F;
        if (order >= 1)
            for (std::size_t a = 0; a < N; ++a) {
                double v = 0.0;
                for (std::size_t j = 0; j < d; ++j) v += g1[j] * args[j].t1[a];
                e.t1[a] = v;
            }
        if (order >= 2)
            for (std::size_t c = 0; c < N; ++c)
                for (std::size_t a = 0; a < N; ++a) {
                    double v = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        for (std::size_t l = 0; l < d; ++l)
                            v += g2[l * d + j] * args[l].t1[c] * args[j].t1[a];
                        v += g1[j] * args[j].t2[c * N + a];
                    }
                    e.t2[c * N + a] = v;
                }
        if (order >= 3)
            for (std::size_t x = 0; x < N; ++x)
                for (std::size_t c = 0; c < N; ++c)
                    for (std::size_t a = 0; a < N; ++a) {
                        double v = 0.0;
                        for (std::size_t j = 0; j < d; ++j) {
                            for (std::size_t l = 0; l < d; ++l) {
                                for (std::size_t p = 0; p < d; ++p)
                                    v += g3[(p * d + l) * d + j] * args[p].t1[x] *
                                         args[l].t1[c] * args[j].t1[a];
                                v += g2[l * d + j] * (args[l].t2[x * N + c] * args[j].t1[a] +
                                                      args[l].t1[c] * args[j].t2[x * N + a] +
                                                      args[l].t1[x] * args[j].t2[c * N + a]);
                            }
                            v += g1[j] * args[j].t3[(x * N + c) * N + a];
                        }
                        e.t3[(x * N + c) * N + a] = v;
                    }
        return e;
    };

    std::vector<SobolevElement> x;
    x.reserve(d);
    for (std::size_t i = 0; i < d; ++i) x.push_back(lift_constant(ctx, path.x0[i], order));
    std::vector<SobolevElement> prev = x;

    for (int k = 1; k <= khi; ++k) {
        prev = x;
        const NoiseDraw& nd = path.noise[k - 1];
        Vec xv(d);
        for (std::size_t i = 0; i < d; ++i) xv[i] = x[i].value;
        const Vec av = spec.a(xv);
        const Vec da = spec.da(xv);
        const Vec d2a = order >= 2 ? spec.d2a(xv) : Vec(d * d * d, 0.0);
        const Vec d3a = order >= 3 ? spec.d3a(xv) : Vec(d * d * d * d, 0.0);
        const Mat bm = spec.b(xv);
        const Vec db = spec.db(xv);
        const Vec d2b = order >= 2 ? spec.d2b(xv) : Vec(d * d * d * d, 0.0);
        const Vec d3b = order >= 3 ? spec.d3b(xv) : Vec(d * d * d * d * d, 0.0);

        std::vector<SobolevElement> xi_el;
        xi_el.reserve(d);
        for (std::size_t r = 0; r < d; ++r)
            xi_el.push_back(nd.eps ? lift_coordinate(ctx, k - 1, r, order)
                                   : lift_constant(ctx, nd.zeta[r], order));

        std::vector<SobolevElement> xn;
        xn.reserve(d);
        for (std::size_t i = 0; i < d; ++i) {
            Vec g1(d), g2(d * d), g3(d * d * d);
            for (std::size_t j = 0; j < d; ++j) g1[j] = da[i * d + j];
            for (std::size_t p = 0; p < d; ++p)
                for (std::size_t q = 0; q < d; ++q) g2[p * d + q] = d2a[(i * d + p) * d + q];
            for (std::size_t p = 0; p < d; ++p)
                for (std::size_t q = 0; q < d; ++q)
                    for (std::size_t s = 0; s < d; ++s)
                        g3[(p * d + q) * d + s] = d3a[((i * d + p) * d + q) * d + s];
            SobolevElement acc = add(x[i], scale(chain_coeff(x, av[i], g1, g2, g3), invn));
            for (std::size_t r = 0; r < d; ++r) {
                for (std::size_t j = 0; j < d; ++j) g1[j] = db[(i * d + r) * d + j];
                for (std::size_t p = 0; p < d; ++p)
                    for (std::size_t q = 0; q < d; ++q)
                        g2[p * d + q] = d2b[((i * d + r) * d + p) * d + q];
                for (std::size_t p = 0; p < d; ++p)
                    for (std::size_t q = 0; q < d; ++q)
                        for (std::size_t s = 0; s < d; ++s)
                            g3[(p * d + q) * d + s] = d3b[(((i * d + r) * d + p) * d + q) * d + s];
                SobolevElement brc = chain_coeff(x, bm[i * d + r], g1, g2, g3);
                acc = add(acc, scale(mul(brc, xi_el[r]), invsq));
            }
            xn.push_back(std::move(acc));
        }
        x = std::move(xn);
    }
    if (frac > 0.0 && khi > klo) {
        std::vector<SobolevElement> out;
        out.reserve(d);
        for (std::size_t i = 0; i < d; ++i)
            out.push_back(add(scale(prev[i], 1.0 - frac), scale(x[i], frac)));
        return out;
    }
    return x;
}

TapeLadderResult tape_weight_ladder(const std::vector<SobolevElement>& f,
                                    const PathContext& ctx, bool on_xi, bool want_gradient) {
    const std::size_t d = f.size();
    const std::size_t N = ctx.hdim();

    std::vector<Family> df;
    df.reserve(d);
    for (const auto& fi : f) df.push_back(derivative_family(fi));

    std::vector<SobolevElement> sigma;
    sigma.reserve(d * d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            SobolevElement acc = lift_constant(ctx, 0.0, df[0][0].order);
            for (std::size_t b = 0; b < N; ++b) acc = add(acc, mul(df[i][b], df[j][b]));
            sigma.push_back(std::move(acc));
        }
    std::vector<SobolevElement> rho_inv = inverse_with_derivative(sigma, d, on_xi);

    auto theta_family = [&](std::size_t l) {
        Family th;
        th.reserve(N);
        for (std::size_t b = 0; b < N; ++b) {
            SobolevElement acc = lift_constant(ctx, 0.0, rho_inv[0].order);
            for (std::size_t kk = 0; kk < d; ++kk)
                acc = add(acc, mul(rho_inv[kk * d + l], df[kk][b]));
            th.push_back(std::move(acc));
        }
        return th;
    };

    SobolevElement ups = lift_constant(ctx, 1.0, df[0][0].order);
    for (std::size_t l = 0; l < d; ++l) {
        Family th = theta_family(l);
        Family prod;
        prod.reserve(N);
        for (std::size_t b = 0; b < N; ++b) prod.push_back(mul(ups, th[b]));
        ups = divergence(prod, ctx);
    }

    TapeLadderResult res;
    res.upsilon = ups;
    if (want_gradient) {
        for (std::size_t l = 0; l < d; ++l) {
            Family th = theta_family(l);
            Family prod;
            prod.reserve(N);
            for (std::size_t b = 0; b < N; ++b) prod.push_back(mul(res.upsilon, th[b]));
            res.upsilon_i.push_back(divergence(prod, ctx));
        }
    }
    return res;
}

void NormAccumulator::add(const DerivativeRecord& rec, const MalliavinState& state) {
    const double p = 2.0 * (d_ + 1.0) * (d_ + 2.0);
    if (moment_sums_.empty()) moment_sums_.assign(static_cast<std::size_t>(order_) * d_, 0.0);
    if (rho_moment_sums_.empty()) rho_moment_sums_.assign(d_ + 1, 0.0);
    const auto norms = rec.tensor_norms_by_coord();
    for (int m = 0; m < order_; ++m)
        for (std::size_t i = 0; i < d_; ++i)
            moment_sums_[m * d_ + i] += std::pow(norms[m][i], p);
    if (state.on_xi)
        for (std::size_t M = 0; M <= d_; ++M)
            rho_moment_sums_[M] += std::pow(state.inv_norm, 4.0 * (M + d_));
    ++count_;
}

NormDiagnostics NormAccumulator::finish() const {
    if (count_ < 1) throw ContractViolation("NormAccumulator: empty sample set");
    const double p = 2.0 * (d_ + 1.0) * (d_ + 2.0);
    double nd = 0.0;
    for (int m = 0; m < order_; ++m)
        for (std::size_t i = 0; i < d_; ++i)
            nd = std::max(nd, std::pow(moment_sums_[m * d_ + i] / count_, 1.0 / p));
    double kd = 0.0;
    for (std::size_t M = 0; M <= d_; ++M)
        kd += std::pow(nd, static_cast<double>(d_ + 2 * M)) *
              std::pow(rho_moment_sums_[M] / count_, 0.25);
    return {nd, kd};
}

}  // namespace truncllt
