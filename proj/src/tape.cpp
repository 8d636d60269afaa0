#include "truncllt/tape.hpp"

#include <cmath>
#include <cstdio>
#include <string>

namespace truncllt {

PathContext PathContext::from_path(const GridPath& path, const MixtureDecomposition& decomp) {
    PathContext ctx;
    ctx.n = path.n;
    ctx.d = decomp.dim();
    ctx.theta = path.theta;
    ctx.ball = decomp.ball;
    ctx.eta.reserve(path.noise.size());
    ctx.eps.reserve(path.noise.size());
    ctx.psi_k.reserve(path.noise.size());
    ctx.dpsi_k.reserve(path.noise.size());
    for (const auto& nd : path.noise) {
        ctx.eta.push_back(nd.eta);
        ctx.eps.push_back(nd.eps);
        ctx.psi_k.push_back(psi(nd.eta, decomp.ball));
        ctx.dpsi_k.push_back(grad_psi(nd.eta, decomp.ball));
    }
    ctx.rho = rho_vector(path.noise, path.theta, decomp.ball);
    return ctx;
}

namespace {

SobolevElement make_zero(const PathContext& ctx, int m) {
    SobolevElement e;
    e.ctx = &ctx;
    e.order = m;
    const std::size_t N = ctx.hdim();
    if (m >= 1) e.t1.assign(N, 0.0);
    if (m >= 2) e.t2.assign(N * N, 0.0);
    if (m >= 3) e.t3.assign(N * N * N, 0.0);
    return e;
}

void check_same_ctx(const SobolevElement& f, const SobolevElement& g) {
    if (f.ctx != g.ctx)
        throw ContractViolation("tape: elements from different path contexts");
}

// D_a rho_b (second psi derivative is -2 I for the ball weight)
inline double d_rho(const PathContext& ctx, std::size_t a, std::size_t b) {
    const std::size_t d = ctx.d;
    if (a / d != b / d) return 0.0;
    const std::size_t k = a / d;
    const double hess = hess_psi(a % d, b % d);
    return ctx.theta * ctx.psi_k[k] * hess;
}

// D_{a1} D_{a2} rho_b; third psi derivative vanishes for the ball
inline double dd_rho(const PathContext& ctx, std::size_t a1, std::size_t a2, std::size_t b) {
    const std::size_t d = ctx.d;
    const std::size_t k = b / d;
    if (a1 / d != k || a2 / d != k) return 0.0;
    const double hess = hess_psi(a2 % d, b % d);
    return ctx.theta * ctx.psi_k[k] * ctx.dpsi_k[k][a1 % d] * hess;
}

}  // namespace

int SobolevElement::active_horizon() const {
    const std::size_t N = hdim();
    const std::size_t d = ctx->d;
    int hor = -1;
    auto touch = [&](std::size_t flat) { hor = std::max(hor, static_cast<int>(flat / d)); };
    for (std::size_t b = 0; b < t1.size(); ++b)
        if (t1[b] != 0.0) touch(b);
    for (std::size_t i = 0; i < t2.size(); ++i)
        if (t2[i] != 0.0) {
            touch(i / N);
            touch(i % N);
        }
    for (std::size_t i = 0; i < t3.size(); ++i)
        if (t3[i] != 0.0) {
            touch(i / (N * N));
            touch((i / N) % N);
            touch(i % N);
        }
    return hor;
}

std::string SobolevElement::debug_dump(double tol) const {
    const std::size_t N = hdim();
    std::string out;
    char buf[128];
    std::snprintf(buf, sizeof buf, "value %.17g\n", value);
    out += buf;
    for (std::size_t b = 0; b < t1.size(); ++b)
        if (std::abs(t1[b]) > tol) {
            std::snprintf(buf, sizeof buf, "(%zu) %.17g\n", b, t1[b]);
            out += buf;
        }
    for (std::size_t a = 0; a < (t2.empty() ? 0 : N); ++a)
        for (std::size_t b = 0; b < N; ++b)
            if (std::abs(t2[a * N + b]) > tol) {
                std::snprintf(buf, sizeof buf, "(%zu,%zu) %.17g\n", a, b, t2[a * N + b]);
                out += buf;
            }
    for (std::size_t e = 0; e < (t3.empty() ? 0 : N); ++e)
        for (std::size_t c = 0; c < N; ++c)
            for (std::size_t b = 0; b < N; ++b)
                if (std::abs(t3[(e * N + c) * N + b]) > tol) {
                    std::snprintf(buf, sizeof buf, "(%zu,%zu,%zu) %.17g\n", e, c, b,
                                  t3[(e * N + c) * N + b]);
                    out += buf;
                }
    return out;
}

SobolevElement lift_constant(const PathContext& ctx, double v, int m) {
    SobolevElement e = make_zero(ctx, m);
    e.value = v;
    return e;
}

SobolevElement lift_coordinate(const PathContext& ctx, int k, std::size_t r, int m) {
    if (k < 0 || k >= ctx.n || r >= ctx.d)
        throw ContractViolation("lift_coordinate: index out of range");
    SobolevElement e = make_zero(ctx, m);
    const std::size_t N = ctx.hdim();
    const std::size_t d = ctx.d;
    const std::size_t b = static_cast<std::size_t>(k) * d + r;
    const double th = ctx.theta;
    e.value = ctx.eta[k][r];
    if (m >= 1) e.t1[b] = th * ctx.psi_k[k];
    if (m >= 2)
        for (std::size_t rc = 0; rc < d; ++rc)
            e.t2[(k * d + rc) * N + b] = th * ctx.psi_k[k] * ctx.dpsi_k[k][rc];
    if (m >= 3)
        for (std::size_t re = 0; re < d; ++re)
            for (std::size_t rc = 0; rc < d; ++rc) {
                const double g = ctx.dpsi_k[k][re] * ctx.dpsi_k[k][rc] +
                                 ctx.psi_k[k] * hess_psi(re, rc);
                e.t3[((k * d + re) * N + (k * d + rc)) * N + b] = th * ctx.psi_k[k] * g;
            }
    return e;
}

SobolevElement lift_psi(const PathContext& ctx, int k, int m) {
    // psi(eta_k) = r^2 - sum_r (eta_{kr} - z_r)^2 built from coordinate lifts,
    // so its tensors come out of the product rule rather than a second
    // hand-derived formula.
    SobolevElement acc = lift_constant(ctx, ctx.ball.radius * ctx.ball.radius, m);
    for (std::size_t r = 0; r < ctx.d; ++r) {
        SobolevElement u = shift(lift_coordinate(ctx, k, r, m), -ctx.ball.center[r]);
        acc = sub(acc, mul(u, u));
    }
    return acc;
}

SobolevElement add(const SobolevElement& f, const SobolevElement& g) {
    check_same_ctx(f, g);
    SobolevElement e = make_zero(*f.ctx, std::min(f.order, g.order));
    e.value = f.value + g.value;
    for (std::size_t i = 0; i < e.t1.size(); ++i) e.t1[i] = f.t1[i] + g.t1[i];
    for (std::size_t i = 0; i < e.t2.size(); ++i) e.t2[i] = f.t2[i] + g.t2[i];
    for (std::size_t i = 0; i < e.t3.size(); ++i) e.t3[i] = f.t3[i] + g.t3[i];
    return e;
}

SobolevElement sub(const SobolevElement& f, const SobolevElement& g) {
    return add(f, scale(g, -1.0));
}

SobolevElement scale(const SobolevElement& f, double c) {
    SobolevElement e = f;
    e.value *= c;
    for (auto& v : e.t1) v *= c;
    for (auto& v : e.t2) v *= c;
    for (auto& v : e.t3) v *= c;
    return e;
}

SobolevElement shift(const SobolevElement& f, double c) {
    SobolevElement e = f;
    e.value += c;
    return e;
}

SobolevElement mul(const SobolevElement& f, const SobolevElement& g) {
    check_same_ctx(f, g);
    const int m = std::min(f.order, g.order);
    SobolevElement e = make_zero(*f.ctx, m);
    const std::size_t N = e.hdim();
    e.value = f.value * g.value;
    if (m >= 1)
        for (std::size_t a = 0; a < N; ++a) e.t1[a] = f.value * g.t1[a] + f.t1[a] * g.value;
    if (m >= 2)
        for (std::size_t c = 0; c < N; ++c)
            for (std::size_t a = 0; a < N; ++a)
                e.t2[c * N + a] = f.value * g.t2[c * N + a] + f.t1[c] * g.t1[a] +
                                  f.t1[a] * g.t1[c] + f.t2[c * N + a] * g.value;
    if (m >= 3)
        for (std::size_t x = 0; x < N; ++x)
            for (std::size_t c = 0; c < N; ++c)
                for (std::size_t a = 0; a < N; ++a)
                    e.t3[(x * N + c) * N + a] =
                        f.t1[x] * g.t2[c * N + a] + f.value * g.t3[(x * N + c) * N + a] +
                        f.t2[x * N + c] * g.t1[a] + f.t1[c] * g.t2[x * N + a] +
                        f.t2[x * N + a] * g.t1[c] + f.t1[a] * g.t2[x * N + c] +
                        f.t3[(x * N + c) * N + a] * g.value + f.t2[c * N + a] * g.t1[x];
    return e;
}

SobolevElement chain_unary(const SobolevElement& f, double F, double F1, double F2, double F3) {
    SobolevElement e = make_zero(*f.ctx, f.order);
    const std::size_t N = e.hdim();
    e.value = F;
    if (f.order >= 1)
        for (std::size_t a = 0; a < N; ++a) e.t1[a] = F1 * f.t1[a];
    if (f.order >= 2)
        for (std::size_t c = 0; c < N; ++c)
            for (std::size_t a = 0; a < N; ++a)
                e.t2[c * N + a] = F2 * f.t1[c] * f.t1[a] + F1 * f.t2[c * N + a];
    if (f.order >= 3)
        for (std::size_t x = 0; x < N; ++x)
            for (std::size_t c = 0; c < N; ++c)
                for (std::size_t a = 0; a < N; ++a)
                    e.t3[(x * N + c) * N + a] =
                        F3 * f.t1[x] * f.t1[c] * f.t1[a] +
                        F2 * (f.t2[x * N + c] * f.t1[a] + f.t1[c] * f.t2[x * N + a] +
                              f.t1[x] * f.t2[c * N + a]) +
                        F1 * f.t3[(x * N + c) * N + a];
    return e;
}

Family derivative_family(const SobolevElement& f) {
    if (f.order < 1) throw ContractViolation("derivative_family: order 0 element");
    const std::size_t N = f.hdim();
    Family out;
    out.reserve(N);
    for (std::size_t a = 0; a < N; ++a) {
        SobolevElement e = make_zero(*f.ctx, f.order - 1);
        e.value = f.t1[a];
        if (e.order >= 1)
            for (std::size_t c = 0; c < N; ++c) e.t1[c] = f.t2[c * N + a];
        if (e.order >= 2)
            for (std::size_t x = 0; x < N; ++x)
                for (std::size_t c = 0; c < N; ++c)
                    e.t2[x * N + c] = f.t3[(x * N + c) * N + a];
        out.push_back(std::move(e));
    }
    return out;
}

FamilyHH derivative_family_hh(const Family& g) {
    if (g.empty()) return {};
    const std::size_t N = g[0].hdim();
    FamilyHH out(N * N);
    for (std::size_t b = 0; b < N; ++b) {
        Family db = derivative_family(g[b]);
        for (std::size_t a = 0; a < N; ++a) out[a * N + b] = std::move(db[a]);
    }
    return out;
}

FamilyHH kstar(const FamilyHH& k, std::size_t N) {
    FamilyHH out(N * N);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) out[i * N + j] = k[j * N + i];
    return out;
}

SobolevElement divergence(const Family& g, const PathContext& ctx) {
    const std::size_t N = ctx.hdim();
    if (g.size() != N) throw ContractViolation("divergence: family size != n d");
    int m = g[0].order;
    for (const auto& e : g) m = std::min(m, e.order);
    if (m < 1) throw ContractViolation("divergence: needs at least one tensor order");
    SobolevElement out = make_zero(ctx, m - 1);
    double v = 0.0;
    for (std::size_t b = 0; b < N; ++b) v += ctx.rho[b] * g[b].value + g[b].t1[b];
    out.value = -v;
    if (out.order >= 1)
        for (std::size_t a = 0; a < N; ++a) {
            double s = 0.0;
            for (std::size_t b = 0; b < N; ++b)
                s += d_rho(ctx, a, b) * g[b].value + ctx.rho[b] * g[b].t1[a] +
                     g[b].t2at(a, b);
            out.t1[a] = -s;
        }
    if (out.order >= 2)
        for (std::size_t a1 = 0; a1 < N; ++a1)
            for (std::size_t a2 = 0; a2 < N; ++a2) {
                double s = 0.0;
                for (std::size_t b = 0; b < N; ++b)
                    s += dd_rho(ctx, a1, a2, b) * g[b].value +
                         d_rho(ctx, a2, b) * g[b].t1[a1] + d_rho(ctx, a1, b) * g[b].t1[a2] +
                         ctx.rho[b] * g[b].t2at(a1, a2) + g[b].t3at(a1, a2, b);
                out.t2[a1 * N + a2] = -s;
            }
    return out;
}

Family divergence_hh(const FamilyHH& k, const PathContext& ctx) {
    const std::size_t N = ctx.hdim();
    if (k.size() != N * N) throw ContractViolation("divergence_hh: family size != (n d)^2");
    Family out;
    out.reserve(N);
    for (std::size_t l = 0; l < N; ++l) {
        Family slot;
        slot.reserve(N);
        for (std::size_t b = 0; b < N; ++b) slot.push_back(k[b * N + l]);
        out.push_back(divergence(slot, ctx));
    }
    return out;
}

Family b_operator(const Family& g, const PathContext& ctx) {
    const std::size_t N = ctx.hdim();
    if (g.size() != N) throw ContractViolation("b_operator: family size != n d");
    const std::size_t d = ctx.d;
    int m = g[0].order;
    for (const auto& e : g) m = std::min(m, e.order);
    Family out;
    out.reserve(N);
    for (std::size_t a = 0; a < N; ++a) {
        const int k = static_cast<int>(a / d);
        SobolevElement coef = scale(lift_psi(ctx, k, m), static_cast<double>(ctx.theta));
        SobolevElement acc = lift_constant(ctx, 0.0, m);
        for (std::size_t rb = 0; rb < d; ++rb) {
            const double w = -hess_psi(rb, a % d);  // 2 delta_{rb, ra} for the ball
            if (w == 0.0) continue;
            acc = add(acc, scale(mul(coef, g[k * d + rb]), w));
        }
        out.push_back(std::move(acc));
    }
    return out;
}

Family commutator_correction(const Family& g, const PathContext& ctx) {
    const std::size_t N = ctx.hdim();
    const std::size_t d = ctx.d;
    if (g.size() != N) throw ContractViolation("commutator_correction: family size != n d");
    int m = g[0].order;
    for (const auto& e : g) m = std::min(m, e.order);
    // rho components as elements: theta * d_r psi(eta_k) = -2 theta (eta_kr - z_r)
    auto rho_el = [&](std::size_t idx) {
        const int k = static_cast<int>(idx / d);
        const std::size_t r = idx % d;
        return scale(shift(lift_coordinate(ctx, k, r, m), -ctx.ball.center[r]),
                     -2.0 * ctx.theta);
    };
    Family out;
    out.reserve(N);
    for (std::size_t a = 0; a < N; ++a) {
        const std::size_t k = a / d;
        SobolevElement acc = lift_constant(ctx, 0.0, m - 1);
        const SobolevElement ra = rho_el(a);
        for (std::size_t rb = 0; rb < d; ++rb) {
            const std::size_t b = k * d + rb;
            Family dgb = derivative_family(g[b]);
            acc = add(acc, sub(mul(ra, dgb[b]), mul(rho_el(b), dgb[a])));
        }
        out.push_back(std::move(acc));
    }
    return out;
}

FamilyHH b_operator_hh(const FamilyHH& k, const PathContext& ctx) {
    const std::size_t N = ctx.hdim();
    FamilyHH out(N * N);
    for (std::size_t l = 0; l < N; ++l) {
        Family slot;
        slot.reserve(N);
        for (std::size_t b = 0; b < N; ++b) slot.push_back(k[b * N + l]);
        Family bs = b_operator(slot, ctx);
        for (std::size_t b = 0; b < N; ++b) out[b * N + l] = std::move(bs[b]);
    }
    return out;
}

std::vector<SobolevElement> inverse_with_derivative(const std::vector<SobolevElement>& sigma,
                                                    std::size_t d, bool on_truncation) {
    if (sigma.size() != d * d) throw ContractViolation("inverse_with_derivative: not d x d");
    const PathContext& ctx = *sigma[0].ctx;
    int m = sigma[0].order;
    for (const auto& e : sigma) m = std::min(m, e.order);
    const int mout = std::min(m, 2);
    if (!on_truncation) {
        std::vector<SobolevElement> zeroes;
        zeroes.reserve(d * d);
        for (std::size_t i = 0; i < d * d; ++i) zeroes.push_back(lift_constant(ctx, 0.0, mout));
        return zeroes;
    }
    Mat val(d * d);
    for (std::size_t i = 0; i < d * d; ++i) val[i] = sigma[i].value;
    Mat v;
    try {
        v = inverse(val, d);
    } catch (const std::runtime_error&) {
        throw ContractViolation(
            "inverse_with_derivative: singular Malliavin matrix on the truncation set");
    }
    const std::size_t N = ctx.hdim();
    std::vector<SobolevElement> out;
    out.reserve(d * d);
    for (std::size_t i = 0; i < d * d; ++i) {
        SobolevElement e = make_zero(ctx, mout);
        e.value = v[i];
        out.push_back(std::move(e));
    }
    if (mout < 1) return out;

    auto s1 = [&](std::size_t a, std::size_t i, std::size_t j) {
        return sigma[i * d + j].t1[a];
    };
    // T1(rho)[a] = -V S1[a] V
    std::vector<Mat> vs1v(N);
    for (std::size_t a = 0; a < N; ++a) {
        Mat s(d * d);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) s[i * d + j] = s1(a, i, j);
        vs1v[a] = matmul(matmul(v, s, d), v, d);
        for (std::size_t i = 0; i < d * d; ++i) out[i].t1[a] = -vs1v[a][i];
    }
    if (mout < 2) return out;
    // T2(rho)[c,a] = V S1[c] V S1[a] V + V S1[a] V S1[c] V - V S2[c,a] V
    for (std::size_t c = 0; c < N; ++c)
        for (std::size_t a = 0; a < N; ++a) {
            Mat s2(d * d);
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j) s2[i * d + j] = sigma[i * d + j].t2at(c, a);
            Mat sc(d * d), sa(d * d);
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j) {
                    sc[i * d + j] = s1(c, i, j);
                    sa[i * d + j] = s1(a, i, j);
                }
            const Mat term1 = matmul(matmul(matmul(matmul(v, sc, d), v, d), sa, d), v, d);
            const Mat term2 = matmul(matmul(matmul(matmul(v, sa, d), v, d), sc, d), v, d);
            const Mat term3 = matmul(matmul(v, s2, d), v, d);
            for (std::size_t i = 0; i < d * d; ++i)
                out[i].t2[c * N + a] = term1[i] + term2[i] - term3[i];
        }
    return out;
}

double finite_difference_gap(const SobolevElement& f,
                             const std::function<double(const PathContext&)>& rebuild,
                             double h) {
    const PathContext& ctx = *f.ctx;
    const std::size_t N = ctx.hdim();
    const std::size_t d = ctx.d;
    auto refresh = [](PathContext& c, std::size_t k) {
        c.psi_k[k] = psi(c.eta[k], c.ball);
        c.dpsi_k[k] = grad_psi(c.eta[k], c.ball);
        for (std::size_t r = 0; r < c.d; ++r)
            c.rho[k * c.d + r] = c.theta ? c.dpsi_k[k][r] : 0.0;
    };
    double worst = 0.0;
    for (std::size_t b = 0; b < N; ++b) {
        const std::size_t k = b / d, r = b % d;
        PathContext up = ctx, dn = ctx;
        up.eta[k][r] += h;
        dn.eta[k][r] -= h;
        refresh(up, k);
        refresh(dn, k);
        const double plain = (rebuild(up) - rebuild(dn)) / (2.0 * h);
        const double want = ctx.theta * ctx.psi_k[k] * plain;
        const double got = f.t1[b];
        const double scl = std::max({std::abs(got), std::abs(want), 1e-8});
        worst = std::max(worst, std::abs(got - want) / scl);
    }
    return worst;
}

}  // namespace truncllt
