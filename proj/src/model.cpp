#include "truncllt/model.hpp"

#include <cmath>

#include "truncllt/decomp.hpp"
#include "truncllt/rng.hpp"

namespace truncllt {

void ModelSpec::validate() const {
    if (d < 1) throw ContractViolation("ModelSpec: dimension must be >= 1");
    if (!a || !b) throw ContractViolation("ModelSpec: coefficients missing");
    if (gamma <= 0.0) throw ContractViolation("ModelSpec: gamma must be > 0");
}

namespace {

Vec zero_tensor_fn(std::size_t size) { return Vec(size, 0.0); }

// Gaussian transition density N(mean(x,t), t * b0 b0*)
DensityOracle gaussian_oracle(const Vec& a0, const Mat& b0) {
    const std::size_t d = a0.size();
    Mat cov1(d * d, 0.0);  // b0 b0*
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < d; ++r) s += b0[i * d + r] * b0[j * d + r];
            cov1[i * d + j] = s;
        }
    return [d, a0, cov1](double t, const Vec& x, const Vec& y) {
        Mat cov(d * d);
        for (std::size_t i = 0; i < d * d; ++i) cov[i] = t * cov1[i];
        const Mat covinv = inverse(cov, d);
        const double dt = det(cov, d);
        Vec u(d);
        for (std::size_t i = 0; i < d; ++i) u[i] = y[i] - x[i] - a0[i] * t;
        const double q = dot(u, matvec(covinv, u));
        const double norm =
            std::pow(2.0 * 3.14159265358979323846, -0.5 * static_cast<double>(d)) /
            std::sqrt(dt);
        return norm * std::exp(-0.5 * q);
    };
}

}  // namespace

ModelCatalogEntry make_constant_model(const Vec& a0, const Mat& b0) {
    const std::size_t d = a0.size();
    ModelSpec spec;
    spec.d = d;
    spec.a = [a0](const Vec&) { return a0; };
    spec.b = [b0](const Vec&) { return b0; };
    spec.da = [d](const Vec&) { return zero_tensor_fn(d * d); };
    spec.d2a = [d](const Vec&) { return zero_tensor_fn(d * d * d); };
    spec.d3a = [d](const Vec&) { return zero_tensor_fn(d * d * d * d); };
    spec.db = [d](const Vec&) { return zero_tensor_fn(d * d * d); };
    spec.d2b = [d](const Vec&) { return zero_tensor_fn(d * d * d * d); };
    spec.d3b = [d](const Vec&) { return zero_tensor_fn(d * d * d * d * d); };
    Mat bbt(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < d; ++r) s += b0[i * d + r] * b0[j * d + r];
            bbt[i * d + j] = s;
        }
    spec.gamma = min_eigenvalue_sym(bbt, d);
    spec.a_inf = norm2(a0);
    spec.grad_a_inf = 0.0;
    spec.grad_b_inf = 0.0;
    spec.constant_coeffs = true;

    ModelCatalogEntry e;
    e.name = "constant";
    e.spec = spec;
    e.oracle = gaussian_oracle(a0, b0);
    e.uniformly_elliptic = spec.gamma > 0.0;
    e.drift_recurrent = false;
    return e;
}

ModelCatalogEntry make_iid_model(std::size_t d) {
    ModelCatalogEntry e = make_constant_model(Vec(d, 0.0), identity(d));
    e.name = "iid";
    return e;
}

ModelCatalogEntry make_ou_bounded_model(std::size_t d, double lambda) {
    // drift a_i(x) = -lambda * tanh(x_i), diffusion I; bounded drift with
    // (a(x), x) <= -r |x| for |x| large: bounded smooth inward drift,
    ModelSpec spec;
    spec.d = d;
    spec.a = [d, lambda](const Vec& x) {
        Vec v(d);
        for (std::size_t i = 0; i < d; ++i) v[i] = -lambda * std::tanh(x[i]);
        return v;
    };
    spec.b = [d](const Vec&) { return identity(d); };
    spec.da = [d, lambda](const Vec& x) {
        Vec m(d * d, 0.0);
        for (std::size_t i = 0; i < d; ++i) {
            const double t = std::tanh(x[i]);
            m[i * d + i] = -lambda * (1.0 - t * t);
        }
        return m;
    };
    spec.d2a = [d, lambda](const Vec& x) {
        Vec t3(d * d * d, 0.0);
        for (std::size_t i = 0; i < d; ++i) {
            const double t = std::tanh(x[i]);
            t3[(i * d + i) * d + i] = -lambda * (-2.0 * t * (1.0 - t * t));
        }
        return t3;
    };
    spec.d3a = [d, lambda](const Vec& x) {
        Vec t4(d * d * d * d, 0.0);
        for (std::size_t i = 0; i < d; ++i) {
            const double t = std::tanh(x[i]);
            const double s2 = 1.0 - t * t;
            t4[((i * d + i) * d + i) * d + i] = -lambda * (-2.0 * s2 * (1.0 - 3.0 * t * t));
        }
        return t4;
    };
    spec.db = [d](const Vec&) { return zero_tensor_fn(d * d * d); };
    spec.d2b = [d](const Vec&) { return zero_tensor_fn(d * d * d * d); };
    spec.d3b = [d](const Vec&) { return zero_tensor_fn(d * d * d * d * d); };
    spec.gamma = 1.0;
    spec.a_inf = lambda * std::sqrt(static_cast<double>(d));
    spec.grad_a_inf = lambda;
    spec.grad_b_inf = 0.0;
    spec.constant_coeffs = false;

    ModelCatalogEntry e;
    e.name = "ou_bounded";
    e.spec = spec;
    e.uniformly_elliptic = true;
    e.drift_recurrent = true;
    return e;
}

ModelCatalogEntry make_trig_model(std::size_t d) {
    // a_i(x) = 0.5 sin(x_i), b = I + 0.2 diag(cos(x_i)); elliptic since the
    // diagonal perturbation stays in [0.8, 1.2].
    ModelSpec spec;
    spec.d = d;
    spec.a = [d](const Vec& x) {
        Vec v(d);
        for (std::size_t i = 0; i < d; ++i) v[i] = 0.5 * std::sin(x[i]);
        return v;
    };
    spec.b = [d](const Vec& x) {
        Mat m(d * d, 0.0);
        for (std::size_t i = 0; i < d; ++i) m[i * d + i] = 1.0 + 0.2 * std::cos(x[i]);
        return m;
    };
    spec.da = [d](const Vec& x) {
        Vec m(d * d, 0.0);
        for (std::size_t i = 0; i < d; ++i) m[i * d + i] = 0.5 * std::cos(x[i]);
        return m;
    };
    spec.d2a = [d](const Vec& x) {
        Vec t3(d * d * d, 0.0);
        for (std::size_t i = 0; i < d; ++i) t3[(i * d + i) * d + i] = -0.5 * std::sin(x[i]);
        return t3;
    };
    spec.d3a = [d](const Vec& x) {
        Vec t4(d * d * d * d, 0.0);
        for (std::size_t i = 0; i < d; ++i)
            t4[((i * d + i) * d + i) * d + i] = -0.5 * std::cos(x[i]);
        return t4;
    };
    spec.db = [d](const Vec& x) {
        Vec t3(d * d * d, 0.0);
        // b_{i r} = delta_{i r} (1 + 0.2 cos x_i); d_j b_{i i} = -0.2 sin(x_i) delta_{i j}
        for (std::size_t i = 0; i < d; ++i) t3[(i * d + i) * d + i] = -0.2 * std::sin(x[i]);
        return t3;
    };
    spec.d2b = [d](const Vec& x) {
        Vec t4(d * d * d * d, 0.0);
        for (std::size_t i = 0; i < d; ++i)
            t4[((i * d + i) * d + i) * d + i] = -0.2 * std::cos(x[i]);
        return t4;
    };
    spec.d3b = [d](const Vec& x) {
        Vec t5(d * d * d * d * d, 0.0);
        for (std::size_t i = 0; i < d; ++i)
            t5[(((i * d + i) * d + i) * d + i) * d + i] = 0.2 * std::sin(x[i]);
        return t5;
    };
    spec.gamma = 0.8 * 0.8;
    spec.a_inf = 0.5 * std::sqrt(static_cast<double>(d));
    spec.grad_a_inf = 0.5;
    spec.grad_b_inf = 0.2;
    spec.constant_coeffs = false;

    ModelCatalogEntry e;
    e.name = "trig";
    e.spec = spec;
    e.uniformly_elliptic = true;
    e.drift_recurrent = false;
    return e;
}

ModelCatalogEntry model_by_name(const std::string& name, std::size_t d) {
    if (name == "iid") return make_iid_model(d);
    if (name == "constant") return make_constant_model(Vec(d, 0.0), identity(d));
    if (name == "ou_bounded") return make_ou_bounded_model(d, 1.0);
    if (name == "trig") return make_trig_model(d);
    throw ContractViolation("unknown catalog model: " + name);
}

namespace {

Vec random_probe(std::size_t d, Rng& rng, double scale) {
    Vec x(d);
    for (auto& v : x) v = scale * (2.0 * rng.uniform() - 1.0);
    return x;
}

}  // namespace

EllipticityReport ellipticity_check(const ModelSpec& spec, std::size_t probe_points,
                                    std::uint64_t seed) {
    if (probe_points < 1) throw ContractViolation("ellipticity_check: probe_points >= 1");
    Rng rng(seed, 0);
    const std::size_t d = spec.d;
    double mn = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < probe_points; ++p) {
        const Vec x = random_probe(d, rng, 5.0);
        const Mat bm = spec.b(x);
        for (double v : bm)
            if (!std::isfinite(v)) {
                std::string at = "ellipticity_check: non-finite b at probe point (";
                for (std::size_t i = 0; i < d; ++i)
                    at += (i ? ", " : "") + std::to_string(x[i]);
                throw SamplingError(at + ")");
            }
        Mat bbt(d * d, 0.0);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                double s = 0.0;
                for (std::size_t r = 0; r < d; ++r) s += bm[i * d + r] * bm[j * d + r];
                bbt[i * d + j] = s;
            }
        mn = std::min(mn, min_eigenvalue_sym(bbt, d));
    }
    return {mn, mn >= spec.gamma - 1e-12};
}

RecurrenceReport recurrence_check(const ModelSpec& spec, double R0, std::size_t probe_points,
                                  std::uint64_t seed) {
    if (R0 <= 0.0) throw ContractViolation("recurrence_check: R0 must be > 0");
    Rng rng(seed, 0);
    const std::size_t d = spec.d;
    double mn = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < probe_points; ++p) {
        Vec x = random_probe(d, rng, 1.0);
        double nx = norm2(x);
        if (nx == 0.0) {
            x[0] = 1.0;
            nx = 1.0;
        }
        const double radius = R0 * (1.0 + 4.0 * rng.uniform());
        for (auto& v : x) v *= radius / nx;
        const Vec av = spec.a(x);
        mn = std::min(mn, -dot(av, x) / norm2(x));
    }
    return {mn, mn > 0.0};
}

double derivative_consistency(const ModelSpec& spec, int order, std::size_t trials,
                              std::uint64_t seed) {
    if (order > spec.deriv_order)
        throw ContractViolation("derivative_consistency: order exceeds stored derivatives");
    Rng rng(seed, 0);
    const std::size_t d = spec.d;
    const double h = 1e-5;
    double worst = 0.0;
    auto rel = [](double got, double want) {
        const double scale = std::max({std::abs(got), std::abs(want), 1.0});
        return std::abs(got - want) / scale;
    };
    for (std::size_t t = 0; t < trials; ++t) {
        const Vec x = random_probe(d, rng, 2.0);
        for (std::size_t j = 0; j < d; ++j) {
            Vec xp = x, xm = x;
            xp[j] += h;
            xm[j] -= h;
            if (order >= 1) {
                const Vec ap = spec.a(xp), am = spec.a(xm);
                const Mat bp = spec.b(xp), bm = spec.b(xm);
                const Vec da = spec.da(x), db = spec.db(x);
                for (std::size_t i = 0; i < d; ++i) {
                    worst = std::max(worst, rel(da[i * d + j], (ap[i] - am[i]) / (2 * h)));
                    for (std::size_t r = 0; r < d; ++r)
                        worst = std::max(worst, rel(db[(i * d + r) * d + j],
                                                    (bp[i * d + r] - bm[i * d + r]) / (2 * h)));
                }
            }
            if (order >= 2) {
                const Vec dap = spec.da(xp), dam = spec.da(xm);
                const Vec d2a = spec.d2a(x);
                for (std::size_t i = 0; i < d; ++i)
                    for (std::size_t q = 0; q < d; ++q)
                        worst = std::max(
                            worst, rel(d2a[(i * d + j) * d + q],
                                       (dap[i * d + q] - dam[i * d + q]) / (2 * h)));
                const Vec dbp = spec.db(xp), dbm = spec.db(xm);
                const Vec d2b = spec.d2b(x);
                for (std::size_t i = 0; i < d; ++i)
                    for (std::size_t r = 0; r < d; ++r)
                        for (std::size_t q = 0; q < d; ++q)
                            worst = std::max(
                                worst,
                                rel(d2b[((i * d + r) * d + j) * d + q],
                                    (dbp[(i * d + r) * d + q] - dbm[(i * d + r) * d + q]) /
                                        (2 * h)));
            }
        }
    }
    return worst;
}

}  // namespace truncllt
