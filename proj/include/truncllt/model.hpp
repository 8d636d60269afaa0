#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "truncllt/linalg.hpp"

namespace truncllt {

// SDE coefficients with their spatial derivatives. Index conventions, all
// row-major flat arrays:
//   a(x)   : Vec, a[i]
//   da(x)  : d^2,  [i*d + j]               = d_j a_i
//   d2a(x) : d^3,  [(i*d + p)*d + q]       = d_p d_q a_i
//   d3a(x) : d^4,  [((i*d+p)*d+q)*d + s]   = d_p d_q d_s a_i
//   b(x)   : d^2,  [i*d + r]               = column r, coordinate i
//   db(x)  : d^3,  [(i*d + r)*d + j]       = d_j b_{i r}
//   d2b(x) : d^4,  [((i*d+r)*d+p)*d + q]   = d_p d_q b_{i r}
//   d3b(x) : d^5
struct ModelSpec {
    std::size_t d = 1;
    std::function<Vec(const Vec&)> a;
    std::function<Mat(const Vec&)> b;
    std::function<Vec(const Vec&)> da, d2a, d3a;
    std::function<Vec(const Vec&)> db, d2b, d3b;

    double gamma = 1.0;        // ellipticity constant in (b b* v, v) >= gamma |v|^2
    double a_inf = 0.0;        // sup-norm certificates
    double grad_a_inf = 0.0;
    double grad_b_inf = 0.0;
    bool constant_coeffs = false;
    int deriv_order = 3;       // highest stored derivative order

    void validate() const;
};

// Closed-form transition density oracle p_t(x, y), when available.
using DensityOracle = std::function<double(double t, const Vec& x, const Vec& y)>;

struct ModelCatalogEntry {
    std::string name;
    ModelSpec spec;
    std::optional<DensityOracle> oracle;
    bool uniformly_elliptic = false;
    bool drift_recurrent = false;
};

// Catalog: iid, constant, ou_bounded, trig.
ModelCatalogEntry make_iid_model(std::size_t d);
ModelCatalogEntry make_constant_model(const Vec& a0, const Mat& b0);
ModelCatalogEntry make_ou_bounded_model(std::size_t d, double lambda);
ModelCatalogEntry make_trig_model(std::size_t d);
ModelCatalogEntry model_by_name(const std::string& name, std::size_t d);

struct EllipticityReport {
    double min_eigenvalue;
    bool pass;
};
EllipticityReport ellipticity_check(const ModelSpec& spec, std::size_t probe_points,
                                    std::uint64_t seed = 7001);

struct RecurrenceReport {
    double min_margin;  // min over probed |x| >= R0 of -(a(x), x)/|x|
    bool pass;
};
RecurrenceReport recurrence_check(const ModelSpec& spec, double R0, std::size_t probe_points,
                                  std::uint64_t seed = 7002);

// Max relative discrepancy between the stored derivatives and central finite
// differences at random probe points; guards every recursion consuming
// grad a / grad b.
double derivative_consistency(const ModelSpec& spec, int order, std::size_t trials,
                              std::uint64_t seed = 7003);

// Builds a ModelSpec from coefficient expression strings in the arithmetic
// grammar (+ - * / sin cos tanh exp, constants, x1..xd). Derivatives fall
// back to nested central differences; accuracy loss documented in README.
ModelSpec model_from_expressions(std::size_t d, const std::vector<std::string>& a_exprs,
                                 const std::vector<std::string>& b_exprs, double gamma);

}  // namespace truncllt
