#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace truncllt {

// Small dense vectors/matrices. Dimensions here are the state dimension d
// (typically 1 or 2), so everything is plain std::vector<double> with
// row-major matrices; no external linear algebra dependency is warranted.
using Vec = std::vector<double>;
using Mat = std::vector<double>;  // row-major, size d*d unless stated

inline Vec zeros(std::size_t n) { return Vec(n, 0.0); }

inline Mat identity(std::size_t d) {
    Mat m(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) m[i * d + i] = 1.0;
    return m;
}

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

inline void axpy(double c, const Vec& x, Vec& y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += c * x[i];
}

// y = A x, A is d x d row-major
inline Vec matvec(const Mat& a, const Vec& x) {
    const std::size_t d = x.size();
    Vec y(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += a[i * d + j] * x[j];
        y[i] = s;
    }
    return y;
}

inline Mat matmul(const Mat& a, const Mat& b, std::size_t d) {
    Mat c(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t k = 0; k < d; ++k) {
            const double aik = a[i * d + k];
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < d; ++j) c[i * d + j] += aik * b[k * d + j];
        }
    return c;
}

inline Mat transpose(const Mat& a, std::size_t d) {
    Mat t(d * d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) t[j * d + i] = a[i * d + j];
    return t;
}

// Frobenius norm
inline double frob(const Mat& a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return std::sqrt(s);
}

inline double max_abs(const Mat& a) {
    double s = 0.0;
    for (double v : a) s = std::max(s, std::abs(v));
    return s;
}

double det(const Mat& a, std::size_t d);

// Gauss-Jordan inverse with partial pivoting. Throws std::runtime_error on a
// singular matrix.
Mat inverse(const Mat& a, std::size_t d);

// Smallest eigenvalue of a symmetric matrix (cyclic Jacobi).
double min_eigenvalue_sym(Mat a, std::size_t d);

// Operator (spectral) norm of a general small matrix via power iteration on
// A^T A; adequate for the d <= 3 matrices used here.
double op_norm(const Mat& a, std::size_t d);

}  // namespace truncllt
