#include "truncllt/linalg.hpp"

#include <algorithm>

namespace truncllt {

double det(const Mat& a, std::size_t d) {
    Mat lu = a;
    double sign = 1.0, prod = 1.0;
    for (std::size_t c = 0; c < d; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < d; ++r)
            if (std::abs(lu[r * d + c]) > std::abs(lu[piv * d + c])) piv = r;
        if (piv != c) {
            for (std::size_t j = 0; j < d; ++j) std::swap(lu[c * d + j], lu[piv * d + j]);
            sign = -sign;
        }
        const double p = lu[c * d + c];
        if (p == 0.0) return 0.0;
        prod *= p;
        for (std::size_t r = c + 1; r < d; ++r) {
            const double f = lu[r * d + c] / p;
            for (std::size_t j = c; j < d; ++j) lu[r * d + j] -= f * lu[c * d + j];
        }
    }
    return sign * prod;
}

Mat inverse(const Mat& a, std::size_t d) {
    Mat m = a;
    Mat inv = identity(d);
    for (std::size_t c = 0; c < d; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < d; ++r)
            if (std::abs(m[r * d + c]) > std::abs(m[piv * d + c])) piv = r;
        if (m[piv * d + c] == 0.0) throw std::runtime_error("inverse: singular matrix");
        if (piv != c)
            for (std::size_t j = 0; j < d; ++j) {
                std::swap(m[c * d + j], m[piv * d + j]);
                std::swap(inv[c * d + j], inv[piv * d + j]);
            }
        const double p = m[c * d + c];
        for (std::size_t j = 0; j < d; ++j) {
            m[c * d + j] /= p;
            inv[c * d + j] /= p;
        }
        for (std::size_t r = 0; r < d; ++r) {
            if (r == c) continue;
            const double f = m[r * d + c];
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < d; ++j) {
                m[r * d + j] -= f * m[c * d + j];
                inv[r * d + j] -= f * inv[c * d + j];
            }
        }
    }
    return inv;
}

double min_eigenvalue_sym(Mat a, std::size_t d) {
    if (d == 1) return a[0];
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = p + 1; q < d; ++q) off += a[p * d + q] * a[p * d + q];
        if (off < 1e-28) break;
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = p + 1; q < d; ++q) {
                const double apq = a[p * d + q];
                if (std::abs(apq) < 1e-300) continue;
                const double theta = 0.5 * (a[q * d + q] - a[p * d + p]) / apq;
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < d; ++k) {
                    const double akp = a[k * d + p], akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    const double apk = a[p * d + k], aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
            }
    }
    double mn = a[0];
    for (std::size_t i = 1; i < d; ++i) mn = std::min(mn, a[i * d + i]);
    return mn;
}

double op_norm(const Mat& a, std::size_t d) {
    // power iteration on A^T A
    Mat ata(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) s += a[k * d + i] * a[k * d + j];
            ata[i * d + j] = s;
        }
    Vec v(d, 1.0);
    double lam = 0.0;
    for (int it = 0; it < 200; ++it) {
        Vec w = matvec(ata, v);
        const double nw = norm2(w);
        if (nw == 0.0) return 0.0;
        for (auto& x : w) x /= nw;
        const double nl = dot(w, matvec(ata, w));
        if (std::abs(nl - lam) <= 1e-14 * std::max(1.0, std::abs(nl))) {
            lam = nl;
            break;
        }
        lam = nl;
        v = std::move(w);
    }
    return std::sqrt(std::max(0.0, lam));
}

}  // namespace truncllt
