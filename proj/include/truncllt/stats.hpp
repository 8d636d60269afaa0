#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace truncllt {

// Double-double accumulation. For desk-scale magnitudes the running sum is
// exact (fits the 106-bit significand), which is what makes block merges
// associative in practice; the residual caveat is documented in the README.
struct DoubleDouble {
    double hi = 0.0, lo = 0.0;

    static void two_sum(double a, double b, double& s, double& e) {
        s = a + b;
        const double bb = s - a;
        e = (a - (s - bb)) + (b - bb);
    }
    void add(double x) {
        double s, e;
        two_sum(hi, x, s, e);
        e += lo;
        hi = s + e;
        lo = e - (hi - s);
    }
    void merge(const DoubleDouble& o) {
        double s, e;
        two_sum(hi, o.hi, s, e);
        e += lo + o.lo;
        hi = s + e;
        lo = e - (hi - s);
    }
    double value() const { return hi; }
};

// count / weighted sum / sum of squares with compensated accumulation
struct Accumulator {
    long count = 0;
    DoubleDouble sum, sumsq;

    void add(double w) {
        ++count;
        sum.add(w);
        sumsq.add(w * w);
    }
    void merge(const Accumulator& o) {
        count += o.count;
        sum.merge(o.sum);
        sumsq.merge(o.sumsq);
    }
    double mean() const { return count ? sum.value() / count : 0.0; }
    double variance() const {
        if (count < 2) return 0.0;
        const double m = mean();
        return std::max(0.0, sumsq.value() / count - m * m);
    }
    double se() const { return count ? std::sqrt(variance() / count) : 0.0; }
};

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

inline LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
        syy += y[i] * y[i];
    }
    LinearFit f;
    const double den = n * sxx - sx * sx;
    if (den == 0.0) return f;
    f.slope = (n * sxy - sx * sy) / den;
    f.intercept = (sy - f.slope * sx) / n;
    double ssres = 0, sstot = 0;
    const double ym = sy / n;
    for (std::size_t i = 0; i < n; ++i) {
        const double fit = f.intercept + f.slope * x[i];
        ssres += (y[i] - fit) * (y[i] - fit);
        sstot += (y[i] - ym) * (y[i] - ym);
    }
    f.r2 = sstot > 0 ? 1.0 - ssres / sstot : 1.0;
    return f;
}

inline double normal_pdf(double y) {
    return std::exp(-0.5 * y * y) / std::sqrt(2.0 * 3.14159265358979323846);
}

inline double normal_cdf(double y) { return 0.5 * std::erfc(-y / std::sqrt(2.0)); }

// composite Simpson on [a,b]
template <class F>
double simpson(F f, double a, double b, int intervals) {
    if (intervals % 2) ++intervals;
    const double h = (b - a) / intervals;
    double s = f(a) + f(b);
    for (int i = 1; i < intervals; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

}  // namespace truncllt
