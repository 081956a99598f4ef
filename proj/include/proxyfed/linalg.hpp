#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace proxyfed {

using Vec = std::vector<double>;

// Dense row-major matrix. Small enough at desk scale that a flat vector
// beats any library dependency.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

    double& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }

    double* row(int i) { return a.data() + static_cast<std::size_t>(i) * cols; }
    const double* row(int i) const { return a.data() + static_cast<std::size_t>(i) * cols; }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

inline double dot(const double* x, const double* y, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
}

inline double dot(const Vec& x, const Vec& y) {
    if (x.size() != y.size()) throw std::invalid_argument("dot: length mismatch");
    return dot(x.data(), y.data(), static_cast<int>(x.size()));
}

inline double sq_dist(const double* x, const double* y, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        double d = x[i] - y[i];
        s += d * d;
    }
    return s;
}

inline double norm2(const double* x, int n) { return std::sqrt(dot(x, x, n)); }
inline double norm2(const Vec& x) { return norm2(x.data(), static_cast<int>(x.size())); }

// y += a*x
inline void axpy(double a, const Vec& x, Vec& y) {
    if (x.size() != y.size()) throw std::invalid_argument("axpy: length mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

// W x  (W: m×n, x: n) -> m
inline Vec matvec(const Mat& W, const Vec& x) {
    if (static_cast<int>(x.size()) != W.cols) throw std::invalid_argument("matvec: dimension mismatch");
    Vec y(W.rows);
    for (int i = 0; i < W.rows; ++i) y[i] = dot(W.row(i), x.data(), W.cols);
    return y;
}

// W^T y  (W: m×n, y: m) -> n
inline Vec matvec_t(const Mat& W, const Vec& y) {
    if (static_cast<int>(y.size()) != W.rows) throw std::invalid_argument("matvec_t: dimension mismatch");
    Vec x(W.cols, 0.0);
    for (int i = 0; i < W.rows; ++i) {
        const double* wi = W.row(i);
        for (int j = 0; j < W.cols; ++j) x[j] += wi[j] * y[i];
    }
    return x;
}

// A += scale * u v^T  (u: rows, v: cols)
inline void outer_acc(Mat& A, const Vec& u, const Vec& v, double scale = 1.0) {
    if (static_cast<int>(u.size()) != A.rows || static_cast<int>(v.size()) != A.cols)
        throw std::invalid_argument("outer_acc: dimension mismatch");
    for (int i = 0; i < A.rows; ++i) {
        double* ai = A.row(i);
        double su = scale * u[i];
        for (int j = 0; j < A.cols; ++j) ai[j] += su * v[j];
    }
}

// log(sum_i exp(s_i)), max-stabilized; exact up to rounding.
inline double log_sum_exp(const Vec& s) {
    if (s.empty()) throw std::invalid_argument("log_sum_exp: empty input");
    double m = *std::max_element(s.begin(), s.end());
    double acc = 0.0;
    for (double v : s) acc += std::exp(v - m);
    return m + std::log(acc);
}

// softmax with max-subtraction; output sums to 1 up to rounding, entries > 0.
inline Vec softmax(const Vec& logits) {
    if (logits.empty()) throw std::invalid_argument("softmax: empty input");
    double m = *std::max_element(logits.begin(), logits.end());
    Vec p(logits.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        acc += p[i];
    }
    for (double& v : p) v /= acc;
    return p;
}

// Index of the largest entry; ties resolved to the lowest index so that
// every downstream consumer agrees on pseudo-labels.
inline int argmax(const Vec& v) {
    if (v.empty()) throw std::invalid_argument("argmax: empty input");
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

}  // namespace proxyfed
