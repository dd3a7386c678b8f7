#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "sublora/common.hpp"

namespace sublora {

using Vec = std::vector<double>;

// Dense row-major matrix. Batch buffers reuse it with rows = width and
// cols = number of points in the block, so the per-neuron stripes stay
// contiguous for vectorized inner loops.
struct Mat {
    int rows = 0;
    int cols = 0;
    Vec a;

    Mat() = default;
    Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), a(static_cast<size_t>(r) * c, fill) {}

    double& operator()(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }
    double* row(int i) { return a.data() + static_cast<size_t>(i) * cols; }
    const double* row(int i) const { return a.data() + static_cast<size_t>(i) * cols; }
    bool empty() const { return a.empty(); }
    void zero() { std::fill(a.begin(), a.end(), 0.0); }

    // Resize reusing capacity; existing contents are unspecified.
    void reshape(int r, int c) {
        rows = r;
        cols = c;
        a.resize(static_cast<size_t>(r) * c);
    }
    bool same_shape(int r, int c) const { return rows == r && cols == c; }
};

inline bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline bool all_finite(const Mat& m) { return all_finite(m.a); }

inline double inf_norm(const Vec& v) {
    double r = 0.0;
    for (double x : v) r = std::max(r, std::fabs(x));
    return r;
}

inline double inf_norm(const Mat& m) { return inf_norm(m.a); }

inline double max_asymmetry(const Mat& m) {
    double r = 0.0;
    for (int i = 0; i < m.rows; ++i)
        for (int j = i + 1; j < m.cols; ++j) r = std::max(r, std::fabs(m(i, j) - m(j, i)));
    return r;
}

inline void symmetrize(Mat& m) {
    for (int i = 0; i < m.rows; ++i)
        for (int j = i + 1; j < m.cols; ++j) {
            const double v = 0.5 * (m(i, j) + m(j, i));
            m(i, j) = v;
            m(j, i) = v;
        }
}

inline double frobenius_distance(const Mat& a, const Mat& b) {
    double s = 0.0;
    for (size_t k = 0; k < a.a.size(); ++k) {
        const double d = a.a[k] - b.a[k];
        s += d * d;
    }
    return std::sqrt(s);
}

// out[M x N] += W[M x K] * A[K x N]
inline void gemm_acc(const Mat& w, const Mat& a, Mat& out) {
    const int m = w.rows, k = w.cols, n = a.cols;
    for (int i = 0; i < m; ++i) {
        double* orow = out.row(i);
        const double* wrow = w.row(i);
        for (int l = 0; l < k; ++l) {
            const double wv = wrow[l];
            if (wv == 0.0) continue;
            const double* arow = a.row(l);
            for (int p = 0; p < n; ++p) orow[p] += wv * arow[p];
        }
    }
}

// out[K x N] += W^T[K x M] * P[M x N]
inline void gemm_tn_acc(const Mat& w, const Mat& p, Mat& out) {
    const int m = w.rows, k = w.cols, n = p.cols;
    for (int i = 0; i < m; ++i) {
        const double* wrow = w.row(i);
        const double* prow = p.row(i);
        for (int l = 0; l < k; ++l) {
            const double wv = wrow[l];
            if (wv == 0.0) continue;
            double* orow = out.row(l);
            for (int q = 0; q < n; ++q) orow[q] += wv * prow[q];
        }
    }
}

// gw[M x K] += P[M x N] * A[K x N]^T
// Eight independent accumulator lanes so the reduction vectorizes; the
// lane split is fixed, keeping results identical from run to run.
inline void gemm_nt_acc(const Mat& p, const Mat& a, Mat& gw) {
    const int m = p.rows, k = a.rows, n = p.cols;
    for (int i = 0; i < m; ++i) {
        const double* prow = p.row(i);
        double* grow = gw.row(i);
        for (int l = 0; l < k; ++l) {
            const double* arow = a.row(l);
            double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
            int q = 0;
            for (; q + 8 <= n; q += 8)
                for (int lane = 0; lane < 8; ++lane) acc[lane] += prow[q + lane] * arow[q + lane];
            double s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) +
                       ((acc[4] + acc[5]) + (acc[6] + acc[7]));
            for (; q < n; ++q) s += prow[q] * arow[q];
            grow[l] += s;
        }
    }
}

inline Vec matvec(const Mat& m, const Vec& x) {
    Vec y(m.rows, 0.0);
    for (int i = 0; i < m.rows; ++i) {
        const double* row = m.row(i);
        double s = 0.0;
        for (int j = 0; j < m.cols; ++j) s += row[j] * x[j];
        y[i] = s;
    }
    return y;
}

}  // namespace sublora
