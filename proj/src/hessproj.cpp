#include "sublora/hessproj.hpp"

#include "sublora/common.hpp"

namespace sublora {

Mat project_to_submodular(const Mat& h, const Vec& x) {
    const int n = static_cast<int>(x.size());
    require_arg(h.rows == n && h.cols == n, "matrix/vector size mismatch");
    require_arg(all_finite(h) && all_finite(x), "inputs must be finite");
    require_arg(max_asymmetry(h) < 1e-8, "input matrix is not symmetric");
    Mat g = h;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            if (h(i, j) * x[static_cast<size_t>(i)] * x[static_cast<size_t>(j)] < 0.0) g(i, j) = 0.0;
        }
    return g;
}

bool feasible(const Mat& g, const Vec& x, double tol) {
    const int n = static_cast<int>(x.size());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            if (g(i, j) * x[static_cast<size_t>(i)] * x[static_cast<size_t>(j)] < -tol) return false;
        }
    return true;
}

}  // namespace sublora
