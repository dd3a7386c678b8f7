#include "sublora/quadobj.hpp"

#include <algorithm>
#include <cmath>

#include "sublora/common.hpp"

namespace sublora {

namespace {

std::vector<std::uint8_t> kept_mask_of(int n, std::span<const int> kept) {
    std::vector<std::uint8_t> mask(static_cast<size_t>(n), 0);
    for (int j : kept) {
        require_arg(j >= 0 && j < n, "index out of range");
        require_arg(!mask[static_cast<size_t>(j)], "duplicate index in set");
        mask[static_cast<size_t>(j)] = 1;
    }
    return mask;
}

}  // namespace

QuadObjective::QuadObjective(Vec c, Mat q, Vec x)
    : n_(static_cast<int>(x.size())), c_(std::move(c)), q_(std::move(q)), x_(std::move(x)) {
    require_arg(static_cast<int>(c_.size()) == n_, "linear term size mismatch");
    require_arg(q_.rows == n_ && q_.cols == n_, "quadratic term shape mismatch");
    require_arg(all_finite(c_) && all_finite(q_) && all_finite(x_), "objective entries must be finite");
    require_arg(max_asymmetry(q_) < 1e-8, "quadratic term is not symmetric");
    symmetrize(q_);
}

double QuadObjective::structural_tol() const {
    return 1e-12 * std::max(1.0, inf_norm(q_) * inf_norm(x_) * inf_norm(x_));
}

nlohmann::json QuadObjective::to_json() const {
    return nlohmann::json{{"n", n_}, {"c", c_}, {"Q", q_.a}, {"x", x_}};
}

QuadObjective QuadObjective::from_json(const nlohmann::json& j) {
    const int n = j.at("n").get<int>();
    Mat q(n, n);
    q.a = j.at("Q").get<Vec>();
    require_arg(static_cast<int>(q.a.size()) == n * n, "Q length mismatch");
    return QuadObjective(j.at("c").get<Vec>(), std::move(q), j.at("x").get<Vec>());
}

double evaluate(const QuadObjective& obj, std::span<const int> kept) {
    const int n = obj.size();
    const auto mask = kept_mask_of(n, kept);
    const Vec& c = obj.linear();
    const Vec& x = obj.values();
    const Mat& q = obj.quadratic();
    double lin = 0.0, quad = 0.0;
    for (int i = 0; i < n; ++i) {
        if (mask[static_cast<size_t>(i)]) continue;
        lin += c[static_cast<size_t>(i)] * x[static_cast<size_t>(i)];
        const double* qrow = q.row(i);
        double s = 0.0;
        for (int k = 0; k < n; ++k)
            if (!mask[static_cast<size_t>(k)]) s += qrow[k] * x[static_cast<size_t>(k)];
        quad += x[static_cast<size_t>(i)] * s;
    }
    return lin - 0.5 * quad;
}

GainState::GainState(const QuadObjective& obj, std::span<const int> kept)
    : obj_(&obj),
      kept_(kept_mask_of(obj.size(), kept)),
      s_(static_cast<size_t>(obj.size()), 0.0),
      kept_count_(static_cast<int>(kept.size())) {
    const int n = obj.size();
    const Mat& q = obj.quadratic();
    const Vec& x = obj.values();
    for (int i = 0; i < n; ++i) {
        if (kept_[static_cast<size_t>(i)]) continue;
        const double xi = x[static_cast<size_t>(i)];
        const double* qrow = q.row(i);
        for (int j = 0; j < n; ++j) s_[static_cast<size_t>(j)] += qrow[j] * xi;
    }
}

double GainState::marginal_gain(int j) const {
    const int n = obj_->size();
    require_arg(j >= 0 && j < n, "index out of range");
    require_arg(!kept_[static_cast<size_t>(j)], "element already kept");
    const double xj = obj_->values()[static_cast<size_t>(j)];
    const double cj = obj_->linear()[static_cast<size_t>(j)];
    const double qjj = obj_->quadratic()(j, j);
    return -cj * xj - 0.5 * qjj * xj * xj + xj * s_[static_cast<size_t>(j)];
}

void GainState::add(int j) {
    const int n = obj_->size();
    require_arg(j >= 0 && j < n, "index out of range");
    require_arg(!kept_[static_cast<size_t>(j)], "element already kept");
    kept_[static_cast<size_t>(j)] = 1;
    ++kept_count_;
    const double xj = obj_->values()[static_cast<size_t>(j)];
    const Mat& q = obj_->quadratic();
    const double* qrow = q.row(j);
    for (int i = 0; i < n; ++i) s_[static_cast<size_t>(i)] -= qrow[i] * xj;
}

std::pair<bool, std::vector<PairViolation>> is_pairwise_submodular(const QuadObjective& obj,
                                                                   double tol) {
    std::vector<PairViolation> bad;
    const int n = obj.size();
    const Mat& q = obj.quadratic();
    const Vec& x = obj.values();
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double prod = q(i, j) * x[static_cast<size_t>(i)] * x[static_cast<size_t>(j)];
            if (prod < -tol) bad.push_back({i, j, prod});
        }
    return {bad.empty(), std::move(bad)};
}

namespace {

// All 2^n objective values, indexed by the kept-set bitmask.
Vec all_subset_values(const QuadObjective& obj) {
    const int n = obj.size();
    const Vec& c = obj.linear();
    const Vec& x = obj.values();
    const Mat& q = obj.quadratic();
    const std::uint32_t count = 1u << n;
    Vec vals(count, 0.0);
    for (std::uint32_t mask = 0; mask < count; ++mask) {
        double lin = 0.0, quad = 0.0;
        for (int i = 0; i < n; ++i) {
            if (mask & (1u << i)) continue;
            lin += c[static_cast<size_t>(i)] * x[static_cast<size_t>(i)];
            const double* qrow = q.row(i);
            double s = 0.0;
            for (int k = 0; k < n; ++k)
                if (!(mask & (1u << k))) s += qrow[k] * x[static_cast<size_t>(k)];
            quad += x[static_cast<size_t>(i)] * s;
        }
        vals[mask] = lin - 0.5 * quad;
    }
    return vals;
}

}  // namespace

bool verify_lattice_exhaustive(const QuadObjective& obj) {
    const int n = obj.size();
    if (n > 12) throw CapacityError("lattice verification limited to n <= 12");
    const Vec vals = all_subset_values(obj);
    const std::uint32_t count = 1u << n;
    for (std::uint32_t a = 0; a < count; ++a)
        for (std::uint32_t b = a; b < count; ++b) {
            const double lhs = vals[a] + vals[b];
            const double rhs = vals[a | b] + vals[a & b];
            if (lhs < rhs - 1e-9) return false;
        }
    return true;
}

bool verify_monotone_exhaustive(const QuadObjective& obj, double tol) {
    const int n = obj.size();
    if (n > 12) throw CapacityError("monotonicity verification limited to n <= 12");
    const Vec vals = all_subset_values(obj);
    const std::uint32_t count = 1u << n;
    for (std::uint32_t mask = 0; mask < count; ++mask)
        for (int j = 0; j < n; ++j) {
            if (mask & (1u << j)) continue;
            if (vals[mask | (1u << j)] - vals[mask] < -tol) return false;
        }
    return true;
}

bool is_monotone_sufficient(const QuadObjective& obj, double tol) {
    if (inf_norm(obj.linear()) > tol) return false;
    for (int i = 0; i < obj.size(); ++i)
        if (obj.quadratic()(i, i) < -tol) return false;
    return is_pairwise_submodular(obj, tol).first;
}

}  // namespace sublora
