#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sublora/linalg.hpp"

namespace sublora {

using IndexSet = std::vector<int>;

// Set-valued quadratic pruning objective in maximization form:
//
//   f(S) = <c_{S-}, x_{S-}> - 1/2 * x_{S-}^T Q_{S-} x_{S-},   S- = [n] \ S.
//
// S is the retained index set; the complement S- holds the pruned entries.
// Only this sign convention is stored; callers converting from a
// minimization form flip the sign of the whole expression and of the
// linear term at the boundary.
class QuadObjective {
  public:
    // Validates finiteness and symmetry. Q is symmetrized by (Q+Q^T)/2;
    // a pre-average asymmetry above 1e-8 is rejected.
    QuadObjective(Vec c, Mat q, Vec x);

    int size() const { return n_; }
    const Vec& linear() const { return c_; }
    const Mat& quadratic() const { return q_; }
    const Vec& values() const { return x_; }

    // Tolerance for structural sign checks, scaled to the instance.
    double structural_tol() const;

    nlohmann::json to_json() const;
    static QuadObjective from_json(const nlohmann::json& j);

  private:
    int n_;
    Vec c_;
    Mat q_;
    Vec x_;
};

double evaluate(const QuadObjective& obj, std::span<const int> kept);

// Incremental marginal-gain bookkeeping for the greedy solvers.
// partial_sums[j] = sum_{i in S-} Q_ij * x_i.
class GainState {
  public:
    GainState(const QuadObjective& obj, std::span<const int> kept);

    const QuadObjective& objective() const { return *obj_; }
    const std::vector<std::uint8_t>& kept_mask() const { return kept_; }
    const Vec& partial_sums() const { return s_; }
    int kept_count() const { return kept_count_; }

    // f(S + {j}) - f(S) in O(1); j must not be kept.
    double marginal_gain(int j) const;

    // Moves j into the kept set, updating partial sums in O(n).
    void add(int j);

  private:
    const QuadObjective* obj_;
    std::vector<std::uint8_t> kept_;
    Vec s_;
    int kept_count_ = 0;
};

inline GainState make_gain_state(const QuadObjective& obj, std::span<const int> kept) {
    return GainState(obj, kept);
}

struct PairViolation {
    int i;
    int j;
    double product;  // Q_ij * x_i * x_j
};

// Max-form submodularity condition: Q_ij * x_i * x_j >= -tol for i != j.
// Ties exactly at the tolerance boundary satisfy the constraint.
std::pair<bool, std::vector<PairViolation>> is_pairwise_submodular(const QuadObjective& obj,
                                                                   double tol);
inline std::pair<bool, std::vector<PairViolation>> is_pairwise_submodular(
    const QuadObjective& obj) {
    return is_pairwise_submodular(obj, obj.structural_tol());
}

// Ground-truth submodularity oracle: checks
// f(X) + f(Y) >= f(X u Y) + f(X n Y) - 1e-9 over all subset pairs.
// Guarded to n <= 12.
bool verify_lattice_exhaustive(const QuadObjective& obj);

// Exhaustive monotonicity oracle (all marginal gains >= -tol); n <= 12.
bool verify_monotone_exhaustive(const QuadObjective& obj, double tol = 1e-9);

// Sufficient condition for monotonicity of the max-form objective:
// ||c||_inf <= tol, Q_ii >= -tol, and the pairwise condition holds.
bool is_monotone_sufficient(const QuadObjective& obj, double tol);
inline bool is_monotone_sufficient(const QuadObjective& obj) {
    return is_monotone_sufficient(obj, obj.structural_tol());
}

}  // namespace sublora
