#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sublora/quadobj.hpp"
#include "sublora/rng.hpp"

namespace sublora::properties {

// Unstructured instance: symmetric Q with mixed signs, values of x in
// [-2, 2] with occasional exact zeros. Fodder for the pairwise-vs-lattice
// equivalence checks.
QuadObjective random_instance(Rng& rng, int n);

// Monotone submodular construction:
//   c = 0, Q = diag(d) + M with d_i >= 0, M_ii = 0 and each off-diagonal
//   pair assigned sign(x_i * x_j) * magnitude so that M_ij * x_i * x_j >= 0.
// Every marginal gain is then nonnegative and the objective is monotone
// and submodular; values are <= 0 with f([n]) = 0, so tests shift by
// -f(empty) (gains and argmax choices are shift-invariant) to obtain the
// nonnegative instances required by the greedy ratio bound.
QuadObjective random_monotone_submodular(Rng& rng, int n);

// Same quadratic structure, random nonzero linear term: submodular but
// generally non-monotone. Tests shift by -min_S f(S) for nonnegativity.
QuadObjective random_submodular(Rng& rng, int n);

// Exhaustive min over all subsets (n <= 12); used for the nonnegativity
// shift of non-monotone instances.
double min_value_exhaustive(const QuadObjective& obj);

struct SuiteResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

// Scaled-down versions of the structural property suites, runnable from
// the CLI selftest. Each entry prints one line through the caller.
std::vector<SuiteResult> run_selftest(std::uint64_t seed);

}  // namespace sublora::properties
