#pragma once

#include "sublora/linalg.hpp"

namespace sublora {

// Frobenius-nearest matrix G with G_ij * x_i * x_j >= 0 off the diagonal.
// Entrywise closed form: diagonal preserved; off-diagonal entries whose
// sign fights the product x_i * x_j are zeroed, all others kept. Keeping
// the entry when the product is exactly zero preserves information and
// makes the map idempotent.
Mat project_to_submodular(const Mat& h, const Vec& x);

// Constraint check for the projection output (and for candidate
// replacements in tests): G_ij * x_i * x_j >= -tol for all i != j.
bool feasible(const Mat& g, const Vec& x, double tol);

}  // namespace sublora
