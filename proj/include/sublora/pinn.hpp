#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sublora/autonet.hpp"

namespace sublora {

enum class PdeFamily { Elliptic, AllenCahn, Hyperbolic };

std::string family_name(PdeFamily f);
PdeFamily family_from_name(const std::string& name);

// Parameterized PDE on the unit disk; time-dependent families live on
// [0,1] x disk. Manufactured exact solutions share the radial profile
//   U(rho) = sin(pi*lambda1/2 * (1-rho)^2.5) + lambda2 * sin(pi/2 * (1-rho)),
// multiplied by 1 (elliptic), e^{-t} (Allen-Cahn) or e^{t^2}-1 (hyperbolic).
struct PdeProblem {
    PdeFamily family = PdeFamily::Elliptic;
    double lambda1 = 1.0;
    double lambda2 = 0.0;

    bool time_dependent() const { return family != PdeFamily::Elliptic; }
    int input_dim() const { return time_dependent() ? 3 : 2; }
};

struct LossWeights {
    double mu = 1.0;
    double mu_b = 1.0;

    void validate() const {
        require_arg(mu > 0.0 && mu_b > 0.0, "loss weights must be positive");
    }
};

struct PointCounts {
    int interior = 4096;
    int boundary = 512;  // initial sets reuse this count
    int test = 10000;
};

struct PointSets {
    std::vector<EvalPoint> interior;
    std::vector<EvalPoint> boundary;
    std::vector<EvalPoint> initial;  // time-dependent families only
    std::vector<EvalPoint> test;
    Vec test_values;  // exact solution at the test points
};

double exact_solution(const PdeProblem& problem, const EvalPoint& point);

// Manufactured forcing g = D[u_exact], evaluated from the closed-form
// radial/temporal derivatives (see radial_profile in pinn.cpp).
double forcing(const PdeProblem& problem, const EvalPoint& point);

// Boundary/initial data defined as traces of the exact solution.
double boundary_value(const PdeProblem& problem, const EvalPoint& point);
double initial_value(const PdeProblem& problem, const EvalPoint& point);
double initial_velocity(const PdeProblem& problem, const EvalPoint& point);  // hyperbolic

// Interior uniform on the disk (sqrt-radius polar sampling), boundary
// uniform on the circle, times uniform on [0,1]; initial points at t=0.
PointSets sample_points(const PdeProblem& problem, const PointCounts& counts, std::uint64_t seed);

// D[fields] - g at one point. Works on any field record, so oracle
// harnesses can feed finite-difference fields of the exact solution.
double pde_residual(const FieldDerivs& fields, const PdeProblem& problem, const EvalPoint& point);
double pde_residual(const MlpParams& params, const std::vector<LoraSvdAdapter>& adapters,
                    const PdeProblem& problem, const EvalPoint& point);

struct LossParts {
    double interior = 0.0;
    double boundary = 0.0;
    double initial = 0.0;
    double velocity = 0.0;

    double total() const { return interior + boundary + initial + velocity; }
};

// Physics-informed loss over the point sets:
//   mu/N sum r^2 + mu_b/N_b sum (u - h)^2 (+ initial and, for the
//   hyperbolic family, initial-velocity mismatches at weight mu_b).
// When grads is non-null, gradients w.r.t. the effective weights are
// accumulated (layers selected by grads->want_w). Block-parallel with a
// fixed merge order, so results do not depend on the thread count.
LossParts pinn_loss(const EffectiveNet& net, const PdeProblem& problem, const PointSets& sets,
                    const LossWeights& weights, GradBuffers* grads = nullptr);

inline double total_loss(const EffectiveNet& net, const PdeProblem& problem, const PointSets& sets,
                         const LossWeights& weights) {
    return pinn_loss(net, problem, sets, weights).total();
}

// sqrt( sum (phi - u)^2 / sum u^2 ) over the test set.
double relative_error(const EffectiveNet& net, const PointSets& sets);

// Binds a network state to a fixed determination set; provides the loss,
// sigma-gradient, and finite-difference sigma-Hessian used by the rank
// determination stages. Masked sigma entries are folded to zero at
// construction, and derivatives use the unmasked loss at those values.
class PinnEvaluator {
  public:
    PinnEvaluator(const MlpParams& params, std::vector<LoraSvdAdapter> adapters,
                  PdeProblem problem, PointSets sets, LossWeights weights);

    int sigma_size() const { return map_.total(); }
    const SigmaIndexMap& index_map() const { return map_; }
    const Vec& sigma() const { return sigma_; }

    double loss_at(const Vec& sigma);
    double loss() { return loss_at(sigma_); }
    Vec sigma_gradient_at(const Vec& sigma);
    Vec sigma_gradient() { return sigma_gradient_at(sigma_); }
    FdHessianResult sigma_hessian(double eps);
    Vec hessian_diagonal(double eps);  // via loss second differences

  private:
    const MlpParams* params_;
    std::vector<LoraSvdAdapter> adapters_;
    PdeProblem problem_;
    PointSets sets_;
    LossWeights weights_;
    SigmaIndexMap map_;
    Vec sigma_;
    EffectiveNet net_;     // reused across evaluations
    GradBuffers grads_;
};

}  // namespace sublora
