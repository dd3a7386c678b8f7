#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sublora/common.hpp"
#include "sublora/linalg.hpp"

namespace sublora {

enum class Activation { Tanh };

// Fully connected scalar-output network. Hidden layers apply the smooth
// activation; the output layer is linear.
struct MlpParams {
    std::vector<int> widths;    // n_0 .. n_L
    std::vector<Mat> weights;   // W[l]: widths[l+1] x widths[l]
    std::vector<Vec> biases;    // b[l]: widths[l+1]
    Activation activation = Activation::Tanh;

    int layer_count() const { return static_cast<int>(weights.size()); }
    int input_dim() const { return widths.front(); }
    void validate() const;
};

// Gaussian init scaled by 1/sqrt(fan_in); zero biases.
MlpParams init_mlp(const std::vector<int>& widths, std::uint64_t seed);

// Additive low-rank update for one layer: W_eff = W + U diag(sigma o active) V.
// Inactive entries contribute exactly zero to the effective weight; their
// sigma values are retained so gradients of the unmasked loss stay
// well-defined at sigma_j = 0.
struct LoraSvdAdapter {
    int layer = -1;
    Mat u;                            // widths[layer+1] x r
    Mat v;                            // r x widths[layer]
    Vec sigma;                        // r
    std::vector<std::uint8_t> active;  // retention mask

    int rank() const { return static_cast<int>(sigma.size()); }
    Vec masked_sigma() const;
};

// U, V Gaussian scaled by 1/sqrt(width); sigma = 0 so the fine-tuned
// network starts exactly at the base network; all mask entries active.
std::vector<LoraSvdAdapter> init_lora(const MlpParams& params, const std::vector<int>& layers,
                                      int rank, std::uint64_t seed);

// Global index over the concatenated singular values, contiguous per
// adapter in adapter order.
struct SigmaIndexMap {
    std::vector<std::pair<int, int>> entries;  // global -> (adapter slot, local index)
    std::vector<int> offsets;                  // per-adapter start

    int total() const { return static_cast<int>(entries.size()); }
    static SigmaIndexMap build(const std::vector<LoraSvdAdapter>& adapters);
    Vec gather(const std::vector<LoraSvdAdapter>& adapters) const;
    void scatter(const Vec& sigma, std::vector<LoraSvdAdapter>& adapters) const;
    std::vector<int> per_layer_counts(std::span<const int> kept) const;
};

enum class Region { Interior, Boundary, Initial };

struct EvalPoint {
    double x1 = 0.0;
    double x2 = 0.0;
    double t = 0.0;
    bool has_time = false;
    Region region = Region::Interior;

    int dim() const { return has_time ? 3 : 2; }
};

// Network value and exact input derivatives at one point. Time
// derivatives exist only for time-dependent inputs.
class FieldDerivs {
  public:
    double u = 0.0;
    double gx = 0.0;
    double gy = 0.0;
    double lap = 0.0;  // spatial Laplacian only

    bool has_time() const { return has_time_; }
    double ut() const {
        require_arg(has_time_, "time derivative requested on a stationary network");
        return ut_;
    }
    double utt() const {
        require_arg(has_time_, "time derivative requested on a stationary network");
        return utt_;
    }
    void set_time(double ut, double utt) {
        has_time_ = true;
        ut_ = ut;
        utt_ = utt;
    }

  private:
    bool has_time_ = false;
    double ut_ = 0.0;
    double utt_ = 0.0;
};

// Per-layer W + U diag(sigma o active) V; unadapted layers unchanged.
std::vector<Mat> effective_weights(const MlpParams& params,
                                   const std::vector<LoraSvdAdapter>& adapters);

// Owned effective weights plus a view of the base network; what the
// batch engine evaluates.
struct EffectiveNet {
    const MlpParams* base = nullptr;
    std::vector<Mat> weights;

    int layer_count() const { return base->layer_count(); }
    int input_dim() const { return base->input_dim(); }
};

EffectiveNet make_effective(const MlpParams& params, const std::vector<LoraSvdAdapter>& adapters);

// In-place rebuild that reuses the weight buffers of an existing net.
void update_effective(EffectiveNet& net, const MlpParams& params,
                      const std::vector<LoraSvdAdapter>& adapters);

double forward(const MlpParams& params, const std::vector<LoraSvdAdapter>& adapters,
               const EvalPoint& point);
FieldDerivs input_derivatives(const MlpParams& params, const std::vector<LoraSvdAdapter>& adapters,
                              const EvalPoint& point);

// ---------------------------------------------------------------------
// Batch evaluation engine. Blocks of points are propagated level by
// level; for directional passes each quantity carries (value, first,
// second) directional-derivative channels.

struct ValueCache {
    std::vector<Mat> in_a;  // input activations of each layer, level 0 = X
    Vec u;                  // output values
    int npts = 0;
};

struct Dual2Cache {
    std::vector<Mat> in_a, in_ad, in_add;  // input triples per layer
    std::vector<Mat> hid_sd, hid_sdd;      // hidden pre-activation dot/ddot
    Vec u, ud, udd;
    int npts = 0;
};

// Parameter-gradient accumulators over the effective weights. Layers
// with want_w[l] == 0 skip the dense outer products (LoRA fine-tuning
// only needs the adapted layers).
struct GradBuffers {
    std::vector<Mat> gw;
    std::vector<Vec> gb;
    std::vector<std::uint8_t> want_w;
    bool want_b = true;

    void init(const MlpParams& base, const std::vector<std::uint8_t>& want_weights, bool want_bias);
    void add(const GradBuffers& other);
};

void forward_values(const EffectiveNet& net, std::span<const EvalPoint> pts, ValueCache& cache);
void backward_values(const EffectiveNet& net, const ValueCache& cache, const Vec& weight,
                     GradBuffers& grads);

// dir: 0 = x1, 1 = x2, 2 = t.
void forward_dual2(const EffectiveNet& net, std::span<const EvalPoint> pts, int dir,
                   Dual2Cache& cache);
// Accumulates gradients of sum_p (wa_p u_p + wb_p ud_p + wc_p udd_p).
void backward_dual2(const EffectiveNet& net, const Dual2Cache& cache, const Vec& wa, const Vec& wb,
                    const Vec& wc, GradBuffers& grads);

// Projects effective-weight gradients onto the adapter factors:
// gU = GW V^T diag(s), gV = diag(s) U^T GW, gsigma_k = u_k^T GW v_k with
// s = sigma o active.
struct LoraGrads {
    std::vector<Mat> gu, gv;
    std::vector<Vec> gsigma;
};
LoraGrads project_lora_grads(const GradBuffers& grads,
                             const std::vector<LoraSvdAdapter>& adapters);

// Central-difference Hessian of a gradient map, with per-coordinate
// steps eps * (1 + |sigma_j|). The raw matrix is symmetrized; the
// pre-symmetrization residual is reported.
struct FdHessianResult {
    Mat hess;
    double asymmetry = 0.0;
};
FdHessianResult fd_hessian(const std::function<Vec(const Vec&)>& grad_fn, const Vec& sigma,
                           double eps);

// ---------------------------------------------------------------------
// Checkpoints: JSON manifest plus a little-endian IEEE-754 double blob
// with per-tensor byte offsets.

struct Checkpoint {
    MlpParams params;
    std::vector<LoraSvdAdapter> adapters;  // may be empty
    std::uint64_t seed = 0;
    nlohmann::json metadata;  // training metadata, free-form
};

void save_checkpoint(const std::string& stem, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& stem);

}  // namespace sublora
