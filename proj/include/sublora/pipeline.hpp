#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sublora/config.hpp"
#include "sublora/solvers.hpp"

namespace sublora {

class AdamOpt {
  public:
    AdamOpt(double lr, double b1, double b2, double eps)
        : lr_(lr), b1_(b1), b2_(b2), eps_(eps) {}

    void step(const std::vector<std::span<double>>& params,
              const std::vector<std::span<const double>>& grads);

    // Clears the moments of selected entries in one parameter slot;
    // used when a pruned entry is reset to zero, so stale momentum does
    // not immediately re-inflate it.
    void reset_entries(size_t slot, std::span<const int> entries);

  private:
    double lr_, b1_, b2_, eps_;
    long t_ = 0;
    std::vector<Vec> m_, v_;
};

struct TrainResult {
    double final_loss = 0.0;  // on the fixed determination set
    double rel_error = 0.0;   // on the fixed test set
};

struct RankReport {
    Method method = Method::SubG;
    int budget = 0;
    std::vector<int> kept;       // global indices, ascending
    std::vector<int> per_layer;  // kept counts per adapted layer
    double objective_value = 0.0;
    double loss_before = 0.0;
    double loss_after = 0.0;
    double rel_before = 0.0;
    double rel_after = 0.0;
    double stage_seconds = 0.0;  // problem formulation + solver
    std::uint64_t seed = 0;
    bool early_stopped = false;

    nlohmann::json to_json() const;
};

// Method dispatch on explicit problem data. `hess` is the full symmetric
// matrix; the diagonal method reads its diagonal, the linear baseline
// ignores it. Keep-scores: linear -g_j s_j (or |g_j s_j| with
// abs_scores), diag -g_j s_j + H_jj s_j^2 / 2; both solved by top-k.
// sub_g projects the Hessian before running greedy, hess_g runs greedy
// on the unprojected matrix, sub_r uses the randomized greedy.
struct MethodOutcome {
    Selection selection;
    double objective_value = 0.0;
};
MethodOutcome determine_from(Method method, const Vec& grad, const Mat& hess, const Vec& sigma,
                             int b, std::uint64_t seed, bool early_stop, bool abs_scores);

struct ModelContext {
    const MlpParams* params = nullptr;
    const std::vector<LoraSvdAdapter>* adapters = nullptr;
    PdeProblem problem;
    const PointSets* determination = nullptr;
    const PointSets* test = nullptr;
    LossWeights weights;
};

struct PruneFlags {
    bool early_stop = false;
    bool abs_scores = false;
    double fd_step = 1e-3;
};

// Stages 2-3: gradient/Hessian on the determination set, then the
// selected solver. stage_seconds covers exactly these two stages; the
// before/after metrics are reported outside the timed section.
RankReport determine_rank(const ModelContext& ctx, Method method, int b, std::uint64_t seed,
                          const PruneFlags& flags);

// Zeroes the complement sigma values; when set_mask is true also marks
// them inactive (the permanent mask of a final round, or the
// freeze-pruned policy).
void apply_pruning(std::vector<LoraSvdAdapter>& adapters, const SigmaIndexMap& map,
                   std::span<const int> kept, bool set_mask);

Checkpoint pretrain(const RunConfig& cfg);

// One fine-tuning stage over U, V, sigma with frozen base weights.
// Inactive sigma entries keep gradient zero and are re-pinned to zero
// after each step.
TrainResult finetune_stage(const MlpParams& params, std::vector<LoraSvdAdapter>& adapters,
                           const PdeProblem& problem, const RunConfig& cfg, int epochs,
                           AdamOpt& opt, std::uint64_t epoch_tag_base,
                           const PointSets& determination, const PointSets& test);

struct SweepResult {
    TrainResult finetuned;
    std::vector<RankReport> reports;  // one per (method, budget)
    std::vector<LoraSvdAdapter> adapters;
};
SweepResult run_sublora(const RunConfig& cfg, const Checkpoint& pretrained);

struct RoundRecord {
    int round = 0;
    double update_loss = 0.0;
    double update_rel = 0.0;
    RankReport prune;
};
struct AlternatingResult {
    std::vector<RoundRecord> rounds;
    double final_loss = 0.0;
    double final_rel = 0.0;
    std::vector<int> final_kept;
    std::vector<int> final_per_layer;
    std::vector<LoraSvdAdapter> adapters;
};
// Alternates cfg.rounds times between a fine-tuning stage and budgeted
// pruning. Pruned entries stay trainable between rounds (regrowth)
// unless cfg.freeze_pruned; the final round's mask is permanent either
// way, and the final metrics are computed with it enforced.
AlternatingResult run_alternating(const RunConfig& cfg, const Checkpoint& pretrained);

// Fixed point-set seeds derived from the data seed.
PointSets determination_sets(const RunConfig& cfg, const PdeProblem& problem);
PointSets test_sets(const RunConfig& cfg, const PdeProblem& problem);

}  // namespace sublora
