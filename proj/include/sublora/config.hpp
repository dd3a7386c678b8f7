#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "sublora/pinn.hpp"

namespace sublora {

enum class Method { Linear, Diag, SubG, SubR, HessG };

std::string method_name(Method m);
Method method_from_name(const std::string& name);
std::vector<Method> all_methods();

// Experiment configuration: versioned JSON with strict key checking.
struct RunConfig {
    // pde
    PdeFamily family = PdeFamily::Elliptic;
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double pretrain_lambda1 = 1.0;
    double pretrain_lambda2 = 0.0;

    // points / loss
    PointCounts points;
    LossWeights weights;

    // network; widths default to [input_dim, 1000, 1000, 1000, 1] when
    // omitted in the JSON, adapted layers to the hidden-to-hidden pair.
    std::vector<int> widths;
    std::vector<int> adapted_layers{1, 2};
    int rank = 50;

    // optimizer
    int pretrain_epochs = 2000;
    int epochs = 100;  // per fine-tuning stage
    double step_size = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    // pruning
    Method method = Method::SubG;
    int budget = 40;
    std::vector<int> budgets;        // sweep grid; falls back to {budget}
    std::vector<Method> methods;     // sweep grid; falls back to {method}
    bool early_stop = false;
    bool abs_scores = false;
    bool freeze_pruned = false;
    bool reset_pruned_moments = true;
    double fd_step = 1e-3;

    // alternating
    int rounds = 5;

    // rank-determination data
    int det_interior = 2048;
    int det_boundary = 256;

    // seeds
    std::uint64_t seed_init = 1;
    std::uint64_t seed_data = 2;
    std::uint64_t seed_solver = 3;

    // io
    std::string pretrained_checkpoint;
    std::string finetuned_checkpoint;
    std::string metrics_csv;
    std::string report_json;

    PdeProblem problem() const { return {family, lambda1, lambda2}; }
    PdeProblem pretrain_problem() const { return {family, pretrain_lambda1, pretrain_lambda2}; }
    int sigma_total() const { return rank * static_cast<int>(adapted_layers.size()); }
    std::vector<int> sweep_budgets() const { return budgets.empty() ? std::vector<int>{budget} : budgets; }
    std::vector<Method> sweep_methods() const { return methods.empty() ? std::vector<Method>{method} : methods; }

    void validate() const;
    // Deterministic id derived from the config contents, so re-runs emit
    // identical metrics rows.
    std::string run_id() const;
};

RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& cfg);
RunConfig load_config(const std::string& path);

}  // namespace sublora
