#include "sublora/config.hpp"

#include <algorithm>
#include <fstream>

namespace sublora {

std::string method_name(Method m) {
    switch (m) {
        case Method::Linear: return "linear";
        case Method::Diag: return "diag";
        case Method::SubG: return "sub_g";
        case Method::SubR: return "sub_r";
        case Method::HessG: return "hess_g";
    }
    return "?";
}

Method method_from_name(const std::string& name) {
    if (name == "linear") return Method::Linear;
    if (name == "diag") return Method::Diag;
    if (name == "sub_g") return Method::SubG;
    if (name == "sub_r") return Method::SubR;
    if (name == "hess_g") return Method::HessG;
    throw std::invalid_argument("unknown method: " + name);
}

std::vector<Method> all_methods() {
    return {Method::Linear, Method::Diag, Method::SubG, Method::SubR, Method::HessG};
}

namespace {

void check_keys(const nlohmann::json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
    require_arg(j.is_object(), where + " must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find_if(allowed.begin(), allowed.end(),
                         [&](const char* a) { return key == a; }) == allowed.end())
            throw std::invalid_argument("unknown key '" + key + "' in " + where);
    }
}

template <class T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void read_lambda(const nlohmann::json& j, const char* key, double& l1, double& l2) {
    if (!j.contains(key)) return;
    const auto v = j.at(key).get<std::vector<double>>();
    require_arg(v.size() == 2, std::string(key) + " must have two entries");
    l1 = v[0];
    l2 = v[1];
}

}  // namespace

RunConfig config_from_json(const nlohmann::json& j) {
    check_keys(j, "config",
               {"schema", "pde", "pretrain", "points", "weights", "network", "train", "prune",
                "alternating", "determination", "seeds", "io"});
    require_arg(j.contains("schema") && j.at("schema") == "sublora-run-v1",
                "config schema must be \"sublora-run-v1\"");
    RunConfig cfg;

    require_arg(j.contains("pde"), "config needs a pde section");
    const auto& pde = j.at("pde");
    check_keys(pde, "pde", {"family", "lambda"});
    cfg.family = family_from_name(pde.at("family").get<std::string>());
    read_lambda(pde, "lambda", cfg.lambda1, cfg.lambda2);

    if (j.contains("pretrain")) {
        const auto& p = j.at("pretrain");
        check_keys(p, "pretrain", {"lambda", "epochs"});
        read_lambda(p, "lambda", cfg.pretrain_lambda1, cfg.pretrain_lambda2);
        read_if(p, "epochs", cfg.pretrain_epochs);
    }
    if (j.contains("points")) {
        const auto& p = j.at("points");
        check_keys(p, "points", {"interior", "boundary", "test"});
        read_if(p, "interior", cfg.points.interior);
        read_if(p, "boundary", cfg.points.boundary);
        read_if(p, "test", cfg.points.test);
    }
    if (j.contains("weights")) {
        const auto& w = j.at("weights");
        check_keys(w, "weights", {"mu", "mu_b"});
        read_if(w, "mu", cfg.weights.mu);
        read_if(w, "mu_b", cfg.weights.mu_b);
    }
    if (j.contains("network")) {
        const auto& n = j.at("network");
        check_keys(n, "network", {"widths", "adapted_layers", "rank", "activation"});
        read_if(n, "widths", cfg.widths);
        read_if(n, "adapted_layers", cfg.adapted_layers);
        read_if(n, "rank", cfg.rank);
        if (n.contains("activation"))
            require_arg(n.at("activation") == "tanh", "only the tanh activation is supported");
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        check_keys(t, "train", {"epochs", "step_size", "beta1", "beta2", "epsilon"});
        read_if(t, "epochs", cfg.epochs);
        read_if(t, "step_size", cfg.step_size);
        read_if(t, "beta1", cfg.beta1);
        read_if(t, "beta2", cfg.beta2);
        read_if(t, "epsilon", cfg.epsilon);
    }
    if (j.contains("prune")) {
        const auto& p = j.at("prune");
        check_keys(p, "prune",
                   {"method", "budget", "budgets", "methods", "early_stop", "abs_scores",
                    "freeze_pruned", "reset_pruned_moments", "fd_step"});
        if (p.contains("method")) cfg.method = method_from_name(p.at("method").get<std::string>());
        read_if(p, "budget", cfg.budget);
        read_if(p, "budgets", cfg.budgets);
        if (p.contains("methods"))
            for (const auto& name : p.at("methods"))
                cfg.methods.push_back(method_from_name(name.get<std::string>()));
        read_if(p, "early_stop", cfg.early_stop);
        read_if(p, "abs_scores", cfg.abs_scores);
        read_if(p, "freeze_pruned", cfg.freeze_pruned);
        read_if(p, "reset_pruned_moments", cfg.reset_pruned_moments);
        read_if(p, "fd_step", cfg.fd_step);
    }
    if (j.contains("alternating")) {
        const auto& a = j.at("alternating");
        check_keys(a, "alternating", {"rounds"});
        read_if(a, "rounds", cfg.rounds);
    }
    if (j.contains("determination")) {
        const auto& d = j.at("determination");
        check_keys(d, "determination", {"interior", "boundary"});
        read_if(d, "interior", cfg.det_interior);
        read_if(d, "boundary", cfg.det_boundary);
    }
    if (j.contains("seeds")) {
        const auto& s = j.at("seeds");
        check_keys(s, "seeds", {"init", "data", "solver"});
        read_if(s, "init", cfg.seed_init);
        read_if(s, "data", cfg.seed_data);
        read_if(s, "solver", cfg.seed_solver);
    }
    if (j.contains("io")) {
        const auto& io = j.at("io");
        check_keys(io, "io",
                   {"pretrained_checkpoint", "finetuned_checkpoint", "metrics_csv", "report_json"});
        read_if(io, "pretrained_checkpoint", cfg.pretrained_checkpoint);
        read_if(io, "finetuned_checkpoint", cfg.finetuned_checkpoint);
        read_if(io, "metrics_csv", cfg.metrics_csv);
        read_if(io, "report_json", cfg.report_json);
    }

    if (cfg.widths.empty()) {
        cfg.widths = {cfg.problem().input_dim(), 1000, 1000, 1000, 1};
    }
    cfg.validate();
    return cfg;
}

nlohmann::json config_to_json(const RunConfig& cfg) {
    nlohmann::json methods = nlohmann::json::array();
    for (Method m : cfg.methods) methods.push_back(method_name(m));
    return nlohmann::json{
        {"schema", "sublora-run-v1"},
        {"pde", {{"family", family_name(cfg.family)}, {"lambda", {cfg.lambda1, cfg.lambda2}}}},
        {"pretrain",
         {{"lambda", {cfg.pretrain_lambda1, cfg.pretrain_lambda2}}, {"epochs", cfg.pretrain_epochs}}},
        {"points",
         {{"interior", cfg.points.interior},
          {"boundary", cfg.points.boundary},
          {"test", cfg.points.test}}},
        {"weights", {{"mu", cfg.weights.mu}, {"mu_b", cfg.weights.mu_b}}},
        {"network",
         {{"widths", cfg.widths},
          {"adapted_layers", cfg.adapted_layers},
          {"rank", cfg.rank},
          {"activation", "tanh"}}},
        {"train",
         {{"epochs", cfg.epochs},
          {"step_size", cfg.step_size},
          {"beta1", cfg.beta1},
          {"beta2", cfg.beta2},
          {"epsilon", cfg.epsilon}}},
        {"prune",
         {{"method", method_name(cfg.method)},
          {"budget", cfg.budget},
          {"budgets", cfg.budgets},
          {"methods", methods},
          {"early_stop", cfg.early_stop},
          {"abs_scores", cfg.abs_scores},
          {"freeze_pruned", cfg.freeze_pruned},
          {"reset_pruned_moments", cfg.reset_pruned_moments},
          {"fd_step", cfg.fd_step}}},
        {"alternating", {{"rounds", cfg.rounds}}},
        {"determination", {{"interior", cfg.det_interior}, {"boundary", cfg.det_boundary}}},
        {"seeds", {{"init", cfg.seed_init}, {"data", cfg.seed_data}, {"solver", cfg.seed_solver}}},
        {"io",
         {{"pretrained_checkpoint", cfg.pretrained_checkpoint},
          {"finetuned_checkpoint", cfg.finetuned_checkpoint},
          {"metrics_csv", cfg.metrics_csv},
          {"report_json", cfg.report_json}}}};
}

void RunConfig::validate() const {
    const PdeProblem prob = problem();
    require_arg(widths.size() >= 2, "network needs at least one layer");
    require_arg(widths.front() == prob.input_dim(),
                "network input width must match the problem dimension");
    require_arg(widths.back() == 1, "network output must be scalar");
    weights.validate();
    require_arg(points.interior >= 1, "need at least one interior point");
    require_arg(points.boundary >= 0 && points.test >= 1, "invalid point counts");
    require_arg(det_interior >= 1 && det_boundary >= 0, "invalid determination counts");
    require_arg(!adapted_layers.empty(), "need at least one adapted layer");
    for (int l : adapted_layers) {
        require_arg(l >= 0 && l + 1 < static_cast<int>(widths.size()), "adapted layer out of range");
        require_arg(rank <= std::min(widths[static_cast<size_t>(l)], widths[static_cast<size_t>(l) + 1]),
                    "rank exceeds layer dimensions");
    }
    require_arg(rank >= 1, "rank must be positive");
    for (int b : sweep_budgets())
        require_arg(b >= 0 && b <= sigma_total(), "budget exceeds total rank");
    require_arg(rounds >= 1, "alternating rounds must be >= 1");
    require_arg(epochs >= 1 && pretrain_epochs >= 1, "epoch counts must be >= 1");
    require_arg(step_size > 0.0 && fd_step > 0.0, "step sizes must be positive");
    require_arg(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "invalid moment decays");
}

std::string RunConfig::run_id() const {
    const std::string dump = config_to_json(*this).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : dump) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "run-%016llx", static_cast<unsigned long long>(h));
    return buf;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    require_arg(static_cast<bool>(in), "cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("config is not valid JSON: " + std::string(e.what()));
    }
    return config_from_json(j);
}

}  // namespace sublora
