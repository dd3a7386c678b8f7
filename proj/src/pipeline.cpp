#include "sublora/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "sublora/hessproj.hpp"
#include "sublora/rng.hpp"

namespace sublora {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

constexpr std::uint64_t kDeterminationTag = 0xD371;
constexpr std::uint64_t kTestTag = 0x7E57;
constexpr std::uint64_t kPretrainEpochTag = 0x500000000ULL;
constexpr std::uint64_t kFinetuneEpochTag = 0xF00000000ULL;

}  // namespace

void AdamOpt::step(const std::vector<std::span<double>>& params,
                   const std::vector<std::span<const double>>& grads) {
    require_arg(params.size() == grads.size(), "parameter/gradient slot mismatch");
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.emplace_back(p.size(), 0.0);
            v_.emplace_back(p.size(), 0.0);
        }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (size_t s = 0; s < params.size(); ++s) {
        require_arg(params[s].size() == grads[s].size() && params[s].size() == m_[s].size(),
                    "parameter slot size changed");
        double* p = params[s].data();
        const double* g = grads[s].data();
        double* m = m_[s].data();
        double* v = v_[s].data();
        for (size_t i = 0; i < params[s].size(); ++i) {
            m[i] = b1_ * m[i] + (1.0 - b1_) * g[i];
            v[i] = b2_ * v[i] + (1.0 - b2_) * g[i] * g[i];
            p[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
        }
    }
}

void AdamOpt::reset_entries(size_t slot, std::span<const int> entries) {
    if (slot >= m_.size()) return;  // not stepped yet
    for (int e : entries) {
        m_[slot][static_cast<size_t>(e)] = 0.0;
        v_[slot][static_cast<size_t>(e)] = 0.0;
    }
}

nlohmann::json RankReport::to_json() const {
    return nlohmann::json{{"method", method_name(method)},
                          {"budget", budget},
                          {"kept", kept},
                          {"kept_per_layer", per_layer},
                          {"objective_value", objective_value},
                          {"loss_before", loss_before},
                          {"loss_after", loss_after},
                          {"rel_before", rel_before},
                          {"rel_after", rel_after},
                          {"stage_seconds", stage_seconds},
                          {"seed", seed},
                          {"early_stopped", early_stopped}};
}

MethodOutcome determine_from(Method method, const Vec& grad, const Mat& hess, const Vec& sigma,
                             int b, std::uint64_t seed, bool early_stop, bool abs_scores) {
    const int n = static_cast<int>(sigma.size());
    require_arg(static_cast<int>(grad.size()) == n, "gradient size mismatch");
    require_arg(b >= 0 && b <= n, "budget exceeds total rank");
    MethodOutcome out;
    switch (method) {
        case Method::Linear: {
            // Keep the entries whose removal costs the most under the
            // first-order expansion: keep-score -g_j s_j (AdaLoRA-style
            // magnitude variant |g_j s_j| behind abs_scores).
            Vec scores(static_cast<size_t>(n), 0.0);
            for (int j = 0; j < n; ++j) {
                const double raw = grad[static_cast<size_t>(j)] * sigma[static_cast<size_t>(j)];
                scores[static_cast<size_t>(j)] = abs_scores ? std::fabs(raw) : -raw;
            }
            Selection sel;
            sel.kept = top_k_select(scores, b);
            sel.budget = b;
            sel.method = "linear";
            const QuadObjective obj(grad, Mat(n, n), sigma);
            sel.value = evaluate(obj, sel.kept);
            out.objective_value = sel.value;
            out.selection = std::move(sel);
            break;
        }
        case Method::Diag: {
            require_arg(hess.rows == n && hess.cols == n, "hessian size mismatch");
            Vec scores(static_cast<size_t>(n), 0.0);
            Mat d(n, n);
            for (int j = 0; j < n; ++j) {
                const double sj = sigma[static_cast<size_t>(j)];
                d(j, j) = hess(j, j);
                scores[static_cast<size_t>(j)] =
                    -grad[static_cast<size_t>(j)] * sj + 0.5 * hess(j, j) * sj * sj;
            }
            Selection sel;
            sel.kept = top_k_select(scores, b);
            sel.budget = b;
            sel.method = "diag";
            const QuadObjective obj(grad, std::move(d), sigma);
            sel.value = evaluate(obj, sel.kept);
            out.objective_value = sel.value;
            out.selection = std::move(sel);
            break;
        }
        case Method::SubG:
        case Method::SubR:
        case Method::HessG: {
            require_arg(hess.rows == n && hess.cols == n, "hessian size mismatch");
            Mat q = method == Method::HessG ? hess : project_to_submodular(hess, sigma);
            const QuadObjective obj(grad, std::move(q), sigma);
            Selection sel = method == Method::SubR ? randomized_greedy_max(obj, b, seed)
                                                   : greedy_max(obj, b, early_stop);
            out.objective_value = sel.value;
            out.selection = std::move(sel);
            break;
        }
    }
    std::sort(out.selection.kept.begin(), out.selection.kept.end());
    return out;
}

PointSets determination_sets(const RunConfig& cfg, const PdeProblem& problem) {
    PointCounts counts;
    counts.interior = cfg.det_interior;
    counts.boundary = cfg.det_boundary;
    counts.test = 0;
    return sample_points(problem, counts, mix_seed(cfg.seed_data, kDeterminationTag));
}

PointSets test_sets(const RunConfig& cfg, const PdeProblem& problem) {
    PointCounts counts;
    counts.interior = 1;  // unused
    counts.boundary = 0;
    counts.test = cfg.points.test;
    return sample_points(problem, counts, mix_seed(cfg.seed_data, kTestTag));
}

void apply_pruning(std::vector<LoraSvdAdapter>& adapters, const SigmaIndexMap& map,
                   std::span<const int> kept, bool set_mask) {
    std::vector<std::uint8_t> keep(static_cast<size_t>(map.total()), 0);
    for (int g : kept) {
        require_arg(g >= 0 && g < map.total(), "kept index out of range");
        keep[static_cast<size_t>(g)] = 1;
    }
    for (int g = 0; g < map.total(); ++g) {
        const auto [slot, local] = map.entries[static_cast<size_t>(g)];
        if (!keep[static_cast<size_t>(g)]) {
            adapters[static_cast<size_t>(slot)].sigma[static_cast<size_t>(local)] = 0.0;
            if (set_mask) adapters[static_cast<size_t>(slot)].active[static_cast<size_t>(local)] = 0;
        }
    }
}

RankReport determine_rank(const ModelContext& ctx, Method method, int b, std::uint64_t seed,
                          const PruneFlags& flags) {
    PinnEvaluator eval(*ctx.params, *ctx.adapters, ctx.problem, *ctx.determination, ctx.weights);
    const int n = eval.sigma_size();
    require_arg(b >= 0 && b <= n, "budget exceeds total rank");

    RankReport report;
    report.method = method;
    report.budget = b;
    report.seed = seed;

    // Stage 2: problem formulation on the determination set.
    const auto t0 = Clock::now();
    const Vec grad = eval.sigma_gradient();
    Mat hess(n, n);
    if (method == Method::SubG || method == Method::SubR || method == Method::HessG) {
        hess = eval.sigma_hessian(flags.fd_step).hess;
    } else if (method == Method::Diag) {
        const Vec d = eval.hessian_diagonal(flags.fd_step);
        for (int j = 0; j < n; ++j) hess(j, j) = d[static_cast<size_t>(j)];
    }
    // Stage 3: solver.
    MethodOutcome outcome =
        determine_from(method, grad, hess, eval.sigma(), b, seed, flags.early_stop, flags.abs_scores);
    report.stage_seconds = seconds_since(t0);

    report.kept = outcome.selection.kept;
    report.objective_value = outcome.objective_value;
    report.early_stopped = outcome.selection.early_stopped;
    report.per_layer = eval.index_map().per_layer_counts(report.kept);

    // Reporting (outside the timed stages): loss on the determination
    // set and relative error on the test set, before and after zeroing
    // the pruned entries.
    report.loss_before = eval.loss();
    Vec pruned_sigma = eval.sigma();
    std::vector<std::uint8_t> keep(static_cast<size_t>(n), 0);
    for (int g : report.kept) keep[static_cast<size_t>(g)] = 1;
    for (int g = 0; g < n; ++g)
        if (!keep[static_cast<size_t>(g)]) pruned_sigma[static_cast<size_t>(g)] = 0.0;
    report.loss_after = eval.loss_at(pruned_sigma);

    std::vector<LoraSvdAdapter> pruned = *ctx.adapters;
    const SigmaIndexMap map = SigmaIndexMap::build(pruned);
    report.rel_before = relative_error(make_effective(*ctx.params, *ctx.adapters), *ctx.test);
    apply_pruning(pruned, map, report.kept, true);
    report.rel_after = relative_error(make_effective(*ctx.params, pruned), *ctx.test);
    return report;
}

namespace {

struct TrainableView {
    std::vector<std::span<double>> params;
    std::vector<std::span<const double>> grads;
};

TrainableView pretrain_view(MlpParams& params, GradBuffers& grads) {
    TrainableView view;
    for (size_t l = 0; l < params.weights.size(); ++l) {
        view.params.emplace_back(params.weights[l].a);
        view.grads.emplace_back(grads.gw[l].a);
    }
    for (size_t l = 0; l < params.biases.size(); ++l) {
        view.params.emplace_back(params.biases[l]);
        view.grads.emplace_back(grads.gb[l]);
    }
    return view;
}

TrainableView lora_view(std::vector<LoraSvdAdapter>& adapters, LoraGrads& grads) {
    TrainableView view;
    for (size_t a = 0; a < adapters.size(); ++a) {
        view.params.emplace_back(adapters[a].u.a);
        view.grads.emplace_back(grads.gu[a].a);
        view.params.emplace_back(adapters[a].v.a);
        view.grads.emplace_back(grads.gv[a].a);
        view.params.emplace_back(adapters[a].sigma);
        view.grads.emplace_back(grads.gsigma[a]);
    }
    return view;
}

}  // namespace

Checkpoint pretrain(const RunConfig& cfg) {
    cfg.validate();
    const PdeProblem problem = cfg.pretrain_problem();
    MlpParams params = init_mlp(cfg.widths, cfg.seed_init);
    AdamOpt opt(cfg.step_size, cfg.beta1, cfg.beta2, cfg.epsilon);
    const std::vector<std::uint8_t> want_all(params.weights.size(), 1);
    const std::vector<LoraSvdAdapter> no_adapters;

    PointCounts counts = cfg.points;
    counts.test = 0;
    for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
        const PointSets sets =
            sample_points(problem, counts, mix_seed(cfg.seed_data, kPretrainEpochTag + epoch));
        const EffectiveNet net = make_effective(params, no_adapters);
        GradBuffers grads;
        grads.init(params, want_all, true);
        try {
            pinn_loss(net, problem, sets, cfg.weights, &grads);
        } catch (const NumericError& e) {
            throw NumericError("pretraining diverged at epoch " + std::to_string(epoch) + ": " +
                               e.what());
        }
        const TrainableView view = pretrain_view(params, grads);
        opt.step(view.params, view.grads);
    }

    const PointSets det = determination_sets(cfg, problem);
    const PointSets test = test_sets(cfg, problem);
    const EffectiveNet net = make_effective(params, no_adapters);
    const double final_loss = pinn_loss(net, problem, det, cfg.weights).total();
    const double rel = relative_error(net, test);

    Checkpoint ckpt;
    ckpt.params = std::move(params);
    ckpt.seed = cfg.seed_init;
    ckpt.metadata = nlohmann::json{{"phase", "pretrain"},
                                   {"family", family_name(cfg.family)},
                                   {"lambda", {cfg.pretrain_lambda1, cfg.pretrain_lambda2}},
                                   {"epochs", cfg.pretrain_epochs},
                                   {"final_loss", final_loss},
                                   {"rel_error", rel}};
    return ckpt;
}

TrainResult finetune_stage(const MlpParams& params, std::vector<LoraSvdAdapter>& adapters,
                           const PdeProblem& problem, const RunConfig& cfg, int epochs,
                           AdamOpt& opt, std::uint64_t epoch_tag_base,
                           const PointSets& determination, const PointSets& test) {
    std::vector<std::uint8_t> want(params.weights.size(), 0);
    for (const auto& ad : adapters) want[static_cast<size_t>(ad.layer)] = 1;

    PointCounts counts = cfg.points;
    counts.test = 0;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        const PointSets sets = sample_points(
            problem, counts, mix_seed(cfg.seed_data, kFinetuneEpochTag + epoch_tag_base + epoch));
        const EffectiveNet net = make_effective(params, adapters);
        GradBuffers grads;
        grads.init(params, want, false);
        try {
            pinn_loss(net, problem, sets, cfg.weights, &grads);
        } catch (const NumericError& e) {
            throw NumericError("fine-tuning diverged at epoch " + std::to_string(epoch) + ": " +
                               e.what());
        }
        LoraGrads lg = project_lora_grads(grads, adapters);
        // Frozen (inactive) entries neither receive gradient nor move.
        for (size_t a = 0; a < adapters.size(); ++a)
            for (size_t k = 0; k < adapters[a].sigma.size(); ++k)
                if (!adapters[a].active[k]) lg.gsigma[a][k] = 0.0;
        const TrainableView view = lora_view(adapters, lg);
        opt.step(view.params, view.grads);
        for (auto& ad : adapters)
            for (size_t k = 0; k < ad.sigma.size(); ++k)
                if (!ad.active[k]) ad.sigma[k] = 0.0;
    }

    const EffectiveNet net = make_effective(params, adapters);
    TrainResult result;
    result.final_loss = pinn_loss(net, problem, determination, cfg.weights).total();
    result.rel_error = relative_error(net, test);
    return result;
}

SweepResult run_sublora(const RunConfig& cfg, const Checkpoint& pretrained) {
    cfg.validate();
    const PdeProblem problem = cfg.problem();
    require_arg(pretrained.params.widths == cfg.widths, "checkpoint widths do not match config");

    SweepResult result;
    result.adapters = init_lora(pretrained.params, cfg.adapted_layers, cfg.rank, cfg.seed_init);
    const PointSets det = determination_sets(cfg, problem);
    const PointSets test = test_sets(cfg, problem);

    AdamOpt opt(cfg.step_size, cfg.beta1, cfg.beta2, cfg.epsilon);
    result.finetuned = finetune_stage(pretrained.params, result.adapters, problem, cfg, cfg.epochs,
                                      opt, 0, det, test);

    ModelContext ctx{&pretrained.params, &result.adapters, problem, &det, &test, cfg.weights};
    PruneFlags flags{cfg.early_stop, cfg.abs_scores, cfg.fd_step};
    for (Method m : cfg.sweep_methods())
        for (int b : cfg.sweep_budgets())
            result.reports.push_back(determine_rank(ctx, m, b, cfg.seed_solver, flags));
    return result;
}

AlternatingResult run_alternating(const RunConfig& cfg, const Checkpoint& pretrained) {
    cfg.validate();
    require_arg(cfg.rounds >= 1, "alternating needs at least one round");
    const PdeProblem problem = cfg.problem();
    require_arg(pretrained.params.widths == cfg.widths, "checkpoint widths do not match config");

    AlternatingResult result;
    result.adapters = init_lora(pretrained.params, cfg.adapted_layers, cfg.rank, cfg.seed_init);
    const PointSets det = determination_sets(cfg, problem);
    const PointSets test = test_sets(cfg, problem);
    const SigmaIndexMap map = SigmaIndexMap::build(result.adapters);

    AdamOpt opt(cfg.step_size, cfg.beta1, cfg.beta2, cfg.epsilon);
    PruneFlags flags{cfg.early_stop, cfg.abs_scores, cfg.fd_step};
    for (int round = 1; round <= cfg.rounds; ++round) {
        RoundRecord rec;
        rec.round = round;
        // Epochs are numbered globally across rounds, so a one-round run
        // consumes the same resample stream as the training-free pipeline.
        const TrainResult tr = finetune_stage(
            pretrained.params, result.adapters, problem, cfg, cfg.epochs, opt,
            static_cast<std::uint64_t>(round - 1) * static_cast<std::uint64_t>(cfg.epochs), det,
            test);
        rec.update_loss = tr.final_loss;
        rec.update_rel = tr.rel_error;

        ModelContext ctx{&pretrained.params, &result.adapters, problem, &det, &test, cfg.weights};
        rec.prune = determine_rank(ctx, cfg.method, cfg.budget,
                                   mix_seed(cfg.seed_solver, static_cast<std::uint64_t>(round)),
                                   flags);
        const bool final_round = round == cfg.rounds;
        apply_pruning(result.adapters, map, rec.prune.kept, cfg.freeze_pruned || final_round);
        // A pruned entry is a reset parameter: clear its optimizer
        // moments (and those of its adapter columns) so stale momentum
        // does not re-inflate it at the start of the next round.
        if (cfg.reset_pruned_moments) {
            std::vector<std::uint8_t> keep(static_cast<size_t>(map.total()), 0);
            for (int g : rec.prune.kept) keep[static_cast<size_t>(g)] = 1;
            for (size_t a = 0; a < result.adapters.size(); ++a) {
                const LoraSvdAdapter& ad = result.adapters[a];
                std::vector<int> su, sv, ss;
                for (int k = 0; k < ad.rank(); ++k) {
                    const int global = map.offsets[a] + k;
                    if (keep[static_cast<size_t>(global)]) continue;
                    ss.push_back(k);
                    for (int i = 0; i < ad.u.rows; ++i) su.push_back(i * ad.rank() + k);
                    for (int j = 0; j < ad.v.cols; ++j) sv.push_back(k * ad.v.cols + j);
                }
                opt.reset_entries(3 * a, su);
                opt.reset_entries(3 * a + 1, sv);
                opt.reset_entries(3 * a + 2, ss);
            }
        }
        if (final_round) {
            result.final_kept = rec.prune.kept;
            result.final_per_layer = rec.prune.per_layer;
        }
        result.rounds.push_back(std::move(rec));
    }

    const EffectiveNet net = make_effective(pretrained.params, result.adapters);
    result.final_loss = pinn_loss(net, problem, det, cfg.weights).total();
    result.final_rel = relative_error(net, test);
    return result;
}

}  // namespace sublora
