#include "sublora/cli.hpp"

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "sublora/metrics.hpp"
#include "sublora/pipeline.hpp"
#include "sublora/properties.hpp"

namespace sublora {

namespace {

MetricsRow base_row(const RunConfig& cfg) {
    MetricsRow r;
    r.run_id = cfg.run_id();
    r.family = family_name(cfg.family);
    r.lambda1 = cfg.lambda1;
    r.lambda2 = cfg.lambda2;
    r.method = method_name(cfg.method);
    r.budget = cfg.budget;
    r.kept_per_layer = "-";
    r.seed = cfg.seed_solver;
    return r;
}

MetricsRow report_row(const RunConfig& cfg, const RankReport& rep, int outer_round,
                      const std::string& stage) {
    MetricsRow r = base_row(cfg);
    r.method = method_name(rep.method);
    r.budget = rep.budget;
    r.outer_round = outer_round;
    r.stage = stage;
    r.loss = rep.loss_after;
    r.rel_error = rep.rel_after;
    r.stage_seconds = rep.stage_seconds;
    r.kept_per_layer = format_kept_per_layer(rep.per_layer);
    r.seed = rep.seed;
    return r;
}

void write_rows(const RunConfig& cfg, std::span<const MetricsRow> rows) {
    if (cfg.metrics_csv.empty()) return;
    append_metrics(cfg.metrics_csv, rows);
    std::cout << "appended " << rows.size() << " rows to " << cfg.metrics_csv << "\n";
}

void write_report(const RunConfig& cfg, const nlohmann::json& body) {
    if (cfg.report_json.empty()) return;
    std::ofstream out(cfg.report_json, std::ios::trunc);
    if (!out) throw IoError("cannot open report file: " + cfg.report_json);
    out << body.dump(2) << "\n";
    std::cout << "wrote report to " << cfg.report_json << "\n";
}

int cmd_pretrain(const std::string& config_path) {
    const RunConfig cfg = load_config(config_path);
    require_arg(!cfg.pretrained_checkpoint.empty(),
                "config io.pretrained_checkpoint must be set for pretrain");
    const Checkpoint ckpt = pretrain(cfg);
    save_checkpoint(cfg.pretrained_checkpoint, ckpt);
    const double loss = ckpt.metadata.at("final_loss").get<double>();
    const double rel = ckpt.metadata.at("rel_error").get<double>();
    std::cout << "pretrained " << family_name(cfg.family) << " lambda=(" << cfg.pretrain_lambda1
              << "," << cfg.pretrain_lambda2 << ") loss=" << loss << " rel=" << rel << "\n"
              << "checkpoint: " << cfg.pretrained_checkpoint << "\n";
    MetricsRow r = base_row(cfg);
    r.method = "-";
    r.budget = cfg.sigma_total();
    r.stage = "pretrain";
    r.loss = loss;
    r.rel_error = rel;
    r.seed = cfg.seed_init;
    write_rows(cfg, std::vector<MetricsRow>{r});
    return 0;
}

int cmd_finetune(const std::string& config_path) {
    const RunConfig cfg = load_config(config_path);
    require_arg(!cfg.pretrained_checkpoint.empty() && !cfg.finetuned_checkpoint.empty(),
                "config io checkpoints must be set for finetune");
    const Checkpoint base = load_checkpoint(cfg.pretrained_checkpoint);
    require_arg(base.params.widths == cfg.widths, "checkpoint widths do not match config");
    const PdeProblem problem = cfg.problem();
    std::vector<LoraSvdAdapter> adapters =
        init_lora(base.params, cfg.adapted_layers, cfg.rank, cfg.seed_init);
    const PointSets det = determination_sets(cfg, problem);
    const PointSets test = test_sets(cfg, problem);
    AdamOpt opt(cfg.step_size, cfg.beta1, cfg.beta2, cfg.epsilon);
    const TrainResult tr =
        finetune_stage(base.params, adapters, problem, cfg, cfg.epochs, opt, 0, det, test);
    Checkpoint out;
    out.params = base.params;
    out.adapters = std::move(adapters);
    out.seed = cfg.seed_init;
    out.metadata = nlohmann::json{{"phase", "finetune"},
                                  {"family", family_name(cfg.family)},
                                  {"lambda", {cfg.lambda1, cfg.lambda2}},
                                  {"epochs", cfg.epochs},
                                  {"final_loss", tr.final_loss},
                                  {"rel_error", tr.rel_error}};
    save_checkpoint(cfg.finetuned_checkpoint, out);
    std::cout << "fine-tuned " << family_name(cfg.family) << " lambda=(" << cfg.lambda1 << ","
              << cfg.lambda2 << ") loss=" << tr.final_loss << " rel=" << tr.rel_error << "\n"
              << "checkpoint: " << cfg.finetuned_checkpoint << "\n";
    MetricsRow r = base_row(cfg);
    r.method = "-";
    r.budget = cfg.sigma_total();
    r.stage = "finetune";
    r.loss = tr.final_loss;
    r.rel_error = tr.rel_error;
    r.seed = cfg.seed_init;
    write_rows(cfg, std::vector<MetricsRow>{r});
    return 0;
}

int cmd_prune(const RunConfig& cfg) {
    require_arg(!cfg.finetuned_checkpoint.empty(),
                "config io.finetuned_checkpoint must be set for prune");
    const Checkpoint ckpt = load_checkpoint(cfg.finetuned_checkpoint);
    require_arg(ckpt.params.widths == cfg.widths, "checkpoint widths do not match config");
    require_arg(!ckpt.adapters.empty(), "checkpoint has no adapters; run finetune first");
    const PdeProblem problem = cfg.problem();
    const PointSets det = determination_sets(cfg, problem);
    const PointSets test = test_sets(cfg, problem);
    ModelContext ctx{&ckpt.params, &ckpt.adapters, problem, &det, &test, cfg.weights};
    const PruneFlags flags{cfg.early_stop, cfg.abs_scores, cfg.fd_step};
    const RankReport rep = determine_rank(ctx, cfg.method, cfg.budget, cfg.seed_solver, flags);
    std::cout << method_name(rep.method) << " budget " << rep.budget << ": kept "
              << format_kept_per_layer(rep.per_layer) << ", loss " << rep.loss_before << " -> "
              << rep.loss_after << ", rel " << rep.rel_before << " -> " << rep.rel_after
              << ", stage seconds " << rep.stage_seconds << "\n";
    write_rows(cfg, std::vector<MetricsRow>{report_row(cfg, rep, 0, "prune")});
    write_report(cfg, nlohmann::json{{"run_id", cfg.run_id()}, {"report", rep.to_json()}});
    return 0;
}

int cmd_sweep(const std::string& config_path) {
    RunConfig cfg = load_config(config_path);
    require_arg(!cfg.pretrained_checkpoint.empty(),
                "config io.pretrained_checkpoint must be set for sweep");
    const Checkpoint base = load_checkpoint(cfg.pretrained_checkpoint);
    const SweepResult sweep = run_sublora(cfg, base);
    std::vector<MetricsRow> rows;
    MetricsRow ft = base_row(cfg);
    ft.method = "-";
    ft.budget = cfg.sigma_total();
    ft.stage = "finetune";
    ft.loss = sweep.finetuned.final_loss;
    ft.rel_error = sweep.finetuned.rel_error;
    ft.seed = cfg.seed_init;
    rows.push_back(ft);
    nlohmann::json reports = nlohmann::json::array();
    for (const auto& rep : sweep.reports) {
        rows.push_back(report_row(cfg, rep, 0, "prune"));
        reports.push_back(rep.to_json());
    }
    std::cout << "sweep finished: " << sweep.reports.size() << " (method, budget) cells\n";
    write_rows(cfg, rows);
    write_report(cfg, nlohmann::json{{"run_id", cfg.run_id()}, {"reports", reports}});
    return 0;
}

int cmd_alternate(const std::string& config_path) {
    const RunConfig cfg = load_config(config_path);
    require_arg(!cfg.pretrained_checkpoint.empty(),
                "config io.pretrained_checkpoint must be set for alternate");
    const Checkpoint base = load_checkpoint(cfg.pretrained_checkpoint);
    const AlternatingResult alt = run_alternating(cfg, base);
    std::vector<MetricsRow> rows;
    for (const auto& round : alt.rounds) {
        MetricsRow up = base_row(cfg);
        up.outer_round = round.round;
        up.stage = "update";
        up.loss = round.update_loss;
        up.rel_error = round.update_rel;
        rows.push_back(up);
        rows.push_back(report_row(cfg, round.prune, round.round, "prune"));
    }
    MetricsRow fin = base_row(cfg);
    fin.outer_round = cfg.rounds;
    fin.stage = "final";
    fin.loss = alt.final_loss;
    fin.rel_error = alt.final_rel;
    fin.kept_per_layer = format_kept_per_layer(alt.final_per_layer);
    rows.push_back(fin);
    std::cout << "alternating " << method_name(cfg.method) << " finished: final loss "
              << alt.final_loss << ", rel " << alt.final_rel << ", kept "
              << format_kept_per_layer(alt.final_per_layer) << "\n";
    write_rows(cfg, rows);
    if (!cfg.finetuned_checkpoint.empty()) {
        Checkpoint out;
        out.params = base.params;
        out.adapters = alt.adapters;
        out.seed = cfg.seed_init;
        out.metadata = nlohmann::json{{"phase", "alternate"},
                                      {"final_loss", alt.final_loss},
                                      {"rel_error", alt.final_rel}};
        save_checkpoint(cfg.finetuned_checkpoint, out);
        std::cout << "checkpoint: " << cfg.finetuned_checkpoint << "\n";
    }
    nlohmann::json rounds = nlohmann::json::array();
    for (const auto& round : alt.rounds)
        rounds.push_back(nlohmann::json{{"round", round.round},
                                        {"update_loss", round.update_loss},
                                        {"update_rel", round.update_rel},
                                        {"prune", round.prune.to_json()}});
    write_report(cfg, nlohmann::json{{"run_id", cfg.run_id()},
                                     {"rounds", rounds},
                                     {"final_loss", alt.final_loss},
                                     {"final_rel", alt.final_rel},
                                     {"final_kept", alt.final_kept}});
    return 0;
}

int cmd_eval(const std::string& ckpt_stem, const std::string& config_path) {
    const RunConfig cfg = load_config(config_path);
    const Checkpoint ckpt = load_checkpoint(ckpt_stem);
    require_arg(ckpt.params.widths == cfg.widths, "checkpoint widths do not match config");
    const PdeProblem problem = cfg.problem();
    const PointSets det = determination_sets(cfg, problem);
    const PointSets test = test_sets(cfg, problem);
    const EffectiveNet net = make_effective(ckpt.params, ckpt.adapters);
    const double loss = pinn_loss(net, problem, det, cfg.weights).total();
    const double rel = relative_error(net, test);
    std::cout << "loss " << loss << ", rel " << rel << "\n";
    MetricsRow r = base_row(cfg);
    r.method = "-";
    r.stage = "eval";
    r.loss = loss;
    r.rel_error = rel;
    write_rows(cfg, std::vector<MetricsRow>{r});
    return 0;
}

int cmd_selftest() {
    const auto results = properties::run_selftest(20250801);
    bool ok = true;
    for (const auto& r : results) {
        std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << " (" << r.detail << ")\n";
        ok = ok && r.pass;
    }
    return ok ? 0 : 1;
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
    CLI::App app{"SubLoRA: submodular rank determination for LoRA fine-tuning of PINNs"};
    app.require_subcommand(1);

    std::string config_path, ckpt_stem;
    std::string method_override;
    int budget_override = -1;
    std::uint64_t seed_override = 0;
    bool seed_set = false, early_stop = false, abs_scores = false;

    auto* pre = app.add_subcommand("pretrain", "train base network parameters");
    pre->add_option("config", config_path, "run config JSON")->required();

    auto* fin = app.add_subcommand("finetune", "LoRA fine-tune from a pretrained checkpoint");
    fin->add_option("config", config_path, "run config JSON")->required();

    auto* pru = app.add_subcommand("prune", "rank determination on a fine-tuned checkpoint");
    pru->add_option("config", config_path, "run config JSON")->required();
    pru->add_option("--method", method_override, "linear|diag|sub_g|sub_r|hess_g");
    pru->add_option("--budget", budget_override, "total rank budget");
    pru->add_option("--seed", seed_override, "solver seed")->each([&](const std::string&) {
        seed_set = true;
    });
    pru->add_flag("--early-stop", early_stop, "stop greedy at the first negative gain");
    pru->add_flag("--abs-scores", abs_scores, "magnitude variant of the linear baseline");

    auto* alt = app.add_subcommand("alternate", "alternate fine-tuning and pruning");
    alt->add_option("config", config_path, "run config JSON")->required();

    auto* swp = app.add_subcommand("sweep", "budget x method grid on one fine-tuned model");
    swp->add_option("config", config_path, "run config JSON")->required();

    auto* evl = app.add_subcommand("eval", "evaluate a checkpoint on a problem");
    evl->add_option("checkpoint", ckpt_stem, "checkpoint stem (without .json)")->required();
    evl->add_option("config", config_path, "run config JSON")->required();

    app.add_subcommand("selftest", "run the structural property suites");

    std::vector<const char*> argv;
    argv.push_back("sublora");
    for (const auto& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
        if (app.got_subcommand("pretrain")) return cmd_pretrain(config_path);
        if (app.got_subcommand("finetune")) return cmd_finetune(config_path);
        if (app.got_subcommand("prune")) {
            RunConfig cfg = load_config(config_path);
            if (!method_override.empty()) cfg.method = method_from_name(method_override);
            if (budget_override >= 0) cfg.budget = budget_override;
            if (seed_set) cfg.seed_solver = seed_override;
            cfg.early_stop = cfg.early_stop || early_stop;
            cfg.abs_scores = cfg.abs_scores || abs_scores;
            // prune runs a single (method, budget) cell
            cfg.budgets.clear();
            cfg.methods.clear();
            cfg.validate();
            return cmd_prune(cfg);
        }
        if (app.got_subcommand("alternate")) return cmd_alternate(config_path);
        if (app.got_subcommand("sweep")) return cmd_sweep(config_path);
        if (app.got_subcommand("eval")) return cmd_eval(ckpt_stem, config_path);
        if (app.got_subcommand("selftest")) return cmd_selftest();
        return 1;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const CapacityError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace sublora
