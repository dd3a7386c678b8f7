#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "sublora/cli.hpp"
#include "sublora/metrics.hpp"

namespace fs = std::filesystem;
using namespace sublora;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("sublora_cli_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

nlohmann::json tiny_config_json(const TempDir& dir) {
    return nlohmann::json{
        {"schema", "sublora-run-v1"},
        {"pde", {{"family", "elliptic"}, {"lambda", {1.0, 1.0}}}},
        {"pretrain", {{"lambda", {1.0, 0.0}}, {"epochs", 40}}},
        {"points", {{"interior", 32}, {"boundary", 8}, {"test", 64}}},
        {"network", {{"widths", {2, 8, 8, 1}}, {"adapted_layers", {1}}, {"rank", 2}}},
        {"train", {{"epochs", 25}}},
        {"prune", {{"method", "sub_g"}, {"budget", 1}}},
        {"alternating", {{"rounds", 2}}},
        {"determination", {{"interior", 32}, {"boundary", 8}}},
        {"seeds", {{"init", 5}, {"data", 6}, {"solver", 7}}},
        {"io",
         {{"pretrained_checkpoint", dir.file("pre")},
          {"finetuned_checkpoint", dir.file("fin")},
          {"metrics_csv", dir.file("metrics.csv")},
          {"report_json", dir.file("report.json")}}}};
}

std::string write_config(const TempDir& dir, const nlohmann::json& j,
                         const std::string& name = "cfg.json") {
    const std::string path = dir.file(name);
    std::ofstream out(path);
    out << j.dump(2);
    return path;
}

}  // namespace

TEST_CASE("metrics writer: header handling and formatting") {
    TempDir dir;
    const std::string path = dir.file("m.csv");
    MetricsRow r;
    r.run_id = "run-1";
    r.family = "elliptic";
    r.lambda1 = 1.0;
    r.lambda2 = 0.3333333333333333;
    r.method = "sub_g";
    r.budget = 40;
    r.outer_round = 2;
    r.stage = "prune";
    r.loss = 1.2345678901234567e-3;
    r.rel_error = 0.0041;
    r.stage_seconds = 2.5;
    r.kept_per_layer = format_kept_per_layer(std::vector<int>{23, 17});
    r.seed = 7;
    CHECK(r.kept_per_layer == "23/17");

    append_metrics(path, std::vector<MetricsRow>{r});
    append_metrics(path, std::vector<MetricsRow>{r});

    std::ifstream in(path);
    std::string line;
    int headers = 0, rows = 0;
    while (std::getline(in, line)) {
        if (line.rfind("run_id,", 0) == 0) ++headers;
        else if (!line.empty()) ++rows;
    }
    CHECK(headers == 1);
    CHECK(rows == 2);

    const auto parsed = read_metrics(path);
    REQUIRE(parsed.size() == 2);
    CHECK(parsed[0].loss == r.loss);  // exact round trip at 17 significant digits
    CHECK(parsed[0].lambda2 == r.lambda2);
    CHECK(parsed[0].kept_per_layer == "23/17");
    CHECK(parsed[0].seed == 7);
    CHECK(parsed[1].budget == 40);
}

TEST_CASE("cli end-to-end: pretrain, finetune, prune, sweep, eval") {
    TempDir dir;
    const std::string cfg = write_config(dir, tiny_config_json(dir));

    CHECK(dispatch({"pretrain", cfg}) == 0);
    CHECK(fs::exists(dir.file("pre.json")));
    CHECK(fs::exists(dir.file("pre.bin")));

    CHECK(dispatch({"finetune", cfg}) == 0);
    CHECK(fs::exists(dir.file("fin.json")));

    CHECK(dispatch({"prune", cfg, "--method", "sub_g", "--budget", "1"}) == 0);
    CHECK(dispatch({"eval", dir.file("fin"), cfg}) == 0);

    auto rows = read_metrics(dir.file("metrics.csv"));
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].stage == "pretrain");
    CHECK(rows[1].stage == "finetune");
    CHECK(rows[2].stage == "prune");
    CHECK(rows[2].method == "sub_g");
    CHECK(rows[2].budget == 1);
    CHECK(rows[2].kept_per_layer == "1");
    CHECK(rows[3].stage == "eval");

    // prune twice with equal seeds: identical rows apart from wall-clock
    CHECK(dispatch({"prune", cfg, "--method", "sub_g", "--budget", "1"}) == 0);
    rows = read_metrics(dir.file("metrics.csv"));
    REQUIRE(rows.size() == 5);
    CHECK(rows[4].loss == rows[2].loss);
    CHECK(rows[4].rel_error == rows[2].rel_error);
    CHECK(rows[4].kept_per_layer == rows[2].kept_per_layer);
    CHECK(rows[4].run_id == rows[2].run_id);
}

TEST_CASE("cli sweep emits the full grid") {
    TempDir dir;
    auto j = tiny_config_json(dir);
    j["prune"]["budgets"] = {0, 1, 2};
    j["prune"]["methods"] = {"linear", "diag", "sub_g", "sub_r", "hess_g"};
    const std::string cfg = write_config(dir, j);
    REQUIRE(dispatch({"pretrain", cfg}) == 0);
    fs::remove(dir.file("metrics.csv"));
    CHECK(dispatch({"sweep", cfg}) == 0);
    const auto rows = read_metrics(dir.file("metrics.csv"));
    int prune_rows = 0;
    for (const auto& r : rows)
        if (r.stage == "prune") ++prune_rows;
    CHECK(prune_rows == 15);  // 5 methods x 3 budgets
    CHECK(fs::exists(dir.file("report.json")));
}

TEST_CASE("cli alternate writes per-round rows and a final row") {
    TempDir dir;
    const std::string cfg = write_config(dir, tiny_config_json(dir));
    REQUIRE(dispatch({"pretrain", cfg}) == 0);
    fs::remove(dir.file("metrics.csv"));
    CHECK(dispatch({"alternate", cfg}) == 0);
    const auto rows = read_metrics(dir.file("metrics.csv"));
    REQUIRE(rows.size() == 5);  // 2 rounds x (update, prune) + final
    CHECK(rows[0].stage == "update");
    CHECK(rows[1].stage == "prune");
    CHECK(rows[1].outer_round == 1);
    CHECK(rows[4].stage == "final");
    CHECK(rows[4].kept_per_layer == "1");
}

TEST_CASE("cli usage errors exit with code 1") {
    TempDir dir;
    const std::string cfg = write_config(dir, tiny_config_json(dir));
    REQUIRE(dispatch({"pretrain", cfg}) == 0);
    REQUIRE(dispatch({"finetune", cfg}) == 0);

    SUBCASE("budget beyond the total rank") {
        CHECK(dispatch({"prune", cfg, "--budget", "9999"}) == 1);
    }
    SUBCASE("unknown flag") { CHECK(dispatch({"prune", cfg, "--wat"}) == 1); }
    SUBCASE("missing config file") { CHECK(dispatch({"prune", dir.file("nope.json")}) == 1); }
    SUBCASE("no subcommand") { CHECK(dispatch({}) == 1); }
    SUBCASE("unknown config key") {
        auto j = tiny_config_json(dir);
        j["surprise"] = 1;
        const std::string bad = write_config(dir, j, "bad.json");
        CHECK(dispatch({"prune", bad}) == 1);
    }
    SUBCASE("schema field enforced") {
        auto j = tiny_config_json(dir);
        j["schema"] = "v0";
        const std::string bad = write_config(dir, j, "bad2.json");
        CHECK(dispatch({"prune", bad}) == 1);
    }
    SUBCASE("unknown method name") {
        CHECK(dispatch({"prune", cfg, "--method", "psychic"}) == 1);
    }
}

TEST_CASE("cli selftest passes on a healthy build") {
    CHECK(dispatch({"selftest"}) == 0);
}
