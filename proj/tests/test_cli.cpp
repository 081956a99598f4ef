#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "proxyfed/cli.hpp"
#include "proxyfed/config.hpp"

using namespace proxyfed;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json tiny_config_doc() {
    return json{{"master_seed", 5},    {"clients", 3},         {"sampled_per_round", 2},
                {"rounds", 2},         {"local_epochs", 1},    {"batch_size", 8},
                {"local_lr", 0.05},    {"input_dim", 4},       {"num_classes", 3},
                {"samples_per_class", 30}, {"hidden_dim", 6},  {"feature_dim", 3},
                {"gpt_epochs", 5},     {"labeled_fraction", 0.2}};
}

fs::path fresh_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("proxyfed_cli_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("config parsing: defaults, required seed, unknown keys") {
    RunConfig cfg = parse_config_json(json{{"master_seed", 7}});
    CHECK(cfg.fed.master_seed == 7);
    CHECK(cfg.fed.clients == 20);
    CHECK(cfg.fed.sampled_per_round == 8);
    CHECK(cfg.fed.client.tau == doctest::Approx(0.95));
    CHECK(cfg.fed.client.lr == doctest::Approx(0.1));
    CHECK(cfg.fed.client.epochs == 5);
    CHECK(cfg.fed.gpt.lr == doctest::Approx(0.005));
    CHECK(cfg.fed.gpt.epochs == 100);
    CHECK(cfg.out_dir == "out");

    CHECK_THROWS_WITH_AS(parse_config_json(json::object()),
                         doctest::Contains("master_seed"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(parse_config_json(json{{"master_seed", 1}, {"typo_key", 2}}),
                         doctest::Contains("typo_key"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_json(json::array()), std::invalid_argument);
}

TEST_CASE("config parsing: typed values and enum names") {
    json doc = tiny_config_doc();
    doc["low_conf_mode"] = "direct";
    doc["xi_rule"] = "top5";
    doc["gpt_metric"] = "cosine";
    doc["gpt_enabled"] = false;
    doc["tau"] = 0.8;
    RunConfig cfg = parse_config_json(doc);
    CHECK(cfg.fed.client.low_conf_mode == LowConfMode::direct);
    CHECK(cfg.fed.client.xi_rule == XiRule::top5);
    CHECK(cfg.fed.gpt.metric == GptMetric::cosine);
    CHECK_FALSE(cfg.fed.gpt_enabled);
    CHECK(cfg.fed.client.tau == doctest::Approx(0.8));

    doc["low_conf_mode"] = "bogus";
    CHECK_THROWS_WITH_AS(parse_config_json(doc), doctest::Contains("low_conf_mode"),
                         std::invalid_argument);
    doc["low_conf_mode"] = "icpl";
    doc["rounds"] = "not a number";
    CHECK_THROWS_WITH_AS(parse_config_json(doc), doctest::Contains("rounds"), std::invalid_argument);
}

TEST_CASE("overrides: typed, ordered, and tolerant of bare strings") {
    RunConfig cfg = parse_config_json(tiny_config_doc());
    apply_override(cfg, "tau=0.5");
    CHECK(cfg.fed.client.tau == doctest::Approx(0.5));
    apply_override(cfg, "low_conf_mode=discard");
    CHECK(cfg.fed.client.low_conf_mode == LowConfMode::discard);
    apply_override(cfg, "gpt_enabled=false");
    CHECK_FALSE(cfg.fed.gpt_enabled);
    apply_override(cfg, "out_dir=some/dir");
    CHECK(cfg.out_dir == "some/dir");
    apply_override(cfg, "rounds=7");
    apply_override(cfg, "rounds=9");  // later override wins
    CHECK(cfg.fed.rounds == 9);

    CHECK_THROWS_AS(apply_override(cfg, "no_equals_sign"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(apply_override(cfg, "nonsense_key=1"), doctest::Contains("nonsense_key"),
                         std::invalid_argument);
}

TEST_CASE("config serialization round-trips exactly") {
    json doc = tiny_config_doc();
    doc["class_noise_std"] = 0.7;
    doc["strong_mask_prob"] = 0.15;
    RunConfig cfg = parse_config_json(doc);
    RunConfig back = parse_config_json(config_to_json(cfg));
    CHECK(config_equal(cfg, back));

    apply_override(cfg, "dirichlet_alpha=0.1");
    CHECK_FALSE(config_equal(cfg, back));
}

TEST_CASE("doubles are printed with round-trip precision") {
    for (double v : {0.1, 1.0 / 3.0, 1e-17, 123456.789, -0.0, 2.0}) {
        std::string s = format_double(v);
        CHECK(std::strtod(s.c_str(), nullptr) == v);
    }
    CHECK(format_double(std::nan("")) == "nan");
}

TEST_CASE("metrics CSV: pinned header, one row per round, nan pseudo-label column") {
    RoundMetrics m0;
    m0.round = 0;
    m0.test_accuracy = 0.5;
    m0.pl_defined = false;
    m0.excluded_count = 3;
    m0.loss_s = 1.25;
    m0.comm_cost = 42;
    m0.wall_time = 0.125;
    RoundMetrics m1 = m0;
    m1.round = 1;
    m1.pl_defined = true;
    m1.pseudo_label_accuracy = 0.75;

    std::ostringstream ss;
    write_metrics_csv(ss, {m0, m1}, false);
    std::istringstream lines(ss.str());
    std::string header, row0, row1, extra;
    std::getline(lines, header);
    std::getline(lines, row0);
    std::getline(lines, row1);
    CHECK_FALSE(std::getline(lines, extra));

    CHECK(header ==
          "round,test_accuracy,pseudo_label_accuracy,excluded_count,loss_s,loss_u,loss_icpl,"
          "loss_gpt,comm_cost,wall_time");
    CHECK(row0.substr(0, 2) == "0,");
    CHECK(row0.find(",nan,") != std::string::npos);
    CHECK(row0.find(",42,") != std::string::npos);
    CHECK(row1.find(",0.75,") != std::string::npos);

    std::ostringstream zeroed;
    write_metrics_csv(zeroed, {m0, m1}, true);
    std::istringstream zlines(zeroed.str());
    std::string zh, zr;
    std::getline(zlines, zh);
    while (std::getline(zlines, zr)) CHECK(zr.substr(zr.rfind(',') + 1) == "0");
}

TEST_CASE("run command: writes metrics, summary, and is reproducible byte for byte") {
    fs::path dir = fresh_dir("run");
    fs::path cfg_path = dir / "config.json";
    std::ofstream(cfg_path) << tiny_config_doc().dump(2);

    RunOptions opt;
    opt.config_path = cfg_path.string();
    opt.out_dir = (dir / "out_a").string();
    opt.no_wall_time = true;
    std::ostringstream out, err;
    REQUIRE(cmd_run(opt, out, err) == 0);
    INFO(err.str());
    CHECK(fs::exists(dir / "out_a" / "metrics.csv"));
    CHECK(fs::exists(dir / "out_a" / "summary.json"));

    std::string csv = slurp(dir / "out_a" / "metrics.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);  // header + 2 rounds

    json summary = json::parse(slurp(dir / "out_a" / "summary.json"));
    CHECK(summary["rounds_completed"] == 2);
    CHECK(summary["config"]["master_seed"] == 5);
    CHECK(summary["final_test_accuracy"].is_number());
    // the embedded config must parse back to an equivalent RunConfig
    RunConfig embedded = parse_config_json(summary["config"]);
    RunConfig original = parse_config_json(tiny_config_doc());
    original.out_dir = (dir / "out_a").string();
    CHECK(config_equal(embedded, original));
}

TEST_CASE("run command: identical reruns produce identical files") {
    fs::path dir = fresh_dir("rerun");
    fs::path cfg_path = dir / "config.json";
    std::ofstream(cfg_path) << tiny_config_doc().dump(2);

    auto run_into = [&](const std::string& sub) {
        RunOptions opt;
        opt.config_path = cfg_path.string();
        opt.out_dir = (dir / sub).string();
        opt.no_wall_time = true;
        std::ostringstream out, err;
        REQUIRE(cmd_run(opt, out, err) == 0);
        return slurp(dir / sub / "metrics.csv");
    };
    CHECK(run_into("a") == run_into("b"));
}

TEST_CASE("run command: checkpoint save and restore round-trip") {
    fs::path dir = fresh_dir("ckpt");
    fs::path cfg_path = dir / "config.json";
    std::ofstream(cfg_path) << tiny_config_doc().dump(2);

    RunOptions first;
    first.config_path = cfg_path.string();
    first.out_dir = (dir / "first").string();
    first.save_params_path = (dir / "model.bin").string();
    std::ostringstream out, err;
    REQUIRE(cmd_run(first, out, err) == 0);
    REQUIRE(fs::exists(dir / "model.bin"));

    RunOptions second;
    second.config_path = cfg_path.string();
    second.out_dir = (dir / "second").string();
    second.load_params_path = (dir / "model.bin").string();
    second.overrides = {"rounds=1"};
    std::ostringstream out2, err2;
    CHECK(cmd_run(second, out2, err2) == 0);
}

TEST_CASE("run command: failures are reported on err with a nonzero exit") {
    RunOptions opt;
    opt.config_path = "/definitely/not/here.json";
    std::ostringstream out, err;
    CHECK(cmd_run(opt, out, err) != 0);
    CHECK(err.str().find("error") != std::string::npos);
}

TEST_CASE("sweep command: grid × seeds directories and the summary table") {
    fs::path dir = fresh_dir("sweep");
    fs::path cfg_path = dir / "config.json";
    json doc = tiny_config_doc();
    doc["rounds"] = 1;
    std::ofstream(cfg_path) << doc.dump(2);

    SweepOptions opt;
    opt.config_path = cfg_path.string();
    opt.sweep_specs = {"dirichlet_alpha=0.1,1.0"};
    opt.seeds = 2;
    opt.out_dir = (dir / "sweep_out").string();
    opt.no_wall_time = true;
    std::ostringstream out, err;
    REQUIRE(cmd_sweep(opt, out, err) == 0);
    INFO(err.str());

    CHECK(fs::exists(dir / "sweep_out" / "dirichlet_alpha=0.1_seed=0" / "metrics.csv"));
    CHECK(fs::exists(dir / "sweep_out" / "dirichlet_alpha=0.1_seed=1" / "metrics.csv"));
    CHECK(fs::exists(dir / "sweep_out" / "dirichlet_alpha=1.0_seed=0" / "metrics.csv"));
    CHECK(fs::exists(dir / "sweep_out" / "dirichlet_alpha=1.0_seed=1" / "metrics.csv"));

    std::string summary = slurp(dir / "sweep_out" / "sweep_summary.csv");
    std::istringstream lines(summary);
    std::string header;
    std::getline(lines, header);
    CHECK(header == "dirichlet_alpha,n_seeds,final_accuracy_mean,final_accuracy_std");
    int rows = 0;
    std::string row;
    while (std::getline(lines, row))
        if (!row.empty()) ++rows;
    CHECK(rows == 2);
}

TEST_CASE("sweep command: bad axes fail before any run starts") {
    fs::path dir = fresh_dir("sweep_bad");
    fs::path cfg_path = dir / "config.json";
    std::ofstream(cfg_path) << tiny_config_doc().dump(2);

    SweepOptions opt;
    opt.config_path = cfg_path.string();
    opt.sweep_specs = {"not_a_key=1,2"};
    opt.out_dir = (dir / "never").string();
    std::ostringstream out, err;
    CHECK(cmd_sweep(opt, out, err) != 0);
    CHECK(err.str().find("not_a_key") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "never" / "sweep_summary.csv"));

    opt.sweep_specs = {"rounds="};
    std::ostringstream out2, err2;
    CHECK(cmd_sweep(opt, out2, err2) != 0);
}

TEST_CASE("gradient check suite: four losses, all below tolerance") {
    auto lines = gradcheck_suite(20240817);
    REQUIRE(lines.size() == 4);
    CHECK(lines[0].loss_name == "supervised_ce");
    CHECK(lines[1].loss_name == "pseudo_label_ce");
    CHECK(lines[2].loss_name == "contrastive_proxy");
    CHECK(lines[3].loss_name == "proxy_tuning");
    for (const auto& l : lines) {
        INFO(l.loss_name << " err=" << l.max_rel_err);
        CHECK(l.max_rel_err < 1e-5);
    }

    GradcheckOptions opt;
    std::ostringstream out, err;
    CHECK(cmd_gradcheck(opt, out, err) == 0);
    CHECK(out.str().find("supervised_ce") != std::string::npos);
    CHECK(out.str().find("max_rel_err=") != std::string::npos);
    CHECK(out.str().find("ok") != std::string::npos);
}
