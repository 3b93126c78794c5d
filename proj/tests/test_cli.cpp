#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "doctest.h"
#include "qtl/app.hpp"
#include "qtl/error.hpp"

using namespace qtl;
using namespace qtl::app;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("qtl_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Exit status of the CLI with stdout and stderr sent to `log`.
int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(QTL_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig tiny() {
  ExperimentConfig c;
  c.epochs = 2;
  c.n_qubits = 3;
  c.depth = 2;
  c.dataset.synth.samples_per_class = 8;
  c.pretrain.samples_per_class = 12;
  c.pretrain.epochs = 1;
  return c;
}

}  // namespace

TEST_CASE("config defaults") {
  const ExperimentConfig c;
  CHECK(c.n_qubits == 6);
  CHECK(c.depth == 6);
  CHECK(c.optimizer.lr == 0.0004);
  CHECK(c.optimizer.kind == nn::OptimizerKind::Adam);
  CHECK(c.optimizer.schedule == nn::LrSchedule::ConstantThenLinearDecay);
  CHECK(c.batch_size == 16);
  CHECK(c.epochs == 50);
  CHECK(c.init_spread == 0.01);
  CHECK(c.dataset.synth.classes * c.dataset.synth.samples_per_class <= 500);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("config JSON round trip and errors") {
  ExperimentConfig c;
  c.seed = 7;
  c.regime = transfer::Regime::ClassicalNoTL;
  c.attack_budgets = {0.1, 0.3, 1.0};
  c.dataset.synth.difficulty = 1.25;
  const ExperimentConfig back = config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));

  CHECK(config_from_json(json::parse(R"({"depth": 3})")).depth == 3);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"dpeth": 3})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"dataset": {"sauce": "synth"}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"depth": "six"})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"regime": "quantum"})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"encoding": "cosine"})")), ConfigError);

  ExperimentConfig bad;
  bad.mix_ratio = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.dataset.source = DataSource::Csv;
  bad.dataset.csv = "/nonexistent/features.csv";
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("metrics.csv is deterministic and has no wall-clock column") {
  ExperimentConfig c = tiny();
  c.regime = transfer::Regime::QuantumTL;
  const auto a = run_training(c, false);
  const auto b = run_training(c, false);
  const std::string csv = metrics_csv(a, c.attack_budgets);
  CHECK(csv == metrics_csv(b, c.attack_budgets));
  CHECK(csv.find("wall") == std::string::npos);
  CHECK(csv.rfind("run_id,regime,seed,epoch,lr,train_loss,train_accuracy,test_loss,test_accuracy,attacked_0.1", 0) ==
        0);
  CHECK(a.source_accuracy.has_value());
  CHECK(metrics_json(a, c.attack_budgets).at("records").size() == 2);
}

TEST_CASE("report rows from train and attack outputs") {
  const fs::path dir = scratch("report");
  ExperimentConfig c = tiny();
  c.regime = transfer::Regime::QuantumNoTL;
  const auto r = run_training(c, false);
  write_run(r, c, dir / "train");
  CHECK(fs::exists(dir / "train" / "metrics.csv"));
  CHECK(fs::exists(dir / "train" / "model.ckpt"));

  // three budgets on the saved model give three rows
  ExperimentConfig a = c;
  a.checkpoint = (dir / "train" / "model.ckpt").string();
  a.attack_budgets = {0.05, 0.2, 0.4};
  const auto attacked = run_attack(a);
  CHECK(attacked.clean_accuracy == r.clean_accuracy);
  fs::create_directories(dir / "attack");
  std::ofstream(dir / "attack" / "results.json") << results_json(attacked, a).dump();
  const auto only_attack = collect_report(dir / "attack");
  REQUIRE(only_attack.size() == 3);
  for (const auto& row : only_attack) {
    CHECK(row.clean == r.clean_accuracy);
    CHECK(!row.at_attacked);
  }

  ExperimentConfig adv = c;
  adv.epsilon = 0.2;
  adv.attack_budgets = {0.2};
  write_run(run_training(adv, true), adv, dir / "advtrain");
  const auto rows = collect_report(dir);
  const std::string text = report_text(rows);
  CHECK(text.find("Method") != std::string::npos);
  CHECK(text.find("Adversarial Training Accuracy") != std::string::npos);
  CHECK(text.find("Quantum without TL") != std::string::npos);
  bool at_row = false;
  for (const auto& row : rows) at_row = at_row || (row.epsilon == 0.2 && row.at_attacked && row.clean);
  CHECK(at_row);
  CHECK_THROWS_AS(collect_report(dir / "missing"), ConfigError);
}

TEST_CASE("CLI exit codes and outputs") {
  const fs::path dir = scratch("cli");
  const fs::path log = dir / "log.txt";

  CHECK(run_cli("train --print-config", log) == 0);
  const json printed = json::parse(slurp(log));
  CHECK(printed.at("n_qubits") == 6);
  CHECK(printed.at("depth") == 6);
  CHECK(printed.at("quantum_parameters") == 108);

  CHECK(run_cli("", log) == 1);
  CHECK(run_cli("train --no-such-flag", log) == 1);
  CHECK(run_cli("train --regime sideways --print-config", log) == 1);
  std::ofstream(dir / "bad.json") << R"({"qubits": 4})";
  CHECK(run_cli("train --config " + (dir / "bad.json").string(), log) == 1);
  CHECK(slurp(log).find("qubits") != std::string::npos);
  CHECK(run_cli("report --out " + (dir / "empty").string(), log) == 1);

  // a truncated model checkpoint is a runtime failure
  std::ofstream(dir / "broken.ckpt") << "QTLCKPT";
  CHECK(run_cli("attack --regime quantum_notl --checkpoint " + (dir / "broken.ckpt").string(), log) == 2);

  std::ofstream(dir / "tiny.json") << to_json(tiny()).dump();
  const std::string base = "--config " + (dir / "tiny.json").string() + " --regime quantum_notl ";
  CHECK(run_cli("train " + base + "--seed 3 --epsilon 0.1 0.2 --out " + (dir / "runs" / "a").string(), log) == 0);
  CHECK(fs::exists(dir / "runs" / "a" / "results.json"));
  CHECK(run_cli("attack " + base + "--seed 3 --epsilon 0.1 0.2 0.3 --checkpoint " +
                    (dir / "runs" / "a" / "model.ckpt").string() + " --out " + (dir / "runs" / "b").string(),
                log) == 0);
  CHECK(run_cli("report --out " + (dir / "runs").string(), log) == 0);
  CHECK(fs::exists(dir / "runs" / "report.csv"));
  CHECK(json::parse(slurp(dir / "runs" / "report.json")).size() == 3);

  CHECK(run_cli("selftest", log) == 0);
  CHECK(slurp(log).find("FAIL") == std::string::npos);
}
