#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qtl/app.hpp"
#include "qtl/error.hpp"

using namespace qtl;
using namespace qtl::app;

namespace {

constexpr int kUsageError = 1;
constexpr int kRuntimeError = 2;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string regime;
  std::vector<double> epsilon;
  std::string checkpoint;
  bool print_config = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON experiment config")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--regime", o.regime, "classical_tl | classical_notl | quantum_tl | quantum_notl");
  cmd->add_option("--epsilon", o.epsilon, "attack budget(s); advtrain trains with the first");
  cmd->add_option("--checkpoint", o.checkpoint, "extractor checkpoint (train) or model checkpoint (attack)");
  cmd->add_flag("--print-config", o.print_config, "print the resolved config and exit");
}

ExperimentConfig resolve(const Overrides& o, bool adversarial) {
  ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (!o.out.empty()) c.output_dir = o.out;
  if (!o.regime.empty()) c.regime = transfer::parse_regime(o.regime);
  if (!o.epsilon.empty()) {
    c.attack_budgets = o.epsilon;
    if (adversarial) c.epsilon = o.epsilon.front();
  }
  if (!o.checkpoint.empty()) c.checkpoint = o.checkpoint;
  c.validate();
  return c;
}

void print_config(const ExperimentConfig& c) {
  nlohmann::json j = to_json(c);
  j["quantum_parameters"] = c.n_qubits * c.depth * 3;
  std::cout << j.dump(2) << '\n';
}

void print_run(const RunResult& r) {
  if (r.source_accuracy) std::printf("source accuracy %.4f\n", *r.source_accuracy);
  std::printf("%s clean accuracy %.4f\n", r.run_id.c_str(), r.clean_accuracy);
  for (const auto& a : r.attacked) std::printf("  eps %-6s attacked accuracy %.4f\n", format_double(a.epsilon).c_str(), a.accuracy);
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Hybrid quantum-classical transfer learning experiments"};
  cli.require_subcommand(1);
  Overrides o;
  auto* pretrain = cli.add_subcommand("pretrain", "pretrain the extractor on the synthetic source task");
  auto* train = cli.add_subcommand("train", "train one regime and attack the result");
  auto* attack = cli.add_subcommand("attack", "evaluate a model checkpoint under FGSM");
  auto* advtrain = cli.add_subcommand("advtrain", "adversarially train one regime");
  auto* report = cli.add_subcommand("report", "seed-averaged table over a run directory");
  auto* selftest = cli.add_subcommand("selftest", "gradient, oracle and FGSM self checks");
  for (auto* cmd : {pretrain, train, attack, advtrain}) add_common(cmd, o);
  report->add_option("--out", o.out, "directory containing results.json files")->required();

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (selftest->parsed()) {
      bool ok = true;
      for (const auto& line : app::selftest()) {
        std::printf("%s %s: %s\n", line.passed ? "PASS" : "FAIL", line.name.c_str(), line.detail.c_str());
        ok = ok && line.passed;
      }
      return ok ? 0 : kRuntimeError;
    }
    if (report->parsed()) {
      const auto rows = collect_report(o.out);
      const std::filesystem::path dir = o.out;
      write_file(dir / "report.txt", report_text(rows));
      write_file(dir / "report.csv", report_csv(rows));
      write_file(dir / "report.json", report_json(rows).dump(2) + "\n");
      std::cout << report_text(rows);
      return 0;
    }

    const ExperimentConfig config = resolve(o, advtrain->parsed());
    if (o.print_config) {
      print_config(config);
      return 0;
    }
    const std::filesystem::path out = config.output_dir;
    if (pretrain->parsed()) {
      const Splits s = load_data(config);
      const PretrainOutcome p = pretrain_extractor(config, model_spec(config, s.train));
      std::filesystem::create_directories(out);
      save_checkpoint(p.checkpoint, out / "extractor.ckpt");
      write_file(out / "pretrain.json",
                 nlohmann::json{{"source_accuracy", p.source_accuracy}, {"seed", config.seed},
                                {"config", to_json(config)}}.dump(2) + "\n");
      std::printf("source accuracy %.4f\nwrote %s\n", p.source_accuracy, (out / "extractor.ckpt").c_str());
    } else if (train->parsed() || advtrain->parsed()) {
      const RunResult r = run_training(config, advtrain->parsed());
      write_run(r, config, out);
      print_run(r);
    } else if (attack->parsed()) {
      const RunResult r = run_attack(config);
      std::filesystem::create_directories(out);
      write_file(out / "results.json", results_json(r, config).dump(2) + "\n");
      print_run(r);
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsageError;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
}
