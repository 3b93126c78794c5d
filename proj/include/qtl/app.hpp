#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qtl/adversarial.hpp"
#include "qtl/checkpoint.hpp"
#include "qtl/config.hpp"
#include "qtl/data.hpp"
#include "qtl/model.hpp"

namespace qtl::app {

struct Splits {
  data::Dataset train;
  data::Dataset test;
};

/// Loads or generates the target data and splits it. Feature CSVs are
/// standardized with statistics of the train side.
Splits load_data(const ExperimentConfig& config);

transfer::ModelSpec model_spec(const ExperimentConfig& config, const data::Dataset& sample);

/// Attack bounds for the dataset: [0, 1] for images, unbounded otherwise.
adversarial::AttackConfig attack_config(const data::Dataset& dataset, double epsilon, double mix_ratio);

struct PretrainOutcome {
  Checkpoint checkpoint;
  double source_accuracy = 0.0;
};

/// Pretrains the spec's extractor on the synthetic source task of
/// `config.pretrain`, rendered at the target image size.
PretrainOutcome pretrain_extractor(const ExperimentConfig& config, const transfer::ModelSpec& spec);

struct AttackResult {
  double epsilon = 0.0;
  double accuracy = 0.0;
};

struct RunResult {
  std::string run_id;
  transfer::Regime regime = transfer::Regime::QuantumTL;
  std::uint64_t seed = 0;
  bool adversarial = false;
  double train_epsilon = 0.0;  ///< adversarial runs only
  double clean_accuracy = 0.0;
  std::vector<AttackResult> attacked;
  std::vector<transfer::EpochRecord> history;
  std::vector<double> epoch_seconds;
  std::optional<double> source_accuracy;
  transfer::Model model;
};

/// Builds the regime's model and trains it (FGSM-mixed when `adversarial`).
/// TL regimes on images use `config.checkpoint` or pretrain on the fly.
/// `pretrained` overrides both.
RunResult run_training(const ExperimentConfig& config, bool adversarial,
                       const std::optional<Checkpoint>& pretrained = std::nullopt);

/// Evaluates a trained model checkpoint (`config.checkpoint`) clean and at
/// every attack budget.
RunResult run_attack(const ExperimentConfig& config);

// Outputs -------------------------------------------------------------------

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

/// One row per epoch; no wall-clock values, so identical runs give identical
/// files.
std::string metrics_csv(const RunResult& run, const std::vector<double>& budgets);
nlohmann::json metrics_json(const RunResult& run, const std::vector<double>& budgets);
nlohmann::json results_json(const RunResult& run, const ExperimentConfig& config);

/// Writes metrics.csv, metrics.json, results.json and model.ckpt into `dir`.
void write_run(const RunResult& run, const ExperimentConfig& config, const std::filesystem::path& dir);

struct ReportRow {
  transfer::Regime regime = transfer::Regime::QuantumTL;
  double epsilon = 0.0;
  std::optional<double> clean;
  std::optional<double> attacked;
  std::optional<double> at_attacked;
  std::optional<double> at_clean;
  int runs = 0;
  int at_runs = 0;
};

/// Seed-averaged table with one row per (regime, epsilon) found in the
/// results.json files under `dir`. Adversarial runs contribute to the row of
/// the budget they were trained with.
std::vector<ReportRow> collect_report(const std::filesystem::path& dir);
std::string report_text(const std::vector<ReportRow>& rows);
std::string report_csv(const std::vector<ReportRow>& rows);
nlohmann::json report_json(const std::vector<ReportRow>& rows);

struct SelftestLine {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Gradient checks, simulator-vs-oracle and FGSM contract, at reduced size.
std::vector<SelftestLine> selftest();

}  // namespace qtl::app
