#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "qtl/model.hpp"
#include "qtl/optimizer.hpp"
#include "qtl/qvc.hpp"

namespace qtl::app {

enum class DataSource { Synth, Idx, Csv };

std::string to_string(DataSource source);
using qtl::to_string;
DataSource parse_data_source(const std::string& s);

struct SynthTarget {
  std::size_t classes = 4;
  std::size_t samples_per_class = 50;
  std::size_t image_size = 16;
  double difficulty = 2.0;
};

struct DatasetConfig {
  DataSource source = DataSource::Synth;
  SynthTarget synth;
  std::string idx_images;
  std::string idx_labels;
  std::string csv;
  double train_fraction = 0.8;
};

/// Synthetic source task used to pretrain the extractor for TL regimes.
struct PretrainConfig {
  std::size_t classes = 6;
  std::size_t samples_per_class = 600;
  double difficulty = 2.0;
  int epochs = 20;
  double lr = 0.003;
  nn::LrSchedule lr_schedule = nn::LrSchedule::Constant;
  std::size_t batch_size = 16;
};

struct ExperimentConfig {
  transfer::Regime regime = transfer::Regime::QuantumTL;
  int n_qubits = 6;
  int depth = 6;
  qvc::EncodingSpec encoding;
  qvc::Entanglement entanglement = qvc::Entanglement::Linear;
  int epochs = 50;
  std::size_t batch_size = 16;
  nn::OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  double init_spread = 0.01;
  bool fixed_readout = false;
  /// Budgets for attacked evaluation.
  std::vector<double> attack_budgets{0.1, 0.2, 0.3};
  /// Budget used to craft adversarial-training samples.
  double epsilon = 0.1;
  double mix_ratio = 0.5;
  std::size_t conv_channels = 8;
  std::size_t hidden_width = 32;
  /// Extractor checkpoint for TL regimes, or model checkpoint for `attack`.
  std::string checkpoint;
  std::string output_dir = "runs/default";
  DatasetConfig dataset;
  PretrainConfig pretrain;

  /// Throws ConfigError on out-of-range values or missing files.
  void validate() const;
};

/// Unknown keys and wrongly typed values throw ConfigError. Missing keys
/// keep their defaults.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& config);
/// Parses (without validating) a JSON config file.
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace qtl::app
