#include "qtl/config.hpp"

#include <fstream>
#include <functional>
#include <map>

#include "qtl/error.hpp"

namespace qtl::app {

using nlohmann::json;

std::string to_string(DataSource source) {
  switch (source) {
    case DataSource::Synth: return "synth";
    case DataSource::Idx: return "idx";
    case DataSource::Csv: return "csv";
  }
  return "?";
}

DataSource parse_data_source(const std::string& s) {
  if (s == "synth") return DataSource::Synth;
  if (s == "idx") return DataSource::Idx;
  if (s == "csv") return DataSource::Csv;
  throw ConfigError("unknown dataset source '" + s + "' (expected synth, idx or csv)");
}

namespace {

template <class T>
T get(const json& v, const std::string& key) {
  try {
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      if (v.is_number_integer() && v.get<long long>() < 0) throw ConfigError("'" + key + "' must be non-negative");
      if (!v.is_number_unsigned() && !v.is_number_integer()) throw ConfigError("'" + key + "' must be an integer");
    } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      if (!v.is_number_integer()) throw ConfigError("'" + key + "' must be an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError("'" + key + "' must be a number");
    }
    return v.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value for '" + key + "': " + e.what());
  }
}

using Setter = std::function<void(const json&)>;

void apply(const json& j, const std::map<std::string, Setter>& setters, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + where + key + "'");
    it->second(value);
  }
}

std::string encoding_name(qvc::ScaleMode mode) { return mode == qvc::ScaleMode::TanhHalfPi ? "tanh" : "linear"; }

qvc::ScaleMode parse_encoding(const std::string& s) {
  if (s == "tanh") return qvc::ScaleMode::TanhHalfPi;
  if (s == "linear") return qvc::ScaleMode::Linear;
  throw ConfigError("unknown encoding '" + s + "' (expected tanh or linear)");
}

std::string entanglement_name(qvc::Entanglement e) { return e == qvc::Entanglement::Ring ? "ring" : "linear"; }

qvc::Entanglement parse_entanglement(const std::string& s) {
  if (s == "linear") return qvc::Entanglement::Linear;
  if (s == "ring") return qvc::Entanglement::Ring;
  throw ConfigError("unknown entanglement '" + s + "' (expected linear or ring)");
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + " path is empty");
  if (!std::filesystem::is_regular_file(path)) throw ConfigError(what + " '" + path + "' does not exist");
}

}  // namespace

void ExperimentConfig::validate() const {
  if (n_qubits < 1 || n_qubits > 12) throw ConfigError("n_qubits must be in [1, 12]");
  if (depth < 0) throw ConfigError("depth must be non-negative");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (!(optimizer.lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(init_spread >= 0.0)) throw ConfigError("init_spread must be non-negative");
  if (encoding.mode == qvc::ScaleMode::Linear && !(encoding.linear_scale > 0.0)) {
    throw ConfigError("linear_scale must be positive");
  }
  for (double e : attack_budgets)
    if (!(e >= 0.0)) throw ConfigError("attack budgets must be non-negative");
  if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be non-negative");
  if (!(mix_ratio >= 0.0 && mix_ratio <= 1.0)) throw ConfigError("mix_ratio must lie in [0, 1]");
  if (conv_channels < 1 || hidden_width < 1) throw ConfigError("conv_channels and hidden_width must be positive");
  if (!checkpoint.empty()) require_file(checkpoint, "checkpoint");
  if (!(dataset.train_fraction > 0.0 && dataset.train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie strictly between 0 and 1");
  }
  switch (dataset.source) {
    case DataSource::Synth:
      if (dataset.synth.classes < 1 || dataset.synth.classes > 6) throw ConfigError("synth classes must be in [1, 6]");
      if (dataset.synth.samples_per_class < 2) throw ConfigError("synth samples_per_class must be at least 2");
      if (dataset.synth.image_size < 8) throw ConfigError("synth image_size must be at least 8");
      if (!(dataset.synth.difficulty >= 0.0)) throw ConfigError("synth difficulty must be non-negative");
      break;
    case DataSource::Idx:
      require_file(dataset.idx_images, "IDX image file");
      require_file(dataset.idx_labels, "IDX label file");
      break;
    case DataSource::Csv:
      require_file(dataset.csv, "feature CSV");
      break;
  }
  if (pretrain.classes < 2 || pretrain.classes > 6) throw ConfigError("pretrain classes must be in [2, 6]");
  if (pretrain.samples_per_class < 1) throw ConfigError("pretrain samples_per_class must be positive");
  if (pretrain.epochs < 1) throw ConfigError("pretrain epochs must be at least 1");
  if (!(pretrain.lr > 0.0)) throw ConfigError("pretrain lr must be positive");
  if (pretrain.batch_size < 1) throw ConfigError("pretrain batch_size must be positive");
  if (!(pretrain.difficulty >= 0.0)) throw ConfigError("pretrain difficulty must be non-negative");
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  auto& d = c.dataset;
  auto& p = c.pretrain;
  const std::map<std::string, Setter> synth{
      {"classes", [&](const json& v) { d.synth.classes = get<std::size_t>(v, "classes"); }},
      {"samples_per_class", [&](const json& v) { d.synth.samples_per_class = get<std::size_t>(v, "samples_per_class"); }},
      {"image_size", [&](const json& v) { d.synth.image_size = get<std::size_t>(v, "image_size"); }},
      {"difficulty", [&](const json& v) { d.synth.difficulty = get<double>(v, "difficulty"); }},
  };
  const std::map<std::string, Setter> idx{
      {"images", [&](const json& v) { d.idx_images = get<std::string>(v, "images"); }},
      {"labels", [&](const json& v) { d.idx_labels = get<std::string>(v, "labels"); }},
  };
  const std::map<std::string, Setter> dataset{
      {"source", [&](const json& v) { d.source = parse_data_source(get<std::string>(v, "source")); }},
      {"synth", [&](const json& v) { apply(v, synth, "dataset.synth."); }},
      {"idx", [&](const json& v) { apply(v, idx, "dataset.idx."); }},
      {"csv", [&](const json& v) { d.csv = get<std::string>(v, "csv"); }},
      {"train_fraction", [&](const json& v) { d.train_fraction = get<double>(v, "train_fraction"); }},
  };
  const std::map<std::string, Setter> pretrain{
      {"classes", [&](const json& v) { p.classes = get<std::size_t>(v, "classes"); }},
      {"samples_per_class", [&](const json& v) { p.samples_per_class = get<std::size_t>(v, "samples_per_class"); }},
      {"difficulty", [&](const json& v) { p.difficulty = get<double>(v, "difficulty"); }},
      {"epochs", [&](const json& v) { p.epochs = get<int>(v, "epochs"); }},
      {"lr", [&](const json& v) { p.lr = get<double>(v, "lr"); }},
      {"lr_schedule", [&](const json& v) { p.lr_schedule = nn::parse_lr_schedule(get<std::string>(v, "lr_schedule")); }},
      {"batch_size", [&](const json& v) { p.batch_size = get<std::size_t>(v, "batch_size"); }},
  };
  const std::map<std::string, Setter> top{
      {"regime", [&](const json& v) { c.regime = transfer::parse_regime(get<std::string>(v, "regime")); }},
      {"n_qubits", [&](const json& v) { c.n_qubits = get<int>(v, "n_qubits"); }},
      {"depth", [&](const json& v) { c.depth = get<int>(v, "depth"); }},
      {"encoding", [&](const json& v) { c.encoding.mode = parse_encoding(get<std::string>(v, "encoding")); }},
      {"linear_scale", [&](const json& v) { c.encoding.linear_scale = get<double>(v, "linear_scale"); }},
      {"entanglement", [&](const json& v) { c.entanglement = parse_entanglement(get<std::string>(v, "entanglement")); }},
      {"epochs", [&](const json& v) { c.epochs = get<int>(v, "epochs"); }},
      {"batch_size", [&](const json& v) { c.batch_size = get<std::size_t>(v, "batch_size"); }},
      {"lr", [&](const json& v) { c.optimizer.lr = get<double>(v, "lr"); }},
      {"optimizer", [&](const json& v) { c.optimizer.kind = nn::parse_optimizer_kind(get<std::string>(v, "optimizer")); }},
      {"lr_schedule", [&](const json& v) { c.optimizer.schedule = nn::parse_lr_schedule(get<std::string>(v, "lr_schedule")); }},
      {"seed", [&](const json& v) { c.seed = get<std::uint64_t>(v, "seed"); }},
      {"init_spread", [&](const json& v) { c.init_spread = get<double>(v, "init_spread"); }},
      {"fixed_readout", [&](const json& v) { c.fixed_readout = get<bool>(v, "fixed_readout"); }},
      {"attack_budgets", [&](const json& v) {
         if (!v.is_array()) throw ConfigError("'attack_budgets' must be an array");
         c.attack_budgets.clear();
         for (const auto& e : v) c.attack_budgets.push_back(get<double>(e, "attack_budgets"));
       }},
      {"epsilon", [&](const json& v) { c.epsilon = get<double>(v, "epsilon"); }},
      {"mix_ratio", [&](const json& v) { c.mix_ratio = get<double>(v, "mix_ratio"); }},
      {"conv_channels", [&](const json& v) { c.conv_channels = get<std::size_t>(v, "conv_channels"); }},
      {"hidden_width", [&](const json& v) { c.hidden_width = get<std::size_t>(v, "hidden_width"); }},
      {"checkpoint", [&](const json& v) { c.checkpoint = get<std::string>(v, "checkpoint"); }},
      {"output_dir", [&](const json& v) { c.output_dir = get<std::string>(v, "output_dir"); }},
      {"dataset", [&](const json& v) { apply(v, dataset, "dataset."); }},
      {"pretrain", [&](const json& v) { apply(v, pretrain, "pretrain."); }},
  };
  apply(j, top, "");
  return c;
}

json to_json(const ExperimentConfig& c) {
  return {
      {"regime", transfer::to_string(c.regime)},
      {"n_qubits", c.n_qubits},
      {"depth", c.depth},
      {"encoding", encoding_name(c.encoding.mode)},
      {"linear_scale", c.encoding.linear_scale},
      {"entanglement", entanglement_name(c.entanglement)},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"lr", c.optimizer.lr},
      {"optimizer", nn::to_string(c.optimizer.kind)},
      {"lr_schedule", nn::to_string(c.optimizer.schedule)},
      {"seed", c.seed},
      {"init_spread", c.init_spread},
      {"fixed_readout", c.fixed_readout},
      {"attack_budgets", c.attack_budgets},
      {"epsilon", c.epsilon},
      {"mix_ratio", c.mix_ratio},
      {"conv_channels", c.conv_channels},
      {"hidden_width", c.hidden_width},
      {"checkpoint", c.checkpoint},
      {"output_dir", c.output_dir},
      {"dataset",
       {{"source", to_string(c.dataset.source)},
        {"synth",
         {{"classes", c.dataset.synth.classes},
          {"samples_per_class", c.dataset.synth.samples_per_class},
          {"image_size", c.dataset.synth.image_size},
          {"difficulty", c.dataset.synth.difficulty}}},
        {"idx", {{"images", c.dataset.idx_images}, {"labels", c.dataset.idx_labels}}},
        {"csv", c.dataset.csv},
        {"train_fraction", c.dataset.train_fraction}}},
      {"pretrain",
       {{"classes", c.pretrain.classes},
        {"samples_per_class", c.pretrain.samples_per_class},
        {"difficulty", c.pretrain.difficulty},
        {"epochs", c.pretrain.epochs},
        {"lr", c.pretrain.lr},
        {"lr_schedule", nn::to_string(c.pretrain.lr_schedule)},
        {"batch_size", c.pretrain.batch_size}}},
  };
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

}  // namespace qtl::app
