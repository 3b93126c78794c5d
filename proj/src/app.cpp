#include "qtl/app.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "qtl/check.hpp"
#include "qtl/error.hpp"
#include "qtl/loss.hpp"
#include "qtl/random.hpp"

namespace qtl::app {

using nlohmann::json;
using transfer::Regime;

Splits load_data(const ExperimentConfig& config) {
  const auto& d = config.dataset;
  data::Dataset all;
  switch (d.source) {
    case DataSource::Synth:
      all = data::synth_generate({d.synth.classes, d.synth.samples_per_class, d.synth.image_size,
                                  stream_seed(config.seed, Stream::Data), d.synth.difficulty,
                                  data::SynthTask::Target});
      break;
    case DataSource::Idx: all = data::load_idx(d.idx_images, d.idx_labels); break;
    case DataSource::Csv: all = data::load_feature_csv(d.csv); break;
  }
  auto [train, test] = data::split(all, d.train_fraction, stream_seed(config.seed, Stream::Split));
  if (all.kind() == data::DatasetKind::FeatureVector) {
    data::standardize(test, train);
    const data::Dataset reference = train;
    data::standardize(train, reference);
  }
  return {std::move(train), std::move(test)};
}

transfer::ModelSpec model_spec(const ExperimentConfig& config, const data::Dataset& sample) {
  transfer::ModelSpec s;
  s.input_kind = sample.kind();
  s.sample_shape = sample.sample_shape();
  s.classes = sample.class_count();
  s.conv_channels = config.conv_channels;
  s.hidden_width = config.hidden_width;
  s.n_qubits = config.n_qubits;
  s.depth = config.depth;
  s.encoding = config.encoding;
  s.entanglement = config.entanglement;
  s.init_spread = config.init_spread;
  s.fixed_readout = config.fixed_readout;
  return s;
}

adversarial::AttackConfig attack_config(const data::Dataset& dataset, double epsilon, double mix_ratio) {
  adversarial::AttackConfig c = dataset.kind() == data::DatasetKind::Image
                                    ? adversarial::AttackConfig{epsilon, 0.0, 1.0, mix_ratio}
                                    : adversarial::AttackConfig::unbounded(epsilon);
  c.mix_ratio = mix_ratio;
  return c;
}

PretrainOutcome pretrain_extractor(const ExperimentConfig& config, const transfer::ModelSpec& spec) {
  if (spec.input_kind != data::DatasetKind::Image) throw ConfigError("pretraining needs image data");
  const Shape& shape = spec.sample_shape;
  if (shape[0] != 1 || shape[1] != shape[2]) {
    throw ConfigError("synthetic pretraining needs square single-channel images, target has " + qtl::to_string(shape));
  }
  const auto& p = config.pretrain;
  const data::Dataset source = data::synth_generate({p.classes, p.samples_per_class, shape[1],
                                                     stream_seed(config.seed, Stream::SourceData), p.difficulty,
                                                     data::SynthTask::Source});
  transfer::TrainConfig tc;
  tc.epochs = p.epochs;
  tc.batch_size = p.batch_size;
  tc.optimizer = config.optimizer;
  tc.optimizer.lr = p.lr;
  tc.optimizer.schedule = p.lr_schedule;
  tc.shuffle_seed = stream_seed(config.seed, Stream::SourceShuffle);
  auto result = transfer::pretrain(spec, source, tc, stream_seed(config.seed, Stream::SourceInit));
  return {std::move(result.checkpoint), transfer::evaluate(result.source_model, source).accuracy};
}

namespace {

std::string run_id(const ExperimentConfig& config, bool adversarial) {
  return transfer::to_string(config.regime) + (adversarial ? "-at" : "") + "-s" + std::to_string(config.seed);
}

std::vector<AttackResult> attack_all(transfer::Model& model, const data::Dataset& test,
                                     const std::vector<double>& budgets, double mix_ratio) {
  std::vector<AttackResult> out;
  for (double e : budgets) {
    out.push_back({e, adversarial::evaluate_under_attack(model, test, attack_config(test, e, mix_ratio))});
  }
  return out;
}

}  // namespace

RunResult run_training(const ExperimentConfig& config, bool adversarial, const std::optional<Checkpoint>& pretrained) {
  config.validate();
  const Splits s = load_data(config);
  const transfer::ModelSpec spec = model_spec(config, s.train);
  RunResult r;
  r.run_id = run_id(config, adversarial);
  r.regime = config.regime;
  r.seed = config.seed;
  r.adversarial = adversarial;
  r.train_epsilon = adversarial ? config.epsilon : 0.0;

  std::optional<Checkpoint> extractor;
  if (transfer::uses_transfer(config.regime) && spec.input_kind == data::DatasetKind::Image) {
    if (pretrained) {
      extractor = pretrained;
    } else if (!config.checkpoint.empty()) {
      extractor = load_checkpoint(config.checkpoint);
    } else {
      PretrainOutcome p = pretrain_extractor(config, spec);
      extractor = std::move(p.checkpoint);
      r.source_accuracy = p.source_accuracy;
    }
  }
  r.model = transfer::build(config.regime, spec, extractor, stream_seed(config.seed, Stream::Init));

  transfer::TrainConfig tc;
  tc.epochs = config.epochs;
  tc.batch_size = config.batch_size;
  tc.optimizer = config.optimizer;
  tc.shuffle_seed = stream_seed(config.seed, Stream::Shuffle);
  if (adversarial) {
    r.history = adversarial::adversarial_train(r.model, s.train, &s.test,
                                               attack_config(s.train, config.epsilon, config.mix_ratio), tc,
                                               config.attack_budgets);
  } else {
    r.history = transfer::train(r.model, s.train, &s.test, tc);
  }
  r.clean_accuracy = transfer::evaluate(r.model, s.test).accuracy;
  r.attacked = attack_all(r.model, s.test, config.attack_budgets, config.mix_ratio);
  return r;
}

RunResult run_attack(const ExperimentConfig& config) {
  config.validate();
  if (config.checkpoint.empty()) throw ConfigError("attack needs a model checkpoint (--checkpoint)");
  const Checkpoint ckpt = load_checkpoint(config.checkpoint);
  const Splits s = load_data(config);
  const transfer::ModelSpec spec = model_spec(config, s.train);
  // same topology without the pretraining requirement; weights come from the file
  Regime blank = config.regime;
  if (blank == Regime::QuantumTL) blank = Regime::QuantumNoTL;
  if (blank == Regime::ClassicalTL) blank = Regime::ClassicalNoTL;
  RunResult r;
  r.run_id = run_id(config, false) + "-attack";
  r.regime = config.regime;
  r.seed = config.seed;
  r.model = transfer::build(blank, spec, std::nullopt, stream_seed(config.seed, Stream::Init));
  transfer::load_model(r.model, ckpt);
  r.clean_accuracy = transfer::evaluate(r.model, s.test).accuracy;
  r.attacked = attack_all(r.model, s.test, config.attack_budgets, config.mix_ratio);
  return r;
}

// ------------------------------------------------------------------ output

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string metrics_csv(const RunResult& run, const std::vector<double>& budgets) {
  std::ostringstream out;
  out << "run_id,regime,seed,epoch,lr,train_loss,train_accuracy,test_loss,test_accuracy";
  for (double e : budgets) out << ",attacked_" << format_double(e);
  out << '\n';
  for (const auto& rec : run.history) {
    out << run.run_id << ',' << transfer::to_string(run.regime) << ',' << run.seed << ',' << rec.epoch << ','
        << format_double(rec.lr) << ',' << format_double(rec.train_loss) << ','
        << format_double(rec.train_accuracy) << ',' << format_double(rec.test_loss) << ','
        << format_double(rec.test_accuracy);
    for (std::size_t k = 0; k < budgets.size(); ++k) {
      out << ',';
      if (k < rec.attacked_accuracy.size()) out << format_double(rec.attacked_accuracy[k]);
    }
    out << '\n';
  }
  return out.str();
}

json metrics_json(const RunResult& run, const std::vector<double>& budgets) {
  json records = json::array();
  double total = 0.0;
  for (const auto& rec : run.history) {
    json attacked = json::object();
    for (std::size_t k = 0; k < budgets.size() && k < rec.attacked_accuracy.size(); ++k) {
      attacked[format_double(budgets[k])] = rec.attacked_accuracy[k];
    }
    total += rec.wall_seconds;
    records.push_back({{"run_id", run.run_id},
                       {"regime", transfer::to_string(run.regime)},
                       {"epoch", rec.epoch},
                       {"lr", rec.lr},
                       {"train_loss", rec.train_loss},
                       {"train_accuracy", rec.train_accuracy},
                       {"test_loss", rec.test_loss},
                       {"clean_accuracy", rec.test_accuracy},
                       {"attacked_accuracy", attacked},
                       {"wall_seconds", rec.wall_seconds}});
  }
  return {{"run_id", run.run_id}, {"records", records}, {"total_wall_seconds", total}};
}

json results_json(const RunResult& run, const ExperimentConfig& config) {
  json attacked = json::array();
  for (const auto& a : run.attacked) attacked.push_back({{"epsilon", a.epsilon}, {"accuracy", a.accuracy}});
  json j{{"run_id", run.run_id},
         {"regime", transfer::to_string(run.regime)},
         {"seed", run.seed},
         {"adversarial_training", run.adversarial},
         {"clean_accuracy", run.clean_accuracy},
         {"attacked", attacked},
         {"quantum_parameters", run.model.quantum_parameter_count()},
         {"config", to_json(config)}};
  if (run.adversarial) j["train_epsilon"] = run.train_epsilon;
  if (run.source_accuracy) j["source_accuracy"] = *run.source_accuracy;
  return j;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace

void write_run(const RunResult& run, const ExperimentConfig& config, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  if (!run.history.empty()) {
    write_text(dir / "metrics.csv", metrics_csv(run, config.attack_budgets));
    write_text(dir / "metrics.json", metrics_json(run, config.attack_budgets).dump(2) + "\n");
  }
  write_text(dir / "results.json", results_json(run, config).dump(2) + "\n");
  auto model = run.model;
  save_checkpoint(transfer::model_checkpoint(model, run.seed, transfer::to_string(run.regime)), dir / "model.ckpt");
}

// ------------------------------------------------------------------ report

namespace {

struct Sums {
  double clean = 0, attacked = 0, at_clean = 0, at_attacked = 0;
  int runs = 0, at_runs = 0, at_attacked_runs = 0;
};

std::string method_name(Regime r) {
  switch (r) {
    case Regime::ClassicalTL: return "Classical TL";
    case Regime::ClassicalNoTL: return "Classical without TL";
    case Regime::QuantumTL: return "Quantum TL";
    case Regime::QuantumNoTL: return "Quantum without TL";
  }
  return "?";
}

std::string percent(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * *v);
  return buf;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("cannot parse " + path.string() + ": " + e.what());
  }
}

}  // namespace

std::vector<ReportRow> collect_report(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ConfigError("run directory '" + dir.string() + "' does not exist");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().filename() == "results.json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("no results.json under " + dir.string());

  std::map<std::pair<Regime, double>, Sums> table;
  for (const auto& f : files) {
    const json j = read_json(f);
    try {
      const Regime regime = transfer::parse_regime(j.at("regime").get<std::string>());
      const double clean = j.at("clean_accuracy").get<double>();
      if (j.value("adversarial_training", false)) {
        const double eps = j.at("train_epsilon").get<double>();
        Sums& s = table[{regime, eps}];
        s.at_clean += clean;
        ++s.at_runs;
        for (const auto& a : j.at("attacked")) {
          if (a.at("epsilon").get<double>() == eps) {
            s.at_attacked += a.at("accuracy").get<double>();
            ++s.at_attacked_runs;
          }
        }
      } else {
        for (const auto& a : j.at("attacked")) {
          Sums& s = table[{regime, a.at("epsilon").get<double>()}];
          s.clean += clean;
          s.attacked += a.at("accuracy").get<double>();
          ++s.runs;
        }
      }
    } catch (const json::exception& e) {
      throw DataError("malformed " + f.string() + ": " + e.what());
    }
  }
  std::vector<ReportRow> rows;
  for (const auto& [key, s] : table) {
    ReportRow row;
    row.regime = key.first;
    row.epsilon = key.second;
    row.runs = s.runs;
    row.at_runs = s.at_runs;
    if (s.runs) {
      row.clean = s.clean / s.runs;
      row.attacked = s.attacked / s.runs;
    }
    if (s.at_runs) row.at_clean = s.at_clean / s.at_runs;
    if (s.at_attacked_runs) row.at_attacked = s.at_attacked / s.at_attacked_runs;
    rows.push_back(row);
  }
  return rows;
}

std::string report_text(const std::vector<ReportRow>& rows) {
  const std::vector<std::string> head{"Method", "Attack Strength", "Clean Accuracy", "Accuracy under Attack",
                                      "Adversarial Training Accuracy", "AT Clean Accuracy"};
  std::vector<std::vector<std::string>> cells{head};
  for (const auto& r : rows) {
    cells.push_back({method_name(r.regime), format_double(r.epsilon), percent(r.clean), percent(r.attacked),
                     percent(r.at_attacked), percent(r.at_clean)});
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::ostringstream out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::size_t c = 0; c < cells[i].size(); ++c) {
      out << (c ? " | " : "") << cells[i][c] << std::string(width[c] - cells[i][c].size(), ' ');
    }
    out << '\n';
    if (i == 0) {
      for (std::size_t c = 0; c < width.size(); ++c) out << (c ? "-|-" : "") << std::string(width[c], '-');
      out << '\n';
    }
  }
  return out.str();
}

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream out;
  out << "method,regime,epsilon,clean_accuracy,accuracy_under_attack,adversarial_training_accuracy,"
         "at_clean_accuracy,runs,at_runs\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& r : rows) {
    out << method_name(r.regime) << ',' << transfer::to_string(r.regime) << ',' << format_double(r.epsilon) << ','
        << opt(r.clean) << ',' << opt(r.attacked) << ',' << opt(r.at_attacked) << ',' << opt(r.at_clean) << ','
        << r.runs << ',' << r.at_runs << '\n';
  }
  return out.str();
}

json report_json(const std::vector<ReportRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"method", method_name(r.regime)},
                   {"regime", transfer::to_string(r.regime)},
                   {"attack_strength", r.epsilon},
                   {"clean_accuracy", optional_json(r.clean)},
                   {"accuracy_under_attack", optional_json(r.attacked)},
                   {"adversarial_training_accuracy", optional_json(r.at_attacked)},
                   {"at_clean_accuracy", optional_json(r.at_clean)},
                   {"runs", r.runs},
                   {"at_runs", r.at_runs}});
  }
  return out;
}

// ---------------------------------------------------------------- selftest

std::vector<SelftestLine> selftest() {
  std::vector<SelftestLine> lines;
  auto add = [&](std::string name, bool ok, const std::string& detail) {
    lines.push_back({std::move(name), ok, detail});
  };
  auto sci = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return std::string(buf);
  };
  std::mt19937_64 rng(20240611);

  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const int n = 1 + i % 3;
    const auto gates = check::random_circuit(rng, n, 10);
    auto state = sv::init_state(n);
    for (const auto& g : gates) state.apply(g);
    worst = std::max(worst, check::max_abs_diff(state.amplitudes(), check::run_dense(n, gates)));
  }
  add("statevector matches dense oracle", worst <= 1e-10, "max amplitude error " + sci(worst));

  auto state = sv::init_state(6);
  for (const auto& g : check::random_circuit(rng, 6, 1000)) state.apply(g);
  const double drift = std::abs(state.norm_squared() - 1.0);
  add("norm after 1000 gates", drift <= 1e-9, "drift " + sci(drift));

  worst = 0.0;
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int i = 0; i < 5; ++i) {
    const int n = 2 + i % 2;
    auto params = qvc::QvcParams::random(n, 2, 1.0, rng);
    std::vector<double> x(static_cast<std::size_t>(n)), up(static_cast<std::size_t>(n));
    for (auto& v : x) v = u(rng);
    for (auto& v : up) v = u(rng);
    const qvc::EncodingSpec spec;
    const auto exact = qvc::param_shift_gradient(x, params, spec, up);
    const auto fd = check::qvc_dense_fd_gradient(x, params, spec, up, 1e-4);
    worst = std::max(worst, check::max_abs_diff(exact, fd));
  }
  add("parameter shift vs finite difference", worst <= 1e-6, "max error " + sci(worst));

  worst = 0.0;
  std::string worst_layer;
  for (const auto& c : check::layer_gradient_suite(1e-5, 31)) {
    if (c.result.worst() >= worst) {
      worst = c.result.worst();
      worst_layer = c.name;
    }
  }
  add("layer gradients vs finite difference", worst <= 1e-4, "worst " + sci(worst) + " (" + worst_layer + ")");

  const double ce = nn::cross_entropy(std::vector<double>{0.5, 0.5}, 1);
  add("cross entropy at p = 0.5", std::abs(ce - std::numbers::ln2) <= 1e-12, "loss " + format_double(ce));

  transfer::ModelSpec spec;
  spec.sample_shape = {1, 8, 8};
  spec.conv_channels = 2;
  spec.hidden_width = 6;
  spec.n_qubits = 3;
  spec.depth = 2;
  spec.init_spread = 0.3;
  spec.classes = 2;
  auto model = transfer::build(Regime::QuantumNoTL, spec, std::nullopt, 5);
  Tensor x({4, 1, 8, 8});
  std::uniform_real_distribution<double> px(0.0, 1.0);
  for (double& v : x.data()) v = px(rng);
  const std::vector<std::size_t> y{0, 1, 0, 1};
  const Tensor same = adversarial::fgsm(model, x, y, {0.0, 0.0, 1.0, 0.5});
  const Tensor adv = adversarial::fgsm(model, x, y, {0.1, 0.0, 1.0, 0.5});
  double budget = 0.0;
  bool in_bounds = true;
  for (std::size_t i = 0; i < x.size(); ++i) {
    budget = std::max(budget, std::abs(adv.data()[i] - x.data()[i]));
    in_bounds = in_bounds && adv.data()[i] >= 0.0 && adv.data()[i] <= 1.0;
  }
  add("FGSM contract", same == x && budget <= 0.1 + 1e-12 && in_bounds,
      "eps=0 identical: " + std::string(same == x ? "yes" : "no") + ", max |delta| " + sci(budget));
  return lines;
}

}  // namespace qtl::app
