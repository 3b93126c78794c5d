#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace qtl::nn {

enum class OptimizerKind { SGD, Adam };

enum class LrSchedule {
  Constant,
  /// base lr for the first half of training, then linear decay towards 0
  ConstantThenLinearDecay,
  /// base lr * 0.1^floor(epoch / 10)
  StepDecay,
};

std::string to_string(OptimizerKind kind);
std::string to_string(LrSchedule schedule);
OptimizerKind parse_optimizer_kind(const std::string& s);
LrSchedule parse_lr_schedule(const std::string& s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 0.0004;
  LrSchedule schedule = LrSchedule::ConstantThenLinearDecay;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

double scheduled_lr(const OptimizerConfig& config, int epoch, int total_epochs);

/// One trainable array and its gradient. Frozen slots are never written.
struct ParamSlot {
  std::span<double> value;
  std::span<const double> grad;
  bool frozen = false;
};

/// SGD or Adam over a fixed, ordered list of parameter slots. Moment
/// buffers are bound to slot positions on the first step.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config);

  /// Applies one update at learning rate `lr`. Throws ShapeError when a
  /// gradient does not match its parameter or the slot layout changed.
  void step(std::span<const ParamSlot> slots, double lr);

  [[nodiscard]] const OptimizerConfig& config() const { return config_; }
  [[nodiscard]] std::int64_t steps() const { return t_; }

 private:
  OptimizerConfig config_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace qtl::nn
