#include "qtl/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "qtl/error.hpp"

namespace qtl::nn {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::SGD ? "sgd" : "adam"; }

std::string to_string(LrSchedule schedule) {
  switch (schedule) {
    case LrSchedule::Constant: return "constant";
    case LrSchedule::ConstantThenLinearDecay: return "constant_then_linear_decay";
    case LrSchedule::StepDecay: return "step_decay";
  }
  return "?";
}

OptimizerKind parse_optimizer_kind(const std::string& s) {
  if (s == "sgd") return OptimizerKind::SGD;
  if (s == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + s + "' (expected sgd or adam)");
}

LrSchedule parse_lr_schedule(const std::string& s) {
  if (s == "constant") return LrSchedule::Constant;
  if (s == "constant_then_linear_decay") return LrSchedule::ConstantThenLinearDecay;
  if (s == "step_decay") return LrSchedule::StepDecay;
  throw ConfigError("unknown lr schedule '" + s + "'");
}

double scheduled_lr(const OptimizerConfig& config, int epoch, int total_epochs) {
  switch (config.schedule) {
    case LrSchedule::Constant:
      return config.lr;
    case LrSchedule::StepDecay:
      return config.lr * std::pow(0.1, epoch / 10);
    case LrSchedule::ConstantThenLinearDecay: {
      const double half = total_epochs / 2.0;
      if (epoch <= half) return config.lr;
      return std::max(0.0, config.lr * (total_epochs - epoch) / (total_epochs - half));
    }
  }
  return config.lr;
}

Optimizer::Optimizer(OptimizerConfig config) : config_(config) {
  if (!(config_.lr > 0.0)) throw ConfigError("learning rate must be positive");
}

void Optimizer::step(std::span<const ParamSlot> slots, double lr) {
  const bool adam = config_.kind == OptimizerKind::Adam;
  if (t_ == 0 && adam) {
    m_.clear();
    v_.clear();
    for (const auto& s : slots) {
      m_.emplace_back(s.value.size(), 0.0);
      v_.emplace_back(s.value.size(), 0.0);
    }
  }
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const auto& s = slots[k];
    if (!s.frozen && s.grad.size() != s.value.size()) {
      throw ShapeError("gradient of size " + std::to_string(s.grad.size()) + " for parameter of size " +
                       std::to_string(s.value.size()));
    }
    if (adam && (m_.size() != slots.size() || m_[k].size() != s.value.size())) {
      throw ShapeError("optimizer slot layout changed between steps");
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const auto& s = slots[k];
    if (s.frozen) continue;
    if (!adam) {
      for (std::size_t i = 0; i < s.value.size(); ++i) s.value[i] -= lr * s.grad[i];
      continue;
    }
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < s.value.size(); ++i) {
      const double g = s.grad[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      s.value[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config_.epsilon);
    }
  }
}

}  // namespace qtl::nn
