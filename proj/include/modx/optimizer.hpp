#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "modx/encoder.hpp"

namespace modx {

struct AdamWConfig {
  double base_lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;
  double weight_decay = 0.2;
  double warmup_fraction = 0.2;  // of total_steps
  std::size_t total_steps = 0;
};

struct OptimizerState {
  AdamWConfig config;
  std::size_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  explicit OptimizerState(AdamWConfig c) : config(c) {}
};

std::size_t warmup_steps(const AdamWConfig& config);

// Linear warmup from 0 to base_lr, then half-cosine decay to 0 at total_steps.
double lr_at(std::size_t step, const AdamWConfig& config);

// One AdamW update with learning rate `lr`. Weight decay is decoupled and
// applied before the Adam delta, only to tensors flagged for decay.
// Throws ShapeMismatch or NonfiniteGradient.
void adamw_step(std::span<const ParamRef> params, std::span<const std::span<const double>> grads,
                OptimizerState& state, double lr);

}  // namespace modx
