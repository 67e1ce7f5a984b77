#include "modx/optimizer.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "modx/errors.hpp"

namespace modx {

std::size_t warmup_steps(const AdamWConfig& config) {
  return static_cast<std::size_t>(std::llround(config.warmup_fraction * static_cast<double>(config.total_steps)));
}

double lr_at(std::size_t step, const AdamWConfig& config) {
  const std::size_t warmup = warmup_steps(config);
  if (step <= warmup) {
    if (warmup == 0) return config.base_lr;
    return config.base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  }
  if (step >= config.total_steps) return 0.0;
  const double progress =
      static_cast<double>(step - warmup) / static_cast<double>(config.total_steps - warmup);
  return config.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void adamw_step(std::span<const ParamRef> params, std::span<const std::span<const double>> grads,
                OptimizerState& state, double lr) {
  if (params.size() != grads.size()) {
    throw ShapeMismatch("adamw_step: " + std::to_string(params.size()) + " parameter tensors but " +
                        std::to_string(grads.size()) + " gradient tensors");
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].values.size() != grads[t].size()) {
      throw ShapeMismatch("adamw_step: tensor " + std::to_string(t) + " size mismatch");
    }
    for (double g : grads[t]) {
      if (!std::isfinite(g)) throw NonfiniteGradient("adamw_step: non-finite gradient in tensor " + std::to_string(t));
    }
  }
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.values.size(), 0.0);
      state.second_moment.emplace_back(p.values.size(), 0.0);
    }
  } else if (state.first_moment.size() != params.size()) {
    throw ShapeMismatch("adamw_step: optimizer state was built for a different parameter set");
  }

  const auto& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);

  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].values;
    const auto g = grads[k];
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    if (m.size() != values.size()) throw ShapeMismatch("adamw_step: moment shape mismatch");
    const double decay = params[k].decay ? lr * c.weight_decay : 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      values[i] -= decay * values[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      if (m_hat != 0.0) values[i] -= lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

}  // namespace modx
