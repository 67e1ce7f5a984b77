#include <doctest.h>

#include <cmath>
#include <limits>

#include "modx/errors.hpp"
#include "modx/optimizer.hpp"

using namespace modx;

namespace {

AdamWConfig schedule(std::size_t total) {
  AdamWConfig c;
  c.base_lr = 5e-4;
  c.warmup_fraction = 0.2;
  c.total_steps = total;
  return c;
}

void step_scalar(double& theta, double g, OptimizerState& state, double lr, bool decay = true) {
  const ParamRef ref{std::span<double>(&theta, 1), decay};
  const std::span<const double> grad(&g, 1);
  adamw_step(std::span<const ParamRef>(&ref, 1), std::span<const std::span<const double>>(&grad, 1), state, lr);
}

}  // namespace

TEST_CASE("lr_at schedule endpoints") {
  const AdamWConfig c = schedule(1000);
  CHECK(warmup_steps(c) == 200);
  CHECK(lr_at(0, c) == 0.0);
  CHECK(lr_at(200, c) == c.base_lr);
  CHECK(std::abs(lr_at(1000, c)) <= 1e-12);
  CHECK(lr_at(5000, c) == 0.0);
  CHECK(lr_at(100, c) == doctest::Approx(c.base_lr / 2).epsilon(1e-15));
  CHECK(lr_at(600, c) == doctest::Approx(c.base_lr / 2).epsilon(1e-12));
}

TEST_CASE("lr_at is continuous at the end of warmup") {
  const AdamWConfig c = schedule(1000);
  const double warm_side = c.base_lr * 200.0 / 200.0;
  const double cos_side = c.base_lr * 0.5 * (1.0 + std::cos(0.0));
  CHECK(std::abs(warm_side - lr_at(200, c)) <= 1e-12);
  CHECK(std::abs(cos_side - lr_at(200, c)) <= 1e-12);
  CHECK(std::abs(lr_at(199, c) - c.base_lr) <= c.base_lr / 200.0 + 1e-18);
  CHECK(std::abs(lr_at(201, c) - c.base_lr) <= 1e-7);
}

TEST_CASE("lr_at rises through warmup and falls afterwards") {
  const AdamWConfig c = schedule(500);
  for (std::size_t s = 1; s <= 100; ++s) CHECK(lr_at(s, c) > lr_at(s - 1, c));
  for (std::size_t s = 101; s <= 500; ++s) CHECK(lr_at(s, c) < lr_at(s - 1, c));
}

TEST_CASE("lr_at without warmup starts at base_lr") {
  AdamWConfig c = schedule(10);
  c.warmup_fraction = 0.0;
  CHECK(lr_at(0, c) == c.base_lr);
}

TEST_CASE("adamw single scalar step, hand example") {
  AdamWConfig c;
  c.beta1 = 0.0;
  c.beta2 = 0.0;
  c.weight_decay = 0.0;
  c.epsilon = 0.0;
  OptimizerState state(c);
  double theta = 1.0;
  step_scalar(theta, 1.0, state, 0.1);
  CHECK(theta == 0.9);
  CHECK(state.step == 1);
}

TEST_CASE("adamw with zero gradient and no decay leaves parameters unchanged") {
  AdamWConfig c;
  c.weight_decay = 0.0;
  OptimizerState state(c);
  double theta = 0.37;
  for (int i = 0; i < 5; ++i) step_scalar(theta, 0.0, state, 0.01);
  CHECK(theta == 0.37);
  CHECK(state.first_moment[0][0] == 0.0);
  CHECK(state.second_moment[0][0] == 0.0);
  CHECK(state.step == 5);
}

TEST_CASE("decoupled weight decay shrinks geometrically under zero gradient") {
  AdamWConfig c;
  c.weight_decay = 0.2;
  OptimizerState state(c);
  double theta = 2.0, bias = 2.0;
  double expected = 2.0;
  for (int i = 0; i < 10; ++i) {
    step_scalar(theta, 0.0, state, 0.05);
    expected *= 1.0 - 0.05 * 0.2;
    CHECK(theta == doctest::Approx(expected).epsilon(1e-15));
  }
  OptimizerState bias_state(c);
  for (int i = 0; i < 10; ++i) step_scalar(bias, 0.0, bias_state, 0.05, false);
  CHECK(bias == 2.0);
}

TEST_CASE("adamw decreases a 1-D convex quadratic monotonically after warmup") {
  AdamWConfig c;
  c.base_lr = 1e-2;
  c.weight_decay = 0.0;
  c.total_steps = 400;
  OptimizerState state(c);
  double theta = 3.0;
  double prev_loss = 0.5 * theta * theta;
  for (std::size_t s = 0; s < 300; ++s) {
    step_scalar(theta, theta, state, lr_at(s, c));
    const double loss = 0.5 * theta * theta;
    if (s > warmup_steps(c)) CHECK(loss <= prev_loss);
    prev_loss = loss;
  }
  CHECK(prev_loss < 0.5 * 9.0);
}

TEST_CASE("adamw trajectories are deterministic") {
  auto run = [] {
    AdamWConfig c;
    OptimizerState state(c);
    double theta = 1.0;
    for (int i = 0; i < 50; ++i) step_scalar(theta, std::sin(theta * i), state, 1e-3);
    return theta;
  };
  CHECK(run() == run());
}

TEST_CASE("adamw rejects non-finite gradients and shape mismatches") {
  OptimizerState state{AdamWConfig{}};
  double theta = 1.0;
  CHECK_THROWS_AS(step_scalar(theta, std::numeric_limits<double>::quiet_NaN(), state, 0.1), NonfiniteGradient);
  CHECK_THROWS_AS(step_scalar(theta, std::numeric_limits<double>::infinity(), state, 0.1), NonfiniteGradient);
  CHECK(theta == 1.0);

  double two[2] = {1.0, 2.0};
  const ParamRef ref{std::span<double>(two, 2), true};
  const double g = 1.0;
  const std::span<const double> grad(&g, 1);
  CHECK_THROWS_AS(adamw_step(std::span<const ParamRef>(&ref, 1), std::span<const std::span<const double>>(&grad, 1),
                             state, 0.1),
                  ShapeMismatch);
}
