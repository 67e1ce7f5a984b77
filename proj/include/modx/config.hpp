#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "modx/encoder.hpp"
#include "modx/optimizer.hpp"

namespace modx {

enum class Strategy { ct, modx, modx_noscreen, ewc, replay, joint };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

/// Two-domain synthetic benchmark: a pretraining domain and a stream domain
/// whose latent means sit domain_angle_deg apart.
struct BenchmarkSpec {
  std::size_t latent_dim = 16;
  std::size_t vision_dim = 48;
  std::size_t language_dim = 40;
  std::size_t samples_per_domain = 2500;
  double test_fraction = 0.2;
  double domain_angle_deg = 60.0;
  double latent_noise = 0.1;
  double modality_noise = 0.05;
};

struct ExperimentConfig {
  BenchmarkSpec data;
  std::size_t hidden_dim = 64;
  std::size_t embed_dim = 32;
  Activation activation = Activation::tanh;

  std::size_t n_phases = 5;
  Strategy strategy = Strategy::modx;
  double tau = 0.07;
  bool learn_temperature = false;
  double alpha = 20.0;
  double distill_tau = 0.2;
  double ewc_lambda = 1000.0;
  std::size_t buffer_capacity = 200;
  double replay_fraction = 0.25;  // buffer rows appended per batch, relative to batch_size

  AdamWConfig optimizer;  // total_steps is derived per phase
  std::size_t pretrain_epochs = 30;
  std::size_t epochs_per_phase = 15;
  std::size_t joint_epochs = 30;
  std::size_t batch_size = 64;

  std::uint64_t seed = 0;
  bool diagnostics = true;
  bool imav_both_directions = false;
  std::string output_dir;
  std::string pretrained_snapshot;

  // Throws ConfigError.
  void validate() const;
};

ExperimentConfig desk_preset();
// Batch size, epochs and optimizer settings of the original recipe.
ExperimentConfig reference_preset();

/// Line-oriented `key = value` config text with `#` comments. Unknown keys,
/// malformed lines and unparsable values raise ConfigError with the line number.
std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text);

// Applies one setting. Throws ConfigError on unknown key or bad value.
void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value);

// Applies `preset` first (if present), then the remaining settings in order.
void apply_settings(ExperimentConfig& config, const std::vector<std::pair<std::string, std::string>>& settings);

ExperimentConfig load_config_file(const std::filesystem::path& path, ExperimentConfig base = desk_preset());

// Every key with its resolved value; parse_config_text of the result restores the config.
std::string emit_config(const ExperimentConfig& config);

const std::vector<std::string>& config_keys();

// Child seeds derived from the run seed: seed * 1000003 + offset.
namespace seeds {
inline constexpr std::uint64_t kMaps = 11;
inline constexpr std::uint64_t kDomainSamples = 21;  // + domain index
inline constexpr std::uint64_t kHoldout = 31;        // + domain index
inline constexpr std::uint64_t kPhaseSplit = 41;
inline constexpr std::uint64_t kVisionInit = 51;
inline constexpr std::uint64_t kLanguageInit = 52;
inline constexpr std::uint64_t kBufferUpdate = 200;       // + phase
inline constexpr std::uint64_t kBatchOrder = 100000;      // + 1000 * phase + epoch
inline constexpr std::uint64_t kReplaySampling = 500000;  // + 1000 * phase + epoch

std::uint64_t child(std::uint64_t seed, std::uint64_t offset);
}  // namespace seeds

}  // namespace modx
