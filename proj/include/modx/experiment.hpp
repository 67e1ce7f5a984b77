#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "modx/analysis.hpp"
#include "modx/config.hpp"
#include "modx/dataset.hpp"
#include "modx/encoder.hpp"

namespace modx {

/// Train/test data for the two-domain stream. Domain 0 pretrains; domain 1
/// is split into the continual phases.
struct Benchmark {
  PhaseDataset old_train;
  PhaseDataset old_test;
  PhaseDataset new_train;
  PhaseDataset new_test;
  std::vector<PhaseDataset> phases;  // partition of new_train
};

inline const std::string kOldDomain = "domain0";
inline const std::string kNewDomain = "domain1";

Benchmark build_benchmark(const ExperimentConfig& config);

struct DomainEval {
  std::string domain;
  RetrievalReport report;
};

/// Geometry drift of the current snapshot relative to the previous one.
struct PhaseDiagnostics {
  AngleHistogram sam_vision;
  AngleHistogram sam_language;
  AngleHistogram ram_vision;
  AngleHistogram ram_language;
  std::optional<AngleHistogram> imav;
  std::size_t imav_samples = 0;
};

/// SAM-delta and RAM on `eval_data`; ImAV on `imav_data`, left empty when
/// no sample of it was correctly retrieved under `prev`.
PhaseDiagnostics diagnose(const DualEncoderSnapshot& prev, const DualEncoderSnapshot& cur, const PhaseDataset& eval_data,
                          const PhaseDataset& imav_data,
                          RetrievalDirection imav_direction = RetrievalDirection::image_to_text);

nlohmann::ordered_json to_json(const PhaseDiagnostics& d);

struct PhaseRecord {
  std::size_t phase = 0;
  std::string strategy;
  std::vector<DomainEval> evals;
  std::vector<double> epoch_losses;
  std::optional<PhaseDiagnostics> diagnostics;
  double wall_time_s = 0.0;  // kept out of record.json so records stay reproducible

  const RetrievalReport& eval(const std::string& domain) const;
};

nlohmann::ordered_json to_json(const PhaseRecord& r);
PhaseRecord record_from_json(const nlohmann::ordered_json& j);

/// Instrumentation points for tests and tooling.
struct RunHooks {
  std::function<void(std::size_t phase, const PhaseBatch& batch)> on_batch;
  std::function<void(std::size_t phase, const DualEncoderSnapshot& snapshot)> on_phase_end;
};

struct PretrainResult {
  DualEncoderSnapshot snapshot;
  std::vector<double> epoch_losses;
};

DualEncoderSnapshot initial_snapshot(const ExperimentConfig& config);

// Plain InfoNCE training on domain-0 training data; phase_index 0.
PretrainResult pretrain(const ExperimentConfig& config, const Benchmark& bench, const RunHooks* hooks = nullptr);

struct RunResult {
  std::vector<PhaseRecord> records;
  std::vector<DualEncoderSnapshot> snapshots;  // parallel to records
};

/// Sequential training over the stream phases under config.strategy. Record 0
/// evaluates the pretrained snapshot. For the joint strategy a single record
/// is produced from a model trained from scratch on both domains, and
/// `pretrained` is ignored. Throws MissingPretrain when a continual strategy
/// gets no pretrained snapshot.
RunResult run_continual(const ExperimentConfig& config, const Benchmark& bench, const PretrainResult* pretrained,
                        const RunHooks* hooks = nullptr);

// Generates data, pretrains (or loads config.pretrained_snapshot), runs, and
// persists to config.output_dir when it is set.
RunResult run_experiment(const ExperimentConfig& config);

struct SweepResult {
  std::vector<double> alphas;
  std::vector<PhaseRecord> final_records;
  PhaseRecord initial;
};

SweepResult alpha_sweep(const ExperimentConfig& config, const std::vector<double>& alphas);

inline const std::vector<double> kReferenceAlphas{10.0, 15.0, 20.0, 25.0, 30.0};

/// {dir}/config.resolved, {dir}/phase_{t}/snapshot.bin + record.json,
/// {dir}/summary.csv and {dir}/timing.json.
void write_run(const std::filesystem::path& dir, const ExperimentConfig& config, const RunResult& result);

// One row per (strategy, phase, domain, metric).
std::string summary_csv(const std::vector<PhaseRecord>& records);

std::string render_sweep_table(const SweepResult& sweep);
nlohmann::ordered_json to_json(const SweepResult& sweep);

}  // namespace modx
