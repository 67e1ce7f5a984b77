#include "modx/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "modx/datastream.hpp"
#include "modx/errors.hpp"
#include "modx/losses.hpp"
#include "modx/optimizer.hpp"

namespace modx {

namespace {

constexpr std::int64_t kDomainIdStride = 1000000;
constexpr double kMaxLogitScale = 4.605170185988092;  // log(100)

}  // namespace

Benchmark build_benchmark(const ExperimentConfig& config) {
  config.validate();
  if (config.data.samples_per_domain >= static_cast<std::size_t>(kDomainIdStride)) {
    throw ConfigError("samples_per_domain must be below 1000000");
  }
  const auto [mean0, mean1] = domain_means_at_angle(config.data.latent_dim, config.data.domain_angle_deg);
  DomainSpec spec;
  spec.latent_dim = config.data.latent_dim;
  spec.vision_dim = config.data.vision_dim;
  spec.language_dim = config.data.language_dim;
  spec.latent_noise = config.data.latent_noise;
  spec.modality_noise = config.data.modality_noise;
  spec.map_seed = seeds::child(config.seed, seeds::kMaps);

  DomainSpec s0 = spec;
  s0.domain_mean = mean0;
  s0.seed = seeds::child(config.seed, seeds::kDomainSamples);
  s0.domain_tag = kOldDomain;
  s0.id_base = 0;
  DomainSpec s1 = spec;
  s1.domain_mean = mean1;
  s1.seed = seeds::child(config.seed, seeds::kDomainSamples + 1);
  s1.domain_tag = kNewDomain;
  s1.id_base = kDomainIdStride;

  const std::size_t n = config.data.samples_per_domain;
  auto split0 = holdout_split(generate_domain(s0, n), config.data.test_fraction,
                              seeds::child(config.seed, seeds::kHoldout));
  auto split1 = holdout_split(generate_domain(s1, n), config.data.test_fraction,
                              seeds::child(config.seed, seeds::kHoldout + 1));
  Benchmark b;
  b.old_train = std::move(split0.train);
  b.old_test = std::move(split0.test);
  b.new_train = std::move(split1.train);
  b.new_test = std::move(split1.test);
  b.phases = split_phases(b.new_train, config.n_phases, seeds::child(config.seed, seeds::kPhaseSplit));
  return b;
}

const RetrievalReport& PhaseRecord::eval(const std::string& domain) const {
  for (const auto& e : evals) {
    if (e.domain == domain) return e.report;
  }
  throw MissingRecords("phase " + std::to_string(phase) + " has no evaluation for " + domain);
}

DualEncoderSnapshot initial_snapshot(const ExperimentConfig& config) {
  const MlpSpec vision{{config.data.vision_dim, config.hidden_dim, config.embed_dim}, config.activation};
  const MlpSpec language{{config.data.language_dim, config.hidden_dim, config.embed_dim}, config.activation};
  DualEncoderSnapshot s;
  s.vision = init_params(vision, seeds::child(config.seed, seeds::kVisionInit));
  s.language = init_params(language, seeds::child(config.seed, seeds::kLanguageInit));
  s.temperature = config.tau;
  s.phase_index = 0;
  return s;
}

namespace {

struct Objective {
  Strategy strategy = Strategy::ct;
  const DualEncoderSnapshot* teacher = nullptr;
  const FisherDiag* fisher = nullptr;
  const PhaseDataset* replay = nullptr;
};

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    // A single-row batch has no negatives; drop it.
    if (end - start < 2) break;
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::size_t batches_per_epoch(std::size_t n, std::size_t batch_size) {
  return epoch_batches(n, batch_size, 0).size();
}

PhaseBatch with_replay(PhaseBatch batch, const PhaseDataset& replay, std::size_t count, Rng& rng) {
  count = std::min(count, replay.size());
  if (count == 0) return batch;
  std::vector<std::size_t> pick(replay.size());
  for (std::size_t i = 0; i < pick.size(); ++i) pick[i] = i;
  // Partial Fisher-Yates: the first `count` slots are a uniform draw without replacement.
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pick.size() - i));
    std::swap(pick[i], pick[j]);
  }
  pick.resize(count);
  return concat(batch, replay.subset(pick));
}

double train_step(DualEncoderSnapshot& model, const PhaseBatch& batch, const ExperimentConfig& config,
                  const Objective& objective, OptimizerState& state, double& logit_scale) {
  const ForwardTrace tv = forward(model.vision, batch.vision_inputs);
  const ForwardTrace tl = forward(model.language, batch.language_inputs);

  LossValueAndGrad loss;
  const bool distill = (objective.strategy == Strategy::modx || objective.strategy == Strategy::modx_noscreen) &&
                       objective.teacher != nullptr;
  if (distill) {
    const DistillSettings settings{model.temperature, config.alpha, config.distill_tau,
                                   objective.strategy == Strategy::modx};
    loss = distill_loss_with_teacher(tv.embeddings.mat(), tl.embeddings.mat(),
                                     teacher_matrix(*objective.teacher, batch), settings);
  } else {
    loss = infonce(tv.embeddings, tl.embeddings, model.temperature);
  }

  GradientBundle grad{backward(model.vision, tv, loss.grad_v), backward(model.language, tl, loss.grad_l),
                      loss.grad_tau};
  double value = loss.value;
  if (objective.strategy == Strategy::ewc && objective.fisher != nullptr) {
    const ParameterLoss penalty = ewc_penalty(model, *objective.fisher, config.ewc_lambda);
    value += penalty.value;
    grad.add_scaled(penalty.grad, 1.0);
  }

  auto refs = parameter_refs(model);
  auto views = grad.views();
  // Temperature is optimized through the log logit scale, log(1 / tau).
  double logit_scale_grad = grad.temperature * -model.temperature;
  if (config.learn_temperature) {
    refs.push_back({std::span<double>(&logit_scale, 1), false});
    views.push_back(std::span<const double>(&logit_scale_grad, 1));
  }
  adamw_step(refs, views, state, lr_at(state.step, state.config));
  if (config.learn_temperature) {
    logit_scale = std::min(logit_scale, kMaxLogitScale);
    model.temperature = std::exp(-logit_scale);
  }
  return value;
}

std::vector<double> train_phase(DualEncoderSnapshot& model, const PhaseDataset& data, std::size_t epochs,
                                std::size_t phase, const ExperimentConfig& config, const Objective& objective,
                                const RunHooks* hooks) {
  AdamWConfig oc = config.optimizer;
  oc.total_steps = epochs * batches_per_epoch(data.size(), config.batch_size);
  OptimizerState state(oc);
  double logit_scale = -std::log(model.temperature);
  const auto replay_rows = static_cast<std::size_t>(std::llround(config.replay_fraction * config.batch_size));

  std::vector<double> epoch_losses;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const auto batches =
        epoch_batches(data.size(), config.batch_size, seeds::child(config.seed, seeds::kBatchOrder + 1000 * phase + epoch));
    Rng replay_rng(seeds::child(config.seed, seeds::kReplaySampling + 1000 * phase + epoch));
    double total = 0.0;
    for (const auto& rows : batches) {
      PhaseBatch batch = data.subset(rows);
      if (objective.replay != nullptr) batch = with_replay(std::move(batch), *objective.replay, replay_rows, replay_rng);
      if (hooks != nullptr && hooks->on_batch) hooks->on_batch(phase, batch);
      total += train_step(model, batch, config, objective, state, logit_scale);
    }
    epoch_losses.push_back(batches.empty() ? 0.0 : total / static_cast<double>(batches.size()));
  }
  return epoch_losses;
}

FisherDiag estimate_fisher(const DualEncoderSnapshot& model, const PhaseDataset& data, const ExperimentConfig& config) {
  std::vector<GradientBundle> grads;
  for (std::size_t start = 0; start + 1 < data.size(); start += config.batch_size) {
    const std::size_t end = std::min(data.size(), start + config.batch_size);
    if (end - start < 2) break;
    std::vector<std::size_t> rows(end - start);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = start + i;
    const PhaseBatch batch = data.subset(rows);
    const ForwardTrace tv = forward(model.vision, batch.vision_inputs);
    const ForwardTrace tl = forward(model.language, batch.language_inputs);
    const LossValueAndGrad loss = infonce(tv.embeddings, tl.embeddings, model.temperature);
    grads.push_back({backward(model.vision, tv, loss.grad_v), backward(model.language, tl, loss.grad_l), 0.0});
  }
  return fisher_from_gradients(model, grads);
}

std::vector<DomainEval> evaluate_domains(const DualEncoderSnapshot& s, const Benchmark& bench) {
  return {{kOldDomain, evaluate_retrieval(s, bench.old_test)}, {kNewDomain, evaluate_retrieval(s, bench.new_test)}};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

PhaseDiagnostics diagnose(const DualEncoderSnapshot& prev, const DualEncoderSnapshot& cur, const PhaseDataset& eval_data,
                          const PhaseDataset& imav_data, RetrievalDirection imav_direction) {
  const UnitEmbeddings vp = encode(prev.vision, eval_data.vision_inputs);
  const UnitEmbeddings lp = encode(prev.language, eval_data.language_inputs);
  const UnitEmbeddings vc = encode(cur.vision, eval_data.vision_inputs);
  const UnitEmbeddings lc = encode(cur.language, eval_data.language_inputs);
  PhaseDiagnostics d;
  d.sam_vision = sam_delta_hist(vp, vc, bins::sam());
  d.sam_language = sam_delta_hist(lp, lc, bins::sam());
  d.ram_vision = make_histogram(ram(vp, vc), bins::ram());
  d.ram_language = make_histogram(ram(lp, lc), bins::ram());
  try {
    ImavResult r = imav(prev, cur, imav_data, bins::sam(), imav_direction);
    d.imav_samples = r.contributing.size();
    d.imav = std::move(r.histogram);
  } catch (const EmptyCorrectSet&) {
    d.imav.reset();
  }
  return d;
}

PretrainResult pretrain(const ExperimentConfig& config, const Benchmark& bench, const RunHooks* hooks) {
  PretrainResult r{initial_snapshot(config), {}};
  r.epoch_losses = train_phase(r.snapshot, bench.old_train, config.pretrain_epochs, 0, config, Objective{}, hooks);
  r.snapshot.phase_index = 0;
  return r;
}

RunResult run_continual(const ExperimentConfig& config, const Benchmark& bench, const PretrainResult* pretrained,
                        const RunHooks* hooks) {
  config.validate();
  RunResult out;
  const std::string strategy = to_string(config.strategy);

  if (config.strategy == Strategy::joint) {
    const auto t0 = std::chrono::steady_clock::now();
    DualEncoderSnapshot model = initial_snapshot(config);
    const PhaseDataset all = concat(bench.old_train, bench.new_train);
    PhaseRecord rec;
    rec.phase = 0;
    rec.strategy = strategy;
    rec.epoch_losses = train_phase(model, all, config.joint_epochs, 0, config, Objective{}, hooks);
    rec.evals = evaluate_domains(model, bench);
    rec.wall_time_s = seconds_since(t0);
    if (hooks != nullptr && hooks->on_phase_end) hooks->on_phase_end(0, model);
    out.records.push_back(std::move(rec));
    out.snapshots.push_back(std::move(model));
    return out;
  }

  if (pretrained == nullptr) throw MissingPretrain("strategy " + strategy + " needs a pretrained snapshot");
  if (bench.phases.size() != config.n_phases) throw ConfigError("benchmark phase count does not match n_phases");

  DualEncoderSnapshot model = pretrained->snapshot;
  model.phase_index = 0;
  PhaseRecord first;
  first.phase = 0;
  first.strategy = strategy;
  first.epoch_losses = pretrained->epoch_losses;
  first.evals = evaluate_domains(model, bench);
  out.records.push_back(std::move(first));
  out.snapshots.push_back(model);

  FisherDiag fisher;
  if (config.strategy == Strategy::ewc) fisher = estimate_fisher(model, bench.old_train, config);
  ReplayBuffer buffer(std::max<std::size_t>(config.buffer_capacity, 1));
  if (config.strategy == Strategy::replay) {
    buffer = buffer_update(buffer, bench.old_train, 0, seeds::child(config.seed, seeds::kBufferUpdate));
  }

  const PhaseDataset* prev_train = &bench.old_train;
  for (std::size_t t = 1; t <= config.n_phases; ++t) {
    const auto t0 = std::chrono::steady_clock::now();
    const PhaseDataset& data = bench.phases[t - 1];
    const DualEncoderSnapshot teacher = model;
    const PhaseDataset replay_rows = config.strategy == Strategy::replay ? buffer.contents() : PhaseDataset{};

    Objective objective;
    objective.strategy = config.strategy;
    if (config.strategy == Strategy::modx || config.strategy == Strategy::modx_noscreen) objective.teacher = &teacher;
    if (config.strategy == Strategy::ewc) objective.fisher = &fisher;
    if (config.strategy == Strategy::replay) objective.replay = &replay_rows;

    PhaseRecord rec;
    rec.phase = t;
    rec.strategy = strategy;
    rec.epoch_losses = train_phase(model, data, config.epochs_per_phase, t, config, objective, hooks);
    model.phase_index = t;

    if (config.strategy == Strategy::ewc) accumulate_fisher(fisher, estimate_fisher(model, data, config));
    if (config.strategy == Strategy::replay) {
      buffer = buffer_update(buffer, data, t, seeds::child(config.seed, seeds::kBufferUpdate + t));
    }

    rec.evals = evaluate_domains(model, bench);
    if (config.diagnostics) rec.diagnostics = diagnose(teacher, model, bench.old_test, *prev_train,
                                                  config.imav_both_directions ? RetrievalDirection::both
                                                                              : RetrievalDirection::image_to_text);
    rec.wall_time_s = seconds_since(t0);
    prev_train = &data;
    if (hooks != nullptr && hooks->on_phase_end) hooks->on_phase_end(t, model);
    out.records.push_back(std::move(rec));
    out.snapshots.push_back(model);
  }
  return out;
}

namespace {

PretrainResult obtain_pretrained(const ExperimentConfig& config, const Benchmark& bench) {
  if (!config.pretrained_snapshot.empty()) {
    if (!std::filesystem::exists(config.pretrained_snapshot)) {
      throw MissingPretrain("pretrained snapshot " + config.pretrained_snapshot + " does not exist");
    }
    PretrainResult r{load_snapshot(config.pretrained_snapshot), {}};
    r.snapshot.phase_index = 0;
    return r;
  }
  return pretrain(config, bench);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& config) {
  const Benchmark bench = build_benchmark(config);
  RunResult result;
  if (config.strategy == Strategy::joint) {
    result = run_continual(config, bench, nullptr);
  } else {
    const PretrainResult pre = obtain_pretrained(config, bench);
    result = run_continual(config, bench, &pre);
  }
  if (!config.output_dir.empty()) write_run(config.output_dir, config, result);
  return result;
}

nlohmann::ordered_json to_json(const PhaseDiagnostics& d) {
  nlohmann::ordered_json j;
  j["sam_vision"] = to_json(d.sam_vision);
  j["sam_language"] = to_json(d.sam_language);
  j["ram_vision"] = to_json(d.ram_vision);
  j["ram_language"] = to_json(d.ram_language);
  j["imav"] = d.imav ? to_json(*d.imav) : nlohmann::ordered_json(nullptr);
  j["imav_samples"] = d.imav_samples;
  return j;
}

nlohmann::ordered_json to_json(const PhaseRecord& r) {
  nlohmann::ordered_json j;
  j["phase"] = r.phase;
  j["strategy"] = r.strategy;
  nlohmann::ordered_json retrieval;
  for (const auto& e : r.evals) retrieval[e.domain] = to_json(e.report);
  j["retrieval"] = retrieval;
  j["epoch_losses"] = r.epoch_losses;
  j["diagnostics"] = r.diagnostics ? to_json(*r.diagnostics) : nlohmann::ordered_json(nullptr);
  return j;
}

PhaseRecord record_from_json(const nlohmann::ordered_json& j) {
  PhaseRecord r;
  r.phase = j.at("phase").get<std::size_t>();
  r.strategy = j.at("strategy").get<std::string>();
  for (const auto& [domain, value] : j.at("retrieval").items()) r.evals.push_back({domain, retrieval_from_json(value)});
  r.epoch_losses = j.at("epoch_losses").get<std::vector<double>>();
  const auto& dj = j.at("diagnostics");
  if (!dj.is_null()) {
    PhaseDiagnostics d;
    d.sam_vision = histogram_from_json(dj.at("sam_vision"));
    d.sam_language = histogram_from_json(dj.at("sam_language"));
    d.ram_vision = histogram_from_json(dj.at("ram_vision"));
    d.ram_language = histogram_from_json(dj.at("ram_language"));
    if (!dj.at("imav").is_null()) d.imav = histogram_from_json(dj.at("imav"));
    d.imav_samples = dj.at("imav_samples").get<std::size_t>();
    r.diagnostics = std::move(d);
  }
  return r;
}

std::string summary_csv(const std::vector<PhaseRecord>& records) {
  std::string out = "strategy,phase,domain,metric,value\n";
  for (const auto& r : records) {
    for (const auto& e : r.evals) {
      for (std::size_t k = 0; k < e.report.ks.size(); ++k) {
        const std::string kk = std::to_string(e.report.ks[k]);
        out += r.strategy + "," + std::to_string(r.phase) + "," + e.domain + ",i2t_R@" + kk + "," +
               fmt17(e.report.image_to_text[k]) + "\n";
        out += r.strategy + "," + std::to_string(r.phase) + "," + e.domain + ",t2i_R@" + kk + "," +
               fmt17(e.report.text_to_image[k]) + "\n";
      }
    }
  }
  return out;
}

void write_run(const std::filesystem::path& dir, const ExperimentConfig& config, const RunResult& result) {
  std::filesystem::create_directories(dir);
  write_text(dir / "config.resolved", emit_config(config));
  nlohmann::ordered_json timing = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < result.records.size(); ++i) {
    const auto& rec = result.records[i];
    const auto phase_dir = dir / ("phase_" + std::to_string(rec.phase));
    std::filesystem::create_directories(phase_dir);
    write_text(phase_dir / "record.json", to_json(rec).dump(2) + "\n");
    save_snapshot(result.snapshots.at(i), phase_dir / "snapshot.bin");
    timing.push_back({{"phase", rec.phase}, {"wall_time_s", rec.wall_time_s}});
  }
  write_text(dir / "summary.csv", summary_csv(result.records));
  write_text(dir / "timing.json", timing.dump(2) + "\n");
}

SweepResult alpha_sweep(const ExperimentConfig& config, const std::vector<double>& alphas) {
  if (alphas.empty()) throw ConfigError("alpha sweep needs at least one alpha");
  ExperimentConfig base = config;
  base.strategy = Strategy::modx;
  base.validate();
  const Benchmark bench = build_benchmark(base);
  const PretrainResult pre = obtain_pretrained(base, bench);
  SweepResult sweep;
  for (double a : alphas) {
    if (!(a >= 0.0)) throw ConfigError("alpha values must be >= 0");
    ExperimentConfig c = base;
    c.alpha = a;
    RunResult r = run_continual(c, bench, &pre);
    if (sweep.alphas.empty()) sweep.initial = r.records.front();
    if (!config.output_dir.empty()) {
      char name[48];
      std::snprintf(name, sizeof name, "alpha_%g", a);
      write_run(std::filesystem::path(config.output_dir) / name, c, r);
    }
    sweep.alphas.push_back(a);
    sweep.final_records.push_back(r.records.back());
  }
  if (!config.output_dir.empty()) {
    write_text(std::filesystem::path(config.output_dir) / "sweep.json", to_json(sweep).dump(2) + "\n");
    write_text(std::filesystem::path(config.output_dir) / "sweep.txt", render_sweep_table(sweep));
  }
  return sweep;
}

nlohmann::ordered_json to_json(const SweepResult& sweep) {
  nlohmann::ordered_json j;
  j["initial"] = to_json(sweep.initial);
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < sweep.alphas.size(); ++i) {
    rows.push_back({{"alpha", sweep.alphas[i]}, {"final", to_json(sweep.final_records[i])}});
  }
  j["rows"] = rows;
  return j;
}

std::string render_sweep_table(const SweepResult& sweep) {
  std::ostringstream out;
  char buf[128];
  out << "Final-phase retrieval (%) per alpha\n";
  std::snprintf(buf, sizeof buf, "%-10s", "");
  out << buf;
  for (const auto& domain : {kOldDomain, kNewDomain}) {
    std::snprintf(buf, sizeof buf, " | %-20s %-20s", (domain + " i2t").c_str(), (domain + " t2i").c_str());
    out << buf;
  }
  out << '\n';
  std::snprintf(buf, sizeof buf, "%-10s", "");
  out << buf;
  for (int d = 0; d < 2; ++d) {
    out << " | ";
    for (int dir = 0; dir < 2; ++dir) {
      std::snprintf(buf, sizeof buf, "%6s %6s %6s ", "R@1", "R@5", "R@10");
      out << buf;
    }
  }
  out << '\n';
  auto row = [&](const std::string& name, const PhaseRecord& rec) {
    std::snprintf(buf, sizeof buf, "%-10s", name.c_str());
    out << buf;
    for (const auto& domain : {kOldDomain, kNewDomain}) {
      const auto& rep = rec.eval(domain);
      out << " | ";
      for (const auto* series : {&rep.image_to_text, &rep.text_to_image}) {
        for (double v : *series) {
          std::snprintf(buf, sizeof buf, "%6.1f ", 100.0 * v);
          out << buf;
        }
      }
    }
    out << '\n';
  };
  row("initial", sweep.initial);
  for (std::size_t i = 0; i < sweep.alphas.size(); ++i) {
    std::snprintf(buf, sizeof buf, "a=%g", sweep.alphas[i]);
    row(buf, sweep.final_records[i]);
  }
  return out.str();
}

}  // namespace modx
