#include "modx/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "modx/config.hpp"
#include "modx/datastream.hpp"
#include "modx/errors.hpp"
#include "modx/experiment.hpp"
#include "modx/report.hpp"

namespace modx {

namespace {

namespace fs = std::filesystem;

// --config plus one override flag per config key. Flags win over the file.
struct ConfigOptions {
  std::string config_path;
  std::map<std::string, std::string> overrides;

  void attach(CLI::App& app) {
    app.add_option("--config,-c", config_path, "config file of key = value lines")->check(CLI::ExistingFile);
    for (const auto& key : config_keys()) {
      std::string names = "--" + key;
      std::string dashed = key;
      std::replace(dashed.begin(), dashed.end(), '_', '-');
      if (dashed != key) names += ",--" + dashed;
      app.add_option_function<std::string>(
          names, [this, key](const std::string& v) { overrides[key] = v; }, "override config key " + key);
    }
  }

  ExperimentConfig resolve() const {
    std::vector<std::pair<std::string, std::string>> file_settings;
    if (!config_path.empty()) {
      std::ifstream in(config_path, std::ios::binary);
      if (!in) throw ConfigError("cannot read config file " + config_path);
      std::ostringstream text;
      text << in.rdbuf();
      file_settings = parse_config_text(text.str());
    }
    std::vector<std::pair<std::string, std::string>> settings;
    // A preset flag replaces a preset from the file; either way it goes first.
    if (auto it = overrides.find("preset"); it != overrides.end()) {
      settings.emplace_back("preset", it->second);
    } else {
      for (const auto& [k, v] : file_settings) {
        if (k == "preset") settings.emplace_back(k, v);
      }
    }
    for (const auto& [k, v] : file_settings) {
      if (k != "preset") settings.emplace_back(k, v);
    }
    for (const auto& key : config_keys()) {
      if (key == "preset") continue;
      if (auto it = overrides.find(key); it != overrides.end()) settings.emplace_back(key, it->second);
    }
    ExperimentConfig config = desk_preset();
    apply_settings(config, settings);
    config.validate();
    return config;
  }
};

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

int run_generate(const ExperimentConfig& config, std::ostream& out) {
  if (config.output_dir.empty()) throw ConfigError("generate needs --output_dir");
  const fs::path dir = config.output_dir;
  fs::create_directories(dir);
  const Benchmark bench = build_benchmark(config);
  write_file(dir / "config.resolved", emit_config(config));
  save_dataset_csv(bench.old_train, dir / "domain0_train.csv");
  save_dataset_csv(bench.old_test, dir / "domain0_test.csv");
  save_dataset_csv(bench.new_test, dir / "domain1_test.csv");
  for (std::size_t t = 0; t < bench.phases.size(); ++t) {
    save_dataset_csv(bench.phases[t], dir / ("phase_" + std::to_string(t + 1) + ".csv"));
  }
  out << "wrote " << bench.old_train.size() << " + " << bench.old_test.size() << " domain0 rows, "
      << bench.new_train.size() << " + " << bench.new_test.size() << " domain1 rows in " << bench.phases.size()
      << " phases to " << dir.string() << '\n';
  return 0;
}

int run_train(const ExperimentConfig& config, std::ostream& out) {
  const RunResult result = run_experiment(config);
  const RunRecords run{config.output_dir.empty() ? "." : fs::path(config.output_dir).filename().string(),
                       result.records};
  out << render_report(std::vector<RunRecords>{run}).text;
  return 0;
}

int run_sweep(const ExperimentConfig& config, const std::vector<double>& alphas, std::ostream& out) {
  const SweepResult sweep = alpha_sweep(config, alphas);
  out << render_sweep_table(sweep);
  return 0;
}

struct AnalyzeArgs {
  std::string old_snapshot;
  std::string new_snapshot;
  std::string data;
  bool both_directions = false;
  std::string output_dir;
};

int run_analyze(const AnalyzeArgs& a, std::ostream& out) {
  const DualEncoderSnapshot prev = load_snapshot(a.old_snapshot);
  const DualEncoderSnapshot cur = load_snapshot(a.new_snapshot);
  const PhaseDataset data = load_dataset_csv(a.data);
  const PhaseDiagnostics d =
      diagnose(prev, cur, data, data, a.both_directions ? RetrievalDirection::both : RetrievalDirection::image_to_text);
  out << render_histogram_table("SAM change", {"vision", "language"}, {d.sam_vision, d.sam_language}, "dtheta") << '\n';
  out << render_histogram_table("RAM", {"vision", "language"}, {d.ram_vision, d.ram_language}, "theta") << '\n';
  if (d.imav) {
    out << render_histogram_table("ImAV (" + std::to_string(d.imav_samples) + " samples)", {"pairs"}, {*d.imav},
                                  "dtheta");
  } else {
    out << "ImAV: no sample was correctly retrieved by the old snapshot\n";
  }
  if (!a.output_dir.empty()) {
    fs::create_directories(a.output_dir);
    write_file(fs::path(a.output_dir) / "analysis.json", to_json(d).dump(2) + "\n");
  }
  return 0;
}

struct DemoArgs {
  std::size_t dim = 8;
  std::size_t n = 4;
  std::uint64_t seed = 1;
  std::string json_path;
};

int run_demo(const DemoArgs& a, std::ostream& out) {
  const RotationDemoReport r = rotation_flip_demo(a.dim, a.n, a.seed);
  out << render_demo(r);
  if (!a.json_path.empty()) write_file(a.json_path, to_json(r).dump(2) + "\n");
  return 0;
}

int run_report(const std::string& dir, const std::string& json_path, std::ostream& out) {
  const RenderedReport r = render_report(fs::path(dir));
  out << r.text;
  if (!json_path.empty()) write_file(json_path, r.summary.dump(2) + "\n");
  return 0;
}

}  // namespace

int parse_and_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Continual contrastive training with screened contrastive-matrix distillation", "modx"};
  app.require_subcommand(1, 1);

  ConfigOptions gen_cfg, train_cfg, sweep_cfg;
  auto* generate = app.add_subcommand("generate", "write the seeded two-domain benchmark as CSV");
  gen_cfg.attach(*generate);
  auto* train = app.add_subcommand("train", "pretrain and run the continual phases for one strategy");
  train_cfg.attach(*train);
  auto* sweep = app.add_subcommand("sweep", "run the modx strategy once per alpha on shared data");
  sweep_cfg.attach(*sweep);
  std::vector<double> alphas = kReferenceAlphas;
  sweep->add_option("--alphas", alphas, "comma separated alpha values")->delimiter(',');

  AnalyzeArgs analyze_args;
  auto* analyze = app.add_subcommand("analyze", "SAM, RAM and ImAV between two snapshots on one dataset");
  analyze->add_option("--old", analyze_args.old_snapshot, "earlier snapshot")->required()->check(CLI::ExistingFile);
  analyze->add_option("--new", analyze_args.new_snapshot, "later snapshot")->required()->check(CLI::ExistingFile);
  analyze->add_option("--data", analyze_args.data, "dataset CSV")->required()->check(CLI::ExistingFile);
  analyze->add_flag("--imav-both-directions", analyze_args.both_directions,
                    "count a sample as correct only if retrieved both ways");
  analyze->add_option("--output-dir,--output_dir", analyze_args.output_dir, "write analysis.json here");

  DemoArgs demo_args;
  auto* demo = app.add_subcommand("demo-rotation", "numerical check of the rotation flip construction");
  demo->add_option("--dim", demo_args.dim, "embedding dimension")->capture_default_str();
  demo->add_option("--n", demo_args.n, "samples")->capture_default_str();
  demo->add_option("--seed", demo_args.seed, "seed")->capture_default_str();
  demo->add_option("--json", demo_args.json_path, "write the report as JSON");

  std::string report_dir, report_json;
  auto* report = app.add_subcommand("report", "render tables from a run directory");
  report->add_option("run_dir,--run-dir", report_dir, "run directory")->required();
  report->add_option("--json", report_json, "write the JSON summary here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << app.help();
    return 2;
  }

  try {
    if (generate->parsed()) return run_generate(gen_cfg.resolve(), out);
    if (train->parsed()) return run_train(train_cfg.resolve(), out);
    if (sweep->parsed()) return run_sweep(sweep_cfg.resolve(), alphas, out);
    if (analyze->parsed()) return run_analyze(analyze_args, out);
    if (demo->parsed()) return run_demo(demo_args, out);
    if (report->parsed()) return run_report(report_dir, report_json, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  err << "error: no subcommand\n" << app.help();
  return 2;
}

}  // namespace modx
