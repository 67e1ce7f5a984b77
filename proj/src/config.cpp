#include "modx/config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "modx/errors.hpp"

namespace modx {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::ct: return "ct";
    case Strategy::modx: return "modx";
    case Strategy::modx_noscreen: return "modx_noscreen";
    case Strategy::ewc: return "ewc";
    case Strategy::replay: return "replay";
    case Strategy::joint: return "joint";
  }
  return "ct";
}

Strategy strategy_from_string(const std::string& s) {
  for (Strategy st : {Strategy::ct, Strategy::modx, Strategy::modx_noscreen, Strategy::ewc, Strategy::replay,
                      Strategy::joint}) {
    if (to_string(st) == s) return st;
  }
  throw ConfigError("unknown strategy '" + s + "' (expected ct, modx, modx_noscreen, ewc, replay or joint)");
}

void ExperimentConfig::validate() const {
  if (data.latent_dim < 2 || data.vision_dim < data.latent_dim || data.language_dim < data.latent_dim) {
    throw ConfigError("need latent_dim >= 2 and modality dims >= latent_dim");
  }
  if (!(data.test_fraction > 0.0 && data.test_fraction < 1.0)) throw ConfigError("test_fraction must be in (0, 1)");
  if (!(data.latent_noise >= 0.0) || !(data.modality_noise >= 0.0)) throw ConfigError("noise levels must be >= 0");
  if (hidden_dim == 0 || embed_dim == 0) throw ConfigError("hidden_dim and embed_dim must be >= 1");
  if (n_phases == 0) throw ConfigError("n_phases must be >= 1");
  if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
  if (!(distill_tau > 0.0)) throw ConfigError("distill_tau must be > 0");
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
  if (!(ewc_lambda >= 0.0)) throw ConfigError("ewc_lambda must be >= 0");
  if (strategy == Strategy::replay && buffer_capacity == 0) throw ConfigError("replay needs buffer_capacity > 0");
  if (!(replay_fraction >= 0.0)) throw ConfigError("replay_fraction must be >= 0");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (!(optimizer.base_lr >= 0.0) || !(optimizer.weight_decay >= 0.0)) throw ConfigError("lr and weight_decay must be >= 0");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) || !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) {
    throw ConfigError("adam betas must be in [0, 1)");
  }
  if (!(optimizer.epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
  if (!(optimizer.warmup_fraction >= 0.0 && optimizer.warmup_fraction <= 1.0)) {
    throw ConfigError("warmup_fraction must be in [0, 1]");
  }
  const std::size_t per_domain_train =
      data.samples_per_domain - static_cast<std::size_t>(std::llround(data.test_fraction * data.samples_per_domain));
  if (per_domain_train < n_phases) throw ConfigError("too few training samples for n_phases");
}

ExperimentConfig desk_preset() { return ExperimentConfig{}; }

ExperimentConfig reference_preset() {
  ExperimentConfig c;
  c.batch_size = 280;
  c.pretrain_epochs = 35;
  c.epochs_per_phase = 35;
  c.joint_epochs = 35;
  c.tau = 0.07;
  c.alpha = 20.0;
  c.optimizer.base_lr = 5e-4;
  c.optimizer.weight_decay = 0.2;
  c.optimizer.warmup_fraction = 0.2;
  c.optimizer.beta1 = 0.9;
  c.optimizer.beta2 = 0.99;
  c.optimizer.epsilon = 1e-8;
  return c;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE || !std::isfinite(x)) {
    throw ConfigError(key + ": expected a real number, got '" + v + "'");
  }
  return x;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  if (v.empty() || v[0] == '-') throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (end != v.c_str() + v.size() || errno == ERANGE) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return x;
}

std::size_t parse_count(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(parse_u64(key, v));
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

struct Field {
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define MODX_REAL(key, member)                                                                           \
  {                                                                                                      \
    key, Field {                                                                                         \
      [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.member = parse_double(k, v); }, \
          [](const ExperimentConfig& c) { return fmt_double(c.member); }                                 \
    }                                                                                                    \
  }
#define MODX_COUNT(key, member)                                                                          \
  {                                                                                                      \
    key, Field {                                                                                         \
      [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.member = parse_count(k, v); }, \
          [](const ExperimentConfig& c) { return std::to_string(c.member); }                             \
    }                                                                                                    \
  }
#define MODX_BOOL(key, member)                                                                           \
  {                                                                                                      \
    key, Field {                                                                                         \
      [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.member = parse_bool(k, v); }, \
          [](const ExperimentConfig& c) { return std::string(c.member ? "true" : "false"); }             \
    }                                                                                                    \
  }
#define MODX_TEXT(key, member)                                                                            \
  {                                                                                                       \
    key, Field {                                                                                          \
      [](ExperimentConfig& c, const std::string&, const std::string& v) { c.member = v; },               \
          [](const ExperimentConfig& c) { return c.member; }                                              \
    }                                                                                                     \
  }

// Ordered: emit_config writes keys in this order.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"seed", Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.seed = parse_u64(k, v); },
                     [](const ExperimentConfig& c) { return std::to_string(c.seed); }}},
      {"strategy",
       Field{[](ExperimentConfig& c, const std::string&, const std::string& v) { c.strategy = strategy_from_string(v); },
             [](const ExperimentConfig& c) { return to_string(c.strategy); }}},
      MODX_COUNT("n_phases", n_phases),
      MODX_COUNT("latent_dim", data.latent_dim),
      MODX_COUNT("vision_dim", data.vision_dim),
      MODX_COUNT("language_dim", data.language_dim),
      MODX_COUNT("samples_per_domain", data.samples_per_domain),
      MODX_REAL("test_fraction", data.test_fraction),
      MODX_REAL("domain_angle_deg", data.domain_angle_deg),
      MODX_REAL("latent_noise", data.latent_noise),
      MODX_REAL("modality_noise", data.modality_noise),
      MODX_COUNT("hidden_dim", hidden_dim),
      MODX_COUNT("embed_dim", embed_dim),
      {"activation",
       Field{[](ExperimentConfig& c, const std::string&, const std::string& v) { c.activation = activation_from_string(v); },
             [](const ExperimentConfig& c) { return to_string(c.activation); }}},
      MODX_REAL("tau", tau),
      MODX_BOOL("learn_temperature", learn_temperature),
      MODX_REAL("alpha", alpha),
      MODX_REAL("distill_tau", distill_tau),
      MODX_REAL("ewc_lambda", ewc_lambda),
      MODX_COUNT("buffer_capacity", buffer_capacity),
      MODX_REAL("replay_fraction", replay_fraction),
      MODX_REAL("lr", optimizer.base_lr),
      MODX_REAL("beta1", optimizer.beta1),
      MODX_REAL("beta2", optimizer.beta2),
      MODX_REAL("epsilon", optimizer.epsilon),
      MODX_REAL("weight_decay", optimizer.weight_decay),
      MODX_REAL("warmup_fraction", optimizer.warmup_fraction),
      MODX_COUNT("pretrain_epochs", pretrain_epochs),
      MODX_COUNT("epochs_per_phase", epochs_per_phase),
      MODX_COUNT("joint_epochs", joint_epochs),
      MODX_COUNT("batch_size", batch_size),
      MODX_BOOL("diagnostics", diagnostics),
      MODX_BOOL("imav_both_directions", imav_both_directions),
      MODX_TEXT("output_dir", output_dir),
      MODX_TEXT("pretrained_snapshot", pretrained_snapshot),
  };
  return table;
}

#undef MODX_REAL
#undef MODX_COUNT
#undef MODX_BOOL
#undef MODX_TEXT

const Field* find_field(const std::string& key) {
  for (const auto& [k, f] : fields()) {
    if (k == key) return &f;
  }
  return nullptr;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k{"preset"};
    for (const auto& [name, f] : fields()) k.push_back(name);
    return k;
  }();
  return keys;
}

std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (key != "preset" && find_field(key) == nullptr) {
      throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    out.emplace_back(key, value);
  }
  return out;
}

void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value) {
  if (key == "preset") {
    if (value == "desk") {
      config = desk_preset();
    } else if (value == "reference") {
      config = reference_preset();
    } else {
      throw ConfigError("preset: expected desk or reference, got '" + value + "'");
    }
    return;
  }
  const Field* f = find_field(key);
  if (f == nullptr) throw ConfigError("unknown config key '" + key + "'");
  f->set(config, key, value);
}

void apply_settings(ExperimentConfig& config, const std::vector<std::pair<std::string, std::string>>& settings) {
  for (const auto& [k, v] : settings) {
    if (k == "preset") apply_setting(config, k, v);
  }
  for (const auto& [k, v] : settings) {
    if (k != "preset") apply_setting(config, k, v);
  }
}

ExperimentConfig load_config_file(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    apply_settings(base, parse_config_text(buf.str()));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return base;
}

std::string emit_config(const ExperimentConfig& config) {
  std::string out = "# resolved configuration\n";
  for (const auto& [k, f] : fields()) out += k + " = " + f.get(config) + "\n";
  return out;
}

namespace seeds {
std::uint64_t child(std::uint64_t seed, std::uint64_t offset) { return seed * 1000003ull + offset; }
}  // namespace seeds

}  // namespace modx
