#include "modx/datastream.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>

#include "modx/errors.hpp"

namespace modx {

void PhaseDataset::validate() const {
  const std::size_t n = sample_ids.size();
  if (vision_inputs.rows() != n || language_inputs.rows() != n || domains.size() != n) {
    throw ShapeMismatch("PhaseDataset fields disagree on row count");
  }
  std::set<std::int64_t> seen(sample_ids.begin(), sample_ids.end());
  if (seen.size() != n) throw ShapeMismatch("PhaseDataset has duplicate sample ids");
}

PhaseDataset PhaseDataset::subset(std::span<const std::size_t> rows) const {
  PhaseDataset out;
  out.vision_inputs = Matrix(rows.size(), vision_inputs.cols());
  out.language_inputs = Matrix(rows.size(), language_inputs.cols());
  out.sample_ids.reserve(rows.size());
  out.domains.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const std::size_t r = rows[k];
    if (r >= size()) throw ShapeMismatch("PhaseDataset::subset row out of range");
    std::copy_n(vision_inputs.row(r).begin(), vision_inputs.cols(), out.vision_inputs.row(k).begin());
    std::copy_n(language_inputs.row(r).begin(), language_inputs.cols(), out.language_inputs.row(k).begin());
    out.sample_ids.push_back(sample_ids[r]);
    out.domains.push_back(domains[r]);
  }
  return out;
}

PhaseDataset concat(const PhaseDataset& a, const PhaseDataset& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  if (a.vision_inputs.cols() != b.vision_inputs.cols() || a.language_inputs.cols() != b.language_inputs.cols()) {
    throw ShapeMismatch("concat: datasets differ in feature widths");
  }
  PhaseDataset out;
  auto stack = [](const Matrix& x, const Matrix& y) {
    Matrix m(x.rows() + y.rows(), x.cols());
    std::copy(x.data().begin(), x.data().end(), m.data().begin());
    std::copy(y.data().begin(), y.data().end(), m.data().begin() + static_cast<std::ptrdiff_t>(x.size()));
    return m;
  };
  out.vision_inputs = stack(a.vision_inputs, b.vision_inputs);
  out.language_inputs = stack(a.language_inputs, b.language_inputs);
  out.sample_ids = a.sample_ids;
  out.sample_ids.insert(out.sample_ids.end(), b.sample_ids.begin(), b.sample_ids.end());
  out.domains = a.domains;
  out.domains.insert(out.domains.end(), b.domains.begin(), b.domains.end());
  return out;
}

void DomainSpec::validate() const {
  if (latent_dim < 2 || vision_dim < 2 || language_dim < 2) throw ConfigError("domain dims must be >= 2");
  if (vision_dim < latent_dim || language_dim < latent_dim) {
    throw ConfigError("modality dims must be >= latent_dim for full-rank maps");
  }
  if (!(latent_noise >= 0.0) || !(modality_noise >= 0.0)) throw ConfigError("noise levels must be >= 0");
  if (domain_mean.size() != latent_dim) throw ConfigError("domain_mean must have latent_dim entries");
  if (std::abs(norm(domain_mean) - 1.0) > 1e-9) throw ConfigError("domain_mean must be a unit vector");
  if (domain_tag.empty() || domain_tag.find_first_of(",\n\r\"") != std::string::npos) {
    throw ConfigError("domain_tag must be non-empty and free of commas, quotes and newlines");
  }
}

ModalityMaps modality_maps(const DomainSpec& spec) {
  Rng rng(spec.map_seed);
  ModalityMaps maps{gaussian_matrix(spec.vision_dim, spec.latent_dim, rng),
                    gaussian_matrix(spec.language_dim, spec.latent_dim, rng)};
  orthonormalize_columns(maps.vision);
  orthonormalize_columns(maps.language);
  return maps;
}

namespace {

// Modality noise uses its own stream so latents can be reproduced alone.
constexpr std::uint64_t kNoiseStreamOffset = 0x9E3779B97F4A7C15ull;

}  // namespace

Matrix sample_latents(const DomainSpec& spec, std::size_t n) {
  spec.validate();
  Rng rng(spec.seed);
  Matrix z(n, spec.latent_dim);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = z.row(i);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = spec.domain_mean[c] + spec.latent_noise * rng.gaussian();
    const double len = norm(row);
    if (!(len > kDegenerateNorm)) throw DegenerateRow("latent sample collapsed to zero");
    for (double& x : row) x /= len;
  }
  return z;
}

PhaseDataset generate_domain(const DomainSpec& spec, std::size_t n) {
  if (n == 0) throw TooFewSamples("generate_domain needs n >= 1");
  const Matrix z = sample_latents(spec, n);
  const ModalityMaps maps = modality_maps(spec);
  PhaseDataset d;
  d.vision_inputs = matmul_nt(z, maps.vision);
  d.language_inputs = matmul_nt(z, maps.language);
  Rng noise(spec.seed + kNoiseStreamOffset);
  for (std::size_t i = 0; i < n; ++i) {
    for (double& x : d.vision_inputs.row(i)) x += spec.modality_noise * noise.gaussian();
    for (double& x : d.language_inputs.row(i)) x += spec.modality_noise * noise.gaussian();
    d.sample_ids.push_back(spec.id_base + static_cast<std::int64_t>(i));
    d.domains.push_back(spec.domain_tag);
  }
  return d;
}

std::pair<std::vector<double>, std::vector<double>> domain_means_at_angle(std::size_t latent_dim, double angle_deg) {
  if (latent_dim < 2) throw ConfigError("latent_dim must be >= 2");
  std::vector<double> a(latent_dim, 0.0);
  std::vector<double> b(latent_dim, 0.0);
  const double t = angle_deg * std::numbers::pi / 180.0;
  a[0] = 1.0;
  b[0] = std::cos(t);
  b[1] = std::sin(t);
  return {a, b};
}

namespace {

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  return idx;
}

}  // namespace

std::vector<PhaseDataset> split_phases(const PhaseDataset& d, std::size_t n_phases, std::uint64_t seed) {
  if (n_phases == 0) throw TooFewSamples("split_phases needs n_phases >= 1");
  if (d.size() < n_phases) {
    throw TooFewSamples("cannot split " + std::to_string(d.size()) + " samples into " + std::to_string(n_phases) +
                        " phases");
  }
  const auto idx = shuffled_indices(d.size(), seed);
  const std::size_t base = d.size() / n_phases;
  const std::size_t extra = d.size() % n_phases;
  std::vector<PhaseDataset> out;
  std::size_t start = 0;
  for (std::size_t p = 0; p < n_phases; ++p) {
    const std::size_t len = base + (p < extra ? 1 : 0);
    out.push_back(d.subset(std::span<const std::size_t>(idx).subspan(start, len)));
    start += len;
  }
  return out;
}

TrainTestSplit holdout_split(const PhaseDataset& d, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must be in [0, 1)");
  const auto idx = shuffled_indices(d.size(), seed);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(d.size())));
  const std::span<const std::size_t> all(idx);
  // Restore original order inside each part so files read naturally.
  std::vector<std::size_t> test(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train(all.begin() + static_cast<std::ptrdiff_t>(n_test), all.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {d.subset(train), d.subset(test)};
}

std::size_t ReplayBuffer::size() const {
  std::size_t n = 0;
  for (const auto& g : groups_) n += g.rows.size();
  return n;
}

PhaseDataset ReplayBuffer::contents() const {
  PhaseDataset out;
  for (const auto& g : groups_) out = concat(out, g.rows);
  return out;
}

ReplayBuffer buffer_update(ReplayBuffer buf, const PhaseDataset& phase, std::size_t phase_tag, std::uint64_t seed) {
  if (buf.capacity_ == 0) throw ConfigError("replay buffer capacity must be > 0");
  const std::size_t phases_seen = buf.groups_.size() + 1;
  const std::size_t quota = buf.capacity_ / phases_seen;

  // Stored groups are already uniform samples, so keeping a prefix stays uniform.
  for (auto& g : buf.groups_) {
    if (g.rows.size() > quota) {
      std::vector<std::size_t> keep(quota);
      for (std::size_t i = 0; i < quota; ++i) keep[i] = i;
      g.rows = g.rows.subset(keep);
    }
  }

  std::set<std::int64_t> stored;
  for (const auto& g : buf.groups_) stored.insert(g.rows.sample_ids.begin(), g.rows.sample_ids.end());
  std::vector<std::size_t> candidates;
  for (std::size_t r = 0; r < phase.size(); ++r) {
    if (!stored.contains(phase.sample_ids[r])) candidates.push_back(r);
  }
  Rng rng(seed);
  rng.shuffle(candidates);
  candidates.resize(std::min(quota, candidates.size()));
  buf.groups_.push_back({phase_tag, phase.subset(candidates)});
  return buf;
}

void write_dataset_csv(const PhaseDataset& d, std::ostream& out) {
  d.validate();
  out << "id,domain";
  for (std::size_t c = 0; c < d.vision_inputs.cols(); ++c) out << ",v_" << c;
  for (std::size_t c = 0; c < d.language_inputs.cols(); ++c) out << ",l_" << c;
  out << '\n';
  char buf[40];
  for (std::size_t r = 0; r < d.size(); ++r) {
    out << d.sample_ids[r] << ',' << d.domains[r];
    for (double x : d.vision_inputs.row(r)) {
      std::snprintf(buf, sizeof buf, "%.17g", x);
      out << ',' << buf;
    }
    for (double x : d.language_inputs.row(r)) {
      std::snprintf(buf, sizeof buf, "%.17g", x);
      out << ',' << buf;
    }
    out << '\n';
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_real(const std::string& s, std::size_t line_no) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) {
    throw IoError("line " + std::to_string(line_no) + ": bad real '" + s + "'");
  }
  return v;
}

}  // namespace

PhaseDataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("dataset CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "id" || header[1] != "domain") {
    throw IoError("dataset CSV header must start with id,domain");
  }
  std::size_t dv = 0;
  std::size_t dl = 0;
  for (std::size_t c = 2; c < header.size(); ++c) {
    const std::string expect_v = "v_" + std::to_string(dv);
    const std::string expect_l = "l_" + std::to_string(dl);
    if (dl == 0 && header[c] == expect_v) {
      ++dv;
    } else if (header[c] == expect_l) {
      ++dl;
    } else {
      throw IoError("unexpected dataset column '" + header[c] + "'");
    }
  }

  std::vector<std::vector<double>> v_rows;
  std::vector<std::vector<double>> l_rows;
  PhaseDataset d;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) throw IoError("line " + std::to_string(line_no) + ": wrong field count");
    char* end = nullptr;
    const long long id = std::strtoll(f[0].c_str(), &end, 10);
    if (f[0].empty() || end != f[0].c_str() + f[0].size()) throw IoError("line " + std::to_string(line_no) + ": bad id");
    d.sample_ids.push_back(id);
    d.domains.push_back(f[1]);
    std::vector<double> v(dv);
    std::vector<double> l(dl);
    for (std::size_t c = 0; c < dv; ++c) v[c] = parse_real(f[2 + c], line_no);
    for (std::size_t c = 0; c < dl; ++c) l[c] = parse_real(f[2 + dv + c], line_no);
    v_rows.push_back(std::move(v));
    l_rows.push_back(std::move(l));
  }
  d.vision_inputs = Matrix(v_rows.size(), dv);
  d.language_inputs = Matrix(l_rows.size(), dl);
  for (std::size_t r = 0; r < v_rows.size(); ++r) {
    std::copy(v_rows[r].begin(), v_rows[r].end(), d.vision_inputs.row(r).begin());
    std::copy(l_rows[r].begin(), l_rows[r].end(), d.language_inputs.row(r).begin());
  }
  d.validate();
  return d;
}

void save_dataset_csv(const PhaseDataset& d, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_dataset_csv(d, out);
  if (!out) throw IoError("failed writing " + path.string());
}

PhaseDataset load_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_dataset_csv(in);
}

}  // namespace modx
