#include "modx/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "modx/errors.hpp"

namespace modx {

std::size_t AngleHistogram::total() const {
  std::size_t n = 0;
  for (std::size_t c : counts) n += c;
  return n;
}

namespace {

std::string format_edge(double e) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", e);
  return buf;
}

}  // namespace

std::vector<std::string> AngleHistogram::bin_labels() const {
  std::vector<std::string> labels;
  for (std::size_t k = 0; k + 1 < bin_edges_deg.size(); ++k) {
    labels.push_back((k == 0 ? "[" : "(") + format_edge(bin_edges_deg[k]) + "," + format_edge(bin_edges_deg[k + 1]) +
                     "]");
  }
  return labels;
}

namespace bins {
std::vector<double> sam() { return {0.0, 5.0, 10.0, 15.0, 20.0, 180.0}; }
std::vector<double> ram() { return {0.0, 15.0, 20.0, 25.0, 30.0, 180.0}; }
}  // namespace bins

AngleHistogram make_histogram(std::span<const double> angles_deg, std::span<const double> edges) {
  if (edges.size() < 2) throw ConfigError("histogram needs at least two bin edges");
  for (std::size_t k = 1; k < edges.size(); ++k) {
    if (!(edges[k] > edges[k - 1])) throw ConfigError("histogram bin edges must be strictly ascending");
  }
  AngleHistogram h;
  h.bin_edges_deg.assign(edges.begin(), edges.end());
  h.counts.assign(edges.size() - 1, 0);
  for (double a : angles_deg) {
    std::size_t k = 0;
    while (k + 1 < h.counts.size() && a > edges[k + 1]) ++k;
    ++h.counts[k];
  }
  const std::size_t total = h.total();
  h.fractions.assign(h.counts.size(), 0.0);
  if (total > 0) {
    for (std::size_t k = 0; k < h.counts.size(); ++k) {
      h.fractions[k] = static_cast<double>(h.counts[k]) / static_cast<double>(total);
    }
  }
  return h;
}

Matrix sam(const UnitEmbeddings& e) {
  const Matrix gram = cosine_matrix(e, e);
  Matrix out(e.rows(), e.rows());
  for (std::size_t a = 0; a < e.rows(); ++a) {
    for (std::size_t b = a + 1; b < e.rows(); ++b) {
      const double angle = angle_deg(gram(a, b));
      out(a, b) = angle;
      out(b, a) = angle;
    }
  }
  return out;
}

AngleHistogram sam_delta_hist(const UnitEmbeddings& e_i, const UnitEmbeddings& e_j, std::span<const double> edges) {
  if (e_i.rows() != e_j.rows()) throw DimensionMismatch("sam_delta_hist: snapshots embed different sample counts");
  const Matrix si = sam(e_i);
  const Matrix sj = sam(e_j);
  std::vector<double> deltas;
  deltas.reserve(e_i.rows() * (e_i.rows() - (e_i.rows() > 0 ? 1 : 0)) / 2);
  for (std::size_t a = 0; a < e_i.rows(); ++a) {
    for (std::size_t b = a + 1; b < e_i.rows(); ++b) deltas.push_back(std::abs(si(a, b) - sj(a, b)));
  }
  return make_histogram(deltas, edges);
}

std::vector<double> ram(const UnitEmbeddings& e_i, const UnitEmbeddings& e_j) {
  if (e_i.rows() != e_j.rows() || e_i.dim() != e_j.dim()) {
    throw DimensionMismatch("ram: snapshots produce differently shaped embeddings");
  }
  std::vector<double> out(e_i.rows());
  for (std::size_t a = 0; a < e_i.rows(); ++a) out[a] = angle_deg(dot(e_i.row(a), e_j.row(a)));
  return out;
}

ImavResult imav_from_embeddings(const UnitEmbeddings& v_old, const UnitEmbeddings& l_old, const UnitEmbeddings& v_new,
                                const UnitEmbeddings& l_new, std::span<const double> edges,
                                RetrievalDirection direction) {
  const std::size_t n = v_old.rows();
  if (l_old.rows() != n || v_new.rows() != n || l_new.rows() != n) {
    throw DimensionMismatch("imav: embeddings disagree on sample count");
  }
  if (n == 0) throw EmptyCorrectSet("imav: no samples");
  const Matrix m_old = cosine_matrix(v_old, l_old);
  const Matrix m_old_t = m_old.transpose();
  ImavResult out;
  for (std::size_t a = 0; a < n; ++a) {
    bool correct = row_argmax(m_old, a) == a;
    if (direction == RetrievalDirection::both) correct = correct && row_argmax(m_old_t, a) == a;
    if (!correct) continue;
    const double before = angle_deg(dot(v_old.row(a), l_old.row(a)));
    const double after = angle_deg(dot(v_new.row(a), l_new.row(a)));
    out.contributing.push_back(a);
    out.angle_changes_deg.push_back(std::abs(before - after));
  }
  if (out.contributing.empty()) throw EmptyCorrectSet("imav: the old snapshot retrieves no sample correctly");
  out.histogram = make_histogram(out.angle_changes_deg, edges);
  return out;
}

ImavResult imav(const DualEncoderSnapshot& old, const DualEncoderSnapshot& next, const PhaseDataset& data,
                std::span<const double> edges, RetrievalDirection direction) {
  if (data.empty()) throw EmptyCorrectSet("imav: dataset is empty");
  return imav_from_embeddings(encode(old.vision, data.vision_inputs), encode(old.language, data.language_inputs),
                              encode(next.vision, data.vision_inputs), encode(next.language, data.language_inputs),
                              edges, direction);
}

namespace {

std::size_t k_index(const std::vector<std::size_t>& ks, std::size_t k) {
  const auto it = std::find(ks.begin(), ks.end(), k);
  if (it == ks.end()) throw DimensionMismatch("retrieval report has no R@" + std::to_string(k));
  return static_cast<std::size_t>(it - ks.begin());
}

// 0-based rank of entry `target` in `values` sorted descending, lower index first on ties.
std::size_t rank_of(std::span<const double> values, std::size_t target) {
  const double x = values[target];
  std::size_t rank = 0;
  for (std::size_t j = 0; j < values.size(); ++j) {
    if (values[j] > x || (values[j] == x && j < target)) ++rank;
  }
  return rank;
}

}  // namespace

double RetrievalReport::i2t(std::size_t k) const { return image_to_text[k_index(ks, k)]; }
double RetrievalReport::t2i(std::size_t k) const { return text_to_image[k_index(ks, k)]; }

RetrievalReport recall_at_k(const Matrix& m, std::span<const std::size_t> ks) {
  if (m.rows() != m.cols()) throw DimensionMismatch("recall_at_k: matrix is not square");
  const std::size_t n = m.rows();
  const Matrix mt = m.transpose();
  std::vector<std::size_t> row_rank(n);
  std::vector<std::size_t> col_rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    row_rank[i] = rank_of(m.row(i), i);
    col_rank[i] = rank_of(mt.row(i), i);
  }
  RetrievalReport r;
  r.ks.assign(ks.begin(), ks.end());
  for (std::size_t k : ks) {
    const std::size_t kk = std::min(k, n);
    std::size_t hits_r = 0;
    std::size_t hits_c = 0;
    for (std::size_t i = 0; i < n; ++i) {
      hits_r += row_rank[i] < kk ? 1 : 0;
      hits_c += col_rank[i] < kk ? 1 : 0;
    }
    const double denom = n == 0 ? 1.0 : static_cast<double>(n);
    r.image_to_text.push_back(static_cast<double>(hits_r) / denom);
    r.text_to_image.push_back(static_cast<double>(hits_c) / denom);
  }
  return r;
}

RetrievalReport recall_at_k(const ContrastiveMatrix& m, std::span<const std::size_t> ks) {
  return recall_at_k(m.mat(), ks);
}

RetrievalReport evaluate_retrieval(const DualEncoderSnapshot& snapshot, const PhaseDataset& data,
                                   std::span<const std::size_t> ks) {
  const UnitEmbeddings v = encode(snapshot.vision, data.vision_inputs);
  const UnitEmbeddings l = encode(snapshot.language, data.language_inputs);
  return recall_at_k(cosine_matrix(v, l), ks);
}

namespace {

constexpr std::size_t kDemoMaxAttempts = 1000;

UnitEmbeddings random_unit_rows(std::size_t n, std::size_t d, Rng& rng) {
  return l2_normalize_rows(gaussian_matrix(n, d, rng));
}

std::vector<std::size_t> argmaxes(const Matrix& m) {
  std::vector<std::size_t> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) out[i] = row_argmax(m, i);
  return out;
}

// Strict: the diagonal beats every other entry of the row.
bool diagonal_strict_max(const Matrix& m, std::size_t i) {
  for (std::size_t j = 0; j < m.cols(); ++j) {
    if (j != i && !(m(i, i) > m(i, j))) return false;
  }
  return true;
}

bool diagonal_strict_min(const Matrix& m, std::size_t i) {
  for (std::size_t j = 0; j < m.cols(); ++j) {
    if (j != i && !(m(i, i) < m(i, j))) return false;
  }
  return true;
}

}  // namespace

RotationDemoReport rotation_flip_demo(std::size_t dim, std::size_t n, std::uint64_t seed) {
  if (dim < 2 || n < 2) throw ConfigError("rotation demo needs dim >= 2 and n >= 2");
  RotationDemoReport r;
  r.dim = dim;
  r.n = n;
  r.seed = seed;

  Rng rng(seed);
  UnitEmbeddings v;
  UnitEmbeddings l;
  bool found = false;
  // Sample a is pulled toward its own caption, sample b pushed away from its
  // own caption so that it is misretrieved and its diagonal is the row minimum.
  for (r.attempts = 1; r.attempts <= kDemoMaxAttempts; ++r.attempts) {
    l = random_unit_rows(n, dim, rng);
    Matrix raw = random_unit_rows(n, dim, rng).mat();
    for (std::size_t c = 0; c < dim; ++c) {
      raw(0, c) = l.mat()(0, c) + 0.3 * rng.gaussian();
      raw(1, c) = -l.mat()(1, c) + 0.3 * rng.gaussian();
    }
    v = l2_normalize_rows(raw);
    const Matrix m = cosine_matrix(v, l);
    if (diagonal_strict_max(m, 0) && diagonal_strict_min(m, 1)) {
      found = true;
      break;
    }
  }
  if (!found) throw ConstructionFailure("rotation demo: no valid instance within the resample bound");

  const Matrix flip = negate_identity(dim);
  r.rotation_orthogonality_error = max_abs_diff(matmul_tn(flip, flip), Matrix::identity(dim));
  r.before = cosine_matrix(v, l);
  r.after = cosine_matrix(v, transform_rows(l, flip));
  r.argmax_before = argmaxes(r.before);
  r.argmax_after = argmaxes(r.after);

  r.every_entry_negated = true;
  for (std::size_t k = 0; k < r.before.size(); ++k) {
    if (r.after.data()[k] != -r.before.data()[k]) r.every_entry_negated = false;
  }
  r.correct_sample_flipped = r.argmax_before[0] == 0 && r.argmax_after[0] != 0;
  r.misretrieved_sample_fixed = r.argmax_before[1] != 1 && r.argmax_after[1] == 1;

  const Matrix both = cosine_matrix(transform_rows(v, flip), transform_rows(l, flip));
  r.both_sides_unchanged = both == r.before;

  const Matrix q = random_rotation(dim, seed);
  r.rotation_orthogonality_error =
      std::max(r.rotation_orthogonality_error, max_abs_diff(matmul_tn(q, q), Matrix::identity(dim)));
  const Matrix rotated = cosine_matrix(transform_rows(v, q), transform_rows(l, q));
  const std::vector<std::size_t> ks{1, 5, 10};
  r.random_rotation_both_sides_same_retrieval =
      recall_at_k(rotated, ks) == recall_at_k(r.before, ks) && argmaxes(rotated) == r.argmax_before;
  return r;
}

nlohmann::ordered_json to_json(const AngleHistogram& h) {
  nlohmann::ordered_json j;
  j["bin_edges_deg"] = h.bin_edges_deg;
  j["labels"] = h.bin_labels();
  j["counts"] = h.counts;
  j["fractions"] = h.fractions;
  return j;
}

nlohmann::ordered_json to_json(const RetrievalReport& r) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json i2t;
  nlohmann::ordered_json t2i;
  for (std::size_t k = 0; k < r.ks.size(); ++k) {
    i2t["R@" + std::to_string(r.ks[k])] = r.image_to_text[k];
    t2i["R@" + std::to_string(r.ks[k])] = r.text_to_image[k];
  }
  j["image_to_text"] = i2t;
  j["text_to_image"] = t2i;
  return j;
}

nlohmann::ordered_json to_json(const Matrix& m) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
  }
  return rows;
}

nlohmann::ordered_json to_json(const RotationDemoReport& r) {
  nlohmann::ordered_json j;
  j["dim"] = r.dim;
  j["n"] = r.n;
  j["seed"] = r.seed;
  j["attempts"] = r.attempts;
  j["correct_sample"] = r.correct_sample;
  j["misretrieved_sample"] = r.misretrieved_sample;
  j["before"] = to_json(r.before);
  j["after"] = to_json(r.after);
  j["argmax_before"] = r.argmax_before;
  j["argmax_after"] = r.argmax_after;
  j["rotation_orthogonality_error"] = r.rotation_orthogonality_error;
  j["every_entry_negated"] = r.every_entry_negated;
  j["correct_sample_flipped"] = r.correct_sample_flipped;
  j["misretrieved_sample_fixed"] = r.misretrieved_sample_fixed;
  j["both_sides_unchanged"] = r.both_sides_unchanged;
  j["random_rotation_both_sides_same_retrieval"] = r.random_rotation_both_sides_same_retrieval;
  return j;
}

AngleHistogram histogram_from_json(const nlohmann::ordered_json& j) {
  AngleHistogram h;
  h.bin_edges_deg = j.at("bin_edges_deg").get<std::vector<double>>();
  h.counts = j.at("counts").get<std::vector<std::size_t>>();
  h.fractions = j.at("fractions").get<std::vector<double>>();
  return h;
}

RetrievalReport retrieval_from_json(const nlohmann::ordered_json& j) {
  RetrievalReport r;
  for (const auto& [key, value] : j.at("image_to_text").items()) {
    r.ks.push_back(static_cast<std::size_t>(std::stoul(key.substr(2))));
    r.image_to_text.push_back(value.get<double>());
  }
  for (const auto& [key, value] : j.at("text_to_image").items()) r.text_to_image.push_back(value.get<double>());
  return r;
}

std::string render_histogram_table(const std::string& title, const std::vector<std::string>& row_names,
                                   const std::vector<AngleHistogram>& rows, const std::string& quantity) {
  std::ostringstream out;
  out << title << '\n';
  if (rows.empty()) return out.str();
  std::size_t name_w = quantity.size() + 3;
  for (const auto& n : row_names) name_w = std::max(name_w, n.size());
  const auto labels = rows.front().bin_labels();
  std::size_t col_w = 9;
  for (const auto& l : labels) col_w = std::max(col_w, l.size() + 2);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(name_w), (quantity + " in").c_str());
  out << buf;
  for (const auto& l : labels) {
    std::snprintf(buf, sizeof buf, "%*s", static_cast<int>(col_w), l.c_str());
    out << buf;
  }
  out << '\n';
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(name_w), row_names[r].c_str());
    out << buf;
    for (double f : rows[r].fractions) {
      std::snprintf(buf, sizeof buf, "%*.2f%%", static_cast<int>(col_w) - 1, 100.0 * f);
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

namespace {

void render_matrix(std::ostringstream& out, const Matrix& m) {
  char buf[32];
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out << "  [";
    for (std::size_t c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%s%8.4f", c == 0 ? "" : " ", m(r, c));
      out << buf;
    }
    out << " ]\n";
  }
}

std::string join(const std::vector<std::size_t>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? " " : "") + std::to_string(xs[i]);
  return s;
}

}  // namespace

std::string render_demo(const RotationDemoReport& r) {
  std::ostringstream out;
  out << "rotation flip demo: dim=" << r.dim << " n=" << r.n << " seed=" << r.seed << " attempts=" << r.attempts
      << '\n';
  out << "contrastive matrix before (rows: vision, cols: language):\n";
  render_matrix(out, r.before);
  out << "row argmax before: " << join(r.argmax_before) << '\n';
  out << "contrastive matrix after applying -I to the language side:\n";
  render_matrix(out, r.after);
  out << "row argmax after:  " << join(r.argmax_after) << '\n';
  auto line = [&out](const std::string& label, const std::string& value) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-48s %s\n", (label + ":").c_str(), value.c_str());
    out << buf;
  };
  auto yn = [](bool b) { return std::string(b ? "yes" : "no"); };
  line("every entry negated", yn(r.every_entry_negated));
  line("sample " + std::to_string(r.correct_sample) + " (correct before) now misretrieved", yn(r.correct_sample_flipped));
  line("sample " + std::to_string(r.misretrieved_sample) + " (misretrieved before) now correct",
       yn(r.misretrieved_sample_fixed));
  line("-I on both modalities leaves matrix unchanged", yn(r.both_sides_unchanged));
  line("random rotation on both keeps retrieval", yn(r.random_rotation_both_sides_same_retrieval));
  char err[32];
  std::snprintf(err, sizeof err, "%.3e", r.rotation_orthogonality_error);
  line("max |R^T R - I|", err);
  out << "verdict: "
      << (r.every_entry_negated && r.correct_sample_flipped && r.both_sides_unchanged ? "FLIPPED" : "NOT FLIPPED")
      << '\n';
  return out.str();
}

}  // namespace modx
