#include "modx/encoder.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include "modx/errors.hpp"

namespace modx {

std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + s + "' (expected tanh or relu)");
}

void MlpSpec::validate() const {
  if (layer_dims.size() < 2) throw ShapeMismatch("MlpSpec needs at least an input and an output dim");
  for (std::size_t d : layer_dims) {
    if (d == 0) throw ShapeMismatch("MlpSpec dims must be >= 1");
  }
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.weight.size() + layer.bias.size();
  return n;
}

std::vector<ParamRef> MlpParams::refs() {
  std::vector<ParamRef> out;
  for (auto& layer : layers) {
    out.push_back({layer.weight.data(), true});
    out.push_back({layer.bias, false});
  }
  return out;
}

std::vector<std::span<const double>> MlpParams::views() const {
  std::vector<std::span<const double>> out;
  for (const auto& layer : layers) {
    out.push_back(layer.weight.data());
    out.push_back(layer.bias);
  }
  return out;
}

MlpParams MlpParams::zeros_like() const {
  MlpParams z;
  z.spec = spec;
  for (const auto& layer : layers) {
    z.layers.push_back({Matrix(layer.weight.rows(), layer.weight.cols()), std::vector<double>(layer.bias.size(), 0.0)});
  }
  return z;
}

MlpParams init_params(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  MlpParams p;
  p.spec = spec;
  for (std::size_t k = 0; k < spec.layer_count(); ++k) {
    const std::size_t fan_in = spec.layer_dims[k];
    const std::size_t fan_out = spec.layer_dims[k + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    DenseLayer layer{Matrix(fan_out, fan_in), std::vector<double>(fan_out, 0.0)};
    for (double& w : layer.weight.data()) w = rng.uniform(-bound, bound);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

namespace {

void check_shapes(const MlpParams& params) {
  params.spec.validate();
  if (params.layers.size() != params.spec.layer_count()) throw ShapeMismatch("layer count does not match spec");
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    const auto& layer = params.layers[k];
    if (layer.weight.rows() != params.spec.layer_dims[k + 1] || layer.weight.cols() != params.spec.layer_dims[k] ||
        layer.bias.size() != params.spec.layer_dims[k + 1]) {
      throw ShapeMismatch("layer " + std::to_string(k) + " shape does not match spec");
    }
  }
}

double activate(Activation a, double z) { return a == Activation::tanh ? std::tanh(z) : (z > 0.0 ? z : 0.0); }

// Derivative expressed through the preactivation.
double activate_grad(Activation a, double z) {
  if (a == Activation::tanh) {
    const double t = std::tanh(z);
    return 1.0 - t * t;
  }
  return z > 0.0 ? 1.0 : 0.0;
}

}  // namespace

ForwardTrace forward(const MlpParams& params, const Matrix& inputs) {
  check_shapes(params);
  if (inputs.cols() != params.spec.input_dim()) {
    throw DimensionMismatch("encoder expects input width " + std::to_string(params.spec.input_dim()) + ", got " +
                            std::to_string(inputs.cols()));
  }
  ForwardTrace trace;
  Matrix current = inputs;
  const std::size_t last = params.layers.size() - 1;
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    const auto& layer = params.layers[k];
    Matrix z = matmul_nt(current, layer.weight);
    for (std::size_t r = 0; r < z.rows(); ++r) {
      auto row = z.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) row[c] += layer.bias[c];
    }
    trace.inputs.push_back(std::move(current));
    current = z;
    // The output layer stays linear; normalization follows it.
    if (k != last) {
      for (double& x : current.data()) x = activate(params.spec.activation, x);
    }
    trace.preactivations.push_back(std::move(z));
  }
  trace.output = std::move(current);
  trace.output_norms.resize(trace.output.rows());
  for (std::size_t r = 0; r < trace.output.rows(); ++r) trace.output_norms[r] = norm(trace.output.row(r));
  trace.embeddings = l2_normalize_rows(trace.output);
  return trace;
}

UnitEmbeddings encode(const MlpParams& params, const Matrix& inputs) { return forward(params, inputs).embeddings; }

MlpParams backward(const MlpParams& params, const ForwardTrace& trace, const Matrix& upstream) {
  const Matrix& u = trace.embeddings.mat();
  if (upstream.rows() != u.rows() || upstream.cols() != u.cols()) {
    throw DimensionMismatch("upstream gradient shape does not match encoder output");
  }
  // Jacobian of x -> x/|x| is (I - u u^T)/|x|.
  Matrix delta(u.rows(), u.cols());
  for (std::size_t r = 0; r < u.rows(); ++r) {
    const auto g = upstream.row(r);
    const auto ur = u.row(r);
    const double along = dot(ur, g);
    const double inv = 1.0 / trace.output_norms[r];
    auto d = delta.row(r);
    for (std::size_t c = 0; c < d.size(); ++c) d[c] = (g[c] - ur[c] * along) * inv;
  }

  MlpParams grads = params.zeros_like();
  for (std::size_t k = params.layers.size(); k-- > 0;) {
    auto& g = grads.layers[k];
    g.weight = matmul_tn(delta, trace.inputs[k]);
    for (std::size_t r = 0; r < delta.rows(); ++r) {
      const auto d = delta.row(r);
      for (std::size_t c = 0; c < d.size(); ++c) g.bias[c] += d[c];
    }
    if (k == 0) break;
    Matrix upstream_act = matmul(delta, params.layers[k].weight);
    const Matrix& z = trace.preactivations[k - 1];
    auto ua = upstream_act.data();
    const auto zd = z.data();
    for (std::size_t i = 0; i < ua.size(); ++i) ua[i] *= activate_grad(params.spec.activation, zd[i]);
    delta = std::move(upstream_act);
  }
  return grads;
}

MlpParams encode_backward(const MlpParams& params, const Matrix& inputs, const Matrix& upstream_grad_on_unit_output) {
  return backward(params, forward(params, inputs), upstream_grad_on_unit_output);
}

GradientBundle GradientBundle::zeros_like(const DualEncoderSnapshot& snapshot) {
  return {snapshot.vision.zeros_like(), snapshot.language.zeros_like(), 0.0};
}

void GradientBundle::add_scaled(const GradientBundle& other, double scale) {
  auto add_branch = [scale](MlpParams& dst, const MlpParams& src) {
    if (dst.layers.size() != src.layers.size()) throw ShapeMismatch("gradient bundles differ in layer count");
    for (std::size_t k = 0; k < dst.layers.size(); ++k) {
      modx::add_scaled(dst.layers[k].weight, src.layers[k].weight, scale);
      auto& b = dst.layers[k].bias;
      const auto& sb = src.layers[k].bias;
      if (b.size() != sb.size()) throw ShapeMismatch("bias length mismatch");
      for (std::size_t i = 0; i < b.size(); ++i) b[i] += scale * sb[i];
    }
  };
  add_branch(vision, other.vision);
  add_branch(language, other.language);
  temperature += scale * other.temperature;
}

std::vector<std::span<const double>> GradientBundle::views() const {
  auto out = vision.views();
  auto lang = language.views();
  out.insert(out.end(), lang.begin(), lang.end());
  return out;
}

std::vector<ParamRef> parameter_refs(DualEncoderSnapshot& snapshot) {
  auto out = snapshot.vision.refs();
  auto lang = snapshot.language.refs();
  out.insert(out.end(), lang.begin(), lang.end());
  return out;
}

std::vector<std::span<const double>> parameter_views(const DualEncoderSnapshot& snapshot) {
  auto out = snapshot.vision.views();
  auto lang = snapshot.language.views();
  out.insert(out.end(), lang.begin(), lang.end());
  return out;
}

namespace {

constexpr std::string_view kSnapshotMagic = "MODXSNP1";

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw IoError("snapshot truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

void put_branch(std::string& out, const MlpParams& p) {
  put_u64(out, p.spec.layer_dims.size());
  for (std::size_t d : p.spec.layer_dims) put_u64(out, d);
  out.push_back(static_cast<char>(p.spec.activation == Activation::tanh ? 0 : 1));
  for (const auto& layer : p.layers) {
    for (double w : layer.weight.data()) put_f64(out, w);
    for (double b : layer.bias) put_f64(out, b);
  }
}

MlpParams read_branch(Reader& in) {
  MlpParams p;
  const std::uint64_t count = in.u64();
  if (count < 2 || count > 64) throw IoError("snapshot has an implausible layer count");
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t d = in.u64();
    if (d == 0 || d > (1u << 20)) throw IoError("snapshot has an implausible layer width");
    p.spec.layer_dims.push_back(static_cast<std::size_t>(d));
  }
  const std::uint8_t tag = in.u8();
  if (tag > 1) throw IoError("snapshot has an unknown activation tag");
  p.spec.activation = tag == 0 ? Activation::tanh : Activation::relu;
  for (std::size_t k = 0; k < p.spec.layer_count(); ++k) {
    DenseLayer layer{Matrix(p.spec.layer_dims[k + 1], p.spec.layer_dims[k]), std::vector<double>(p.spec.layer_dims[k + 1])};
    for (double& w : layer.weight.data()) w = in.f64();
    for (double& b : layer.bias) b = in.f64();
    p.layers.push_back(std::move(layer));
  }
  return p;
}

}  // namespace

std::string serialize_snapshot(const DualEncoderSnapshot& snapshot) {
  std::string out(kSnapshotMagic);
  put_u64(out, snapshot.phase_index);
  put_f64(out, snapshot.temperature);
  put_branch(out, snapshot.vision);
  put_branch(out, snapshot.language);
  return out;
}

DualEncoderSnapshot deserialize_snapshot(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(kSnapshotMagic.size()) != kSnapshotMagic) throw IoError("not a snapshot file (bad magic)");
  DualEncoderSnapshot s;
  s.phase_index = static_cast<std::size_t>(in.u64());
  s.temperature = in.f64();
  if (!(s.temperature > 0.0)) throw IoError("snapshot temperature must be positive");
  s.vision = read_branch(in);
  s.language = read_branch(in);
  if (!in.done()) throw IoError("trailing bytes after snapshot");
  return s;
}

void save_snapshot(const DualEncoderSnapshot& snapshot, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const std::string bytes = serialize_snapshot(snapshot);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

DualEncoderSnapshot load_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_snapshot(buf.str());
}

}  // namespace modx
