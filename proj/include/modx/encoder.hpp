#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "modx/numeric.hpp"

namespace modx {

enum class Activation { tanh, relu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct MlpSpec {
  std::vector<std::size_t> layer_dims;  // input, hidden..., output
  Activation activation = Activation::tanh;

  // Throws ShapeMismatch on fewer than two dims or a zero dim.
  void validate() const;
  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }
  std::size_t layer_count() const { return layer_dims.size() - 1; }

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

struct DenseLayer {
  Matrix weight;  // out x in
  std::vector<double> bias;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Parameter tensor together with whether decoupled weight decay applies to it.
struct ParamRef {
  std::span<double> values;
  bool decay = true;
};

/// Weights and biases of one MLP branch. The same shape is reused for
/// gradients, optimizer moments and Fisher diagonals.
struct MlpParams {
  MlpSpec spec;
  std::vector<DenseLayer> layers;

  std::size_t parameter_count() const;
  std::vector<ParamRef> refs();
  std::vector<std::span<const double>> views() const;
  MlpParams zeros_like() const;

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

// Xavier-uniform weights, zero biases.
MlpParams init_params(const MlpSpec& spec, std::uint64_t seed);

/// Intermediates of a forward pass, kept for backpropagation.
struct ForwardTrace {
  std::vector<Matrix> inputs;       // input to each layer
  std::vector<Matrix> preactivations;
  Matrix output;                    // final pre-normalization rows
  std::vector<double> output_norms;
  UnitEmbeddings embeddings;
};

ForwardTrace forward(const MlpParams& params, const Matrix& inputs);

// Forward pass followed by row L2 normalization. Throws DegenerateRow when a
// pre-normalization row has norm <= 1e-12.
UnitEmbeddings encode(const MlpParams& params, const Matrix& inputs);

// Parameter gradient given dLoss/d(unit output rows), reusing a trace.
MlpParams backward(const MlpParams& params, const ForwardTrace& trace, const Matrix& upstream);

// Recomputes the forward pass, then backpropagates.
MlpParams encode_backward(const MlpParams& params, const Matrix& inputs, const Matrix& upstream_grad_on_unit_output);

struct DualEncoderSnapshot {
  MlpParams vision;
  MlpParams language;
  double temperature = 0.07;
  std::size_t phase_index = 0;

  friend bool operator==(const DualEncoderSnapshot&, const DualEncoderSnapshot&) = default;
};

/// Gradient of a scalar objective with respect to a whole snapshot.
struct GradientBundle {
  MlpParams vision;
  MlpParams language;
  double temperature = 0.0;

  static GradientBundle zeros_like(const DualEncoderSnapshot& snapshot);
  void add_scaled(const GradientBundle& other, double scale);
  std::vector<std::span<const double>> views() const;
};

// Vision tensors first, then language, in layer order (weight, bias).
std::vector<ParamRef> parameter_refs(DualEncoderSnapshot& snapshot);
std::vector<std::span<const double>> parameter_views(const DualEncoderSnapshot& snapshot);

/// Binary snapshot format (little-endian):
///   magic "MODXSNP1", u64 phase_index, f64 temperature,
///   then per branch (vision, language): u64 dim_count, u64 dims[...],
///   u8 activation tag (0 tanh, 1 relu), and every layer's weight (row-major)
///   followed by its bias, as raw IEEE-754 doubles.
std::string serialize_snapshot(const DualEncoderSnapshot& snapshot);
DualEncoderSnapshot deserialize_snapshot(std::string_view bytes);
void save_snapshot(const DualEncoderSnapshot& snapshot, const std::filesystem::path& path);
DualEncoderSnapshot load_snapshot(const std::filesystem::path& path);

}  // namespace modx
