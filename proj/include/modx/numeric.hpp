#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace modx {

/// Dense row-major matrix of 64-bit reals.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  Matrix transpose() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// a * b
Matrix matmul(const Matrix& a, const Matrix& b);
// a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);

// dst += scale * src
void add_scaled(Matrix& dst, const Matrix& src, double scale);
Matrix scaled(const Matrix& m, double scale);

double max_abs_diff(const Matrix& a, const Matrix& b);
double max_abs(const Matrix& m);
bool all_finite(const Matrix& m);
double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

// Determinant by LU decomposition with partial pivoting.
double determinant(const Matrix& m);

/// Matrix whose rows have unit L2 norm. Only constructible through validation.
class UnitEmbeddings {
 public:
  UnitEmbeddings() = default;

  // Wraps rows that are already unit norm (within 1e-9); throws DegenerateRow otherwise.
  static UnitEmbeddings from_unit_rows(Matrix m);

  const Matrix& mat() const { return mat_; }
  std::size_t rows() const { return mat_.rows(); }
  std::size_t dim() const { return mat_.cols(); }
  std::span<const double> row(std::size_t r) const { return mat_.row(r); }

 private:
  friend UnitEmbeddings l2_normalize_rows(const Matrix& m);
  explicit UnitEmbeddings(Matrix m) : mat_(std::move(m)) {}
  Matrix mat_;
};

inline constexpr double kDegenerateNorm = 1e-12;
inline constexpr double kUnitTolerance = 1e-9;

UnitEmbeddings l2_normalize_rows(const Matrix& m);

// Entry (i, j) = <v_i, l_j>. Throws DimensionMismatch when widths differ.
Matrix cosine_matrix(const UnitEmbeddings& v, const UnitEmbeddings& l);

// arccos of the clamped cosine, in degrees.
double angle_deg(double cosine);

// Applies a linear map to every row: row x becomes r * x.
UnitEmbeddings transform_rows(const UnitEmbeddings& e, const Matrix& r);

/// Seeded generator used for all randomness in the project.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. The standard distributions are implementation-defined, so the
/// conversions to uniform doubles (53-bit mantissa), Gaussians (Box-Muller)
/// and bounded integers (rejection sampling) are done here to keep every
/// stream identical across platforms and standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double gaussian();
  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, Rng& rng);

// Orthonormalizes the columns of m in place (modified Gram-Schmidt, two passes).
// Requires rows >= cols and full column rank.
void orthonormalize_columns(Matrix& m);

// Seeded d x d rotation (orthogonal, determinant +1).
Matrix random_rotation(std::size_t d, std::uint64_t seed);

// -I of size d.
Matrix negate_identity(std::size_t d);

// Planar rotation by angle_deg in the (axis_a, axis_b) plane of R^d.
Matrix planar_rotation(std::size_t d, double angle_deg, std::size_t axis_a = 0, std::size_t axis_b = 1);

}  // namespace modx
