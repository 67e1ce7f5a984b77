#include "modx/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "modx/errors.hpp"

namespace modx {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Matrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) {
      throw DimensionMismatch("Matrix::from_rows: ragged rows");
    }
    std::copy(row.begin(), row.end(), m.row(i).begin());
    ++i;
  }
  return m;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  }
  return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionMismatch("matmul: " + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()));
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw DimensionMismatch("matmul_nt: " + std::to_string(a.cols()) + " vs " + std::to_string(b.cols()));
  }
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto a_row = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a_row, b.row(j));
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw DimensionMismatch("matmul_tn: " + std::to_string(a.rows()) + " vs " + std::to_string(b.rows()));
  }
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const auto a_row = a.row(k);
    const auto b_row = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a_row[i];
      if (aki == 0.0) continue;
      auto out_row = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aki * b_row[j];
    }
  }
  return out;
}

void add_scaled(Matrix& dst, const Matrix& src, double scale) {
  if (dst.rows() != src.rows() || dst.cols() != src.cols()) {
    throw DimensionMismatch("add_scaled: shape mismatch");
  }
  auto d = dst.data();
  const auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += scale * s[i];
}

Matrix scaled(const Matrix& m, double scale) {
  Matrix out = m;
  for (double& x : out.data()) x *= scale;
  return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionMismatch("max_abs_diff: shape mismatch");
  }
  double worst = 0.0;
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(x[i] - y[i]));
  return worst;
}

double max_abs(const Matrix& m) {
  double worst = 0.0;
  for (double x : m.data()) worst = std::max(worst, std::abs(x));
  return worst;
}

bool all_finite(const Matrix& m) {
  return std::all_of(m.data().begin(), m.data().end(), [](double x) { return std::isfinite(x); });
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double determinant(const Matrix& m) {
  if (m.rows() != m.cols()) throw DimensionMismatch("determinant: matrix not square");
  Matrix lu = m;
  const std::size_t n = m.rows();
  double det = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t pivot = k;
    for (std::size_t r = k + 1; r < n; ++r) {
      if (std::abs(lu(r, k)) > std::abs(lu(pivot, k))) pivot = r;
    }
    if (lu(pivot, k) == 0.0) return 0.0;
    if (pivot != k) {
      std::swap_ranges(lu.row(k).begin(), lu.row(k).end(), lu.row(pivot).begin());
      det = -det;
    }
    det *= lu(k, k);
    for (std::size_t r = k + 1; r < n; ++r) {
      const double f = lu(r, k) / lu(k, k);
      for (std::size_t c = k; c < n; ++c) lu(r, c) -= f * lu(k, c);
    }
  }
  return det;
}

UnitEmbeddings UnitEmbeddings::from_unit_rows(Matrix m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double n = norm(m.row(r));
    if (!(std::abs(n - 1.0) <= kUnitTolerance)) {
      throw DegenerateRow("row " + std::to_string(r) + " is not unit norm (" + std::to_string(n) + ")");
    }
  }
  return UnitEmbeddings(std::move(m));
}

UnitEmbeddings l2_normalize_rows(const Matrix& m) {
  Matrix out = m;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double n = norm(row);
    if (!(n > kDegenerateNorm)) {
      throw DegenerateRow("row " + std::to_string(r) + " has norm " + std::to_string(n));
    }
    for (double& x : row) x /= n;
  }
  return UnitEmbeddings(std::move(out));
}

Matrix cosine_matrix(const UnitEmbeddings& v, const UnitEmbeddings& l) {
  if (v.dim() != l.dim()) {
    throw DimensionMismatch("cosine_matrix: embedding widths " + std::to_string(v.dim()) + " and " +
                            std::to_string(l.dim()));
  }
  return matmul_nt(v.mat(), l.mat());
}

double angle_deg(double cosine) {
  const double c = std::clamp(cosine, -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

UnitEmbeddings transform_rows(const UnitEmbeddings& e, const Matrix& r) {
  if (r.rows() != r.cols() || r.cols() != e.dim()) {
    throw DimensionMismatch("transform_rows: map is not " + std::to_string(e.dim()) + "x" + std::to_string(e.dim()));
  }
  // Rows of E * R^T are R applied to each row. No renormalization, so -I maps
  // every entry to its exact negation.
  return UnitEmbeddings::from_unit_rows(matmul_nt(e.mat(), r));
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::uint64_t Rng::below(std::uint64_t bound) {
  // Reject the top partial block so every residue is equally likely.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return x % bound;
}

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& x : m.data()) x = rng.gaussian();
  return m;
}

void orthonormalize_columns(Matrix& m) {
  const std::size_t n = m.rows();
  const std::size_t k = m.cols();
  if (n < k) throw DimensionMismatch("orthonormalize_columns: more columns than rows");
  for (std::size_t j = 0; j < k; ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t p = 0; p < j; ++p) {
        double proj = 0.0;
        for (std::size_t r = 0; r < n; ++r) proj += m(r, p) * m(r, j);
        for (std::size_t r = 0; r < n; ++r) m(r, j) -= proj * m(r, p);
      }
    }
    double len = 0.0;
    for (std::size_t r = 0; r < n; ++r) len += m(r, j) * m(r, j);
    len = std::sqrt(len);
    if (!(len > kDegenerateNorm)) throw DegenerateRow("orthonormalize_columns: rank deficient");
    for (std::size_t r = 0; r < n; ++r) m(r, j) /= len;
  }
}

Matrix random_rotation(std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  Matrix q = gaussian_matrix(d, d, rng);
  orthonormalize_columns(q);
  if (determinant(q) < 0.0) {
    for (std::size_t r = 0; r < d; ++r) q(r, 0) = -q(r, 0);
  }
  return q;
}

Matrix negate_identity(std::size_t d) { return scaled(Matrix::identity(d), -1.0); }

Matrix planar_rotation(std::size_t d, double angle_deg_value, std::size_t axis_a, std::size_t axis_b) {
  if (axis_a >= d || axis_b >= d || axis_a == axis_b) {
    throw DimensionMismatch("planar_rotation: invalid axes");
  }
  Matrix r = Matrix::identity(d);
  const double t = angle_deg_value * std::numbers::pi / 180.0;
  r(axis_a, axis_a) = std::cos(t);
  r(axis_a, axis_b) = -std::sin(t);
  r(axis_b, axis_a) = std::sin(t);
  r(axis_b, axis_b) = std::cos(t);
  return r;
}

}  // namespace modx
