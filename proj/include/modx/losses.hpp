#pragma once

#include <cstddef>
#include <span>

#include "modx/dataset.hpp"
#include "modx/encoder.hpp"
#include "modx/numeric.hpp"

namespace modx {

/// Square matrix of vision-to-language cosine similarities. Row i is the
/// vision embedding of sample i, column j the language embedding of sample j.
class ContrastiveMatrix {
 public:
  ContrastiveMatrix() = default;
  // Throws DimensionMismatch unless square with entries in [-1-1e-9, 1+1e-9].
  explicit ContrastiveMatrix(Matrix m);

  static ContrastiveMatrix from_embeddings(const UnitEmbeddings& v, const UnitEmbeddings& l);

  const Matrix& mat() const { return mat_; }
  std::size_t size() const { return mat_.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return mat_(i, j); }

  friend bool operator==(const ContrastiveMatrix&, const ContrastiveMatrix&) = default;

 private:
  Matrix mat_;
};

// Index of the largest entry of row i of a square matrix. A tie with the
// diagonal resolves to i; other ties resolve to the lowest index.
std::size_t row_argmax(const Matrix& m, std::size_t i);

struct LossValueAndGrad {
  double value = 0.0;
  Matrix grad_v;  // d value / d vision embeddings
  Matrix grad_l;  // d value / d language embeddings
  double grad_tau = 0.0;
};

// Loss over a similarity matrix, with gradient on that matrix.
struct MatrixLoss {
  double value = 0.0;
  Matrix grad;
};

/// Symmetric InfoNCE: the mean of the image-to-text and text-to-image
/// cross entropies of M / tau, with M = V L^T.
///
/// The Matrix overload accepts arbitrary rows so gradients can be checked
/// against finite differences off the unit sphere.
LossValueAndGrad infonce(const Matrix& v, const Matrix& l, double tau);
LossValueAndGrad infonce(const UnitEmbeddings& v, const UnitEmbeddings& l, double tau);

// Copy of m_old with every row whose argmax is off the diagonal replaced by
// the corresponding row of m_new.
Matrix screen_rows(const Matrix& m_old, const Matrix& m_new);
ContrastiveMatrix screen(const ContrastiveMatrix& m_old, const ContrastiveMatrix& m_new);
// Mirrored rule: columns of m_old whose argmax is off the diagonal are replaced.
Matrix screen_columns(const Matrix& m_old, const Matrix& m_new);

/// KL(teacher || student) between softmax(. / distill_tau) distributions,
/// averaged over rows and over columns, then the two views averaged.
/// Row distributions come from teacher_rows, column distributions from
/// teacher_cols. The gradient is taken on the student only.
MatrixLoss kl_alignment(const Matrix& student, const Matrix& teacher_rows, const Matrix& teacher_cols,
                        double distill_tau);
MatrixLoss kl_alignment(const ContrastiveMatrix& m_new, const ContrastiveMatrix& m_old_screened, double distill_tau);

struct DistillSettings {
  double tau = 0.07;
  double alpha = 20.0;
  double distill_tau = 0.2;
  bool screening = true;
};

/// InfoNCE + alpha * KL between the student matrix V L^T and a fixed teacher
/// matrix of the same batch. With screening on, misretrieved teacher rows
/// (and, for the column view, columns) are replaced by the student's.
LossValueAndGrad distill_loss_with_teacher(const Matrix& v, const Matrix& l, const Matrix& teacher,
                                           const DistillSettings& settings);

// Teacher matrix of a batch under a frozen snapshot.
Matrix teacher_matrix(const DualEncoderSnapshot& old, const PhaseBatch& raw_batch);

LossValueAndGrad modx_loss(const UnitEmbeddings& v_t, const UnitEmbeddings& l_t, const DualEncoderSnapshot& old,
                           const PhaseBatch& raw_batch, double tau, double alpha, double distill_tau);

// LwF-style baseline: modx_loss without the screening step.
LossValueAndGrad unscreened_distill_loss(const UnitEmbeddings& v_t, const UnitEmbeddings& l_t,
                                         const DualEncoderSnapshot& old, const PhaseBatch& raw_batch, double tau,
                                         double alpha, double distill_tau);

/// Diagonal Fisher information and the parameters it was measured at.
struct FisherDiag {
  MlpParams vision;
  MlpParams language;
  DualEncoderSnapshot anchor;
};

// Fisher as the mean of squared per-batch gradients, anchored at `at`.
FisherDiag fisher_from_gradients(const DualEncoderSnapshot& at, std::span<const GradientBundle> batch_grads);

// Sums the Fisher values of `next` into `total` and moves the anchor to next's.
void accumulate_fisher(FisherDiag& total, const FisherDiag& next);

struct ParameterLoss {
  double value = 0.0;
  GradientBundle grad;
};

// (lambda / 2) * sum_k F_k (theta_k - anchor_k)^2 over both branches.
ParameterLoss ewc_penalty(const DualEncoderSnapshot& current, const FisherDiag& fisher, double lambda);

}  // namespace modx
