#include "modx/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "modx/errors.hpp"

namespace modx {

namespace {

constexpr double kRangeSlack = 1e-9;

void require_positive_tau(double tau, const char* what) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw NonpositiveTemperature(std::string(what) + " must be a positive finite temperature");
  }
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionMismatch(std::string(what) + ": " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                            " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) throw DimensionMismatch(std::string(what) + ": matrix is not square");
}

// Row-wise log-softmax of logits.
Matrix log_softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    const double peak = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double x : row) sum += std::exp(x - peak);
    const double lse = peak + std::log(sum);
    auto o = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) o[c] = row[c] - lse;
  }
  return out;
}

}  // namespace

ContrastiveMatrix::ContrastiveMatrix(Matrix m) : mat_(std::move(m)) {
  require_square(mat_, "ContrastiveMatrix");
  for (double x : mat_.data()) {
    if (!(x >= -1.0 - kRangeSlack && x <= 1.0 + kRangeSlack)) {
      throw DimensionMismatch("ContrastiveMatrix entry outside [-1, 1]: " + std::to_string(x));
    }
  }
}

ContrastiveMatrix ContrastiveMatrix::from_embeddings(const UnitEmbeddings& v, const UnitEmbeddings& l) {
  if (v.rows() != l.rows()) throw DimensionMismatch("contrastive matrix needs equal batch sizes");
  return ContrastiveMatrix(cosine_matrix(v, l));
}

std::size_t row_argmax(const Matrix& m, std::size_t i) {
  const auto row = m.row(i);
  std::size_t best = i;
  double best_value = row[i];
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (row[j] > best_value) {
      best = j;
      best_value = row[j];
    }
  }
  return best;
}

LossValueAndGrad infonce(const Matrix& v, const Matrix& l, double tau) {
  require_positive_tau(tau, "infonce tau");
  require_same_shape(v, l, "infonce");
  const std::size_t n = v.rows();
  if (n == 0) throw DimensionMismatch("infonce: empty batch");

  const Matrix sims = matmul_nt(v, l);
  const Matrix logits = scaled(sims, 1.0 / tau);
  const Matrix row_log_p = log_softmax_rows(logits);
  const Matrix col_log_p = log_softmax_rows(logits.transpose());

  double ce_rows = 0.0;
  double ce_cols = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ce_rows -= row_log_p(i, i);
    ce_cols -= col_log_p(i, i);
  }
  const double inv_n = 1.0 / static_cast<double>(n);

  // d value / d logits = ((P_row - I) + (P_col - I)) / (2n)
  Matrix d_logits(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double target = i == j ? 1.0 : 0.0;
      d_logits(i, j) = 0.5 * inv_n * ((std::exp(row_log_p(i, j)) - target) + (std::exp(col_log_p(j, i)) - target));
    }
  }

  LossValueAndGrad out;
  out.value = 0.5 * (ce_rows * inv_n + ce_cols * inv_n);
  double grad_tau = 0.0;
  for (std::size_t k = 0; k < sims.size(); ++k) grad_tau -= d_logits.data()[k] * sims.data()[k] / (tau * tau);
  out.grad_tau = grad_tau;
  const Matrix d_sims = scaled(d_logits, 1.0 / tau);
  out.grad_v = matmul(d_sims, l);
  out.grad_l = matmul_tn(d_sims, v);
  return out;
}

LossValueAndGrad infonce(const UnitEmbeddings& v, const UnitEmbeddings& l, double tau) {
  return infonce(v.mat(), l.mat(), tau);
}

Matrix screen_rows(const Matrix& m_old, const Matrix& m_new) {
  require_square(m_old, "screen");
  require_same_shape(m_old, m_new, "screen");
  Matrix out = m_old;
  for (std::size_t i = 0; i < m_old.rows(); ++i) {
    if (row_argmax(m_old, i) != i) {
      const auto src = m_new.row(i);
      std::copy(src.begin(), src.end(), out.row(i).begin());
    }
  }
  return out;
}

ContrastiveMatrix screen(const ContrastiveMatrix& m_old, const ContrastiveMatrix& m_new) {
  return ContrastiveMatrix(screen_rows(m_old.mat(), m_new.mat()));
}

Matrix screen_columns(const Matrix& m_old, const Matrix& m_new) {
  return screen_rows(m_old.transpose(), m_new.transpose()).transpose();
}

MatrixLoss kl_alignment(const Matrix& student, const Matrix& teacher_rows, const Matrix& teacher_cols,
                        double distill_tau) {
  require_positive_tau(distill_tau, "distill_tau");
  require_square(student, "kl_alignment");
  require_same_shape(student, teacher_rows, "kl_alignment");
  require_same_shape(student, teacher_cols, "kl_alignment");
  const std::size_t n = student.rows();
  if (n == 0) throw DimensionMismatch("kl_alignment: empty matrix");
  const double inv_t = 1.0 / distill_tau;

  const Matrix log_q_rows = log_softmax_rows(scaled(student, inv_t));
  const Matrix log_p_rows = log_softmax_rows(scaled(teacher_rows, inv_t));
  const Matrix log_q_cols = log_softmax_rows(scaled(student.transpose(), inv_t));
  const Matrix log_p_cols = log_softmax_rows(scaled(teacher_cols.transpose(), inv_t));

  const double inv_n = 1.0 / static_cast<double>(n);
  double kl_rows = 0.0;
  double kl_cols = 0.0;
  MatrixLoss out{0.0, Matrix(n, n)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double p_r = std::exp(log_p_rows(i, j));
      const double p_c = std::exp(log_p_cols(j, i));
      kl_rows += p_r * (log_p_rows(i, j) - log_q_rows(i, j));
      kl_cols += p_c * (log_p_cols(j, i) - log_q_cols(j, i));
      // d KL(p || softmax(z / t)) / dz = (q - p) / t
      const double q_r = std::exp(log_q_rows(i, j));
      const double q_c = std::exp(log_q_cols(j, i));
      out.grad(i, j) = 0.5 * inv_n * inv_t * ((q_r - p_r) + (q_c - p_c));
    }
  }
  out.value = 0.5 * (kl_rows * inv_n + kl_cols * inv_n);
  return out;
}

MatrixLoss kl_alignment(const ContrastiveMatrix& m_new, const ContrastiveMatrix& m_old_screened, double distill_tau) {
  return kl_alignment(m_new.mat(), m_old_screened.mat(), m_old_screened.mat(), distill_tau);
}

LossValueAndGrad distill_loss_with_teacher(const Matrix& v, const Matrix& l, const Matrix& teacher,
                                           const DistillSettings& settings) {
  if (!(settings.alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
  LossValueAndGrad out = infonce(v, l, settings.tau);
  const Matrix student = matmul_nt(v, l);
  require_same_shape(student, teacher, "teacher matrix");

  const Matrix teacher_rows = settings.screening ? screen_rows(teacher, student) : teacher;
  const Matrix teacher_cols = settings.screening ? screen_columns(teacher, student) : teacher;
  const MatrixLoss kl = kl_alignment(student, teacher_rows, teacher_cols, settings.distill_tau);

  out.value += settings.alpha * kl.value;
  add_scaled(out.grad_v, matmul(kl.grad, l), settings.alpha);
  add_scaled(out.grad_l, matmul_tn(kl.grad, v), settings.alpha);
  return out;
}

Matrix teacher_matrix(const DualEncoderSnapshot& old, const PhaseBatch& raw_batch) {
  const UnitEmbeddings v = encode(old.vision, raw_batch.vision_inputs);
  const UnitEmbeddings l = encode(old.language, raw_batch.language_inputs);
  return cosine_matrix(v, l);
}

namespace {

LossValueAndGrad snapshot_distill(const UnitEmbeddings& v_t, const UnitEmbeddings& l_t, const DualEncoderSnapshot& old,
                                  const PhaseBatch& raw_batch, DistillSettings settings) {
  if (raw_batch.size() != v_t.rows()) throw DimensionMismatch("raw batch and embeddings differ in row count");
  return distill_loss_with_teacher(v_t.mat(), l_t.mat(), teacher_matrix(old, raw_batch), settings);
}

}  // namespace

LossValueAndGrad modx_loss(const UnitEmbeddings& v_t, const UnitEmbeddings& l_t, const DualEncoderSnapshot& old,
                           const PhaseBatch& raw_batch, double tau, double alpha, double distill_tau) {
  return snapshot_distill(v_t, l_t, old, raw_batch, {tau, alpha, distill_tau, true});
}

LossValueAndGrad unscreened_distill_loss(const UnitEmbeddings& v_t, const UnitEmbeddings& l_t,
                                         const DualEncoderSnapshot& old, const PhaseBatch& raw_batch, double tau,
                                         double alpha, double distill_tau) {
  return snapshot_distill(v_t, l_t, old, raw_batch, {tau, alpha, distill_tau, false});
}

namespace {

template <typename Fn>
void zip_tensors(const MlpParams& a, const MlpParams& b, Fn&& fn) {
  if (a.layers.size() != b.layers.size()) throw ShapeMismatch("parameter sets differ in layer count");
  const auto va = a.views();
  const auto vb = b.views();
  for (std::size_t t = 0; t < va.size(); ++t) {
    if (va[t].size() != vb[t].size()) throw ShapeMismatch("parameter tensor " + std::to_string(t) + " differs in size");
    fn(t, va[t], vb[t]);
  }
}

}  // namespace

FisherDiag fisher_from_gradients(const DualEncoderSnapshot& at, std::span<const GradientBundle> batch_grads) {
  FisherDiag f{at.vision.zeros_like(), at.language.zeros_like(), at};
  if (batch_grads.empty()) return f;
  const double inv = 1.0 / static_cast<double>(batch_grads.size());
  auto accumulate_branch = [inv](MlpParams& dst, const MlpParams& g) {
    auto refs = dst.refs();
    zip_tensors(dst, g, [&](std::size_t t, std::span<const double>, std::span<const double> gv) {
      for (std::size_t i = 0; i < gv.size(); ++i) refs[t].values[i] += inv * gv[i] * gv[i];
    });
  };
  for (const auto& g : batch_grads) {
    accumulate_branch(f.vision, g.vision);
    accumulate_branch(f.language, g.language);
  }
  return f;
}

void accumulate_fisher(FisherDiag& total, const FisherDiag& next) {
  auto add_branch = [](MlpParams& dst, const MlpParams& src) {
    auto refs = dst.refs();
    zip_tensors(dst, src, [&](std::size_t t, std::span<const double>, std::span<const double> s) {
      for (std::size_t i = 0; i < s.size(); ++i) refs[t].values[i] += s[i];
    });
  };
  add_branch(total.vision, next.vision);
  add_branch(total.language, next.language);
  total.anchor = next.anchor;
}

ParameterLoss ewc_penalty(const DualEncoderSnapshot& current, const FisherDiag& fisher, double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("ewc lambda must be >= 0");
  ParameterLoss out{0.0, GradientBundle::zeros_like(current)};
  auto branch = [&](const MlpParams& theta, const MlpParams& anchor, const MlpParams& f, MlpParams& grad) {
    auto grad_refs = grad.refs();
    const auto anchor_views = anchor.views();
    const auto f_views = f.views();
    zip_tensors(theta, anchor, [&](std::size_t, std::span<const double>, std::span<const double>) {});
    zip_tensors(theta, f, [&](std::size_t t, std::span<const double> th, std::span<const double> fv) {
      for (std::size_t i = 0; i < th.size(); ++i) {
        const double delta = th[i] - anchor_views[t][i];
        out.value += 0.5 * lambda * fv[i] * delta * delta;
        grad_refs[t].values[i] = lambda * fv[i] * delta;
      }
    });
  };
  branch(current.vision, fisher.anchor.vision, fisher.vision, out.grad.vision);
  branch(current.language, fisher.anchor.language, fisher.language, out.grad.language);
  return out;
}

}  // namespace modx
