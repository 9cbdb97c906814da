#pragma once

// Symmetric image-text InfoNCE over a batch of paired embeddings.
//
// With logits S_ij = z^I_i . z^T_j / tau the loss is
//   L = -(1/2N) sum_i [ log softmax_j(S_i.)_i + log softmax_j(S_.i)_i ],
// the mean of the image-to-text and text-to-image cross-entropies with the
// matching index as target. One temperature is shared by both directions.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "rsalign/error.hpp"
#include "rsalign/matrix.hpp"

namespace rsalign {

/// tau = exp(log_tau); learnable in log space so it stays positive.
struct Temperature {
  double log_tau = std::log(0.07);

  static Temperature from_tau(double tau) { return {std::log(tau)}; }
  double tau() const { return std::exp(log_tau); }
};

template <class T>
Matrix<T> l2_normalize(const Matrix<T>& m) {
  Matrix<T> out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto row = m.row(i);
    const double norm = std::sqrt(dot(row, row));
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw Error(ErrorKind::kDegenerateRow, "row " + std::to_string(i) + " has zero or non-finite norm");
    }
    auto dst = out.row(i);
    for (std::size_t k = 0; k < row.size(); ++k) dst[k] = static_cast<T>(static_cast<double>(row[k]) / norm);
  }
  return out;
}

/// Entry (i, j) = a_i . b_j, accumulated in double.
template <class A, class B>
Matrix<double> similarity_matrix(const Matrix<A>& a, const Matrix<B>& b) {
  if (a.cols() != b.cols()) {
    throw Error(ErrorKind::kShape, "embedding dimensions differ: " + std::to_string(a.cols()) + " vs " +
                                       std::to_string(b.cols()));
  }
  Matrix<double> s(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) s(i, j) = dot(a.row(i), b.row(j));
  }
  return s;
}

enum class RowCheck {
  kRequireUnit,  ///< throw unless every row has unit norm (1e-3 tolerance)
  kNone,
};

struct InfoNceGrad {
  double loss = 0.0;
  Matrix<double> d_image;
  Matrix<double> d_text;
  double d_log_tau = 0.0;
};

namespace detail {

template <class T>
void check_batch(const Matrix<T>& zi, const Matrix<T>& zt, RowCheck check) {
  if (zi.rows() == 0 || zt.rows() == 0) throw Error(ErrorKind::kEmptyBatch, "InfoNCE needs at least one pair");
  if (zi.rows() != zt.rows() || zi.cols() != zt.cols()) {
    throw Error(ErrorKind::kShape, "image and text batches must have equal shape");
  }
  if (check == RowCheck::kRequireUnit) {
    for (const auto* m : {&zi, &zt}) {
      for (std::size_t i = 0; i < m->rows(); ++i) {
        const double n2 = dot(m->row(i), m->row(i));
        if (std::abs(std::sqrt(n2) - 1.0) > 1e-3) {
          throw Error(ErrorKind::kDegenerateRow, "row " + std::to_string(i) + " is not unit-norm; normalize first");
        }
      }
    }
  }
}

/// Row-wise softmax with max subtraction; also returns log-sum-exp per row.
inline void softmax_rows(const Matrix<double>& logits, Matrix<double>& prob, std::vector<double>& lse) {
  prob = Matrix<double>(logits.rows(), logits.cols());
  lse.assign(logits.rows(), 0.0);
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      prob(i, j) = std::exp(row[j] - mx);
      sum += prob(i, j);
    }
    for (std::size_t j = 0; j < row.size(); ++j) prob(i, j) /= sum;
    lse[i] = mx + std::log(sum);
  }
}

inline Matrix<double> transpose(const Matrix<double>& m) {
  Matrix<double> t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  }
  return t;
}

}  // namespace detail

template <class T>
double info_nce(const Matrix<T>& zi, const Matrix<T>& zt, Temperature temperature,
                RowCheck check = RowCheck::kRequireUnit) {
  detail::check_batch(zi, zt, check);
  const std::size_t n = zi.rows();
  const double inv_tau = 1.0 / temperature.tau();
  Matrix<double> logits = similarity_matrix(zi, zt);
  for (auto& v : logits.values()) v *= inv_tau;

  Matrix<double> p_i2t, p_t2i;
  std::vector<double> lse_i2t, lse_t2i;
  detail::softmax_rows(logits, p_i2t, lse_i2t);
  detail::softmax_rows(detail::transpose(logits), p_t2i, lse_t2i);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) loss += (lse_i2t[i] - logits(i, i)) + (lse_t2i[i] - logits(i, i));
  return loss / (2.0 * static_cast<double>(n));
}

/// Loss and its analytic gradients with respect to both embedding batches and
/// log tau. The embeddings are treated as free variables (no normalization
/// inside), so the gradients can be chained through any encoder.
template <class T>
InfoNceGrad info_nce_grad(const Matrix<T>& zi, const Matrix<T>& zt, Temperature temperature,
                          RowCheck check = RowCheck::kRequireUnit) {
  detail::check_batch(zi, zt, check);
  const std::size_t n = zi.rows();
  const std::size_t d = zi.cols();
  const double inv_tau = 1.0 / temperature.tau();
  Matrix<double> logits = similarity_matrix(zi, zt);
  for (auto& v : logits.values()) v *= inv_tau;

  Matrix<double> p_i2t, p_t2i;
  std::vector<double> lse_i2t, lse_t2i;
  detail::softmax_rows(logits, p_i2t, lse_i2t);
  detail::softmax_rows(detail::transpose(logits), p_t2i, lse_t2i);

  InfoNceGrad g;
  for (std::size_t i = 0; i < n; ++i) g.loss += (lse_i2t[i] - logits(i, i)) + (lse_t2i[i] - logits(i, i));
  g.loss /= 2.0 * static_cast<double>(n);

  // dL/dS_ij = [(P_ij - d_ij) + (Q_ji - d_ij)] / 2N, Q the column softmax.
  Matrix<double> dlogits(n, n);
  const double scale = 1.0 / (2.0 * static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double delta = i == j ? 1.0 : 0.0;
      dlogits(i, j) = scale * ((p_i2t(i, j) - delta) + (p_t2i(j, i) - delta));
    }
  }

  g.d_image = Matrix<double>(n, d, 0.0);
  g.d_text = Matrix<double>(n, d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double w = dlogits(i, j) * inv_tau;
      if (w == 0.0) continue;
      const auto ti = zt.row(j);
      const auto ii = zi.row(i);
      auto gi = g.d_image.row(i);
      auto gt = g.d_text.row(j);
      for (std::size_t k = 0; k < d; ++k) {
        gi[k] += w * static_cast<double>(ti[k]);
        gt[k] += w * static_cast<double>(ii[k]);
      }
    }
  }
  // S = sim * exp(-log_tau), so dS/dlog_tau = -S.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) g.d_log_tau -= dlogits(i, j) * logits(i, j);
  }
  return g;
}

}  // namespace rsalign
