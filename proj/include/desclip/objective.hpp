// Copyright 2026 The desclip Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "desclip/adapter.hpp"
#include "desclip/bundle.hpp"
#include "desclip/calibrate.hpp"
#include "desclip/config.hpp"
#include "desclip/core.hpp"
#include "desclip/filter.hpp"

namespace desclip {

// Gradients below are closed forms. The only nonlinearity shared by all three
// losses is row normalisation n = v/|v|, whose backward map is
//   dL/dv = (g - n <n, g>) / |v|   for upstream g = dL/dn.

template <typename DerivedV, typename DerivedG>
Vector<typename DerivedV::Scalar> normalize_backward(const Eigen::MatrixBase<DerivedV>& v,
                                                     const Eigen::MatrixBase<DerivedG>& g) {
  using Scalar = typename DerivedV::Scalar;
  const Scalar norm = v.norm();
  const Vector<Scalar> n = v.reshaped() / norm;
  const Vector<Scalar> up = g.reshaped();
  return (up - n * n.dot(up)) / norm;
}

template <typename Derived>
RowMatrix<typename Derived::Scalar> normalize_rows(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  RowMatrix<Scalar> out = m;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const Scalar norm = out.row(r).norm();
    if (norm < Scalar(kMinNorm)) {
      throw std::domain_error("zero-norm row " + std::to_string(r));
    }
    out.row(r) /= norm;
  }
  return out;
}

template <typename Scalar>
struct LossWithGradient {
  Scalar loss{};
  /// dL/dz, one row per input row.
  RowMatrix<Scalar> grad;
};

/// Contrastive loss pairing each feature with its own filtered description
/// embedding against the other valid samples' pairs:
///   mean_i -log softmax_j(cos(z_i, h_j) / tau_tilde)[i].
/// `hs` are frozen text embeddings; only `zs` receives gradient.
template <typename DerivedZ, typename DerivedH>
LossWithGradient<typename DerivedZ::Scalar> instance_matching_loss(
    const Eigen::MatrixBase<DerivedZ>& zs, const Eigen::MatrixBase<DerivedH>& hs,
    typename DerivedZ::Scalar tau_tilde) {
  using Scalar = typename DerivedZ::Scalar;
  const Eigen::Index m = zs.rows();
  if (m == 0) {
    throw std::logic_error("instance_matching_loss: empty valid set");
  }
  if (hs.rows() != m || hs.cols() != zs.cols()) {
    throw std::invalid_argument("instance_matching_loss: features and pairs differ in shape");
  }
  const RowMatrix<Scalar> zn = normalize_rows(zs);
  const RowMatrix<Scalar> hn = normalize_rows(hs);
  const RowMatrix<Scalar> logits = (zn * hn.transpose()) / tau_tilde;

  RowMatrix<Scalar> coef(m, m);
  Scalar loss = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const Scalar top = logits.row(i).maxCoeff();
    const RowVector<Scalar> shifted = (logits.row(i).array() - top).exp().matrix();
    const Scalar total = shifted.sum();
    loss += top + std::log(total) - logits(i, i);
    coef.row(i) = shifted / total;
    coef(i, i) -= Scalar(1);
  }
  coef /= Scalar(m);

  const RowMatrix<Scalar> grad_normed = (coef * hn) / tau_tilde;
  LossWithGradient<Scalar> out{loss / Scalar(m), RowMatrix<Scalar>(m, zs.cols())};
  for (Eigen::Index i = 0; i < m; ++i) {
    out.grad.row(i) = normalize_backward(zs.row(i), grad_normed.row(i)).transpose();
  }
  return out;
}

template <typename Scalar>
struct TextAlignmentResult {
  Scalar loss{};
  /// dL/dw' for the calibrated embedding.
  Vector<Scalar> grad_calibrated;
  /// dL/ds = shift_scale * dL/dw'.
  Vector<Scalar> grad_shift;
};

/// Per-sample alignment of a calibrated class embedding with the sample's kept
/// description embeddings (one per row of `kept`):
///   mean_u beta * |n(w') - n(u)| + 1 - <n(w'), n(u)>.
/// `shift_scale` is d w'/d s (alpha, or 0 when the shift is unused).
template <typename DerivedW, typename DerivedU>
TextAlignmentResult<typename DerivedW::Scalar> text_alignment_loss(
    const Eigen::MatrixBase<DerivedW>& w_cal, const Eigen::MatrixBase<DerivedU>& kept,
    typename DerivedW::Scalar beta, typename DerivedW::Scalar shift_scale) {
  using Scalar = typename DerivedW::Scalar;
  if (kept.rows() == 0) {
    throw std::logic_error("text_alignment_loss: no kept candidates");
  }
  const Scalar w_norm = w_cal.norm();
  if (w_norm < Scalar(kMinNorm)) {
    throw std::domain_error("text_alignment_loss: zero-norm calibrated embedding");
  }
  const Vector<Scalar> wn = w_cal.reshaped() / w_norm;
  const RowMatrix<Scalar> un = normalize_rows(kept);

  Scalar loss = 0;
  Vector<Scalar> grad_wn = Vector<Scalar>::Zero(wn.size());
  for (Eigen::Index k = 0; k < un.rows(); ++k) {
    const Vector<Scalar> u = un.row(k).transpose();
    const Vector<Scalar> diff = wn - u;
    const Scalar dist = diff.norm();
    loss += beta * dist + Scalar(1) - wn.dot(u);
    // The distance term is not differentiable at coincidence; take the zero subgradient.
    if (dist > Scalar(0)) {
      grad_wn += (beta / dist) * diff;
    }
    grad_wn -= u;
  }
  const Scalar count = Scalar(un.rows());
  TextAlignmentResult<Scalar> out;
  out.loss = loss / count;
  out.grad_calibrated = normalize_backward(w_cal, grad_wn / count);
  out.grad_shift = shift_scale * out.grad_calibrated;
  return out;
}

template <typename Scalar>
struct RicResult {
  Scalar loss{};
  RowMatrix<Scalar> grad_z;
  /// dL/dw' per current-task class, one row each.
  RowMatrix<Scalar> grad_calibrated;
  RowMatrix<Scalar> grad_shift;
};

/// Cross-entropy over the current task's calibrated class embeddings, averaged
/// over the whole batch:
///   mean_i -log softmax_k(cos(z_i, w'_k) / tau)[y_i].
/// `labels` index rows of `w_cal`.
template <typename DerivedZ, typename DerivedW>
RicResult<typename DerivedZ::Scalar> ric_loss(const Eigen::MatrixBase<DerivedZ>& zs,
                                              std::span<const std::size_t> labels,
                                              const Eigen::MatrixBase<DerivedW>& w_cal,
                                              typename DerivedZ::Scalar tau,
                                              typename DerivedZ::Scalar shift_scale) {
  using Scalar = typename DerivedZ::Scalar;
  const Eigen::Index batch = zs.rows();
  const Eigen::Index num_classes = w_cal.rows();
  if (static_cast<std::size_t>(batch) != labels.size()) {
    throw std::invalid_argument("ric_loss: feature and label counts differ");
  }
  if (batch == 0 || num_classes == 0) {
    throw std::invalid_argument("ric_loss: empty batch or class set");
  }
  for (std::size_t y : labels) {
    if (y >= static_cast<std::size_t>(num_classes)) {
      throw std::invalid_argument("ric_loss: label " + std::to_string(y) + " outside the current task");
    }
  }
  const RowMatrix<Scalar> zn = normalize_rows(zs);
  const RowMatrix<Scalar> wn = normalize_rows(w_cal);
  const RowMatrix<Scalar> logits = (zn * wn.transpose()) / tau;

  RowMatrix<Scalar> coef(batch, num_classes);
  Scalar loss = 0;
  for (Eigen::Index i = 0; i < batch; ++i) {
    const auto y = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)]);
    const Scalar top = logits.row(i).maxCoeff();
    const RowVector<Scalar> shifted = (logits.row(i).array() - top).exp().matrix();
    const Scalar total = shifted.sum();
    loss += top + std::log(total) - logits(i, y);
    coef.row(i) = shifted / total;
    coef(i, y) -= Scalar(1);
  }
  coef /= Scalar(batch) * tau;

  const RowMatrix<Scalar> grad_zn = coef * wn;
  const RowMatrix<Scalar> grad_wn = coef.transpose() * zn;

  RicResult<Scalar> out;
  out.loss = loss / Scalar(batch);
  out.grad_z.resize(batch, zs.cols());
  for (Eigen::Index i = 0; i < batch; ++i) {
    out.grad_z.row(i) = normalize_backward(zs.row(i), grad_zn.row(i)).transpose();
  }
  out.grad_calibrated.resize(num_classes, w_cal.cols());
  for (Eigen::Index k = 0; k < num_classes; ++k) {
    out.grad_calibrated.row(k) = normalize_backward(w_cal.row(k), grad_wn.row(k)).transpose();
  }
  out.grad_shift = shift_scale * out.grad_calibrated;
  return out;
}

struct LossBreakdown {
  double l_im = 0.0;
  double l_ta = 0.0;
  double l_ric = 0.0;
  double total = 0.0;
  std::size_t valid_count = 0;
};

/// lambda_im * l_im + lambda_ta * l_ta + lambda_ric * l_ric.
double weighted_total(double l_im, double l_ta, double l_ric, const RunConfig& config);

struct Batch {
  /// Frozen visual embeddings, one per row.
  RowMatrix<double> inputs;
  std::vector<ClassId> labels;
};

struct ObjectiveResult {
  LossBreakdown breakdown;
  /// dL/d(adapted feature), one row per batch sample.
  RowMatrix<double> grad_outputs;
  /// Classes of the current task, in task order; rows of `grad_shifts`.
  std::vector<ClassId> shift_classes;
  RowMatrix<double> grad_shifts;
};

/// Weighted sum of instance matching, text alignment and intra-task
/// classification for one batch of task `task`. `evidence` must come from
/// filtering the adapted batch features. Gradients exist only for the adapter
/// outputs and the current task's shifts.
ObjectiveResult total_loss(const Batch& batch, const BatchEvidence<double>& evidence,
                           const ShiftBank& bank, const AdapterState& adapter,
                           const EmbeddingBundle& bundle, std::size_t task,
                           const RunConfig& config);

}  // namespace desclip
