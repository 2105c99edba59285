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

#include "desclip/objective.hpp"

#include <algorithm>

namespace desclip {

double weighted_total(double l_im, double l_ta, double l_ric, const RunConfig& config) {
  return config.lambda_im * l_im + config.lambda_ta * l_ta + config.lambda_ric * l_ric;
}

ObjectiveResult total_loss(const Batch& batch, const BatchEvidence<double>& evidence,
                           const ShiftBank& bank, const AdapterState& adapter,
                           const EmbeddingBundle& bundle, std::size_t task,
                           const RunConfig& config) {
  const std::size_t b = batch.labels.size();
  if (static_cast<std::size_t>(batch.inputs.rows()) != b || evidence.samples.size() != b) {
    throw std::invalid_argument("total_loss: batch, labels and evidence sizes differ");
  }
  const auto& classes = bundle.tasks.at(task);
  const Eigen::Index dim = bundle.dim;
  const Temperatures temps = config.temperatures();
  const double shift_scale = shift_jacobian_scale(bank.alpha(), bank.mode());

  auto local_index = [&](ClassId c) {
    const auto it = std::find(classes.begin(), classes.end(), c);
    if (it == classes.end()) {
      throw std::invalid_argument("total_loss: label " + std::to_string(c) + " outside task " +
                                  std::to_string(task + 1));
    }
    return static_cast<std::size_t>(it - classes.begin());
  };

  const RowMatrix<double> z = adapt_rows(batch.inputs, adapter);
  RowMatrix<double> w_cal(static_cast<Eigen::Index>(classes.size()), dim);
  for (std::size_t k = 0; k < classes.size(); ++k) {
    w_cal.row(static_cast<Eigen::Index>(k)) = bank.calibrated(classes[k], bundle).transpose();
  }
  std::vector<std::size_t> local(b);
  for (std::size_t i = 0; i < b; ++i) {
    local[i] = local_index(batch.labels[i]);
  }

  ObjectiveResult out;
  out.shift_classes = classes;
  auto& parts = out.breakdown;

  const auto ric = ric_loss(z, local, w_cal, temps.tau, shift_scale);
  parts.l_ric = ric.loss;
  out.grad_outputs = config.lambda_ric * ric.grad_z;
  out.grad_shifts = config.lambda_ric * ric.grad_shift;

  const auto& valid = evidence.valid;
  parts.valid_count = valid.size();
  if (!valid.empty()) {
    const auto m = static_cast<Eigen::Index>(valid.size());
    RowMatrix<double> zp(m, dim);
    RowMatrix<double> hp(m, dim);
    for (Eigen::Index r = 0; r < m; ++r) {
      const std::size_t i = valid[static_cast<std::size_t>(r)];
      const auto& cls = bundle.classes[batch.labels[i]];
      zp.row(r) = z.row(static_cast<Eigen::Index>(i));
      hp.row(r) = cls.candidates.at(*evidence.samples[i].paired_index()).embedding.cast<double>().transpose();
    }
    const auto im = instance_matching_loss(zp, hp, temps.tau_tilde);
    parts.l_im = im.loss;
    for (Eigen::Index r = 0; r < m; ++r) {
      out.grad_outputs.row(static_cast<Eigen::Index>(valid[static_cast<std::size_t>(r)])) +=
          config.lambda_im * im.grad.row(r);
    }

    for (std::size_t i : valid) {
      const auto& kept = evidence.samples[i].kept;
      const auto& cls = bundle.classes[batch.labels[i]];
      RowMatrix<double> u(static_cast<Eigen::Index>(kept.size()), dim);
      for (std::size_t k = 0; k < kept.size(); ++k) {
        u.row(static_cast<Eigen::Index>(k)) = cls.candidates.at(kept[k].index).embedding.cast<double>().transpose();
      }
      const auto row = static_cast<Eigen::Index>(local[i]);
      const auto ta = text_alignment_loss(w_cal.row(row), u, config.beta, shift_scale);
      parts.l_ta += ta.loss;
      out.grad_shifts.row(row) += config.lambda_ta * ta.grad_shift.transpose();
    }
  }

  parts.total = weighted_total(parts.l_im, parts.l_ta, parts.l_ric, config);
  return out;
}

}  // namespace desclip
