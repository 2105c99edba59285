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

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "desclip/adapter.hpp"
#include "desclip/bundle.hpp"
#include "desclip/calibrate.hpp"
#include "desclip/checkpoint.hpp"
#include "desclip/config.hpp"

namespace desclip {

struct Prediction {
  /// Row of the calibrated set.
  std::size_t index = 0;
  ClassId class_id = 0;
  Vector<double> probabilities;
};

/// Softmax over cos(adapt(z), w') / tau for every seen class; argmax ties go to
/// the lowest class index. Description candidates play no part here.
template <typename Derived>
Prediction predict(const Eigen::MatrixBase<Derived>& z, const CalibratedSet& set, double tau,
                   const AdapterState& adapter);

struct SplitAccuracy {
  /// Percent of samples classified correctly (headline number).
  double micro = 0.0;
  /// Mean of per-class accuracies.
  double macro = 0.0;
  std::size_t count = 0;
  std::vector<ClassId> classes;
  std::vector<double> per_class;
};

/// Accuracy on the samples of `split` whose label is in `set`. Throws
/// std::invalid_argument when there are none.
SplitAccuracy evaluate_split(const SampleSplit& split, const CalibratedSet& set,
                             const AdapterState& adapter, double tau, unsigned threads = 1);

/// Unshifted class-text head for the control classes.
CalibratedSet control_head(const EmbeddingBundle& bundle);

struct ClassDelta {
  ClassId cls = 0;
  double before = 0.0;
  double after = 0.0;
  double delta = 0.0;
};

struct MetricsReport {
  double last = 0.0;
  double last_macro = 0.0;
  double avg = 0.0;
  std::vector<double> per_task_curve;
  double zero_shot_last = 0.0;
  std::vector<double> zero_shot_curve;
  std::optional<double> control;
  std::optional<double> control_zero_shot;
  /// Number of tasks treated as the first half: ceil(T / 2).
  std::size_t half_tasks = 0;
  /// Half-sequence model minus zero-shot, per first-half class.
  std::optional<std::vector<ClassDelta>> delta_zero_shot;
  /// Full-sequence model minus half-sequence model, per first-half class.
  std::optional<std::vector<ClassDelta>> delta_transfer;
  std::vector<std::string> warnings;
};

/// Average incremental accuracy of an after-each-task curve.
double mean_accuracy(std::span<const double> curve);

double mean_delta(const std::vector<ClassDelta>& deltas);

/// All headline metrics for a trained sequence (`checkpoints[t]` is the state
/// after task t).
MetricsReport compute_report(std::span<const TaskCheckpoint> checkpoints,
                             const EmbeddingBundle& bundle, const RunConfig& config,
                             unsigned threads = 1);

/// The untrained model for a bundle: zero shifts registered through every task
/// and the adapter disabled.
TaskCheckpoint zero_shot_checkpoint(const EmbeddingBundle& bundle, const RunConfig& config,
                                    std::size_t through_task);

nlohmann::json to_json(const MetricsReport& report);
/// Writes report.json and curve.csv (task,accuracy).
void write_report(const MetricsReport& report, const std::filesystem::path& dir);

// ---------------------------------------------------------------------------

template <typename Derived>
Prediction predict(const Eigen::MatrixBase<Derived>& z, const CalibratedSet& set, double tau,
                   const AdapterState& adapter) {
  if (set.size() == 0) {
    throw std::invalid_argument("predict: empty calibrated set");
  }
  const Vector<double> x = adapt(z.template cast<double>(), adapter);
  const double x_norm = x.norm();
  if (x_norm < kMinNorm) {
    throw std::domain_error("predict: zero-norm feature");
  }
  Prediction out;
  Vector<double> logits(static_cast<Eigen::Index>(set.size()));
  for (Eigen::Index k = 0; k < logits.size(); ++k) {
    const auto w = set.embeddings.row(k);
    logits[k] = x.dot(w.transpose()) / (x_norm * w.norm()) / tau;
  }
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < logits.size(); ++k) {
    if (logits[k] > logits[best]) best = k;
  }
  out.index = static_cast<std::size_t>(best);
  out.class_id = set.classes[out.index];
  const Vector<double> e = (logits.array() - logits[best]).exp().matrix();
  out.probabilities = e / e.sum();
  return out;
}

}  // namespace desclip
