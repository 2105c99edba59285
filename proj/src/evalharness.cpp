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

#include "desclip/evalharness.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "desclip/binary_io.hpp"
#include "desclip/parallel.hpp"

namespace desclip {

SplitAccuracy evaluate_split(const SampleSplit& split, const CalibratedSet& set,
                             const AdapterState& adapter, double tau, unsigned threads) {
  if (set.size() == 0) {
    throw std::invalid_argument("evaluate_split: empty calibrated set");
  }
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (std::binary_search(set.classes.begin(), set.classes.end(), split.y[i])) {
      rows.push_back(i);
    }
  }
  if (rows.empty()) {
    throw std::invalid_argument("evaluate_split: no samples of the evaluated classes");
  }

  std::vector<ClassId> predicted(rows.size());
  parallel_for(rows.size(), threads, [&](std::size_t r) {
    predicted[r] = predict(split.x.row(static_cast<Eigen::Index>(rows[r])), set, tau, adapter).class_id;
  });

  SplitAccuracy out;
  out.classes = set.classes;
  std::vector<std::size_t> hits(set.size(), 0);
  std::vector<std::size_t> totals(set.size(), 0);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const ClassId truth = split.y[rows[r]];
    const auto k = static_cast<std::size_t>(
        std::lower_bound(set.classes.begin(), set.classes.end(), truth) - set.classes.begin());
    ++totals[k];
    if (predicted[r] == truth) {
      ++hits[k];
      ++correct;
    }
  }
  out.count = rows.size();
  out.micro = 100.0 * static_cast<double>(correct) / static_cast<double>(rows.size());
  double macro_sum = 0.0;
  std::size_t present = 0;
  out.per_class.resize(set.size(), 0.0);
  for (std::size_t k = 0; k < set.size(); ++k) {
    if (totals[k] == 0) continue;
    out.per_class[k] = 100.0 * static_cast<double>(hits[k]) / static_cast<double>(totals[k]);
    macro_sum += out.per_class[k];
    ++present;
  }
  out.macro = macro_sum / static_cast<double>(present);
  return out;
}

CalibratedSet control_head(const EmbeddingBundle& bundle) {
  CalibratedSet head;
  head.classes.resize(bundle.control.class_names.size());
  std::iota(head.classes.begin(), head.classes.end(), ClassId{0});
  head.embeddings = bundle.control.class_text.cast<double>();
  return head;
}

TaskCheckpoint zero_shot_checkpoint(const EmbeddingBundle& bundle, const RunConfig& config,
                                    std::size_t through_task) {
  TaskCheckpoint zs;
  zs.task_index = through_task == 0 ? 0 : through_task - 1;
  zs.adapter = AdapterState::identity(bundle.dim, false, config.adapter_scale);
  zs.bank = ShiftBank(bundle.num_classes(), bundle.dim, config.alpha, config.calibration_mode);
  for (std::size_t t = 0; t < through_task; ++t) {
    zs.bank.begin_task(t, bundle.tasks[t]);
  }
  return zs;
}

double mean_accuracy(std::span<const double> curve) {
  if (curve.empty()) {
    throw std::invalid_argument("mean_accuracy: empty curve");
  }
  return std::accumulate(curve.begin(), curve.end(), 0.0) / static_cast<double>(curve.size());
}

double mean_delta(const std::vector<ClassDelta>& deltas) {
  if (deltas.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& d : deltas) sum += d.delta;
  return sum / static_cast<double>(deltas.size());
}

namespace {

// Per-class accuracy of `model` (head through `through_task`) on the test
// samples of `classes`.
std::vector<double> class_accuracies(const TaskCheckpoint& model, const EmbeddingBundle& bundle,
                                     std::size_t through_task, std::span<const ClassId> classes,
                                     double tau, unsigned threads) {
  const auto head = calibrated_set(model.bank, bundle, through_task);
  const auto acc = evaluate_split(bundle.test, head, model.adapter, tau, threads);
  std::vector<double> out;
  for (ClassId c : classes) {
    const auto k = static_cast<std::size_t>(
        std::lower_bound(head.classes.begin(), head.classes.end(), c) - head.classes.begin());
    out.push_back(acc.per_class.at(k));
  }
  return out;
}

std::vector<ClassDelta> deltas(std::span<const ClassId> classes, const std::vector<double>& before,
                               const std::vector<double>& after) {
  std::vector<ClassDelta> out;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    out.push_back({classes[i], before[i], after[i], after[i] - before[i]});
  }
  return out;
}

nlohmann::json deltas_json(const std::vector<ClassDelta>& ds) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& d : ds) {
    arr.push_back({{"class", d.cls}, {"before", d.before}, {"after", d.after}, {"delta", d.delta}});
  }
  return {{"mean", mean_delta(ds)}, {"per_class", arr}};
}

}  // namespace

MetricsReport compute_report(std::span<const TaskCheckpoint> checkpoints, const EmbeddingBundle& bundle,
                             const RunConfig& config, unsigned threads) {
  const std::size_t num_tasks = bundle.num_tasks();
  if (checkpoints.empty()) {
    throw std::invalid_argument("compute_report: no checkpoints");
  }
  if (checkpoints.size() > num_tasks) {
    throw std::invalid_argument("compute_report: more checkpoints than tasks");
  }
  MetricsReport report;
  const double tau = config.tau;

  for (std::size_t t = 0; t < checkpoints.size(); ++t) {
    const auto& cp = checkpoints[t];
    const auto head = calibrated_set(cp.bank, bundle, t + 1);
    const auto acc = evaluate_split(bundle.test, head, cp.adapter, tau, threads);
    report.per_task_curve.push_back(acc.micro);
    if (t + 1 == checkpoints.size()) {
      report.last = acc.micro;
      report.last_macro = acc.macro;
    }
    const auto zs = zero_shot_checkpoint(bundle, config, t + 1);
    report.zero_shot_curve.push_back(
        evaluate_split(bundle.test, calibrated_set(zs.bank, bundle, t + 1), zs.adapter, tau, threads).micro);
  }
  report.zero_shot_last = report.zero_shot_curve.back();
  report.avg = mean_accuracy(report.per_task_curve);
  if (checkpoints.size() < num_tasks) {
    report.warnings.push_back("run covers " + std::to_string(checkpoints.size()) + " of " +
                              std::to_string(num_tasks) + " tasks; last is taken after task " +
                              std::to_string(checkpoints.size()));
  }

  if (!bundle.control.empty()) {
    const auto head = control_head(bundle);
    report.control = evaluate_split(bundle.control.samples, head, checkpoints.back().adapter, tau, threads).micro;
    const AdapterState off = AdapterState::identity(bundle.dim, false);
    report.control_zero_shot = evaluate_split(bundle.control.samples, head, off, tau, threads).micro;
  }

  report.half_tasks = (num_tasks + 1) / 2;
  const auto first_half = bundle.seen_classes(report.half_tasks);
  if (checkpoints.size() >= report.half_tasks) {
    const auto& half = checkpoints[report.half_tasks - 1];
    const auto zs = zero_shot_checkpoint(bundle, config, report.half_tasks);
    const auto before = class_accuracies(zs, bundle, report.half_tasks, first_half, tau, threads);
    const auto after = class_accuracies(half, bundle, report.half_tasks, first_half, tau, threads);
    report.delta_zero_shot = deltas(first_half, before, after);
    if (checkpoints.size() == num_tasks) {
      const auto full = class_accuracies(checkpoints.back(), bundle, num_tasks, first_half, tau, threads);
      report.delta_transfer = deltas(first_half, after, full);
    } else {
      report.warnings.push_back("transfer delta omitted: final checkpoint missing");
    }
  } else {
    report.warnings.push_back("delta metrics omitted: half-sequence checkpoint missing");
  }
  return report;
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["last"] = r.last;
  j["last_macro"] = r.last_macro;
  j["accuracy_averaging"] = "micro";
  j["avg"] = r.avg;
  j["per_task_curve"] = r.per_task_curve;
  j["zero_shot_last"] = r.zero_shot_last;
  j["zero_shot_curve"] = r.zero_shot_curve;
  j["control"] = r.control ? nlohmann::json(*r.control) : nlohmann::json(nullptr);
  j["control_zero_shot"] = r.control_zero_shot ? nlohmann::json(*r.control_zero_shot) : nlohmann::json(nullptr);
  j["half_tasks"] = r.half_tasks;
  j["delta_zero_shot"] = r.delta_zero_shot ? deltas_json(*r.delta_zero_shot) : nlohmann::json(nullptr);
  j["delta_transfer"] = r.delta_transfer ? deltas_json(*r.delta_transfer) : nlohmann::json(nullptr);
  j["warnings"] = r.warnings;
  return j;
}

void write_report(const MetricsReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  io::write_json(dir / "report.json", to_json(report));
  std::ostringstream csv;
  csv << "task,accuracy\n";
  char line[64];
  for (std::size_t t = 0; t < report.per_task_curve.size(); ++t) {
    std::snprintf(line, sizeof(line), "%zu,%.17g\n", t + 1, report.per_task_curve[t]);
    csv << line;
  }
  io::write_text(dir / "curve.csv", csv.str());
}

}  // namespace desclip
