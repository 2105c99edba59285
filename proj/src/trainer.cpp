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

#include "desclip/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "desclip/binary_io.hpp"
#include "desclip/evalharness.hpp"
#include "desclip/filter.hpp"
#include "desclip/objective.hpp"

namespace desclip {

namespace fs = std::filesystem;

double cosine_lr(double base, std::size_t step, std::size_t total_steps) {
  if (total_steps == 0) {
    return base;
  }
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

TaskCheckpoint train_task(const EmbeddingBundle& bundle, std::size_t task_index,
                          AdapterState adapter, ShiftBank bank, const RunConfig& config) {
  config.check();
  const auto& classes = bundle.tasks.at(task_index);
  for (ClassId c : classes) {
    if (bank.status(c) != ShiftStatus::kLearnable || bank.task_of(c) != task_index) {
      throw std::invalid_argument("train_task: task " + std::to_string(task_index + 1) +
                                  " is not the registered, learnable task");
    }
  }
  std::vector<std::size_t> order = bundle.task_train_indices(task_index);
  if (order.empty()) {
    throw std::runtime_error("train_task: task " + std::to_string(task_index + 1) +
                             " has no training samples");
  }

  TaskCheckpoint out;
  out.task_index = task_index;
  const std::size_t n = order.size();
  const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = config.epochs * steps_per_epoch;
  const FilterParams filter = config.filter_params();
  std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                    static_cast<std::uint32_t>(task_index)};
  std::mt19937_64 rng(seq);

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochLoss sums{epoch + 1};
    for (std::size_t start = 0; start < n; start += config.batch_size, ++step) {
      const std::size_t count = std::min(config.batch_size, n - start);
      Batch batch;
      batch.inputs.resize(static_cast<Eigen::Index>(count), bundle.dim);
      batch.labels.resize(count);
      for (std::size_t r = 0; r < count; ++r) {
        const std::size_t src = order[start + r];
        batch.inputs.row(static_cast<Eigen::Index>(r)) =
            bundle.train.x.row(static_cast<Eigen::Index>(src)).cast<double>();
        batch.labels[r] = bundle.train.y[src];
      }
      const RowMatrix<double> z = adapt_rows(batch.inputs, adapter);
      const auto evidence = filter_batch(z, batch.labels, bundle, task_index, filter);
      const auto result = total_loss(batch, evidence, bank, adapter, bundle, task_index, config);

      const double lr_adapter = cosine_lr(config.lr_adapter, step, total_steps);
      const double lr_shift = cosine_lr(config.lr_shift, step, total_steps);
      if (adapter.enabled) {
        adapter = apply_gradient(adapter, result.grad_outputs, batch.inputs, lr_adapter);
      }
      for (std::size_t k = 0; k < result.shift_classes.size(); ++k) {
        bank.apply_gradient(result.shift_classes[k],
                            result.grad_shifts.row(static_cast<Eigen::Index>(k)).transpose(), lr_shift);
      }

      sums.l_im += result.breakdown.l_im;
      sums.l_ta += result.breakdown.l_ta;
      sums.l_ric += result.breakdown.l_ric;
      sums.total += result.breakdown.total;
    }
    const double batches = static_cast<double>(steps_per_epoch);
    out.trace.push_back({epoch + 1, sums.l_im / batches, sums.l_ta / batches, sums.l_ric / batches,
                         sums.total / batches});
  }
  out.adapter = std::move(adapter);
  out.bank = std::move(bank);
  return out;
}

SequenceResult train_sequence(const EmbeddingBundle& bundle, const RunConfig& config,
                              unsigned threads, const TaskCallback& on_task) {
  config.check();
  const EmbeddingBundle few_shot =
      config.few_shot_k ? subsample_few_shot(bundle, *config.few_shot_k, config.seed) : EmbeddingBundle{};
  const EmbeddingBundle& data = config.few_shot_k ? few_shot : bundle;

  AdapterState adapter = AdapterState::identity(bundle.dim, config.adapter_enabled, config.adapter_scale);
  ShiftBank bank(bundle.num_classes(), bundle.dim, config.alpha, config.calibration_mode);

  SequenceResult out;
  for (std::size_t t = 0; t < bundle.num_tasks(); ++t) {
    bank.begin_task(t, bundle.tasks[t]);
    auto checkpoint = train_task(data, t, std::move(adapter), std::move(bank), config);
    adapter = checkpoint.adapter;
    bank = checkpoint.bank;
    const double accuracy =
        evaluate_split(bundle.test, calibrated_set(bank, bundle, t + 1), adapter, config.tau, threads).micro;
    out.per_task_accuracy.push_back(accuracy);
    if (on_task) {
      on_task(checkpoint, accuracy);
    }
    out.checkpoints.push_back(std::move(checkpoint));
  }
  return out;
}

std::string task_dir_name(std::size_t task_index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "task_%02zu", task_index + 1);
  return buf;
}

void save_checkpoint(const TaskCheckpoint& checkpoint, const fs::path& dir) {
  fs::create_directories(dir);
  save_adapter(checkpoint.adapter, dir);
  save_shift_bank(checkpoint.bank, dir);
  io::write_json(dir / "checkpoint.json",
                 {{"task_index", checkpoint.task_index + 1}, {"epochs", checkpoint.trace.size()}});
  std::ostringstream csv;
  csv << "epoch,l_im,l_ta,l_ric,total\n";
  char line[256];
  for (const auto& e : checkpoint.trace) {
    std::snprintf(line, sizeof(line), "%zu,%.17g,%.17g,%.17g,%.17g\n", e.epoch, e.l_im, e.l_ta, e.l_ric,
                  e.total);
    csv << line;
  }
  io::write_text(dir / "trace.csv", csv.str());
}

TaskCheckpoint load_checkpoint(const fs::path& dir) {
  TaskCheckpoint checkpoint;
  const auto meta = io::read_json(dir / "checkpoint.json");
  const auto task = meta.at("task_index").get<std::size_t>();
  if (task == 0) {
    throw io::IoError(dir.string() + ": task_index is 1-based");
  }
  checkpoint.task_index = task - 1;
  checkpoint.adapter = load_adapter(dir);
  checkpoint.bank = load_shift_bank(dir);

  std::ifstream csv(dir / "trace.csv");
  if (!csv) {
    throw io::IoError("cannot open " + (dir / "trace.csv").string());
  }
  std::string line;
  std::getline(csv, line);
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    EpochLoss e;
    if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%lf", &e.epoch, &e.l_im, &e.l_ta, &e.l_ric, &e.total) != 5) {
      throw io::IoError("malformed trace.csv line: " + line);
    }
    checkpoint.trace.push_back(e);
  }
  return checkpoint;
}

std::vector<TaskCheckpoint> load_run(const fs::path& run_dir) {
  std::vector<TaskCheckpoint> out;
  for (std::size_t t = 0;; ++t) {
    const fs::path dir = run_dir / task_dir_name(t);
    if (!fs::exists(dir)) break;
    out.push_back(load_checkpoint(dir));
    if (out.back().task_index != t) {
      throw io::IoError(dir.string() + " holds the checkpoint of task " +
                        std::to_string(out.back().task_index + 1));
    }
  }
  return out;
}

}  // namespace desclip
