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

#include <functional>
#include <vector>

#include "desclip/adapter.hpp"
#include "desclip/bundle.hpp"
#include "desclip/calibrate.hpp"
#include "desclip/checkpoint.hpp"
#include "desclip/config.hpp"

namespace desclip {

/// base * (1 + cos(pi * step / total)) / 2; restarts every task.
double cosine_lr(double base, std::size_t step, std::size_t total_steps);

/// Trains one task. The task's classes must already be registered (learnable)
/// in `bank`; earlier tasks' shifts stay frozen.
TaskCheckpoint train_task(const EmbeddingBundle& bundle, std::size_t task_index,
                          AdapterState adapter, ShiftBank bank, const RunConfig& config);

struct SequenceResult {
  std::vector<TaskCheckpoint> checkpoints;
  /// Test accuracy over all seen classes after each task.
  std::vector<double> per_task_accuracy;
};

using TaskCallback = std::function<void(const TaskCheckpoint&, double accuracy)>;

/// Trains tasks 1..T in order, evaluating after each one.
SequenceResult train_sequence(const EmbeddingBundle& bundle, const RunConfig& config,
                              unsigned threads = 1, const TaskCallback& on_task = {});

}  // namespace desclip
