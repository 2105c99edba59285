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
#include <vector>

#include "desclip/adapter.hpp"
#include "desclip/calibrate.hpp"

namespace desclip {

struct EpochLoss {
  std::size_t epoch = 0;
  double l_im = 0.0;
  double l_ta = 0.0;
  double l_ric = 0.0;
  double total = 0.0;
};

/// Model state at the end of one task plus that task's loss trace.
struct TaskCheckpoint {
  std::size_t task_index = 0;
  AdapterState adapter;
  ShiftBank bank;
  std::vector<EpochLoss> trace;
};

/// Directory layout: checkpoint.json, adapter.{json,bin}, shifts.{json,bin},
/// trace.csv (epoch,l_im,l_ta,l_ric,total).
void save_checkpoint(const TaskCheckpoint& checkpoint, const std::filesystem::path& dir);
TaskCheckpoint load_checkpoint(const std::filesystem::path& dir);

/// Name of the per-task subdirectory inside a run directory (1-based).
std::string task_dir_name(std::size_t task_index);
/// Loads task_01, task_02, ... until the first missing directory.
std::vector<TaskCheckpoint> load_run(const std::filesystem::path& run_dir);

}  // namespace desclip
