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
#include <stdexcept>
#include <string>
#include <vector>

#include "desclip/bundle.hpp"
#include "desclip/core.hpp"

namespace desclip {

/// How the shift weight combines with the rudimentary text embedding.
enum class CalibrationMode {
  kRaw,                // w' = w (shift ignored)
  kShiftOnRaw,         // w' = w + alpha * s
  kShiftOnNormalized,  // w' = w / |w| + alpha * s
};

std::string to_string(CalibrationMode mode);
CalibrationMode parse_calibration_mode(const std::string& text);

/// Shift transformation producing the calibrated class-text embedding.
template <typename DerivedW, typename DerivedS>
Vector<typename DerivedW::Scalar> calibrate_embedding(
    const Eigen::MatrixBase<DerivedW>& w, const Eigen::MatrixBase<DerivedS>& s,
    typename DerivedW::Scalar alpha, CalibrationMode mode = CalibrationMode::kShiftOnNormalized) {
  using Scalar = typename DerivedW::Scalar;
  if (w.size() != s.size()) {
    throw std::invalid_argument("calibrate_embedding: w and s lengths differ");
  }
  const Scalar norm = w.norm();
  if (norm < Scalar(kMinNorm)) {
    throw std::domain_error("calibrate_embedding: zero-norm text embedding");
  }
  switch (mode) {
    case CalibrationMode::kRaw:
      return w.reshaped();
    case CalibrationMode::kShiftOnRaw:
      return w.reshaped() + alpha * s.reshaped();
    case CalibrationMode::kShiftOnNormalized:
    default:
      return w.reshaped() / norm + alpha * s.reshaped();
  }
}

/// d w' / d s is alpha times the identity in both shift modes and zero in raw mode.
inline double shift_jacobian_scale(double alpha, CalibrationMode mode) {
  return mode == CalibrationMode::kRaw ? 0.0 : alpha;
}

enum class ShiftStatus { kUnregistered, kLearnable, kFrozen };

/// Per-class shift weights. Only the classes of the most recently begun task
/// are learnable; every earlier shift is frozen and never written again.
class ShiftBank {
 public:
  ShiftBank() = default;
  ShiftBank(std::size_t num_classes, Eigen::Index dim, double alpha,
            CalibrationMode mode = CalibrationMode::kShiftOnNormalized);

  /// Freezes all learnable shifts, then registers `classes` with zero shifts.
  /// Throws std::invalid_argument if a class was registered before.
  void begin_task(std::size_t task_index, std::span<const ClassId> classes);

  void apply_gradient(ClassId cls, const Vector<double>& grad, double learning_rate);

  Vector<double> calibrated(ClassId cls, const EmbeddingBundle& bundle) const;

  std::size_t num_classes() const { return status_.size(); }
  Eigen::Index dim() const { return shifts_.cols(); }
  double alpha() const { return alpha_; }
  CalibrationMode mode() const { return mode_; }
  ShiftStatus status(ClassId cls) const { return status_.at(cls); }
  std::optional<std::size_t> task_of(ClassId cls) const;
  auto shift(ClassId cls) const { return shifts_.row(cls); }
  const RowMatrix<double>& shifts() const { return shifts_; }

  /// Exact equality, including every shift bit.
  bool operator==(const ShiftBank& other) const;

 private:
  friend void save_shift_bank(const ShiftBank&, const std::filesystem::path&);
  friend ShiftBank load_shift_bank(const std::filesystem::path&);

  RowMatrix<double> shifts_;
  std::vector<ShiftStatus> status_;
  std::vector<long> task_;  // -1 when unregistered
  double alpha_ = 0.1;
  CalibrationMode mode_ = CalibrationMode::kShiftOnNormalized;
};

/// Convenience value form of ShiftBank::begin_task.
ShiftBank begin_task(ShiftBank bank, std::size_t task_index, std::span<const ClassId> classes);

/// Calibrated text embeddings of a set of classes, one row per class.
struct CalibratedSet {
  std::vector<ClassId> classes;
  RowMatrix<double> embeddings;

  std::size_t size() const { return classes.size(); }
};

/// Calibrated embeddings of every class in tasks [0, through_task), ascending
/// class order. Throws std::invalid_argument if one of those tasks is not
/// registered in the bank.
CalibratedSet calibrated_set(const ShiftBank& bank, const EmbeddingBundle& bundle,
                             std::size_t through_task);

/// Writes shifts.json (header) and shifts.bin (row-major f32, one row per class).
void save_shift_bank(const ShiftBank& bank, const std::filesystem::path& dir);
ShiftBank load_shift_bank(const std::filesystem::path& dir);

}  // namespace desclip
