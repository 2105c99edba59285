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

#include "desclip/calibrate.hpp"

#include <algorithm>

#include "desclip/binary_io.hpp"

namespace desclip {

std::string to_string(CalibrationMode mode) {
  switch (mode) {
    case CalibrationMode::kRaw: return "raw";
    case CalibrationMode::kShiftOnRaw: return "shift_on_raw";
    case CalibrationMode::kShiftOnNormalized: return "shift_on_normalized";
  }
  return "shift_on_normalized";
}

CalibrationMode parse_calibration_mode(const std::string& text) {
  if (text == "raw") return CalibrationMode::kRaw;
  if (text == "shift_on_raw") return CalibrationMode::kShiftOnRaw;
  if (text == "shift_on_normalized") return CalibrationMode::kShiftOnNormalized;
  throw std::invalid_argument("unknown calibration mode '" + text +
                              "' (expected raw, shift_on_raw or shift_on_normalized)");
}

ShiftBank::ShiftBank(std::size_t num_classes, Eigen::Index dim, double alpha, CalibrationMode mode)
    : shifts_(RowMatrix<double>::Zero(static_cast<Eigen::Index>(num_classes), dim)),
      status_(num_classes, ShiftStatus::kUnregistered),
      task_(num_classes, -1),
      alpha_(alpha),
      mode_(mode) {}

void ShiftBank::begin_task(std::size_t task_index, std::span<const ClassId> classes) {
  for (ClassId c : classes) {
    if (c >= status_.size()) {
      throw std::invalid_argument("begin_task: class " + std::to_string(c) + " out of range");
    }
    if (status_[c] != ShiftStatus::kUnregistered) {
      throw std::invalid_argument("begin_task: class " + std::to_string(c) + " already registered");
    }
  }
  for (auto& st : status_) {
    if (st == ShiftStatus::kLearnable) {
      st = ShiftStatus::kFrozen;
    }
  }
  for (ClassId c : classes) {
    status_[c] = ShiftStatus::kLearnable;
    task_[c] = static_cast<long>(task_index);
    shifts_.row(c).setZero();
  }
}

void ShiftBank::apply_gradient(ClassId cls, const Vector<double>& grad, double learning_rate) {
  if (status_.at(cls) != ShiftStatus::kLearnable) {
    throw std::logic_error("apply_gradient: shift of class " + std::to_string(cls) + " is not learnable");
  }
  shifts_.row(cls) -= learning_rate * grad.transpose();
}

Vector<double> ShiftBank::calibrated(ClassId cls, const EmbeddingBundle& bundle) const {
  return calibrate_embedding(bundle.classes.at(cls).rudimentary_embedding.cast<double>(),
                             shifts_.row(cls), alpha_, mode_);
}

std::optional<std::size_t> ShiftBank::task_of(ClassId cls) const {
  const long t = task_.at(cls);
  if (t < 0) {
    return std::nullopt;
  }
  return static_cast<std::size_t>(t);
}

bool ShiftBank::operator==(const ShiftBank& other) const {
  if (shifts_.rows() != other.shifts_.rows() || shifts_.cols() != other.shifts_.cols()) {
    return false;
  }
  return status_ == other.status_ && task_ == other.task_ && alpha_ == other.alpha_ &&
         mode_ == other.mode_ &&
         std::equal(shifts_.data(), shifts_.data() + shifts_.size(), other.shifts_.data());
}

ShiftBank begin_task(ShiftBank bank, std::size_t task_index, std::span<const ClassId> classes) {
  bank.begin_task(task_index, classes);
  return bank;
}

CalibratedSet calibrated_set(const ShiftBank& bank, const EmbeddingBundle& bundle,
                             std::size_t through_task) {
  if (through_task > bundle.num_tasks()) {
    throw std::invalid_argument("calibrated_set: bundle has only " +
                                std::to_string(bundle.num_tasks()) + " tasks");
  }
  for (std::size_t t = 0; t < through_task; ++t) {
    for (ClassId c : bundle.tasks[t]) {
      if (bank.task_of(c) != t) {
        throw std::invalid_argument("calibrated_set: task " + std::to_string(t + 1) +
                                    " is not registered in the shift bank");
      }
    }
  }
  CalibratedSet out;
  out.classes = bundle.seen_classes(through_task);
  out.embeddings.resize(static_cast<Eigen::Index>(out.classes.size()), bundle.dim);
  for (std::size_t r = 0; r < out.classes.size(); ++r) {
    out.embeddings.row(static_cast<Eigen::Index>(r)) = bank.calibrated(out.classes[r], bundle).transpose();
  }
  return out;
}

namespace {

std::string status_name(ShiftStatus st) {
  switch (st) {
    case ShiftStatus::kUnregistered: return "unregistered";
    case ShiftStatus::kLearnable: return "learnable";
    case ShiftStatus::kFrozen: return "frozen";
  }
  return "unregistered";
}

ShiftStatus parse_status(const std::string& s) {
  if (s == "learnable") return ShiftStatus::kLearnable;
  if (s == "frozen") return ShiftStatus::kFrozen;
  if (s == "unregistered") return ShiftStatus::kUnregistered;
  throw io::IoError("unknown shift status '" + s + "'");
}

}  // namespace

void save_shift_bank(const ShiftBank& bank, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const RowMatrix<float> shifts = bank.shifts_.cast<float>();
  const auto bytes = io::encode_f32(std::span(shifts.data(), static_cast<std::size_t>(shifts.size())));
  io::write_file(dir / "shifts.bin", bytes);
  nlohmann::json status = nlohmann::json::array();
  for (auto st : bank.status_) {
    status.push_back(status_name(st));
  }
  nlohmann::json header = {{"num_classes", bank.num_classes()},
                           {"dim", bank.dim()},
                           {"alpha", bank.alpha_},
                           {"mode", to_string(bank.mode_)},
                           {"status", status},
                           {"task", bank.task_},
                           {"crc32", io::crc32(bytes)}};
  io::write_json(dir / "shifts.json", header);
}

ShiftBank load_shift_bank(const std::filesystem::path& dir) {
  const auto header = io::read_json(dir / "shifts.json");
  const auto n = header.at("num_classes").get<std::size_t>();
  const auto dim = header.at("dim").get<Eigen::Index>();
  const auto bytes = io::read_file(dir / "shifts.bin");
  if (bytes.size() != n * static_cast<std::size_t>(dim) * 4) {
    throw io::IoError("shifts.bin size does not match the header");
  }
  if (io::crc32(bytes) != header.at("crc32").get<std::uint32_t>()) {
    throw io::IoError("shifts.bin fails its crc32 check");
  }
  ShiftBank bank(n, dim, header.at("alpha").get<double>(),
                 parse_calibration_mode(header.at("mode").get<std::string>()));
  const auto values = io::decode_f32(bytes);
  bank.shifts_ = Eigen::Map<const RowMatrix<float>>(values.data(), static_cast<Eigen::Index>(n), dim)
                     .cast<double>();
  const auto status = header.at("status").get<std::vector<std::string>>();
  bank.task_ = header.at("task").get<std::vector<long>>();
  if (status.size() != n || bank.task_.size() != n) {
    throw io::IoError("shifts.json status/task lists do not match num_classes");
  }
  for (std::size_t c = 0; c < n; ++c) {
    bank.status_[c] = parse_status(status[c]);
  }
  return bank;
}

}  // namespace desclip
