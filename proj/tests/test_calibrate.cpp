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

#include <doctest.h>

#include <random>

#include "desclip/binary_io.hpp"
#include "desclip/calibrate.hpp"
#include "oracles.hpp"
#include "scratch.hpp"

using namespace desclip;
using desclip::testing::ScratchDir;

namespace {

Vector<double> v2(double a, double b) {
  Vector<double> v(2);
  v << a, b;
  return v;
}

EmbeddingBundle text_only_bundle() {
  EmbeddingBundle b;
  b.dim = 2;
  for (int c = 0; c < 4; ++c) {
    ClassRecord cls;
    cls.name = "c" + std::to_string(c);
    cls.rudimentary_embedding = Vector<float>::Constant(2, 1.0f);
    cls.rudimentary_embedding[c % 2] = 3.0f + static_cast<float>(c);
    b.classes.push_back(cls);
  }
  b.tasks = {{0, 2}, {1, 3}};
  return b;
}

}  // namespace

TEST_CASE("shift transformation") {
  SUBCASE("zero shift normalizes") {
    CHECK((calibrate_embedding(v2(3, 4), v2(0, 0), 0.1) - v2(0.6, 0.8)).norm() < 1e-15);
  }
  SUBCASE("hand example") {
    CHECK((calibrate_embedding(v2(2, 0), v2(0, 1), 0.1) - v2(1, 0.1)).norm() < 1e-15);
  }
  SUBCASE("zero alpha ignores the shift") {
    CHECK(calibrate_embedding(v2(2, 5), v2(7, -3), 0.0) == calibrate_embedding(v2(2, 5), v2(0, 0), 0.0));
  }
  SUBCASE("other modes") {
    CHECK(calibrate_embedding(v2(2, 0), v2(0, 1), 0.1, CalibrationMode::kRaw) == v2(2, 0));
    CHECK((calibrate_embedding(v2(2, 0), v2(0, 1), 0.1, CalibrationMode::kShiftOnRaw) - v2(2, 0.1)).norm() < 1e-15);
  }
  SUBCASE("zero-norm text") { CHECK_THROWS_AS(calibrate_embedding(v2(0, 0), v2(0, 1), 0.1), std::domain_error); }
}

TEST_CASE("shift enters with constant alpha") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector<double> w = oracle::random_vector(rng, 6);
    const Vector<double> s1 = oracle::random_vector(rng, 6);
    const Vector<double> s2 = oracle::random_vector(rng, 6);
    const double gap = (calibrate_embedding(w, s1, 0.1) - calibrate_embedding(w, s2, 0.1)).norm();
    CHECK(gap == doctest::Approx(0.1 * (s1 - s2).norm()).epsilon(1e-12));
  }
}

TEST_CASE("mode names round-trip") {
  for (auto m : {CalibrationMode::kRaw, CalibrationMode::kShiftOnRaw, CalibrationMode::kShiftOnNormalized}) {
    CHECK(parse_calibration_mode(to_string(m)) == m);
  }
  CHECK_THROWS_AS(parse_calibration_mode("sideways"), std::invalid_argument);
}

TEST_CASE("task registration and freezing") {
  ShiftBank bank(4, 2, 0.1);
  const std::vector<ClassId> first{0, 1, 2};
  bank.begin_task(0, first);
  for (ClassId c : first) {
    CHECK(bank.status(c) == ShiftStatus::kLearnable);
    CHECK(bank.shift(c).norm() == 0.0);
    CHECK(bank.task_of(c) == std::optional<std::size_t>(0));
  }
  CHECK(bank.status(3) == ShiftStatus::kUnregistered);
  CHECK_FALSE(bank.task_of(3).has_value());

  bank.apply_gradient(1, v2(1, -1), 0.5);
  const Vector<double> learned = bank.shift(1).transpose();
  CHECK(learned == v2(-0.5, 0.5));

  const std::vector<ClassId> second{3};
  bank = begin_task(bank, 1, second);
  for (ClassId c : first) CHECK(bank.status(c) == ShiftStatus::kFrozen);
  CHECK(bank.status(3) == ShiftStatus::kLearnable);
  CHECK_THROWS_AS(bank.apply_gradient(1, v2(1, 1), 0.5), std::logic_error);
  CHECK(Vector<double>(bank.shift(1).transpose()) == learned);

  const std::vector<ClassId> dup{2};
  CHECK_THROWS_AS(bank.begin_task(2, dup), std::invalid_argument);
  const std::vector<ClassId> outside{9};
  CHECK_THROWS_AS(bank.begin_task(2, outside), std::invalid_argument);
}

TEST_CASE("calibrated sets") {
  const auto bundle = text_only_bundle();
  ShiftBank bank(4, 2, 0.1);
  bank.begin_task(0, bundle.tasks[0]);
  CHECK_THROWS_AS(calibrated_set(bank, bundle, 2), std::invalid_argument);

  const auto one = calibrated_set(bank, bundle, 1);
  CHECK(one.classes == std::vector<ClassId>{0, 2});
  for (std::size_t k = 0; k < one.size(); ++k) {
    const Vector<double> w = bundle.classes[one.classes[k]].rudimentary_embedding.cast<double>();
    CHECK((one.embeddings.row(static_cast<Eigen::Index>(k)).transpose() - w / w.norm()).norm() < 1e-15);
  }

  bank.apply_gradient(0, v2(0.3, 0.2), 1.0);
  bank.begin_task(1, bundle.tasks[1]);
  const auto before = calibrated_set(bank, bundle, 1);
  bank.apply_gradient(1, v2(2, 2), 1.0);
  bank.apply_gradient(3, v2(-1, 4), 1.0);
  const auto after = calibrated_set(bank, bundle, 2);
  CHECK(after.classes == std::vector<ClassId>{0, 1, 2, 3});
  // Task-1 rows keep their exact values.
  CHECK(after.embeddings.row(0) == before.embeddings.row(0));
  CHECK(after.embeddings.row(2) == before.embeddings.row(1));
}

TEST_CASE("shift bank files round-trip") {
  ScratchDir dir("shift_io");
  ShiftBank bank(3, 2, 0.1, CalibrationMode::kShiftOnRaw);
  const std::vector<ClassId> a{0};
  const std::vector<ClassId> b{2};
  bank.begin_task(0, a);
  bank.apply_gradient(0, v2(0.5, -0.25), 1.0);  // representable in f32
  bank.begin_task(1, b);
  save_shift_bank(bank, dir.path());
  const auto back = load_shift_bank(dir.path());
  CHECK(back == bank);
  CHECK(back.mode() == CalibrationMode::kShiftOnRaw);
  CHECK(back.status(1) == ShiftStatus::kUnregistered);

  auto bytes = io::read_file(dir / "shifts.bin");
  bytes.back() ^= 0x01;
  io::write_file(dir / "shifts.bin", bytes);
  CHECK_THROWS_AS(load_shift_bank(dir.path()), io::IoError);
}
