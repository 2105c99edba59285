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

#include <cmath>
#include <random>

#include "desclip/binary_io.hpp"
#include "desclip/evalharness.hpp"
#include "desclip/trainer.hpp"
#include "oracles.hpp"
#include "scratch.hpp"

using namespace desclip;
using desclip::testing::ScratchDir;

namespace {

CalibratedSet axis_set(Eigen::Index dim, Eigen::Index classes) {
  CalibratedSet set;
  set.embeddings = RowMatrix<double>::Identity(classes, dim);
  for (Eigen::Index k = 0; k < classes; ++k) set.classes.push_back(static_cast<ClassId>(k));
  return set;
}

SynthSpec quick_spec() {
  SynthSpec spec;
  spec.num_tasks = 4;
  spec.classes_per_task = 2;
  spec.dim = 8;
  spec.samples_per_class = 8;
  spec.test_per_class = 6;
  spec.candidates_per_class = 4;
  spec.control_classes = 3;
  spec.control_per_class = 4;
  return spec;
}

std::vector<TaskCheckpoint> zero_shot_run(const EmbeddingBundle& bundle, const RunConfig& config) {
  std::vector<TaskCheckpoint> out;
  for (std::size_t t = 1; t <= bundle.num_tasks(); ++t) out.push_back(zero_shot_checkpoint(bundle, config, t));
  return out;
}

}  // namespace

TEST_CASE("prediction basics") {
  const auto set = axis_set(3, 3);
  const auto off = AdapterState::identity(3, false);
  Vector<double> z(3);
  z << 0, 2, 0;
  const auto p = predict(z, set, 0.01, off);
  CHECK(p.index == 1);
  CHECK(p.class_id == 1);
  CHECK(p.probabilities.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(predict(Vector<double>(z * 1e-3), set, 0.01, off).index == 1);

  SUBCASE("ties go to the lowest index") {
    Vector<double> tie(3);
    tie << 1, 1, 0;
    CHECK(predict(tie, set, 0.01, off).index == 0);
  }
  SUBCASE("empty set") { CHECK_THROWS_AS(predict(z, CalibratedSet{}, 0.01, off), std::invalid_argument); }
}

TEST_CASE("predictions agree with brute-force nearest text") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const int dim = 2 + trial % 7;
    const int classes = 1 + trial % 9;
    CalibratedSet set;
    set.embeddings = oracle::random_rows(rng, classes, dim);
    std::vector<std::vector<double>> texts;
    for (int k = 0; k < classes; ++k) {
      set.classes.push_back(static_cast<ClassId>(k));
      texts.push_back(oracle::to_std(set.embeddings.row(k).transpose()));
    }
    const Vector<double> z = oracle::random_vector(rng, dim);
    const auto p = predict(z, set, 0.01, AdapterState::identity(dim, false));
    CHECK(p.index == oracle::nearest_text(oracle::to_std(z), texts));
    CHECK(std::abs(p.probabilities.sum() - 1.0) < 1e-6);
  }
}

TEST_CASE("split accuracy") {
  const auto set = axis_set(2, 2);
  const auto off = AdapterState::identity(2, false);
  SampleSplit split;
  split.x.resize(4, 2);
  split.x << 1, 0, 0, 1, 1, 0.1f, 1, 0.2f;
  SUBCASE("all correct") {
    split.y = {0, 1, 0, 0};
    const auto acc = evaluate_split(split, set, off, 0.01);
    CHECK(acc.micro == 100.0);
    CHECK(acc.count == 4);
  }
  SUBCASE("three of four") {
    split.y = {0, 1, 0, 1};
    const auto acc = evaluate_split(split, set, off, 0.01, 3);
    CHECK(acc.micro == 75.0);
    // Class 0 perfect, class 1 half right.
    CHECK(acc.macro == 75.0);
    CHECK(acc.per_class == std::vector<double>{100.0, 50.0});
  }
  SUBCASE("macro differs from micro on unbalanced splits") {
    split.y = {0, 1, 1, 1};
    const auto acc = evaluate_split(split, set, off, 0.01);
    CHECK(acc.micro == 50.0);
    CHECK(acc.macro == doctest::Approx((100.0 + 100.0 / 3.0) / 2.0));
  }
  SUBCASE("nothing to evaluate") {
    split.y = {5, 5, 5, 5};
    CHECK_THROWS_AS(evaluate_split(split, set, off, 0.01), std::invalid_argument);
    CHECK_THROWS_AS(evaluate_split(SampleSplit{}, set, off, 0.01), std::invalid_argument);
  }
}

TEST_CASE("thread count does not change results") {
  const auto bundle = synth_bundle(quick_spec());
  ShiftBank bank(bundle.num_classes(), bundle.dim, 0.1);
  for (std::size_t t = 0; t < bundle.num_tasks(); ++t) bank.begin_task(t, bundle.tasks[t]);
  const auto set = calibrated_set(bank, bundle, bundle.num_tasks());
  const auto off = AdapterState::identity(bundle.dim, false);
  const auto one = evaluate_split(bundle.test, set, off, 0.01, 1);
  const auto four = evaluate_split(bundle.test, set, off, 0.01, 4);
  CHECK(one.micro == four.micro);
  CHECK(one.per_class == four.per_class);
}

TEST_CASE("zero-shot split accuracy equals the nearest-text classifier") {
  const auto bundle = synth_bundle(quick_spec());
  const RunConfig config;
  const auto zs = zero_shot_checkpoint(bundle, config, bundle.num_tasks());
  const auto set = calibrated_set(zs.bank, bundle, bundle.num_tasks());
  const auto acc = evaluate_split(bundle.test, set, zs.adapter, config.tau);
  std::vector<std::vector<double>> texts;
  for (const auto& cls : bundle.classes) texts.push_back(oracle::to_std(cls.rudimentary_embedding.cast<double>()));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < bundle.test.size(); ++i) {
    const auto z = oracle::to_std(bundle.test.x.row(static_cast<Eigen::Index>(i)).transpose().cast<double>());
    correct += oracle::nearest_text(z, texts) == bundle.test.y[i];
  }
  CHECK(acc.micro == doctest::Approx(100.0 * static_cast<double>(correct) / bundle.test.size()).epsilon(1e-12));
}

TEST_CASE("average of a curve") {
  const std::vector<double> curve{90.0, 80.0};
  CHECK(mean_accuracy(curve) == 85.0);
  CHECK_THROWS_AS(mean_accuracy(std::span<const double>{}), std::invalid_argument);
}

TEST_CASE("report identities on a trained run") {
  const auto bundle = synth_bundle(quick_spec());
  RunConfig config;
  config.epochs = 2;
  config.batch_size = 8;
  const auto run = train_sequence(bundle, config);
  const auto report = compute_report(run.checkpoints, bundle, config);
  REQUIRE(report.per_task_curve.size() == 4);
  CHECK(report.per_task_curve == run.per_task_accuracy);
  CHECK(std::abs(report.avg - mean_accuracy(report.per_task_curve)) < 1e-9);
  CHECK(report.last == report.per_task_curve.back());
  for (double a : report.per_task_curve) CHECK((a >= 0.0 && a <= 100.0));
  CHECK(report.half_tasks == 2);
  REQUIRE(report.delta_zero_shot.has_value());
  REQUIRE(report.delta_transfer.has_value());
  CHECK(report.delta_zero_shot->size() == 4);
  for (const auto& d : *report.delta_zero_shot) CHECK(std::abs(d.delta - (d.after - d.before)) < 1e-9);
  for (std::size_t i = 0; i < report.delta_zero_shot->size(); ++i) {
    // The half-sequence accuracy is the "after" of one delta and the "before" of the other.
    CHECK((*report.delta_zero_shot)[i].after == (*report.delta_transfer)[i].before);
  }
  CHECK(report.warnings.empty());
  REQUIRE(report.control.has_value());
}

TEST_CASE("zero-shot model against itself") {
  const auto bundle = synth_bundle(quick_spec());
  const RunConfig config;
  const auto report = compute_report(zero_shot_run(bundle, config), bundle, config);
  REQUIRE(report.delta_zero_shot.has_value());
  for (const auto& d : *report.delta_zero_shot) CHECK(d.delta == 0.0);
  CHECK(report.per_task_curve == report.zero_shot_curve);
  CHECK(report.control == report.control_zero_shot);

  // Control accuracy of the untouched model is a plain split evaluation.
  const auto direct = evaluate_split(bundle.control.samples, control_head(bundle),
                                     AdapterState::identity(bundle.dim, false), config.tau);
  CHECK(*report.control == direct.micro);
}

TEST_CASE("odd task counts round the half up") {
  auto spec = quick_spec();
  spec.num_tasks = 3;
  const auto bundle = synth_bundle(spec);
  const RunConfig config;
  const auto report = compute_report(zero_shot_run(bundle, config), bundle, config);
  CHECK(report.half_tasks == 2);
  CHECK(report.delta_zero_shot->size() == 4);
}

TEST_CASE("partial runs warn instead of failing") {
  const auto bundle = synth_bundle(quick_spec());
  const RunConfig config;
  auto run = zero_shot_run(bundle, config);
  run.resize(1);
  const auto report = compute_report(run, bundle, config);
  CHECK_FALSE(report.delta_zero_shot.has_value());
  CHECK_FALSE(report.delta_transfer.has_value());
  CHECK(report.warnings.size() == 2);
  CHECK(report.per_task_curve.size() == 1);

  run = zero_shot_run(bundle, config);
  run.resize(3);
  const auto partial = compute_report(run, bundle, config);
  CHECK(partial.delta_zero_shot.has_value());
  CHECK_FALSE(partial.delta_transfer.has_value());
}

TEST_CASE("missing control set leaves control empty") {
  auto spec = quick_spec();
  spec.control_classes = 0;
  const auto bundle = synth_bundle(spec);
  const RunConfig config;
  const auto report = compute_report(zero_shot_run(bundle, config), bundle, config);
  CHECK_FALSE(report.control.has_value());
  CHECK(to_json(report)["control"].is_null());
}

TEST_CASE("report files") {
  ScratchDir dir("eval_report");
  const auto bundle = synth_bundle(quick_spec());
  const RunConfig config;
  const auto report = compute_report(zero_shot_run(bundle, config), bundle, config);
  write_report(report, dir.path());
  const auto j = io::read_json(dir / "report.json");
  CHECK(j["accuracy_averaging"] == "micro");
  CHECK(j["per_task_curve"].size() == 4);
  const auto csv = io::read_file(dir / "curve.csv");
  const std::string text(csv.begin(), csv.end());
  CHECK(text.rfind("task,accuracy\n1,", 0) == 0);
}
