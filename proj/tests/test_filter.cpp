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

#include "desclip/filter.hpp"
#include "oracles.hpp"

using namespace desclip;

namespace {

Vector<float> vec2(float a, float b) {
  Vector<float> v(2);
  v << a, b;
  return v;
}

Vector<double> unit_at(double degrees) {
  const double r = degrees * M_PI / 180.0;
  Vector<double> v(2);
  v << std::cos(r), std::sin(r);
  return v;
}

// A class whose rudimentary embedding sits at `cs_deg` from the x axis and
// whose candidates sit at the given angles.
ClassRecord angled_class(double cs_deg, std::initializer_list<double> cand_deg, bool noun = true) {
  ClassRecord cls;
  cls.name = "toy";
  cls.rudimentary_embedding = unit_at(cs_deg).cast<float>();
  for (double d : cand_deg) {
    cls.candidates.push_back({"a toy", unit_at(d).cast<float>(), noun});
  }
  return cls;
}

}  // namespace

TEST_CASE("cosine of hand-picked pairs") {
  CHECK(cosine(vec2(1, 0), vec2(1, 0)) == doctest::Approx(1.0));
  CHECK(cosine(vec2(1, 0), vec2(0, 1)) == doctest::Approx(0.0));
  CHECK(cosine(vec2(3, 4), vec2(4, 3)) == doctest::Approx(0.96).epsilon(1e-6));
}

TEST_CASE("cosine rejects zero norm and length mismatch") {
  CHECK_THROWS_AS(cosine(vec2(0, 0), vec2(1, 0)), std::domain_error);
  Vector<float> three = Vector<float>::Ones(3);
  CHECK_THROWS_AS(cosine(vec2(1, 0), three), std::invalid_argument);
}

TEST_CASE("candidate scores at 0, 60 and 90 degrees") {
  const auto cls = angled_class(0.0, {0.0, 60.0, 90.0});
  const Vector<double> z = unit_at(0.0);
  const auto scores = candidate_scores(z, cls, FilterParams{});
  REQUIRE(scores.size() == 3);
  CHECK(scores[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(scores[1] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(scores[2] == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("non-noun candidates get the sentinel and are never kept") {
  const auto cls = angled_class(80.0, {0.0, 10.0}, false);
  const Vector<double> z = unit_at(0.0);
  const auto scores = candidate_scores(z, cls, FilterParams{});
  for (double s : scores) CHECK(s == excluded_score<double>());
  const auto ev = filter_sample(z, cls, FilterParams{});
  CHECK(ev.kept.empty());
  CHECK_FALSE(ev.valid());

  FilterParams loose;
  loose.require_cls_noun = false;
  CHECK(filter_sample(z, cls, loose).kept.size() == 2);
}

TEST_CASE("chi follows the max rule") {
  const FilterParams p{0.20, 0.015, true};
  const std::vector<double> a{0.10};
  const std::vector<double> b{0.15};
  const std::vector<double> c{0.22};
  CHECK(evaluate_chi<double>(0.25, a, p));
  CHECK_FALSE(evaluate_chi<double>(0.10, b, p));
  CHECK(evaluate_chi<double>(0.10, c, p));
  // strict
  const std::vector<double> d{0.20};
  CHECK_FALSE(evaluate_chi<double>(0.20, d, p));
}

TEST_CASE("margin keeps only candidates beyond anchor plus gamma") {
  // Rudimentary embedding at cos 0.25; candidates at cos 0.27, 0.26, 0.24.
  const Vector<double> z = unit_at(0.0);
  auto cls = angled_class(std::acos(0.25) * 180.0 / M_PI,
                          {std::acos(0.27) * 180.0 / M_PI, std::acos(0.26) * 180.0 / M_PI,
                           std::acos(0.24) * 180.0 / M_PI});
  const auto ev = filter_sample(z, cls, FilterParams{0.20, 0.015, true});
  REQUIRE(ev.chi);
  CHECK(*ev.anchor == doctest::Approx(0.25).epsilon(1e-6));
  REQUIRE(ev.kept.size() == 1);
  CHECK(ev.kept[0].index == 0);
  CHECK(ev.kept[0].score == doctest::Approx(0.27).epsilon(1e-6));
  CHECK(ev.paired_index() == std::optional<std::size_t>(0));
}

TEST_CASE("gamma zero with every candidate below the anchor keeps nothing") {
  const auto cls = angled_class(10.0, {40.0, 50.0});
  const auto ev = filter_sample(unit_at(0.0), cls, FilterParams{0.20, 0.0, true});
  CHECK(ev.chi);
  CHECK(ev.kept.empty());
  CHECK_FALSE(ev.paired_index().has_value());
}

TEST_CASE("equal scores are ordered by candidate index") {
  // Candidates mirrored about z score identically.
  const auto cls = angled_class(80.0, {30.0, -30.0, 5.0});
  const auto ev = filter_sample(unit_at(0.0), cls, FilterParams{0.20, 0.015, true});
  REQUIRE(ev.kept.size() == 3);
  CHECK(ev.kept[0].index == 2);
  CHECK(ev.kept[1].index == 0);
  CHECK(ev.kept[2].index == 1);
  CHECK(ev.kept[1].score == ev.kept[2].score);
}

TEST_CASE("anchor stays at cs when only a candidate clears delta") {
  const auto cls = angled_class(85.0, {10.0});
  const auto ev = filter_sample(unit_at(0.0), cls, FilterParams{0.20, 0.015, true});
  REQUIRE(ev.chi);
  CHECK(ev.cs < 0.2);
  CHECK(*ev.anchor == ev.cs);
}

TEST_CASE("chi false leaves anchor empty") {
  const auto cls = angled_class(89.0, {88.0});
  const auto ev = filter_sample(unit_at(0.0), cls, FilterParams{});
  CHECK_FALSE(ev.chi);
  CHECK_FALSE(ev.anchor.has_value());
  CHECK(ev.kept.empty());
}

namespace {

EmbeddingBundle two_class_bundle(const ClassRecord& a, const ClassRecord& b) {
  EmbeddingBundle bundle;
  bundle.dim = 2;
  bundle.classes = {a, b};
  bundle.tasks = {{0}, {1}};
  return bundle;
}

}  // namespace

TEST_CASE("batch with no kept candidates has an empty valid set") {
  auto bundle = two_class_bundle(angled_class(0.0, {70.0}), angled_class(90.0, {0.0}));
  RowMatrix<double> zs(3, 2);
  zs << 1, 0, 1, 0.01, 1, -0.01;
  const std::vector<ClassId> labels{0, 0, 0};
  const auto ev = filter_batch(zs, labels, bundle, 0, FilterParams{});
  CHECK(ev.samples.size() == 3);
  CHECK(ev.valid.empty());
}

TEST_CASE("batch of three with one valid sample") {
  auto bundle = two_class_bundle(angled_class(60.0, {0.0}), angled_class(90.0, {0.0}));
  RowMatrix<double> zs(3, 2);
  zs << 1, 0, 0, 1, -1, 0;
  const std::vector<ClassId> labels{0, 0, 0};
  const auto ev = filter_batch(zs, labels, bundle, 0, FilterParams{});
  REQUIRE(ev.valid.size() == 1);
  CHECK(ev.valid[0] == 0);
}

TEST_CASE("batch labels must belong to the task") {
  auto bundle = two_class_bundle(angled_class(0.0, {0.0}), angled_class(90.0, {0.0}));
  RowMatrix<double> zs(1, 2);
  zs << 1, 0;
  const std::vector<ClassId> labels{1};
  CHECK_THROWS_AS(filter_batch(zs, labels, bundle, 0, FilterParams{}), std::invalid_argument);
  const std::vector<ClassId> two{0, 0};
  CHECK_THROWS_AS(filter_batch(zs, two, bundle, 0, FilterParams{}), std::invalid_argument);
}

TEST_CASE("random batches agree with the brute-force filter") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> dim_d(2, 8);
  std::uniform_int_distribution<int> count_d(1, 16);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int dim = dim_d(rng);
    const Vector<double> anchor_dir = oracle::random_vector(rng, dim);
    EmbeddingBundle bundle;
    bundle.dim = static_cast<std::size_t>(dim);
    bundle.classes = {oracle::random_class(rng, anchor_dir, count_d(rng)),
                      oracle::random_class(rng, anchor_dir, count_d(rng))};
    bundle.tasks = {{0, 1}};
    RowMatrix<double> zs(4, dim);
    std::vector<ClassId> labels;
    for (int i = 0; i < 4; ++i) {
      zs.row(i) = (anchor_dir + 0.5 * oracle::random_vector(rng, dim)).transpose();
      labels.push_back(u(rng) < 0.5 ? 0 : 1);
    }
    const FilterParams params{u(rng) * 0.6 - 0.1, u(rng) * 0.1, u(rng) < 0.7};
    const auto ev = filter_batch(zs, labels, bundle, 0, params);
    std::vector<std::size_t> valid;
    for (int i = 0; i < 4; ++i) {
      const auto ref = oracle::brute_filter(oracle::to_std(zs.row(i).transpose()), bundle.classes[labels[i]],
                                            params.delta_d, params.gamma, params.require_cls_noun);
      const auto& got = ev.samples[i];
      REQUIRE(got.chi == ref.chi);
      REQUIRE(got.kept.size() == ref.kept.size());
      for (std::size_t k = 0; k < ref.kept.size(); ++k) {
        CHECK(got.kept[k].index == ref.kept[k]);
      }
      if (ref.chi && !ref.kept.empty()) valid.push_back(static_cast<std::size_t>(i));
    }
    CHECK(ev.valid == valid);
  }
}

TEST_CASE("positive rescaling of z leaves evidence unchanged") {
  std::mt19937_64 rng(3);
  const Vector<double> z = oracle::random_vector(rng, 6);
  const auto cls = oracle::random_class(rng, z, 12);
  FilterParams p{0.0, 0.01, false};
  const auto base = filter_sample(z, cls, p);
  for (double scale : {1e-3, 0.5, 7.0, 1e4}) {
    const Vector<double> zs = z * scale;
    const auto ev = filter_sample(zs, cls, p);
    CHECK(ev.chi == base.chi);
    REQUIRE(ev.kept.size() == base.kept.size());
    for (std::size_t k = 0; k < ev.kept.size(); ++k) {
      CHECK(ev.kept[k].index == base.kept[k].index);
      CHECK(ev.kept[k].score == doctest::Approx(base.kept[k].score).epsilon(1e-12));
    }
  }
}

TEST_CASE("raising gamma never enlarges the kept set") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector<double> z = oracle::random_vector(rng, 5);
    const auto cls = oracle::random_class(rng, z, 10);
    std::size_t prev = cls.candidates.size() + 1;
    for (double g : {0.0, 0.01, 0.05, 0.2, 0.5}) {
      const auto ev = filter_sample(z, cls, FilterParams{-1.0, g, false});
      CHECK(ev.kept.size() <= prev);
      prev = ev.kept.size();
    }
  }
}
