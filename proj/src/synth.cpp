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

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "desclip/bundle.hpp"

namespace desclip {

namespace {

void check_spec(const SynthSpec& spec) {
  if (spec.num_tasks == 0 || spec.classes_per_task == 0 || spec.samples_per_class == 0 ||
      spec.test_per_class == 0 || spec.candidates_per_class == 0) {
    throw std::invalid_argument("synth: task, class, sample and candidate counts must be positive");
  }
  if (spec.dim < 2) {
    throw std::invalid_argument("synth: dim must be at least 2");
  }
  if (spec.attribute_share < 0.0 || spec.attribute_share > 1.0 || spec.cls_noun_fraction < 0.0 ||
      spec.cls_noun_fraction > 1.0) {
    throw std::invalid_argument("synth: fractions must lie in [0, 1]");
  }
}

class Generator {
 public:
  explicit Generator(const SynthSpec& spec) : spec_(spec), rng_(spec.seed) {}

  Vector<double> gaussian() {
    Vector<double> v(spec_.dim);
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      v[i] = normal_(rng_);
    }
    return v;
  }

  Vector<double> unit() {
    Vector<double> v = gaussian();
    while (v.norm() < 1e-6) {
      v = gaussian();
    }
    return v.normalized();
  }

  // Unit vector at angle `theta` from unit `mean`, in a random plane.
  Vector<double> rotate_away(const Vector<double>& mean, double theta) {
    Vector<double> side = gaussian();
    side -= mean * mean.dot(side);
    side.normalize();
    return std::cos(theta) * mean + std::sin(theta) * side;
  }

  bool coin(double p) { return uniform_(rng_) < p; }
  double uniform() { return uniform_(rng_); }

  RowMatrix<double> means(std::size_t count) {
    RowMatrix<double> m(static_cast<Eigen::Index>(count), spec_.dim);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      m.row(r) = unit().transpose();
    }
    return m;
  }

  // Cluster sample: class mean plus a random subset of attribute offsets and
  // isotropic noise of total scale `cluster_spread`.
  Vector<float> sample(const Vector<double>& mean, const RowMatrix<double>& attributes) {
    Vector<double> v = mean;
    for (Eigen::Index j = 0; j < attributes.rows(); ++j) {
      if (coin(spec_.attribute_share)) {
        v += spec_.attribute_noise * attributes.row(j).transpose();
      }
    }
    v += gaussian() * (spec_.cluster_spread / std::sqrt(static_cast<double>(spec_.dim)));
    if (spec_.normalize) {
      v.normalize();
    }
    return v.cast<float>();
  }

  Vector<float> text_embedding(const Vector<double>& mean, double unfamiliarity) {
    const double theta = std::clamp(unfamiliarity, 0.0, 1.0) * std::numbers::pi / 2.0;
    Vector<double> w = theta == 0.0 ? mean : rotate_away(mean, theta);
    if (!spec_.normalize) {
      w *= 0.5 + 1.5 * uniform();
    }
    return w.cast<float>();
  }

 private:
  const SynthSpec& spec_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

double task_unfamiliarity(const SynthSpec& spec, std::size_t task) {
  if (spec.num_tasks < 2) {
    return spec.unfamiliarity;
  }
  const double position = static_cast<double>(task) / static_cast<double>(spec.num_tasks - 1);
  return spec.unfamiliarity * (1.0 + spec.unfamiliarity_skew * (position - 0.5));
}

std::string class_name(std::size_t index) {
  std::string digits = std::to_string(index);
  return "class_" + std::string(digits.size() < 3 ? 3 - digits.size() : 0, '0') + digits;
}

void append_rows(SampleSplit& split, std::vector<Vector<float>>& rows, std::vector<ClassId>& labels,
                 Eigen::Index dim) {
  split.x.resize(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    split.x.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
  }
  split.y = std::move(labels);
}

}  // namespace

RowMatrix<double> synth_class_means(const SynthSpec& spec) {
  check_spec(spec);
  Generator gen(spec);
  return gen.means(spec.num_tasks * spec.classes_per_task);
}

EmbeddingBundle synth_bundle(const SynthSpec& spec) {
  check_spec(spec);
  Generator gen(spec);
  const std::size_t num_classes = spec.num_tasks * spec.classes_per_task;
  const Eigen::Index dim = spec.dim;
  // Means are drawn first so synth_class_means can replay them.
  const RowMatrix<double> means = gen.means(num_classes);

  EmbeddingBundle bundle;
  bundle.dim = dim;
  bundle.tasks.resize(spec.num_tasks);
  const auto flagged = static_cast<std::size_t>(
      std::ceil(spec.cls_noun_fraction * static_cast<double>(spec.candidates_per_class)));

  std::vector<Vector<float>> train_rows, test_rows;
  std::vector<ClassId> train_labels, test_labels;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const std::size_t task = c / spec.classes_per_task;
    bundle.tasks[task].push_back(static_cast<ClassId>(c));
    const Vector<double> mean = means.row(static_cast<Eigen::Index>(c)).transpose();

    RowMatrix<double> attributes(static_cast<Eigen::Index>(spec.candidates_per_class), dim);
    for (Eigen::Index j = 0; j < attributes.rows(); ++j) {
      attributes.row(j) = gen.unit().transpose();
    }

    ClassRecord record;
    record.name = class_name(c);
    record.rudimentary_embedding = gen.text_embedding(mean, task_unfamiliarity(spec, task));
    for (std::size_t j = 0; j < spec.candidates_per_class; ++j) {
      DescriptionCandidate cand;
      cand.cls_noun = j < flagged;
      cand.text = cand.cls_noun ? "The " + record.name + " shows attribute " + std::to_string(j) + "."
                                : "Something showing attribute " + std::to_string(j) + ".";
      if (spec.attribute_noise == 0.0) {
        cand.embedding = mean.cast<float>();
      } else {
        cand.embedding =
            (mean + spec.attribute_noise * attributes.row(static_cast<Eigen::Index>(j)).transpose())
                .cast<float>();
      }
      record.candidates.push_back(std::move(cand));
    }
    bundle.classes.push_back(std::move(record));

    for (std::size_t i = 0; i < spec.samples_per_class; ++i) {
      train_rows.push_back(gen.sample(mean, attributes));
      train_labels.push_back(static_cast<ClassId>(c));
    }
    for (std::size_t i = 0; i < spec.test_per_class; ++i) {
      test_rows.push_back(gen.sample(mean, attributes));
      test_labels.push_back(static_cast<ClassId>(c));
    }
  }
  append_rows(bundle.train, train_rows, train_labels, dim);
  append_rows(bundle.test, test_rows, test_labels, dim);

  if (spec.control_classes > 0) {
    auto& control = bundle.control;
    const RowMatrix<double> control_means = gen.means(spec.control_classes);
    control.class_text.resize(static_cast<Eigen::Index>(spec.control_classes), dim);
    std::vector<Vector<float>> rows;
    std::vector<ClassId> labels;
    const RowMatrix<double> no_attributes(0, dim);
    for (std::size_t c = 0; c < spec.control_classes; ++c) {
      const Vector<double> mean = control_means.row(static_cast<Eigen::Index>(c)).transpose();
      control.class_names.push_back("control_" + class_name(c).substr(6));
      control.class_text.row(static_cast<Eigen::Index>(c)) =
          gen.text_embedding(mean, spec.control_unfamiliarity).transpose();
      for (std::size_t i = 0; i < spec.control_per_class; ++i) {
        rows.push_back(gen.sample(mean, no_attributes));
        labels.push_back(static_cast<ClassId>(c));
      }
    }
    append_rows(control.samples, rows, labels, dim);
  }

  validate(bundle);
  return bundle;
}

}  // namespace desclip
