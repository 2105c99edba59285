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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "desclip/core.hpp"

namespace desclip {

/// A general-attribute description sentence and its text embedding.
struct DescriptionCandidate {
  std::string text;
  Vector<float> embedding;
  /// True when the sentence names the class as a noun.
  bool cls_noun = false;
};

struct ClassRecord {
  std::string name;
  /// Embedding of the hand-crafted "A photo of a [CLS]" prompt.
  Vector<float> rudimentary_embedding;
  std::vector<DescriptionCandidate> candidates;
};

struct SampleSplit {
  RowMatrix<float> x;
  std::vector<ClassId> y;

  std::size_t size() const { return y.size(); }
  bool empty() const { return y.empty(); }
};

/// Held-out classes scored against their own unshifted text embeddings to
/// measure how much general zero-shot ability survives training.
struct ControlSet {
  std::vector<std::string> class_names;
  RowMatrix<float> class_text;
  SampleSplit samples;

  bool empty() const { return samples.empty(); }
};

/// Immutable store of frozen visual and text embeddings for a class-incremental
/// task sequence. Rows of every matrix are embeddings of length `dim`.
struct EmbeddingBundle {
  Eigen::Index dim = 0;
  std::vector<ClassRecord> classes;
  std::vector<std::vector<ClassId>> tasks;
  SampleSplit train;
  SampleSplit test;
  ControlSet control;

  std::size_t num_tasks() const { return tasks.size(); }
  std::size_t num_classes() const { return classes.size(); }
  /// Index of the task that owns `cls`; throws std::out_of_range if none does.
  std::size_t task_of(ClassId cls) const;
  /// Classes of tasks [0, through_task), ascending.
  std::vector<ClassId> seen_classes(std::size_t through_task) const;
  /// Training sample indices whose label belongs to `task`, in split order.
  std::vector<std::size_t> task_train_indices(std::size_t task) const;
};

class BundleError : public std::runtime_error {
 public:
  enum class Kind {
    kMissingFile,
    kBadManifest,
    kDimensionMismatch,
    kChecksumMismatch,
    kNonFinite,
    kZeroNorm,
    kEmptyTask,
    kClassInTwoTasks,
    kClassWithoutTask,
    kLabelOutOfRange,
  };

  BundleError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::string to_string(BundleError::Kind kind);

/// Checks every bundle invariant; throws BundleError on the first violation.
void validate(const EmbeddingBundle& bundle);

EmbeddingBundle load_bundle(const std::filesystem::path& dir);
void save_bundle(const EmbeddingBundle& bundle, const std::filesystem::path& dir);

struct SynthSpec {
  std::size_t num_tasks = 5;
  std::size_t classes_per_task = 4;
  Eigen::Index dim = 32;
  std::size_t samples_per_class = 48;
  std::size_t test_per_class = 48;
  std::size_t candidates_per_class = 12;
  /// Scale of per-attribute offsets added to the class mean.
  double attribute_noise = 0.35;
  /// Probability that a sample carries any given attribute of its class.
  double attribute_share = 0.3;
  /// Isotropic per-sample noise (standard deviation of the whole vector).
  double cluster_spread = 0.9;
  /// Rotation of rudimentary embeddings away from the class mean, as a
  /// fraction of a right angle.
  double unfamiliarity = 0.6;
  /// Linear ramp of unfamiliarity across tasks: task t gets
  /// unfamiliarity * (1 + skew * (t / (T - 1) - 0.5)).
  double unfamiliarity_skew = 0.0;
  /// Fraction of candidates flagged as naming the class as a noun.
  double cls_noun_fraction = 0.75;
  std::size_t control_classes = 8;
  std::size_t control_per_class = 24;
  double control_unfamiliarity = 0.5;
  bool normalize = true;
  std::uint64_t seed = 7;
};

/// Deterministic Gaussian-cluster benchmark.
EmbeddingBundle synth_bundle(const SynthSpec& spec);
/// The unit class means `synth_bundle` draws for the same SynthSpec.
RowMatrix<double> synth_class_means(const SynthSpec& spec);

/// Keeps at most `k_per_class` training samples per class; test and control
/// splits are untouched.
EmbeddingBundle subsample_few_shot(const EmbeddingBundle& bundle, std::size_t k_per_class,
                                   std::uint64_t seed);

/// Same bundle with its task groups presented in `order`.
EmbeddingBundle reorder_tasks(const EmbeddingBundle& bundle, std::span<const std::size_t> order);

}  // namespace desclip
