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

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "desclip/bundle.hpp"
#include "desclip/core.hpp"

namespace desclip {

struct FilterParams {
  /// Feature-validity threshold: a sample is kept only if its best similarity
  /// to the class text or any candidate exceeds this.
  double delta_d = 0.20;
  /// Margin a candidate must beat the anchor by.
  double gamma = 0.015;
  bool require_cls_noun = true;
};

template <typename Scalar>
struct ScoredCandidate {
  std::size_t index;
  Scalar score;

  bool operator==(const ScoredCandidate&) const = default;
};

/// Anchor-based filtering result for one visual feature.
template <typename Scalar>
struct FilteredEvidence {
  bool chi = false;
  /// Cosine similarity between the feature and the class's rudimentary embedding.
  Scalar cs{};
  /// Equals `cs` when `chi` holds; empty otherwise.
  std::optional<Scalar> anchor;
  /// Candidates scoring above anchor + gamma, best first, ties by index.
  std::vector<ScoredCandidate<Scalar>> kept;

  std::optional<std::size_t> paired_index() const {
    if (!chi || kept.empty()) {
      return std::nullopt;
    }
    return kept.front().index;
  }

  bool valid() const { return chi && !kept.empty(); }
};

template <typename Scalar>
struct BatchEvidence {
  std::vector<FilteredEvidence<Scalar>> samples;
  /// Indices with chi = 1 and a non-empty kept list, ascending.
  std::vector<std::size_t> valid;
};

/// Score given to candidates excluded by the class-noun rule.
template <typename Scalar>
constexpr Scalar excluded_score() {
  return std::numeric_limits<Scalar>::lowest();
}

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine(const Eigen::MatrixBase<DerivedA>& a,
                                 const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  static_assert(std::is_same_v<Scalar, typename DerivedB::Scalar>,
                "cosine operands must share a scalar type");
  if (a.size() != b.size()) {
    throw std::invalid_argument("cosine: length " + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
  }
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  if (na < Scalar(kMinNorm) || nb < Scalar(kMinNorm)) {
    throw std::domain_error("cosine: zero-norm vector");
  }
  return a.reshaped().dot(b.reshaped()) / (na * nb);
}

template <typename Derived>
std::vector<typename Derived::Scalar> candidate_scores(const Eigen::MatrixBase<Derived>& z,
                                                       const ClassRecord& cls,
                                                       const FilterParams& params) {
  using Scalar = typename Derived::Scalar;
  std::vector<Scalar> scores;
  scores.reserve(cls.candidates.size());
  for (const auto& cand : cls.candidates) {
    if (params.require_cls_noun && !cand.cls_noun) {
      scores.push_back(excluded_score<Scalar>());
    } else {
      scores.push_back(cosine(z.reshaped(), cand.embedding.template cast<Scalar>()));
    }
  }
  return scores;
}

template <typename Scalar>
bool evaluate_chi(Scalar cs, std::span<const Scalar> scores, const FilterParams& params) {
  Scalar best = cs;
  for (Scalar s : scores) {
    best = std::max(best, s);
  }
  return best > Scalar(params.delta_d);
}

template <typename Derived>
FilteredEvidence<typename Derived::Scalar> filter_sample(const Eigen::MatrixBase<Derived>& z,
                                                         const ClassRecord& cls,
                                                         const FilterParams& params) {
  using Scalar = typename Derived::Scalar;
  FilteredEvidence<Scalar> out;
  out.cs = cosine(z.reshaped(), cls.rudimentary_embedding.template cast<Scalar>());
  const auto scores = candidate_scores(z, cls, params);
  out.chi = evaluate_chi<Scalar>(out.cs, scores, params);
  if (!out.chi) {
    return out;
  }
  out.anchor = out.cs;
  const Scalar threshold = out.cs + Scalar(params.gamma);
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (scores[j] > threshold) {
      out.kept.push_back({j, scores[j]});
    }
  }
  std::stable_sort(out.kept.begin(), out.kept.end(),
                   [](const auto& a, const auto& b) { return a.score > b.score; });
  return out;
}

/// Filters each row of `zs` against the class text of its label. Labels must
/// belong to task `task` of the bundle.
template <typename Derived>
BatchEvidence<typename Derived::Scalar> filter_batch(const Eigen::MatrixBase<Derived>& zs,
                                                     std::span<const ClassId> labels,
                                                     const EmbeddingBundle& bundle, std::size_t task,
                                                     const FilterParams& params) {
  if (static_cast<std::size_t>(zs.rows()) != labels.size()) {
    throw std::invalid_argument("filter_batch: feature and label counts differ");
  }
  const auto& group = bundle.tasks.at(task);
  BatchEvidence<typename Derived::Scalar> out;
  out.samples.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (std::find(group.begin(), group.end(), labels[i]) == group.end()) {
      throw std::invalid_argument("filter_batch: label " + std::to_string(labels[i]) +
                                  " is not part of task " + std::to_string(task + 1));
    }
    out.samples.push_back(
        filter_sample(zs.row(static_cast<Eigen::Index>(i)), bundle.classes[labels[i]], params));
    if (out.samples.back().valid()) {
      out.valid.push_back(i);
    }
  }
  return out;
}

}  // namespace desclip
