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

#include "desclip/bundle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "desclip/binary_io.hpp"

namespace desclip {

namespace fs = std::filesystem;
using Kind = BundleError::Kind;

namespace {

constexpr int kFormatVersion = 1;

template <typename Derived>
void check_vector(const Eigen::MatrixBase<Derived>& v, Eigen::Index dim, const std::string& what) {
  if (v.size() != dim) {
    throw BundleError(Kind::kDimensionMismatch, what + " has length " + std::to_string(v.size()) +
                                                    ", expected " + std::to_string(dim));
  }
  if (!v.allFinite()) {
    throw BundleError(Kind::kNonFinite, what + " has a NaN or Inf entry");
  }
  if (v.template cast<double>().norm() < kMinNorm) {
    throw BundleError(Kind::kZeroNorm, what + " has (near) zero norm");
  }
}

void check_split(const SampleSplit& split, Eigen::Index dim, std::size_t num_labels,
                 const std::string& name) {
  if (static_cast<std::size_t>(split.x.rows()) != split.y.size()) {
    throw BundleError(Kind::kDimensionMismatch,
                      name + " has " + std::to_string(split.x.rows()) + " vectors but " +
                          std::to_string(split.y.size()) + " labels");
  }
  if (split.x.rows() > 0 && split.x.cols() != dim) {
    throw BundleError(Kind::kDimensionMismatch, name + " rows have " +
                                                    std::to_string(split.x.cols()) +
                                                    " columns, expected " + std::to_string(dim));
  }
  for (Eigen::Index i = 0; i < split.x.rows(); ++i) {
    check_vector(split.x.row(i), dim, name + " sample " + std::to_string(i));
  }
  for (std::size_t i = 0; i < split.y.size(); ++i) {
    if (split.y[i] >= num_labels) {
      throw BundleError(Kind::kLabelOutOfRange, name + " sample " + std::to_string(i) +
                                                    " has label " + std::to_string(split.y[i]) +
                                                    " but only " + std::to_string(num_labels) +
                                                    " classes exist");
    }
  }
}

std::vector<float> flatten(const RowMatrix<float>& m) {
  return {m.data(), m.data() + m.size()};
}

RowMatrix<float> to_matrix(const std::vector<float>& values, Eigen::Index rows, Eigen::Index cols) {
  RowMatrix<float> m(rows, cols);
  std::copy(values.begin(), values.end(), m.data());
  return m;
}

struct FileEntry {
  std::string name;
  std::vector<std::uint8_t> bytes;
};

std::vector<std::uint8_t> read_checked(const fs::path& dir, const std::string& name,
                                       std::size_t expected_bytes, const nlohmann::json& crcs,
                                       const std::string& shape) {
  const fs::path path = dir / name;
  if (!fs::exists(path)) {
    throw BundleError(Kind::kMissingFile, "missing bundle file " + path.string());
  }
  auto bytes = io::read_file(path);
  if (bytes.size() != expected_bytes) {
    throw BundleError(Kind::kDimensionMismatch,
                      name + " holds " + std::to_string(bytes.size()) + " bytes, expected " +
                          std::to_string(expected_bytes) + " (" + shape + " of 4-byte words)");
  }
  if (!crcs.contains(name)) {
    throw BundleError(Kind::kBadManifest, "manifest has no crc32 for " + name);
  }
  const auto expected = crcs.at(name).get<std::uint32_t>();
  const auto actual = io::crc32(bytes);
  if (expected != actual) {
    throw BundleError(Kind::kChecksumMismatch, name + " crc32 " + std::to_string(actual) +
                                                   " does not match manifest value " +
                                                   std::to_string(expected));
  }
  return bytes;
}

std::string shape_of(std::size_t rows, Eigen::Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

}  // namespace

std::string to_string(BundleError::Kind kind) {
  switch (kind) {
    case Kind::kMissingFile: return "missing-file";
    case Kind::kBadManifest: return "bad-manifest";
    case Kind::kDimensionMismatch: return "dimension-mismatch";
    case Kind::kChecksumMismatch: return "checksum-mismatch";
    case Kind::kNonFinite: return "non-finite";
    case Kind::kZeroNorm: return "zero-norm";
    case Kind::kEmptyTask: return "empty-task";
    case Kind::kClassInTwoTasks: return "class-in-two-tasks";
    case Kind::kClassWithoutTask: return "class-without-task";
    case Kind::kLabelOutOfRange: return "label-out-of-range";
  }
  return "unknown";
}

std::size_t EmbeddingBundle::task_of(ClassId cls) const {
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    if (std::find(tasks[t].begin(), tasks[t].end(), cls) != tasks[t].end()) {
      return t;
    }
  }
  throw std::out_of_range("class " + std::to_string(cls) + " belongs to no task");
}

std::vector<ClassId> EmbeddingBundle::seen_classes(std::size_t through_task) const {
  std::vector<ClassId> out;
  for (std::size_t t = 0; t < std::min(through_task, tasks.size()); ++t) {
    out.insert(out.end(), tasks[t].begin(), tasks[t].end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> EmbeddingBundle::task_train_indices(std::size_t task) const {
  const auto& group = tasks.at(task);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < train.y.size(); ++i) {
    if (std::find(group.begin(), group.end(), train.y[i]) != group.end()) {
      out.push_back(i);
    }
  }
  return out;
}

void validate(const EmbeddingBundle& bundle) {
  if (bundle.dim <= 0) {
    throw BundleError(Kind::kBadManifest, "dim must be positive");
  }
  const Eigen::Index dim = bundle.dim;
  for (std::size_t c = 0; c < bundle.classes.size(); ++c) {
    const auto& cls = bundle.classes[c];
    const std::string tag = "class " + std::to_string(c) + " (" + cls.name + ")";
    check_vector(cls.rudimentary_embedding, dim, tag + " rudimentary embedding");
    for (std::size_t j = 0; j < cls.candidates.size(); ++j) {
      check_vector(cls.candidates[j].embedding, dim, tag + " candidate " + std::to_string(j));
    }
  }

  if (bundle.tasks.empty()) {
    throw BundleError(Kind::kEmptyTask, "bundle has no tasks");
  }
  std::vector<int> owner(bundle.classes.size(), -1);
  for (std::size_t t = 0; t < bundle.tasks.size(); ++t) {
    if (bundle.tasks[t].empty()) {
      throw BundleError(Kind::kEmptyTask, "task " + std::to_string(t + 1) + " has no classes");
    }
    for (ClassId c : bundle.tasks[t]) {
      if (c >= bundle.classes.size()) {
        throw BundleError(Kind::kLabelOutOfRange, "task " + std::to_string(t + 1) +
                                                      " lists unknown class " + std::to_string(c));
      }
      if (owner[c] >= 0) {
        throw BundleError(Kind::kClassInTwoTasks,
                          "class " + std::to_string(c) + " appears in task " +
                              std::to_string(owner[c] + 1) + " and task " + std::to_string(t + 1));
      }
      owner[c] = static_cast<int>(t);
    }
  }
  for (std::size_t c = 0; c < owner.size(); ++c) {
    if (owner[c] < 0) {
      throw BundleError(Kind::kClassWithoutTask, "class " + std::to_string(c) + " belongs to no task");
    }
  }

  check_split(bundle.train, dim, bundle.classes.size(), "train");
  check_split(bundle.test, dim, bundle.classes.size(), "test");

  const auto& control = bundle.control;
  if (static_cast<std::size_t>(control.class_text.rows()) != control.class_names.size()) {
    throw BundleError(Kind::kDimensionMismatch, "control class text rows do not match control class names");
  }
  for (Eigen::Index c = 0; c < control.class_text.rows(); ++c) {
    check_vector(control.class_text.row(c), dim, "control class " + std::to_string(c));
  }
  check_split(control.samples, dim, control.class_names.size(), "control");
}

EmbeddingBundle load_bundle(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) {
    throw BundleError(Kind::kMissingFile, "missing " + manifest_path.string());
  }
  nlohmann::json manifest;
  try {
    manifest = io::read_json(manifest_path);
  } catch (const io::IoError& e) {
    throw BundleError(Kind::kBadManifest, e.what());
  }

  EmbeddingBundle bundle;
  try {
    if (manifest.at("format_version").get<int>() != kFormatVersion) {
      throw BundleError(Kind::kBadManifest, "unsupported format_version " +
                                                manifest.at("format_version").dump());
    }
    bundle.dim = manifest.at("dim").get<Eigen::Index>();
    if (bundle.dim <= 0) {
      throw BundleError(Kind::kBadManifest, "dim must be positive");
    }
    const Eigen::Index dim = bundle.dim;
    const auto& crcs = manifest.at("crc32");
    const auto& counts = manifest.at("counts");

    std::size_t total_candidates = 0;
    for (const auto& jc : manifest.at("classes")) {
      ClassRecord cls;
      cls.name = jc.at("name").get<std::string>();
      const auto& jcands = jc.at("candidates");
      const auto n = jc.at("num_candidates").get<std::size_t>();
      if (n != jcands.size()) {
        throw BundleError(Kind::kBadManifest, "class " + cls.name + " declares " + std::to_string(n) +
                                                  " candidates but lists " +
                                                  std::to_string(jcands.size()));
      }
      for (const auto& jd : jcands) {
        DescriptionCandidate cand;
        cand.text = jd.at("text").get<std::string>();
        cand.cls_noun = jd.at("cls_noun").get<bool>();
        cls.candidates.push_back(std::move(cand));
      }
      total_candidates += n;
      bundle.classes.push_back(std::move(cls));
    }
    bundle.tasks = manifest.at("tasks").get<std::vector<std::vector<ClassId>>>();

    const std::size_t num_classes = bundle.classes.size();
    const auto class_text = io::decode_f32(read_checked(dir, "class_text.bin", num_classes * dim * 4,
                                                        crcs, shape_of(num_classes, dim)));
    const auto cand_text = io::decode_f32(read_checked(dir, "cand_text.bin",
                                                       total_candidates * dim * 4, crcs,
                                                       shape_of(total_candidates, dim)));
    std::size_t cursor = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
      auto& cls = bundle.classes[c];
      cls.rudimentary_embedding =
          Eigen::Map<const Vector<float>>(class_text.data() + c * dim, dim);
      for (auto& cand : cls.candidates) {
        cand.embedding = Eigen::Map<const Vector<float>>(cand_text.data() + cursor * dim, dim);
        ++cursor;
      }
    }

    auto read_split = [&](const std::string& prefix, std::size_t rows) {
      SampleSplit split;
      const auto x = io::decode_f32(
          read_checked(dir, prefix + "_x.bin", rows * dim * 4, crcs, shape_of(rows, dim)));
      split.x = to_matrix(x, static_cast<Eigen::Index>(rows), dim);
      split.y = io::decode_u32(
          read_checked(dir, prefix + "_y.bin", rows * 4, crcs, shape_of(rows, 1)));
      return split;
    };
    bundle.train = read_split("train", counts.at("train").get<std::size_t>());
    bundle.test = read_split("test", counts.at("test").get<std::size_t>());

    if (manifest.contains("control")) {
      auto& control = bundle.control;
      control.class_names = manifest.at("control").at("classes").get<std::vector<std::string>>();
      const std::size_t nc = control.class_names.size();
      control.class_text = to_matrix(io::decode_f32(read_checked(dir, "control_text.bin", nc * dim * 4,
                                                                 crcs, shape_of(nc, dim))),
                                     static_cast<Eigen::Index>(nc), dim);
      control.samples = read_split("control", counts.at("control").get<std::size_t>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw BundleError(Kind::kBadManifest, std::string("manifest: ") + e.what());
  } catch (const io::IoError& e) {
    throw BundleError(Kind::kBadManifest, e.what());
  }

  validate(bundle);
  return bundle;
}

void save_bundle(const EmbeddingBundle& bundle, const fs::path& dir) {
  const Eigen::Index dim = bundle.dim;
  fs::create_directories(dir);

  std::vector<FileEntry> files;
  nlohmann::json classes = nlohmann::json::array();
  std::vector<float> class_text;
  std::vector<float> cand_text;
  class_text.reserve(bundle.classes.size() * dim);
  for (const auto& cls : bundle.classes) {
    class_text.insert(class_text.end(), cls.rudimentary_embedding.data(),
                      cls.rudimentary_embedding.data() + dim);
    nlohmann::json cands = nlohmann::json::array();
    for (const auto& cand : cls.candidates) {
      cand_text.insert(cand_text.end(), cand.embedding.data(), cand.embedding.data() + dim);
      cands.push_back({{"text", cand.text}, {"cls_noun", cand.cls_noun}});
    }
    classes.push_back(
        {{"name", cls.name}, {"num_candidates", cls.candidates.size()}, {"candidates", cands}});
  }
  files.push_back({"class_text.bin", io::encode_f32(class_text)});
  files.push_back({"cand_text.bin", io::encode_f32(cand_text)});

  auto add_split = [&](const std::string& prefix, const SampleSplit& split) {
    files.push_back({prefix + "_x.bin", io::encode_f32(flatten(split.x))});
    files.push_back({prefix + "_y.bin", io::encode_u32(split.y)});
  };
  add_split("train", bundle.train);
  add_split("test", bundle.test);

  nlohmann::json counts = {{"train", bundle.train.size()}, {"test", bundle.test.size()}};
  nlohmann::json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["dim"] = dim;
  manifest["classes"] = classes;
  manifest["tasks"] = bundle.tasks;

  const bool has_control = !bundle.control.empty() || !bundle.control.class_names.empty();
  if (has_control) {
    add_split("control", bundle.control.samples);
    files.push_back({"control_text.bin", io::encode_f32(flatten(bundle.control.class_text))});
    counts["control"] = bundle.control.samples.size();
    manifest["control"] = {{"classes", bundle.control.class_names}};
  }
  manifest["counts"] = counts;

  nlohmann::json crcs = nlohmann::json::object();
  for (const auto& f : files) {
    io::write_file(dir / f.name, f.bytes);
    crcs[f.name] = io::crc32(f.bytes);
  }
  manifest["crc32"] = crcs;
  io::write_json(dir / "manifest.json", manifest);
}

EmbeddingBundle subsample_few_shot(const EmbeddingBundle& bundle, std::size_t k_per_class,
                                   std::uint64_t seed) {
  if (k_per_class == 0) {
    throw std::invalid_argument("few-shot k must be at least 1");
  }
  std::vector<std::vector<std::size_t>> by_class(bundle.classes.size());
  for (std::size_t i = 0; i < bundle.train.y.size(); ++i) {
    by_class.at(bundle.train.y[i]).push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> keep;
  for (auto& members : by_class) {
    if (members.size() > k_per_class) {
      std::shuffle(members.begin(), members.end(), rng);
      members.resize(k_per_class);
    }
    keep.insert(keep.end(), members.begin(), members.end());
  }
  std::sort(keep.begin(), keep.end());

  EmbeddingBundle out = bundle;
  out.train.x.resize(static_cast<Eigen::Index>(keep.size()), bundle.dim);
  out.train.y.resize(keep.size());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    out.train.x.row(static_cast<Eigen::Index>(r)) = bundle.train.x.row(static_cast<Eigen::Index>(keep[r]));
    out.train.y[r] = bundle.train.y[keep[r]];
  }
  return out;
}

EmbeddingBundle reorder_tasks(const EmbeddingBundle& bundle, std::span<const std::size_t> order) {
  if (order.size() != bundle.tasks.size()) {
    throw std::invalid_argument("task order must list every task exactly once");
  }
  std::vector<std::size_t> sorted(order.begin(), order.end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i] != i) {
      throw std::invalid_argument("task order is not a permutation");
    }
  }
  EmbeddingBundle out = bundle;
  for (std::size_t t = 0; t < order.size(); ++t) {
    out.tasks[t] = bundle.tasks[order[t]];
  }
  return out;
}

}  // namespace desclip
