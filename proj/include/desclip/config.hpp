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
#include <optional>
#include <string>

#include <json.hpp>

#include "desclip/calibrate.hpp"
#include "desclip/filter.hpp"

namespace desclip {

struct Temperatures {
  double tau = 0.01;
  /// Instance matching runs at a ten times softer temperature.
  double tau_tilde = 0.1;

  static Temperatures from_tau(double tau) { return {tau, 10.0 * tau}; }
};

/// Every hyperparameter of a training run. Defaults are the coarse profile.
struct RunConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double lr_adapter = 1e-5;
  double lr_shift = 0.1;
  double alpha = 0.1;
  double beta = 1.0;
  double gamma = 0.015;
  double delta_d = 0.20;
  double tau = 0.01;
  /// Unset means 10 * tau.
  std::optional<double> tau_tilde;
  double lambda_im = 2.0;
  double lambda_ta = 0.5;
  double lambda_ric = 1.0;
  std::uint64_t seed = 0;
  bool adapter_enabled = true;
  double adapter_scale = 1.0;
  CalibrationMode calibration_mode = CalibrationMode::kShiftOnNormalized;
  bool require_cls_noun = true;
  std::optional<std::size_t> few_shot_k;

  Temperatures temperatures() const { return {tau, tau_tilde.value_or(10.0 * tau)}; }
  FilterParams filter_params() const { return {delta_d, gamma, require_cls_noun}; }

  /// Throws std::invalid_argument when a rate, size or weight is out of range.
  void check() const;
};

/// Named (delta_d, gamma, lambda_im) presets: "coarse", "fine", "finegrained"
/// (also accepted: "fine-grained").
RunConfig apply_profile(RunConfig config, const std::string& profile);

nlohmann::json to_json(const RunConfig& config);
/// Overlays the keys present in `json`; unknown keys throw std::invalid_argument.
RunConfig merge_json(RunConfig config, const nlohmann::json& json);
/// Applies one `key=value` override.
RunConfig apply_override(RunConfig config, const std::string& assignment);

}  // namespace desclip
