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

#include "desclip/config.hpp"

#include <charconv>
#include <set>
#include <stdexcept>

namespace desclip {

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "epochs",   "batch_size", "lr_adapter", "lr_shift",        "alpha",
      "beta",     "gamma",      "delta_d",    "tau",             "tau_tilde",
      "lambda_im", "lambda_ta", "lambda_ric", "seed",            "adapter_enabled",
      "adapter_scale", "calibration_mode", "require_cls_noun", "few_shot_k"};
  return keys;
}

// Parses a command-line value into the JSON type the key expects.
nlohmann::json parse_value(const std::string& key, const std::string& text) {
  auto as_number = [&]() -> nlohmann::json {
    try {
      std::size_t used = 0;
      const double v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw std::invalid_argument("override " + key + " expects a number, got '" + text + "'");
    }
  };
  auto as_unsigned = [&]() -> nlohmann::json {
    std::uint64_t v = 0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end) {
      throw std::invalid_argument("override " + key + " expects a non-negative integer, got '" + text + "'");
    }
    return v;
  };
  if (key == "epochs" || key == "batch_size" || key == "seed" || key == "few_shot_k") {
    if (key == "few_shot_k" && (text == "none" || text == "null")) return nullptr;
    return as_unsigned();
  }
  if (key == "adapter_enabled" || key == "require_cls_noun") {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw std::invalid_argument("override " + key + " expects true or false, got '" + text + "'");
  }
  if (key == "calibration_mode") {
    return text;
  }
  if (key == "tau_tilde" && (text == "none" || text == "null")) return nullptr;
  return as_number();
}

}  // namespace

void RunConfig::check() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("config: " + what); };
  if (batch_size < 1) fail("batch_size must be at least 1");
  if (!(lr_adapter > 0.0) || !(lr_shift > 0.0)) fail("learning rates must be positive");
  if (!(tau > 0.0)) fail("tau must be positive");
  if (tau_tilde && !(*tau_tilde > 0.0)) fail("tau_tilde must be positive");
  if (lambda_im < 0.0 || lambda_ta < 0.0 || lambda_ric < 0.0) fail("loss weights must be non-negative");
  if (gamma < 0.0) fail("gamma must be non-negative");
  if (delta_d < -1.0 || delta_d > 1.0) fail("delta_d must lie in [-1, 1]");
  if (few_shot_k && *few_shot_k == 0) fail("few_shot_k must be at least 1");
}

RunConfig apply_profile(RunConfig config, const std::string& profile) {
  if (profile == "coarse") {
    config.delta_d = 0.20;
    config.gamma = 0.015;
    config.lambda_im = 2.0;
  } else if (profile == "fine") {
    config.delta_d = 0.25;
    config.gamma = 0.03;
    config.lambda_im = 2.0;
  } else if (profile == "finegrained" || profile == "fine-grained") {
    config.delta_d = 0.30;
    config.gamma = 0.015;
    config.lambda_im = 15.0;
  } else {
    throw std::invalid_argument("unknown profile '" + profile + "' (expected coarse, fine or finegrained)");
  }
  return config;
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["lr_adapter"] = c.lr_adapter;
  j["lr_shift"] = c.lr_shift;
  j["alpha"] = c.alpha;
  j["beta"] = c.beta;
  j["gamma"] = c.gamma;
  j["delta_d"] = c.delta_d;
  j["tau"] = c.tau;
  j["tau_tilde"] = c.tau_tilde ? nlohmann::json(*c.tau_tilde) : nlohmann::json(nullptr);
  j["lambda_im"] = c.lambda_im;
  j["lambda_ta"] = c.lambda_ta;
  j["lambda_ric"] = c.lambda_ric;
  j["seed"] = c.seed;
  j["adapter_enabled"] = c.adapter_enabled;
  j["adapter_scale"] = c.adapter_scale;
  j["calibration_mode"] = to_string(c.calibration_mode);
  j["require_cls_noun"] = c.require_cls_noun;
  j["few_shot_k"] = c.few_shot_k ? nlohmann::json(*c.few_shot_k) : nlohmann::json(nullptr);
  return j;
}

RunConfig merge_json(RunConfig c, const nlohmann::json& j) {
  if (!j.is_object()) {
    throw std::invalid_argument("config must be a JSON object");
  }
  for (const auto& [key, value] : j.items()) {
    if (!known_keys().contains(key)) {
      throw std::invalid_argument("unknown config key '" + key + "'");
    }
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("epochs", c.epochs);
    get("batch_size", c.batch_size);
    get("lr_adapter", c.lr_adapter);
    get("lr_shift", c.lr_shift);
    get("alpha", c.alpha);
    get("beta", c.beta);
    get("gamma", c.gamma);
    get("delta_d", c.delta_d);
    get("tau", c.tau);
    get("lambda_im", c.lambda_im);
    get("lambda_ta", c.lambda_ta);
    get("lambda_ric", c.lambda_ric);
    get("seed", c.seed);
    get("adapter_enabled", c.adapter_enabled);
    get("adapter_scale", c.adapter_scale);
    get("require_cls_noun", c.require_cls_noun);
    if (j.contains("tau_tilde")) {
      c.tau_tilde = j.at("tau_tilde").is_null() ? std::nullopt
                                                : std::optional(j.at("tau_tilde").get<double>());
    }
    if (j.contains("few_shot_k")) {
      c.few_shot_k = j.at("few_shot_k").is_null()
                         ? std::nullopt
                         : std::optional(j.at("few_shot_k").get<std::size_t>());
    }
    if (j.contains("calibration_mode")) {
      c.calibration_mode = parse_calibration_mode(j.at("calibration_mode").get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig apply_override(RunConfig config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw std::invalid_argument("malformed override '" + assignment + "' (expected key=value)");
  }
  const std::string key = assignment.substr(0, eq);
  if (!known_keys().contains(key)) {
    throw std::invalid_argument("unknown config key '" + key + "'");
  }
  // Parse before building the object: a throw inside a braced list leaks its
  // finished elements on some compilers.
  nlohmann::json value = parse_value(key, assignment.substr(eq + 1));
  nlohmann::json patch;
  patch[key] = std::move(value);
  return merge_json(config, patch);
}

}  // namespace desclip
