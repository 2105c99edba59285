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

#include "desclip/adapter.hpp"

#include "desclip/binary_io.hpp"

namespace desclip {

AdapterState apply_gradient(const AdapterState& state, const RowMatrix<double>& grad_outputs,
                            const RowMatrix<double>& inputs, double learning_rate) {
  if (grad_outputs.rows() != inputs.rows() || grad_outputs.cols() != state.dim() ||
      inputs.cols() != state.dim()) {
    throw std::invalid_argument("apply_gradient: gradient and input shapes do not match the adapter");
  }
  AdapterState next = state;
  if (!state.enabled || learning_rate == 0.0) {
    return next;
  }
  RowMatrix<double> accum = RowMatrix<double>::Zero(state.dim(), state.dim());
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    accum.noalias() += grad_outputs.row(i).transpose() * inputs.row(i);
  }
  next.weight -= (learning_rate * state.scale) * accum;
  return next;
}

void save_adapter(const AdapterState& state, const std::filesystem::path& dir, const std::string& stem) {
  std::filesystem::create_directories(dir);
  const RowMatrix<float> weight = state.weight.cast<float>();
  const auto bytes = io::encode_f32(std::span(weight.data(), static_cast<std::size_t>(weight.size())));
  io::write_file(dir / (stem + ".bin"), bytes);
  nlohmann::json header = {{"dim", state.dim()},
                           {"scale", state.scale},
                           {"enabled", state.enabled},
                           {"crc32", io::crc32(bytes)}};
  io::write_json(dir / (stem + ".json"), header);
}

AdapterState load_adapter(const std::filesystem::path& dir, const std::string& stem) {
  const auto header = io::read_json(dir / (stem + ".json"));
  const auto dim = header.at("dim").get<Eigen::Index>();
  const auto bytes = io::read_file(dir / (stem + ".bin"));
  if (bytes.size() != static_cast<std::size_t>(dim * dim * 4)) {
    throw io::IoError(stem + ".bin size does not match dim " + std::to_string(dim));
  }
  if (io::crc32(bytes) != header.at("crc32").get<std::uint32_t>()) {
    throw io::IoError(stem + ".bin fails its crc32 check");
  }
  const auto values = io::decode_f32(bytes);
  AdapterState state;
  state.weight = Eigen::Map<const RowMatrix<float>>(values.data(), dim, dim).cast<double>();
  state.enabled = header.at("enabled").get<bool>();
  state.scale = header.at("scale").get<double>();
  return state;
}

}  // namespace desclip
