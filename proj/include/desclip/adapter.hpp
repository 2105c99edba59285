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

#include <filesystem>
#include <stdexcept>
#include <string>

#include "desclip/core.hpp"

namespace desclip {

/// Residual linear map z + scale * W z applied to frozen visual embeddings.
/// W starts at zero so an untrained adapter is the identity.
struct AdapterState {
  RowMatrix<double> weight;
  bool enabled = true;
  double scale = 1.0;

  static AdapterState identity(Eigen::Index dim, bool enabled = true, double scale = 1.0) {
    return {RowMatrix<double>::Zero(dim, dim), enabled, scale};
  }

  Eigen::Index dim() const { return weight.rows(); }
};

/// Adapts one embedding (row or column vector).
template <typename Derived>
Vector<typename Derived::Scalar> adapt(const Eigen::MatrixBase<Derived>& z, const AdapterState& state) {
  using Scalar = typename Derived::Scalar;
  if (z.size() != state.dim()) {
    throw std::invalid_argument("adapt: embedding length " + std::to_string(z.size()) +
                                " does not match adapter dim " + std::to_string(state.dim()));
  }
  Vector<Scalar> x = z.reshaped();
  if (!state.enabled) {
    return x;
  }
  return x + Scalar(state.scale) * (state.weight.cast<Scalar>() * x);
}

/// Adapts every row of `zs`.
template <typename Derived>
RowMatrix<typename Derived::Scalar> adapt_rows(const Eigen::MatrixBase<Derived>& zs,
                                               const AdapterState& state) {
  using Scalar = typename Derived::Scalar;
  if (zs.cols() != state.dim()) {
    throw std::invalid_argument("adapt_rows: embedding length " + std::to_string(zs.cols()) +
                                " does not match adapter dim " + std::to_string(state.dim()));
  }
  RowMatrix<Scalar> x = zs;
  if (!state.enabled) {
    return x;
  }
  // Row form of z + s W z.
  return x + Scalar(state.scale) * (x * state.weight.cast<Scalar>().transpose());
}

/// One SGD step given dL/d(adapted output) for each input row:
/// W <- W - lr * scale * sum_i grad_i x_i^T, accumulated in row order.
AdapterState apply_gradient(const AdapterState& state, const RowMatrix<double>& grad_outputs,
                            const RowMatrix<double>& inputs, double learning_rate);

/// Writes `<stem>.json` (dim, scale, enabled, crc32) and `<stem>.bin`
/// (row-major little-endian f32 weight).
void save_adapter(const AdapterState& state, const std::filesystem::path& dir,
                  const std::string& stem = "adapter");
AdapterState load_adapter(const std::filesystem::path& dir, const std::string& stem = "adapter");

}  // namespace desclip
