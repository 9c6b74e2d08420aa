// Copyright 2026 The Panoptic Affinity Authors.
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

// Dense instance affinity head.
//
// With the pixel matrices Q (n x C) and Ψ (n x k), two per-pixel projections
// Q0 = relu(Q W0 + b0) and Q1 = relu(Q W1 + b1) define the affinity
// A = Q0 Q1^T (n x n). The head outputs
//
//     P = Ψ + A Ψ = Ψ + Q0 (Q1^T Ψ)
//
// and the factored bracketing only ever forms the C x k product Q1^T Ψ, so
// cost is linear in n. The quadratic route is kept as an oracle.

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "panoptic/numerics.hpp"

namespace panoptic {

struct AffinityParams {
  Matrix w0;  // C x C
  std::vector<double> b0;
  Matrix w1;
  std::vector<double> b1;

  std::size_t width() const { return w0.rows(); }

  static AffinityParams zeros(std::size_t c);
  /// Weights ~ N(0, scale^2), biases zero.
  static AffinityParams random(std::size_t c, double scale, std::uint64_t seed);
  /// W0 = W1 = gain * I + N(0, scale^2), biases zero: A starts as a scaled
  /// Gram matrix of the features.
  static AffinityParams near_identity(std::size_t c, double gain, double scale, std::uint64_t seed);

  void check() const;

  bool operator==(const AffinityParams&) const = default;
};

struct AffinityGrads {
  Tensor3 d_psi;
  Tensor3 d_features;
  Matrix d_w0;
  Matrix d_w1;
  std::vector<double> d_b0;
  std::vector<double> d_b1;
};

struct Projections {
  Tensor3 q0;
  Tensor3 q1;
};

/// Row-parallel execution. Every output element keeps the reference
/// summation order, so any thread count reproduces the serial result.
struct ExecPolicy {
  std::size_t threads = 1;
};

Projections project_features(const Tensor3& q, const AffinityParams& params);

/// P = Ψ + Q0 (Q1^T Ψ); never materialises the n x n affinity.
Tensor3 apply_affinity_factored(const Tensor3& psi, const Tensor3& q0, const Tensor3& q1,
                                ExecPolicy policy = {});

inline constexpr std::size_t kNaivePixelLimit = 4096;

/// P = Ψ + (Q0 Q1^T) Ψ with A materialised. Throws CapacityError above
/// kNaivePixelLimit pixels.
Tensor3 apply_affinity_naive(const Tensor3& psi, const Tensor3& q0, const Tensor3& q1);

/// Row of A for one pixel, laid out on the image grid.
Matrix affinity_map_for_pixel(const Tensor3& q0, const Tensor3& q1, std::size_t row,
                              std::size_t col);

/// Projections followed by the factored applier.
Tensor3 affinity_forward(const Tensor3& psi, const Tensor3& q, const AffinityParams& params,
                         ExecPolicy policy = {});

/// Reverse mode through affinity_forward. The relu subgradient at 0 is 0.
AffinityGrads backward_affinity(const Tensor3& psi, const Tensor3& q, const AffinityParams& params,
                                const Tensor3& grad_p);

struct CostReport {
  std::uint64_t pixels = 0;          // n = (h/d)(w/d)
  std::uint64_t channels = 0;        // k = n_det + n_stuff
  std::uint64_t naive_flops = 0;     // 2 n^2 c + 2 n^2 k
  std::uint64_t factored_flops = 0;  // 4 c n k
  std::uint64_t projection_flops = 0;
  std::uint64_t affinity_matrix_bytes = 0;
  double reduction_percent = 0.0;
};

/// One multiply-add counts as two FLOPs. Projection FLOPs are reported
/// separately and are not part of either total.
CostReport estimate_costs(std::uint64_t h, std::uint64_t w, std::uint64_t d, std::uint64_t c,
                          std::uint64_t n_det, std::uint64_t n_stuff,
                          std::uint64_t bytes_per_scalar);

void save_params(const AffinityParams& params, const std::filesystem::path& dir);
AffinityParams load_params(const std::filesystem::path& dir);

}  // namespace panoptic
