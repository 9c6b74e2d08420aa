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

#include "panoptic/affinity.hpp"

#include <fstream>
#include <random>

#include "panoptic/json_io.hpp"
#include "panoptic/parallel.hpp"
#include "panoptic/tensor_io.hpp"

namespace panoptic {
namespace {

void check_pair(const Tensor3& psi, const Tensor3& q0, const Tensor3& q1) {
  if (!q0.same_grid(psi) || !q1.same_grid(psi)) {
    throw DimensionError("affinity grids differ: psi " + psi.shape_string() + ", q0 " +
                         q0.shape_string() + ", q1 " + q1.shape_string());
  }
  if (q0.channels() != q1.channels()) {
    throw DimensionError("q0 " + q0.shape_string() + " and q1 " + q1.shape_string() +
                         " have different widths");
  }
}

// Z = Q W + b, pixel-wise.
Matrix linear(const Matrix& q, const Matrix& w, const std::vector<double>& b) {
  Matrix z = matmul(q, w);
  for (std::size_t i = 0; i < z.rows(); ++i)
    for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) += b[j];
  return z;
}

Matrix relu(Matrix z) {
  for (double& x : z.data()) x = x > 0.0 ? x : 0.0;
  return z;
}

}  // namespace

AffinityParams AffinityParams::zeros(std::size_t c) {
  return {Matrix(c, c), std::vector<double>(c, 0.0), Matrix(c, c), std::vector<double>(c, 0.0)};
}

AffinityParams AffinityParams::random(std::size_t c, double scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  AffinityParams p = zeros(c);
  for (double& x : p.w0.data()) x = scale * gauss(rng);
  for (double& x : p.w1.data()) x = scale * gauss(rng);
  return p;
}

AffinityParams AffinityParams::near_identity(std::size_t c, double gain, double scale,
                                             std::uint64_t seed) {
  AffinityParams p = random(c, scale, seed);
  for (std::size_t i = 0; i < c; ++i) p.w0(i, i) += gain;
  p.w1 = p.w0;
  return p;
}

void AffinityParams::check() const {
  const std::size_t c = w0.rows();
  if (w0.cols() != c || w1.rows() != c || w1.cols() != c || b0.size() != c || b1.size() != c) {
    throw DimensionError("affinity parameters must be CxC weights with length-C biases; got w0 " +
                         w0.shape_string() + ", w1 " + w1.shape_string());
  }
}

Projections project_features(const Tensor3& q, const AffinityParams& params) {
  params.check();
  if (q.channels() != params.width()) {
    throw DimensionError("features " + q.shape_string() + " do not match projection width " +
                         std::to_string(params.width()));
  }
  const Matrix qm = q.as_matrix();
  return {Tensor3::from_matrix(relu(linear(qm, params.w0, params.b0)), q.height(), q.width()),
          Tensor3::from_matrix(relu(linear(qm, params.w1, params.b1)), q.height(), q.width())};
}

Tensor3 apply_affinity_factored(const Tensor3& psi, const Tensor3& q0, const Tensor3& q1,
                                ExecPolicy policy) {
  check_pair(psi, q0, q1);
  const std::size_t n = psi.pixels(), k = psi.channels(), c = q0.channels();
  const auto& P = psi.data();
  const auto& A = q0.data();
  const auto& B = q1.data();

  // mix = Q1^T Ψ, C x k; each entry sums pixels in ascending order.
  std::vector<double> mix(c * k, 0.0);
  parallel_blocks(c, policy.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t ci = b; ci < e; ++ci) {
      for (std::size_t kk = 0; kk < k; ++kk) {
        double acc = 0.0;
        for (std::size_t p = 0; p < n; ++p) acc += B[p * c + ci] * P[p * k + kk];
        mix[ci * k + kk] = acc;
      }
    }
  });

  Tensor3 out = psi;
  auto& O = out.data();
  parallel_blocks(n, policy.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t p = b; p < e; ++p) {
      for (std::size_t kk = 0; kk < k; ++kk) {
        double acc = 0.0;
        for (std::size_t ci = 0; ci < c; ++ci) acc += A[p * c + ci] * mix[ci * k + kk];
        O[p * k + kk] += acc;
      }
    }
  });
  return out;
}

Tensor3 apply_affinity_naive(const Tensor3& psi, const Tensor3& q0, const Tensor3& q1) {
  check_pair(psi, q0, q1);
  const std::size_t n = psi.pixels();
  if (n > kNaivePixelLimit) {
    throw CapacityError("naive affinity needs a " + std::to_string(n) + "x" + std::to_string(n) +
                        " matrix; limit is " + std::to_string(kNaivePixelLimit) + " pixels");
  }
  const Matrix affinity = matmul_nt(q0.as_matrix(), q1.as_matrix());
  const Matrix spread = matmul(affinity, psi.as_matrix());
  Tensor3 out = psi;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += spread.data()[i];
  return out;
}

Matrix affinity_map_for_pixel(const Tensor3& q0, const Tensor3& q1, std::size_t row,
                              std::size_t col) {
  if (!q0.same_grid(q1) || q0.channels() != q1.channels()) {
    throw DimensionError("q0 " + q0.shape_string() + " and q1 " + q1.shape_string() + " differ");
  }
  if (row >= q0.height() || col >= q0.width()) {
    throw IndexError("pixel (" + std::to_string(row) + "," + std::to_string(col) +
                     ") outside " + std::to_string(q0.height()) + "x" +
                     std::to_string(q0.width()));
  }
  const auto anchor = q0.pixel(row * q0.width() + col);
  Matrix out(q0.height(), q0.width());
  for (std::size_t p = 0; p < q1.pixels(); ++p) {
    const auto other = q1.pixel(p);
    double acc = 0.0;
    for (std::size_t ci = 0; ci < anchor.size(); ++ci) acc += anchor[ci] * other[ci];
    out.data()[p] = acc;
  }
  return out;
}

Tensor3 affinity_forward(const Tensor3& psi, const Tensor3& q, const AffinityParams& params,
                         ExecPolicy policy) {
  const Projections pr = project_features(q, params);
  return apply_affinity_factored(psi, pr.q0, pr.q1, policy);
}

AffinityGrads backward_affinity(const Tensor3& psi, const Tensor3& q, const AffinityParams& params,
                                const Tensor3& grad_p) {
  params.check();
  if (q.channels() != params.width()) {
    throw DimensionError("features " + q.shape_string() + " do not match projection width " +
                         std::to_string(params.width()));
  }
  if (!q.same_grid(psi)) {
    throw DimensionError("features " + q.shape_string() + " and psi " + psi.shape_string() +
                         " are on different grids");
  }
  if (!grad_p.same_grid(psi) || grad_p.channels() != psi.channels()) {
    throw DimensionError("grad_p " + grad_p.shape_string() + " does not match psi " +
                         psi.shape_string());
  }
  const Matrix qm = q.as_matrix();
  const Matrix psim = psi.as_matrix();
  const Matrix g = grad_p.as_matrix();
  const Matrix z0 = linear(qm, params.w0, params.b0);
  const Matrix z1 = linear(qm, params.w1, params.b1);
  const Matrix q0 = relu(z0);
  const Matrix q1 = relu(z1);

  const Matrix mix = matmul_tn(q1, psim);  // C x k, forward intermediate
  const Matrix back = matmul_tn(q0, g);    // C x k, dL/d(mix)

  // dΨ = G + Q1 (Q0^T G)
  Matrix d_psi = matmul(q1, back);
  for (std::size_t i = 0; i < d_psi.size(); ++i) d_psi.data()[i] += g.data()[i];

  Matrix d_z0 = matmul_nt(g, mix);      // dQ0 = G mix^T
  Matrix d_z1 = matmul_nt(psim, back);  // dQ1 = Ψ back^T
  for (std::size_t i = 0; i < d_z0.size(); ++i) {
    if (!(z0.data()[i] > 0.0)) d_z0.data()[i] = 0.0;
    if (!(z1.data()[i] > 0.0)) d_z1.data()[i] = 0.0;
  }

  AffinityGrads out;
  out.d_w0 = matmul_tn(qm, d_z0);
  out.d_w1 = matmul_tn(qm, d_z1);
  const std::size_t c = params.width();
  out.d_b0.assign(c, 0.0);
  out.d_b1.assign(c, 0.0);
  for (std::size_t i = 0; i < d_z0.rows(); ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      out.d_b0[j] += d_z0(i, j);
      out.d_b1[j] += d_z1(i, j);
    }
  }
  Matrix d_q = matmul_nt(d_z0, params.w0);
  const Matrix d_q1 = matmul_nt(d_z1, params.w1);
  for (std::size_t i = 0; i < d_q.size(); ++i) d_q.data()[i] += d_q1.data()[i];

  out.d_psi = Tensor3::from_matrix(d_psi, psi.height(), psi.width());
  out.d_features = Tensor3::from_matrix(d_q, q.height(), q.width());
  return out;
}

CostReport estimate_costs(std::uint64_t h, std::uint64_t w, std::uint64_t d, std::uint64_t c,
                          std::uint64_t n_det, std::uint64_t n_stuff,
                          std::uint64_t bytes_per_scalar) {
  if (h == 0 || w == 0 || d == 0 || c == 0 || n_det + n_stuff == 0 || bytes_per_scalar == 0) {
    throw DimensionError("cost model inputs must be >= 1");
  }
  CostReport r;
  r.pixels = (h / d) * (w / d);
  r.channels = n_det + n_stuff;
  const std::uint64_t n = r.pixels, k = r.channels;
  r.affinity_matrix_bytes = n * n * bytes_per_scalar;
  r.factored_flops = 2 * c * n * k + 2 * c * n * k;
  r.naive_flops = 2 * n * n * c + 2 * n * n * k;
  r.projection_flops = 2 * (2 * n * c * c);
  r.reduction_percent =
      100.0 * (1.0 - double(r.factored_flops) / double(r.naive_flops));
  return r;
}

void save_params(const AffinityParams& params, const std::filesystem::path& dir) {
  params.check();
  std::filesystem::create_directories(dir);
  write_panc(dir / "w0.panc", to_raw(params.w0));
  write_panc(dir / "b0.panc", to_raw(params.b0));
  write_panc(dir / "w1.panc", to_raw(params.w1));
  write_panc(dir / "b1.panc", to_raw(params.b1));
  nlohmann::json m;
  m["format"] = "panoptic-affinity-params/1";
  m["width"] = params.width();
  m["activation"] = "relu";
  m["tensors"] = {{"w0", "w0.panc"}, {"b0", "b0.panc"}, {"w1", "w1.panc"}, {"b1", "b1.panc"}};
  std::ofstream out(dir / "params.json", std::ios::trunc);
  out << m.dump(2) << '\n';
}

AffinityParams load_params(const std::filesystem::path& dir) {
  std::ifstream in(dir / "params.json");
  if (!in) throw FormatError("missing params manifest in " + dir.string());
  nlohmann::json m;
  try {
    in >> m;
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("params.json: " + std::string(e.what()), e.byte);
  }
  if (m.value("format", std::string()) != "panoptic-affinity-params/1") {
    throw FormatError("params.json: unsupported format tag", 0);
  }
  const auto& t = m.at("tensors");
  AffinityParams p;
  p.w0 = matrix_from_raw(read_panc(dir / t.at("w0").get<std::string>()));
  p.b0 = vector_from_raw(read_panc(dir / t.at("b0").get<std::string>()));
  p.w1 = matrix_from_raw(read_panc(dir / t.at("w1").get<std::string>()));
  p.b1 = vector_from_raw(read_panc(dir / t.at("b1").get<std::string>()));
  if (p.width() != m.at("width").get<std::size_t>()) {
    throw ShapeError("params.json width disagrees with w0", 8);
  }
  try {
    p.check();
  } catch (const DimensionError& e) {
    throw ShapeError(e.what(), 8);
  }
  return p;
}

}  // namespace panoptic
