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

// PANC binary tensor files.
//
// Layout, all little-endian:
//   "PANC" | u16 version | u8 dtype | u8 rank | u32 dims[rank] | payload
// dtype: 0 = f32, 1 = f64, 2 = u32. Payload is row-major.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "panoptic/numerics.hpp"

namespace panoptic {

inline constexpr char kPancMagic[4] = {'P', 'A', 'N', 'C'};
inline constexpr std::uint16_t kPancVersion = 1;

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1, kU32 = 2 };

struct RawTensor {
  DType dtype = DType::kF64;
  std::vector<std::uint32_t> dims;
  std::variant<std::vector<float>, std::vector<double>, std::vector<std::uint32_t>> payload;

  std::size_t element_count() const;
};

std::vector<std::uint8_t> encode_panc(const RawTensor& t);
/// Throws FormatError with the byte offset of the first inconsistency.
RawTensor decode_panc(const std::vector<std::uint8_t>& bytes);

void write_panc(const std::filesystem::path& path, const RawTensor& t);
RawTensor read_panc(const std::filesystem::path& path);

RawTensor to_raw(const Tensor3& t);
RawTensor to_raw(const Matrix& m);
RawTensor to_raw(const LabelMap& m);
RawTensor to_raw(const std::vector<double>& v);

Tensor3 tensor3_from_raw(const RawTensor& raw);
Matrix matrix_from_raw(const RawTensor& raw);
LabelMap labels_from_raw(const RawTensor& raw);
std::vector<double> vector_from_raw(const RawTensor& raw);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace panoptic
