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

#include "panoptic/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace panoptic {
namespace {

constexpr std::size_t kHeaderFixed = 8;  // magic + version + dtype + rank

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
  return v;
}

std::size_t dtype_size(DType d) { return d == DType::kF64 ? 8 : 4; }

std::size_t product(const std::vector<std::uint32_t>& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

}  // namespace

std::size_t RawTensor::element_count() const { return product(dims); }

std::vector<std::uint8_t> encode_panc(const RawTensor& t) {
  if (t.dims.size() > 255) throw FormatError("rank exceeds 255");
  const std::size_t n = t.element_count();
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderFixed + 4 * t.dims.size() + n * dtype_size(t.dtype));
  out.insert(out.end(), std::begin(kPancMagic), std::end(kPancMagic));
  put_u16(out, kPancVersion);
  out.push_back(static_cast<std::uint8_t>(t.dtype));
  out.push_back(static_cast<std::uint8_t>(t.dims.size()));
  for (auto d : t.dims) put_u32(out, d);

  switch (t.dtype) {
    case DType::kF32: {
      const auto& v = std::get<std::vector<float>>(t.payload);
      if (v.size() != n) throw FormatError("f32 payload length does not match dims");
      for (float x : v) put_u32(out, std::bit_cast<std::uint32_t>(x));
      break;
    }
    case DType::kF64: {
      const auto& v = std::get<std::vector<double>>(t.payload);
      if (v.size() != n) throw FormatError("f64 payload length does not match dims");
      for (double x : v) put_u64(out, std::bit_cast<std::uint64_t>(x));
      break;
    }
    case DType::kU32: {
      const auto& v = std::get<std::vector<std::uint32_t>>(t.payload);
      if (v.size() != n) throw FormatError("u32 payload length does not match dims");
      for (auto x : v) put_u32(out, x);
      break;
    }
  }
  return out;
}

RawTensor decode_panc(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kHeaderFixed) throw FormatError("truncated PANC header", bytes.size());
  if (std::memcmp(bytes.data(), kPancMagic, 4) != 0) throw FormatError("bad PANC magic", 0);
  const std::uint16_t version = std::uint16_t(bytes[4]) | (std::uint16_t(bytes[5]) << 8);
  if (version != kPancVersion) {
    throw FormatError("unsupported PANC version " + std::to_string(version), 4);
  }
  const std::uint8_t dtype_code = bytes[6];
  if (dtype_code > 2) throw FormatError("unknown dtype code " + std::to_string(dtype_code), 6);
  RawTensor t;
  t.dtype = static_cast<DType>(dtype_code);
  const std::size_t rank = bytes[7];
  std::size_t off = kHeaderFixed;
  if (bytes.size() < off + 4 * rank) throw FormatError("truncated PANC dims", bytes.size());
  for (std::size_t i = 0; i < rank; ++i, off += 4) t.dims.push_back(get_u32(bytes.data() + off));

  const std::size_t n = t.element_count();
  const std::size_t need = n * dtype_size(t.dtype);
  if (bytes.size() - off < need) {
    throw FormatError("truncated PANC payload: need " + std::to_string(need) + " bytes, have " +
                          std::to_string(bytes.size() - off),
                      bytes.size());
  }
  if (bytes.size() - off > need) throw FormatError("trailing bytes after PANC payload", off + need);

  const std::uint8_t* p = bytes.data() + off;
  switch (t.dtype) {
    case DType::kF32: {
      std::vector<float> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = std::bit_cast<float>(get_u32(p + 4 * i));
      t.payload = std::move(v);
      break;
    }
    case DType::kF64: {
      std::vector<double> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = std::bit_cast<double>(get_u64(p + 8 * i));
      t.payload = std::move(v);
      break;
    }
    case DType::kU32: {
      std::vector<std::uint32_t> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = get_u32(p + 4 * i);
      t.payload = std::move(v);
      break;
    }
  }
  return t;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_panc(const std::filesystem::path& path, const RawTensor& t) {
  write_file_bytes(path, encode_panc(t));
}

RawTensor read_panc(const std::filesystem::path& path) {
  try {
    return decode_panc(read_file_bytes(path));
  } catch (const ShapeError&) {
    throw;
  } catch (const FormatError& e) {
    throw FormatError(path.filename().string() + ": " + e.what());
  }
}

RawTensor to_raw(const Tensor3& t) {
  return {DType::kF64,
          {std::uint32_t(t.height()), std::uint32_t(t.width()), std::uint32_t(t.channels())},
          t.data()};
}

RawTensor to_raw(const Matrix& m) {
  return {DType::kF64, {std::uint32_t(m.rows()), std::uint32_t(m.cols())}, m.data()};
}

RawTensor to_raw(const LabelMap& m) {
  return {DType::kU32, {std::uint32_t(m.height()), std::uint32_t(m.width())}, m.data()};
}

RawTensor to_raw(const std::vector<double>& v) {
  return {DType::kF64, {std::uint32_t(v.size())}, v};
}

namespace {

std::vector<double> as_f64(const RawTensor& raw) {
  if (raw.dtype == DType::kF64) return std::get<std::vector<double>>(raw.payload);
  if (raw.dtype == DType::kF32) {
    const auto& f = std::get<std::vector<float>>(raw.payload);
    return {f.begin(), f.end()};
  }
  throw FormatError("expected a floating-point tensor", 6);
}

void expect_rank(const RawTensor& raw, std::size_t rank) {
  if (raw.dims.size() != rank) {
    throw ShapeError("expected rank " + std::to_string(rank) + ", got " +
                         std::to_string(raw.dims.size()),
                     7);
  }
}

}  // namespace

Tensor3 tensor3_from_raw(const RawTensor& raw) {
  expect_rank(raw, 3);
  return Tensor3(raw.dims[0], raw.dims[1], raw.dims[2], as_f64(raw));
}

Matrix matrix_from_raw(const RawTensor& raw) {
  expect_rank(raw, 2);
  return Matrix(raw.dims[0], raw.dims[1], as_f64(raw));
}

LabelMap labels_from_raw(const RawTensor& raw) {
  expect_rank(raw, 2);
  if (raw.dtype != DType::kU32) throw FormatError("expected a u32 label grid", 6);
  return LabelMap(raw.dims[0], raw.dims[1], std::get<std::vector<std::uint32_t>>(raw.payload));
}

std::vector<double> vector_from_raw(const RawTensor& raw) {
  expect_rank(raw, 1);
  return as_f64(raw);
}

}  // namespace panoptic
