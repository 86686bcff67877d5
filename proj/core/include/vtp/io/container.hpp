#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

namespace vtp::io {

// Self-describing binary container.
//
//   offset  size  field
//   0       8     magic (ASCII, e.g. "VTPEPIS1")
//   8       4     format version, uint32 little-endian (currently 1)
//   12      4     reserved, zero
//   16      8     header length H, uint64 little-endian
//   24      H     header: UTF-8 JSON object
//                   { "meta": {...},
//                     "arrays": [ {"name", "dtype", "shape", "offset", "nbytes"}, ... ] }
//   24+H    ...   array payloads, concatenated in header order; "offset" is
//                 relative to the first payload byte
//
// dtypes: "u8", "i64", "f32", "f64", all little-endian. Reading verifies the
// magic, version, declared sizes against the file length, and that every
// array's nbytes equals prod(shape) * sizeof(dtype).
enum class DType { kU8, kI64, kF32, kF64 };

std::string_view dtype_name(DType d);
size_t dtype_size(DType d);

struct Array {
  std::string name;
  DType dtype = DType::kF64;
  std::vector<int64_t> shape;
  std::vector<std::uint8_t> bytes;

  int64_t count() const;
  std::vector<double> as_f64() const;
  std::vector<float> as_f32() const;
  std::vector<int64_t> as_i64() const;
  std::span<const std::uint8_t> as_u8() const { return bytes; }
};

Array make_array(std::string name, std::vector<int64_t> shape, std::span<const double> values);
Array make_array(std::string name, std::vector<int64_t> shape, std::span<const float> values);
Array make_array(std::string name, std::vector<int64_t> shape, std::span<const int64_t> values);
Array make_array(std::string name, std::vector<int64_t> shape, std::span<const std::uint8_t> values);

struct Container {
  std::string magic;  // exactly 8 characters
  nlohmann::json meta = nlohmann::json::object();
  std::vector<Array> arrays;

  const Array& get(const std::string& name) const;
  bool has(const std::string& name) const;
};

constexpr std::uint32_t kContainerVersion = 1;

void write_container(const std::filesystem::path& path, const Container& c);
// `expected_magic` empty accepts any magic.
Container read_container(const std::filesystem::path& path, const std::string& expected_magic = "");

}  // namespace vtp::io
