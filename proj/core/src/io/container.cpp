#include "vtp/io/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "vtp/error.hpp"

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace vtp::io {

namespace {

DType parse_dtype(const std::string& s) {
  if (s == "u8") return DType::kU8;
  if (s == "i64") return DType::kI64;
  if (s == "f32") return DType::kF32;
  if (s == "f64") return DType::kF64;
  fail(ErrorCode::kCorrupt, "unknown dtype '" + s + "'");
}

template <typename T>
Array make_typed(std::string name, std::vector<int64_t> shape, std::span<const T> values, DType dtype) {
  int64_t n = 1;
  for (auto d : shape) n *= d;
  require(n == static_cast<int64_t>(values.size()), ErrorCode::kShapeMismatch, "array '" + name + "' size/shape");
  Array a;
  a.name = std::move(name);
  a.dtype = dtype;
  a.shape = std::move(shape);
  a.bytes.resize(values.size() * sizeof(T));
  if (!values.empty()) std::memcpy(a.bytes.data(), values.data(), a.bytes.size());
  return a;
}

template <typename T>
std::vector<T> read_as(const Array& a, DType expect) {
  require(a.dtype == expect, ErrorCode::kCorrupt,
          "array '" + a.name + "' has dtype " + std::string(dtype_name(a.dtype)) + ", expected " +
              std::string(dtype_name(expect)));
  std::vector<T> out(a.bytes.size() / sizeof(T));
  if (!out.empty()) std::memcpy(out.data(), a.bytes.data(), a.bytes.size());
  return out;
}

}  // namespace

std::string_view dtype_name(DType d) {
  switch (d) {
    case DType::kU8: return "u8";
    case DType::kI64: return "i64";
    case DType::kF32: return "f32";
    case DType::kF64: return "f64";
  }
  return "?";
}

size_t dtype_size(DType d) {
  switch (d) {
    case DType::kU8: return 1;
    case DType::kI64: return 8;
    case DType::kF32: return 4;
    case DType::kF64: return 8;
  }
  return 0;
}

int64_t Array::count() const {
  int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::vector<double> Array::as_f64() const { return read_as<double>(*this, DType::kF64); }
std::vector<float> Array::as_f32() const { return read_as<float>(*this, DType::kF32); }
std::vector<int64_t> Array::as_i64() const { return read_as<int64_t>(*this, DType::kI64); }

Array make_array(std::string name, std::vector<int64_t> shape, std::span<const double> values) {
  return make_typed(std::move(name), std::move(shape), values, DType::kF64);
}
Array make_array(std::string name, std::vector<int64_t> shape, std::span<const float> values) {
  return make_typed(std::move(name), std::move(shape), values, DType::kF32);
}
Array make_array(std::string name, std::vector<int64_t> shape, std::span<const int64_t> values) {
  return make_typed(std::move(name), std::move(shape), values, DType::kI64);
}
Array make_array(std::string name, std::vector<int64_t> shape, std::span<const std::uint8_t> values) {
  return make_typed(std::move(name), std::move(shape), values, DType::kU8);
}

const Array& Container::get(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return a;
  fail(ErrorCode::kCorrupt, "container has no array '" + name + "'");
}

bool Container::has(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return true;
  return false;
}

void write_container(const std::filesystem::path& path, const Container& c) {
  require(c.magic.size() == 8, ErrorCode::kInvalidArgument, "container magic must be 8 bytes");
  nlohmann::json header;
  header["meta"] = c.meta;
  header["arrays"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& a : c.arrays) {
    require(static_cast<size_t>(a.count()) * dtype_size(a.dtype) == a.bytes.size(), ErrorCode::kShapeMismatch,
            "array '" + a.name + "' payload does not match its shape");
    header["arrays"].push_back({{"name", a.name},
                                {"dtype", dtype_name(a.dtype)},
                                {"shape", a.shape},
                                {"offset", offset},
                                {"nbytes", a.bytes.size()}});
    offset += a.bytes.size();
  }
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
  const std::uint32_t version = kContainerVersion, reserved = 0;
  const std::uint64_t hlen = text.size();
  os.write(c.magic.data(), 8);
  os.write(reinterpret_cast<const char*>(&version), 4);
  os.write(reinterpret_cast<const char*>(&reserved), 4);
  os.write(reinterpret_cast<const char*>(&hlen), 8);
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& a : c.arrays)
    os.write(reinterpret_cast<const char*>(a.bytes.data()), static_cast<std::streamsize>(a.bytes.size()));
  os.flush();
  if (!os) fail(ErrorCode::kIo, "write failed for '" + path.string() + "'");
}

Container read_container(const std::filesystem::path& path, const std::string& expected_magic) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::kIo, "cannot open '" + path.string() + "' for reading");
  is.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::uint64_t>(is.tellg());
  is.seekg(0);
  require(file_size >= 24, ErrorCode::kCorrupt, "'" + path.string() + "' is truncated");

  Container c;
  c.magic.resize(8);
  std::uint32_t version = 0, reserved = 0;
  std::uint64_t hlen = 0;
  is.read(c.magic.data(), 8);
  is.read(reinterpret_cast<char*>(&version), 4);
  is.read(reinterpret_cast<char*>(&reserved), 4);
  is.read(reinterpret_cast<char*>(&hlen), 8);
  if (!expected_magic.empty() && c.magic != expected_magic)
    fail(ErrorCode::kCorrupt, "'" + path.string() + "' has magic '" + c.magic + "', expected '" + expected_magic + "'");
  require(version == kContainerVersion, ErrorCode::kCorrupt,
          "'" + path.string() + "' has unsupported version " + std::to_string(version));
  require(24 + hlen <= file_size, ErrorCode::kCorrupt, "'" + path.string() + "' header exceeds file");

  std::string text(hlen, '\0');
  is.read(text.data(), static_cast<std::streamsize>(hlen));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kCorrupt, "'" + path.string() + "' header: " + e.what());
  }
  c.meta = header.value("meta", nlohmann::json::object());
  const std::uint64_t data_start = 24 + hlen;
  for (const auto& entry : header.at("arrays")) {
    Array a;
    a.name = entry.at("name").get<std::string>();
    a.dtype = parse_dtype(entry.at("dtype").get<std::string>());
    a.shape = entry.at("shape").get<std::vector<int64_t>>();
    const auto offset = entry.at("offset").get<std::uint64_t>();
    const auto nbytes = entry.at("nbytes").get<std::uint64_t>();
    require(static_cast<std::uint64_t>(a.count()) * dtype_size(a.dtype) == nbytes, ErrorCode::kCorrupt,
            "array '" + a.name + "' size does not match its shape");
    require(data_start + offset + nbytes <= file_size, ErrorCode::kCorrupt,
            "array '" + a.name + "' extends past end of '" + path.string() + "'");
    a.bytes.resize(nbytes);
    is.seekg(static_cast<std::streamoff>(data_start + offset));
    is.read(reinterpret_cast<char*>(a.bytes.data()), static_cast<std::streamsize>(nbytes));
    if (!is) fail(ErrorCode::kIo, "read failed for '" + path.string() + "'");
    c.arrays.push_back(std::move(a));
  }
  return c;
}

}  // namespace vtp::io
