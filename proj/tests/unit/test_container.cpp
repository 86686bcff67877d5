#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "vtp/error.hpp"
#include "vtp/io/container.hpp"

namespace fs = std::filesystem;
using namespace vtp::io;

namespace {

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "vtp_container_test";
  fs::create_directories(dir);
  return dir / name;
}

Container sample() {
  Container c;
  c.magic = "TESTMAG1";
  c.meta = {{"answer", 42}, {"name", "x"}};
  const std::vector<double> d{1.5, -2.25, 1e-300};
  const std::vector<float> f{0.5f, 3.0f};
  const std::vector<int64_t> i{-7, 1LL << 40};
  const std::vector<std::uint8_t> u{0, 255, 17, 3};
  c.arrays.push_back(make_array("d", {3}, std::span<const double>(d)));
  c.arrays.push_back(make_array("f", {1, 2}, std::span<const float>(f)));
  c.arrays.push_back(make_array("i", {2}, std::span<const int64_t>(i)));
  c.arrays.push_back(make_array("u", {2, 2}, std::span<const std::uint8_t>(u)));
  return c;
}

}  // namespace

TEST(Container, RoundTripIsExact) {
  const auto path = temp_path("rt.bin");
  const Container c = sample();
  write_container(path, c);
  const Container r = read_container(path, "TESTMAG1");
  EXPECT_EQ(r.meta, c.meta);
  ASSERT_EQ(r.arrays.size(), 4u);
  for (size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(r.arrays[k].name, c.arrays[k].name);
    EXPECT_EQ(r.arrays[k].shape, c.arrays[k].shape);
    EXPECT_EQ(r.arrays[k].bytes, c.arrays[k].bytes);
  }
  EXPECT_EQ(r.get("d").as_f64()[2], 1e-300);
  EXPECT_EQ(r.get("i").as_i64()[1], 1LL << 40);
  EXPECT_FALSE(r.has("missing"));
  EXPECT_THROW(r.get("missing"), vtp::Error);
}

TEST(Container, RejectsWrongMagicAndTruncation) {
  const auto path = temp_path("bad.bin");
  write_container(path, sample());
  try {
    read_container(path, "OTHERMAG");
    FAIL();
  } catch (const vtp::Error& e) {
    EXPECT_EQ(e.code(), vtp::ErrorCode::kCorrupt);
  }
  const auto size = fs::file_size(path);
  fs::resize_file(path, size - 3);
  EXPECT_THROW(read_container(path), vtp::Error);
}

TEST(Container, MissingFileNamesPath) {
  try {
    read_container(temp_path("nope.bin"));
    FAIL();
  } catch (const vtp::Error& e) {
    EXPECT_EQ(e.code(), vtp::ErrorCode::kIo);
    EXPECT_NE(std::string(e.what()).find("nope.bin"), std::string::npos);
  }
}
