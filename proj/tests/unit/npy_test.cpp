#include <gtest/gtest.h>

#include <cstring>
#include <fstream>

#include "core/error.hpp"
#include "core/npy.hpp"
#include "support/fixtures.hpp"

using namespace repalign;

namespace {

void write_raw(const std::filesystem::path& path, const std::string& header_dict, const void* data, std::size_t bytes,
               int version = 1) {
  std::string header = header_dict;
  const std::size_t prefix = version == 1 ? 10 : 12;
  while ((prefix + header.size() + 1) % 64 != 0) header += ' ';
  header += '\n';
  std::ofstream f(path, std::ios::binary);
  f.write("\x93NUMPY", 6);
  f.put(static_cast<char>(version));
  f.put(0);
  if (version == 1) {
    std::uint16_t n = static_cast<std::uint16_t>(header.size());
    f.write(reinterpret_cast<const char*>(&n), 2);
  } else {
    std::uint32_t n = static_cast<std::uint32_t>(header.size());
    f.write(reinterpret_cast<const char*>(&n), 4);
  }
  f << header;
  f.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
}

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return Errc::partial;
}

}  // namespace

TEST(Npy, WriteReadRoundTrip) {
  testkit::TempDir dir;
  std::vector<double> v = {1, 2, 3, 4, 5, 6.5};
  npy::write(dir / "a.npy", 2, 3, v);
  auto a = npy::read(dir / "a.npy");
  EXPECT_EQ(a.rows, 2u);
  EXPECT_EQ(a.cols, 3u);
  EXPECT_EQ(a.values, v);
}

TEST(Npy, HeaderIsAlignedTo64Bytes) {
  testkit::TempDir dir;
  npy::write(dir / "a.npy", 1, 1, std::vector<double>{0.0});
  auto bytes = testkit::read_bytes(dir / "a.npy");
  ASSERT_EQ(bytes.size() % 8, 0u);
  EXPECT_EQ((bytes.size() - 8) % 64, 0u);
  EXPECT_NE(bytes.find("'descr': '<f8'"), std::string::npos);
}

TEST(Npy, ReadsFloat32AndVersion2) {
  testkit::TempDir dir;
  float f[4] = {0.5f, -1.25f, 3.0f, 8.0f};
  write_raw(dir / "f4.npy", "{'descr': '<f4', 'fortran_order': False, 'shape': (2, 2), }", f, sizeof f, 2);
  auto a = npy::read(dir / "f4.npy");
  EXPECT_EQ(a.rows, 2u);
  EXPECT_EQ(a.cols, 2u);
  EXPECT_EQ(a.values, (std::vector<double>{0.5, -1.25, 3.0, 8.0}));
}

TEST(Npy, OneDimensionalLoadsAsSingleRow) {
  testkit::TempDir dir;
  double d[3] = {1, 2, 3};
  write_raw(dir / "v.npy", "{'descr': '<f8', 'fortran_order': False, 'shape': (3,), }", d, sizeof d);
  auto a = npy::read(dir / "v.npy");
  EXPECT_EQ(a.rows, 1u);
  EXPECT_EQ(a.cols, 3u);
}

TEST(Npy, RejectsFortranOrderAndUnsupportedTypes) {
  testkit::TempDir dir;
  double d[4] = {1, 2, 3, 4};
  write_raw(dir / "f.npy", "{'descr': '<f8', 'fortran_order': True, 'shape': (2, 2), }", d, sizeof d);
  EXPECT_EQ(code_of([&] { npy::read(dir / "f.npy"); }), Errc::format);
  write_raw(dir / "i.npy", "{'descr': '<i8', 'fortran_order': False, 'shape': (2, 2), }", d, sizeof d);
  EXPECT_EQ(code_of([&] { npy::read(dir / "i.npy"); }), Errc::format);
}

TEST(Npy, RejectsTruncatedPayload) {
  testkit::TempDir dir;
  double d[3] = {1, 2, 3};
  write_raw(dir / "t.npy", "{'descr': '<f8', 'fortran_order': False, 'shape': (2, 2), }", d, sizeof d);
  EXPECT_EQ(code_of([&] { npy::read(dir / "t.npy"); }), Errc::format);
}

TEST(Npy, RejectsBadMagicAndMissingFile) {
  testkit::TempDir dir;
  std::ofstream(dir / "bad.npy") << "not numpy at all";
  EXPECT_EQ(code_of([&] { npy::read(dir / "bad.npy"); }), Errc::format);
  EXPECT_EQ(code_of([&] { npy::read(dir / "missing.npy"); }), Errc::io);
}
