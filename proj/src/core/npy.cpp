#include "core/npy.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <regex>
#include <string>

#include "core/error.hpp"

static_assert(std::endian::native == std::endian::little, "NPY I/O assumes a little-endian host");

namespace repalign::npy {
namespace {

constexpr char kMagic[] = "\x93NUMPY";

std::string header_value(const std::string& header, const std::string& key, const std::filesystem::path& path) {
  // Values are either quoted strings, True/False, or a parenthesised tuple.
  std::regex re("['\"]" + key + "['\"]\\s*:\\s*('[^']*'|\"[^\"]*\"|True|False|\\([^)]*\\))");
  std::smatch m;
  if (!std::regex_search(header, m, re)) fail(Errc::format, path.string() + ": npy header lacks '" + key + "'");
  return m[1].str();
}

}  // namespace

Array2D read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open " + path.string());

  char magic[6];
  unsigned char version[2];
  in.read(magic, 6);
  in.read(reinterpret_cast<char*>(version), 2);
  if (!in || std::memcmp(magic, kMagic, 6) != 0) fail(Errc::format, path.string() + ": not an npy file");

  std::uint32_t header_len = 0;
  if (version[0] == 1) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    header_len = b[0] | (b[1] << 8);
  } else if (version[0] == 2 || version[0] == 3) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    header_len = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  } else {
    fail(Errc::format, path.string() + ": unsupported npy version " + std::to_string(version[0]));
  }
  std::string header(header_len, '\0');
  in.read(header.data(), header_len);
  if (!in) fail(Errc::format, path.string() + ": truncated npy header");

  std::string descr = header_value(header, "descr", path);
  std::string fortran = header_value(header, "fortran_order", path);
  std::string shape = header_value(header, "shape", path);

  descr = descr.substr(1, descr.size() - 2);
  std::size_t item_size = 0;
  if (descr == "<f8") {
    item_size = 8;
  } else if (descr == "<f4") {
    item_size = 4;
  } else {
    fail(Errc::format, path.string() + ": unsupported dtype '" + descr + "' (need <f8 or <f4)");
  }
  if (fortran != "False") fail(Errc::format, path.string() + ": Fortran-ordered arrays are not supported");

  std::vector<std::size_t> dims;
  std::regex num("\\d+");
  for (auto it = std::sregex_iterator(shape.begin(), shape.end(), num); it != std::sregex_iterator(); ++it)
    dims.push_back(std::stoull(it->str()));

  Array2D out;
  if (dims.size() == 1) {
    out.rows = 1;
    out.cols = dims[0];
  } else if (dims.size() == 2) {
    out.rows = dims[0];
    out.cols = dims[1];
  } else {
    fail(Errc::format, path.string() + ": expected a 1-D or 2-D array, shape is " + shape);
  }

  const std::size_t count = out.rows * out.cols;
  out.values.resize(count);
  if (item_size == 8) {
    in.read(reinterpret_cast<char*>(out.values.data()), static_cast<std::streamsize>(count * 8));
  } else {
    std::vector<float> tmp(count);
    in.read(reinterpret_cast<char*>(tmp.data()), static_cast<std::streamsize>(count * 4));
    for (std::size_t i = 0; i < count; ++i) out.values[i] = tmp[i];
  }
  if (!in) fail(Errc::format, path.string() + ": data shorter than declared shape " + shape);
  return out;
}

void write(const std::filesystem::path& path, std::size_t rows, std::size_t cols, std::span<const double> values) {
  if (values.size() != rows * cols) fail(Errc::invalid_argument, "npy::write: value count does not match shape");

  std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': (" + std::to_string(rows) + ", " +
                       std::to_string(cols) + "), }";
  // Pad with spaces so the data starts on a 64-byte boundary; newline last.
  const std::size_t preamble = 10;
  std::size_t total = preamble + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header += '\n';
  if (header.size() > 0xffff) fail(Errc::invalid_argument, "npy::write: header too long for format 1.0");

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io, "cannot write " + path.string());
  out.write(kMagic, 6);
  const char version[2] = {1, 0};
  out.write(version, 2);
  const unsigned char len[2] = {static_cast<unsigned char>(header.size() & 0xff),
                                static_cast<unsigned char>(header.size() >> 8)};
  out.write(reinterpret_cast<const char*>(len), 2);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * 8));
  if (!out) fail(Errc::io, "write failed for " + path.string());
}

}  // namespace repalign::npy
