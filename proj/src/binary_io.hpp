#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "reflex/error.hpp"

namespace reflex::detail {

inline void append_f32_le(std::vector<char>& out, std::span<const float> values) {
  const std::size_t start = out.size();
  out.resize(start + values.size() * 4);
  char* dst = out.data() + start;
  for (float v : values) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
    for (int b = 0; b < 4; ++b) *dst++ = static_cast<char>((bits >> (8 * b)) & 0xffu);
  }
}

inline void read_f32_le(const char* src, std::span<float> out) {
  for (float& v : out) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) {
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(src[b])) << (8 * b);
    }
    v = std::bit_cast<float>(bits);
    src += 4;
  }
}

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::io, "cannot open " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

inline std::string read_text(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

inline void write_file(const std::filesystem::path& path, std::span<const char> bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::io, "cannot write " + path.string());
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) fail(ErrorKind::io, "failed writing " + path.string());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::span<const char>(text.data(), text.size()));
}

}  // namespace reflex::detail
