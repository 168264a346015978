#include "mate/data/features.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "mate/data/errors.hpp"

namespace mate::data {

namespace {

constexpr std::array<char, 4> kMagic = {'M', 'A', 'T', 'F'};
constexpr std::size_t kHeaderBytes = 12;

std::uint32_t load_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void store_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

}  // namespace

AudioFeatures read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open feature file " + path.string());
  }
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic.data(), 4) != 0) {
    throw DataError("not a MATF file: " + path.string());
  }
  if (bytes.size() < kHeaderBytes) {
    throw DataError("corrupt feature file: " + path.string() + " (short header)");
  }
  const std::uint64_t rows = load_u32(bytes.data() + 4);
  const std::uint64_t cols = load_u32(bytes.data() + 8);
  const std::uint64_t expected = kHeaderBytes + rows * cols * 4;
  if (bytes.size() != expected) {
    throw DataError("corrupt feature file: " + path.string() + " (header says " +
                    std::to_string(rows) + "x" + std::to_string(cols) + ", payload has " +
                    std::to_string((bytes.size() - kHeaderBytes) / 4) + " floats)");
  }
  if (rows == 0 || cols == 0) {
    throw DataError("corrupt feature file: " + path.string() + " (empty matrix)");
  }
  AudioFeatures f{num::Tensor::matrix(rows, cols)};
  const unsigned char* p = bytes.data() + kHeaderBytes;
  for (std::size_t i = 0; i < f.values.size(); ++i, p += 4) {
    const float v = std::bit_cast<float>(load_u32(p));
    if (!std::isfinite(v)) {
      throw DataError("corrupt feature file: " + path.string() + " (non-finite value)");
    }
    f.values[i] = static_cast<double>(v);
  }
  return f;
}

void write_features(const std::filesystem::path& path, const AudioFeatures& features) {
  std::vector<unsigned char> bytes(kMagic.begin(), kMagic.end());
  bytes.reserve(kHeaderBytes + features.values.size() * 4);
  store_u32(bytes, static_cast<std::uint32_t>(features.frames()));
  store_u32(bytes, static_cast<std::uint32_t>(features.dims()));
  for (double v : features.values.values()) {
    store_u32(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("cannot write feature file " + path.string());
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace mate::data
