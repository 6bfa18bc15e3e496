#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace gsnet {

struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::uint32_t maxval = 0;
  std::vector<std::uint16_t> samples;  // row-major
};

// Binary PGM (P5). 16-bit samples are big-endian per the PGM format.
std::vector<std::uint8_t> encode_pgm(const GrayImage& image);
GrayImage decode_pgm(std::span<const std::uint8_t> bytes);

void write_pgm(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_pgm(const std::filesystem::path& path);

// [0,1] reals <-> 16-bit samples (round to nearest, maxval 65535).
GrayImage quantize16(std::size_t height, std::size_t width, std::span<const double> pixels);
std::vector<double> dequantize(const GrayImage& image);

}  // namespace gsnet
