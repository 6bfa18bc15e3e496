#include "gsnet/pgm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "gsnet/checkpoint.hpp"
#include "gsnet/error.hpp"

namespace gsnet {

std::vector<std::uint8_t> encode_pgm(const GrayImage& image) {
  if (image.maxval == 0 || image.maxval > 65535 || image.samples.size() != image.height * image.width) {
    throw InputError("encode_pgm: inconsistent image");
  }
  const std::string header =
      "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n" + std::to_string(image.maxval) + "\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const bool wide = image.maxval > 255;
  out.reserve(out.size() + image.samples.size() * (wide ? 2 : 1));
  for (auto s : image.samples) {
    if (s > image.maxval) throw InputError("encode_pgm: sample exceeds maxval");
    if (wide) out.push_back(static_cast<std::uint8_t>(s >> 8));
    out.push_back(static_cast<std::uint8_t>(s & 0xFF));
  }
  return out;
}

GrayImage decode_pgm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&]() -> std::size_t {
    skip_space();
    std::size_t v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      any = true;
    }
    if (!any) throw IoError("malformed PGM header");
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw IoError("not a binary PGM (P5)");
  pos = 2;
  GrayImage img;
  img.width = read_uint();
  img.height = read_uint();
  img.maxval = static_cast<std::uint32_t>(read_uint());
  if (img.maxval == 0 || img.maxval > 65535) throw IoError("PGM maxval out of range");
  ++pos;  // single whitespace before raster
  const bool wide = img.maxval > 255;
  const std::size_t need = img.width * img.height * (wide ? 2 : 1);
  if (pos + need > bytes.size()) throw IoError("PGM raster truncated");
  img.samples.resize(img.width * img.height);
  for (auto& s : img.samples) {
    if (wide) {
      s = static_cast<std::uint16_t>((bytes[pos] << 8) | bytes[pos + 1]);
      pos += 2;
    } else {
      s = bytes[pos++];
    }
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) { write_file_atomic(path, encode_pgm(image)); }

GrayImage read_pgm(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  try {
    return decode_pgm(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

GrayImage quantize16(std::size_t height, std::size_t width, std::span<const double> pixels) {
  GrayImage img{height, width, 65535, {}};
  img.samples.reserve(pixels.size());
  for (double p : pixels) {
    const double c = std::clamp(p, 0.0, 1.0);
    img.samples.push_back(static_cast<std::uint16_t>(std::lround(c * 65535.0)));
  }
  return img;
}

std::vector<double> dequantize(const GrayImage& image) {
  std::vector<double> out;
  out.reserve(image.samples.size());
  const double inv = 1.0 / static_cast<double>(image.maxval);
  for (auto s : image.samples) out.push_back(static_cast<double>(s) * inv);
  return out;
}

}  // namespace gsnet
