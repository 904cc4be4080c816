#include "frontdoor/image_io.hpp"

#include "frontdoor/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

namespace frontdoor {

std::uint8_t quantize_u8(double v) {
  return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
}

namespace {

std::string next_token(std::istream& in) {
  std::string tok;
  char ch;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(ch);
  }
  return tok;
}

Index parse_dim(const std::string& tok, const std::filesystem::path& path) {
  try {
    std::size_t used = 0;
    const long v = std::stol(tok, &used);
    if (used == tok.size() && v > 0) return static_cast<Index>(v);
  } catch (const std::exception&) {
  }
  throw IoError("ppm " + path.string() + ": bad header field '" + tok + "'");
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("ppm: cannot open " + path.string());
  if (next_token(in) != "P6") throw IoError("ppm " + path.string() + ": not a binary P6 file");
  const Index w = parse_dim(next_token(in), path);
  const Index h = parse_dim(next_token(in), path);
  if (parse_dim(next_token(in), path) != 255) throw IoError("ppm " + path.string() + ": only maxval 255 supported");
  std::string bytes(static_cast<std::size_t>(w * h * 3), '\0');
  if (!in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
    throw IoError("ppm " + path.string() + ": truncated pixel data");
  }
  Image img(3, h, w);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      for (Index c = 0; c < 3; ++c)
        img(c, y, x) = static_cast<unsigned char>(bytes[static_cast<std::size_t>((y * w + x) * 3 + c)]) / 255.0;
  return img;
}

void write_ppm(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 3) throw DimensionError("ppm: expected a 3-channel image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("ppm: cannot open " + path.string() + " for writing");
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  std::string bytes(static_cast<std::size_t>(img.width * img.height * 3), '\0');
  for (Index y = 0; y < img.height; ++y)
    for (Index x = 0; x < img.width; ++x)
      for (Index c = 0; c < 3; ++c)
        bytes[static_cast<std::size_t>((y * img.width + x) * 3 + c)] = static_cast<char>(quantize_u8(img(c, y, x)));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("ppm: write failed for " + path.string());
}

}  // namespace frontdoor
