#include "contextgen/artifact_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "contextgen/rng.hpp"

namespace contextgen {

namespace {

std::ofstream open_binary(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

void write_pgm(const std::filesystem::path& path, int width, int height,
               const std::vector<std::uint8_t>& gray) {
  if (gray.size() != static_cast<std::size_t>(width) * height)
    throw std::invalid_argument("pixel count does not match dims");
  auto out = open_binary(path);
  out << "P5\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
}

void write_ppm(const std::filesystem::path& path, int width, int height,
               const std::vector<std::array<std::uint8_t, 3>>& rgb) {
  if (rgb.size() != static_cast<std::size_t>(width) * height)
    throw std::invalid_argument("pixel count does not match dims");
  auto out = open_binary(path);
  out << "P6\n" << width << " " << height << "\n255\n";
  for (const auto& px : rgb)
    out.write(reinterpret_cast<const char*>(px.data()), 3);
}

void write_text(const std::filesystem::path& path, const std::string& contents) {
  auto out = open_binary(path);
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

std::uint64_t fnv1a64_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ull;
  char chunk[4096];
  while (in.read(chunk, sizeof chunk) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(chunk[i]);
      h *= 0x100000001b3ull;
    }
    if (!in) break;
  }
  return h;
}

std::array<std::uint8_t, 3> instance_color(int id, int n) {
  const double hue = 360.0 * (id - 1) / std::max(1, n);
  const double s = 0.72, v = 0.95;
  const double c = v * s;
  const double hp = hue / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else { r = c; b = x; }
  const double m = v - c;
  auto to8 = [m](double t) { return static_cast<std::uint8_t>(std::lround((t + m) * 255.0)); };
  return {to8(r), to8(g), to8(b)};
}

}  // namespace contextgen
