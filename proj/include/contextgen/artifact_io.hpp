#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace contextgen {

/// Binary PGM (P5), one byte per pixel, maxval 255.
void write_pgm(const std::filesystem::path& path, int width, int height,
               const std::vector<std::uint8_t>& gray);

/// Binary PPM (P6), three bytes per pixel.
void write_ppm(const std::filesystem::path& path, int width, int height,
               const std::vector<std::array<std::uint8_t, 3>>& rgb);

void write_text(const std::filesystem::path& path, const std::string& contents);

/// Shortest round-trip decimal form; deterministic across runs.
std::string format_double(double v);

std::uint64_t fnv1a64_file(const std::filesystem::path& path);

/// Distinct flat color for instance id out of n (HSV wheel).
std::array<std::uint8_t, 3> instance_color(int id, int n);

}  // namespace contextgen
