#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace ssecam {

/// 8-bit raster, interleaved channels (1 for PGM, 3 for PPM).
struct Raster8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
};

/// Binary PPM (P6) / PGM (P5), maxval 255. Errors throw IoError.
void write_ppm(const std::filesystem::path& path, const Raster8& image);
void write_pgm(const std::filesystem::path& path, const Raster8& image);
Raster8 read_ppm(const std::filesystem::path& path);
Raster8 read_pgm(const std::filesystem::path& path);

}  // namespace ssecam
