#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace cvos::image {

struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;  // interleaved, row-major
};

struct IndexedImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> index;
};

using Palette = std::vector<std::array<std::uint8_t, 3>>;

// The 256-entry colour map used by DAVIS/PASCAL annotation files.
const Palette& davis_palette();

// Reads PNG or JPEG (chosen by file signature) as 8-bit RGB.
RgbImage read_rgb(const std::filesystem::path& path);
void write_png_rgb(const std::filesystem::path& path, const RgbImage& img);

// Palette PNGs yield raw indices; grey PNGs yield grey levels; RGB PNGs are
// mapped through the DAVIS palette and fail on unknown colours.
IndexedImage read_indexed_png(const std::filesystem::path& path);
void write_indexed_png(const std::filesystem::path& path, const IndexedImage& img,
                       const Palette& palette = davis_palette());

}  // namespace cvos::image
