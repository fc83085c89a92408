#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace collage {

// Plain 8-bit RGB raster. Row-major, tightly packed, 3 channels. Decoded
// images are normalized to this layout regardless of source format.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // width * height * 3 bytes

  bool empty() const { return width <= 0 || height <= 0 || pixels.empty(); }

  std::uint8_t* row(int y) { return pixels.data() + static_cast<std::size_t>(y) * width * 3; }
  const std::uint8_t* row(int y) const {
    return pixels.data() + static_cast<std::size_t>(y) * width * 3;
  }

  static Image solid(int width, int height, std::uint8_t r, std::uint8_t g, std::uint8_t b);
};

// Decoding throws DecodeError; encoding and file IO throw IoError.
Image decode_image(const std::uint8_t* data, std::size_t size);
Image decode_image(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_png(const Image& image);
Image load_image(const std::filesystem::path& path);
void save_png_atomic(const Image& image, const std::filesystem::path& path);

// Rect must lie fully inside the source; throws PreconditionError otherwise.
Image crop(const Image& image, int x, int y, int width, int height);

Image resize(const Image& image, int width, int height);

// Paints a solid rectangle in place, clipped to the image bounds.
void fill_rect(Image& image, int x, int y, int width, int height, std::uint8_t r, std::uint8_t g,
               std::uint8_t b);

// Digest over dimensions and raw pixels; stable across encode round trips.
std::string image_digest(const Image& image);

// Per-channel mean and variance of pixel values, each scaled to [0, 1].
// Layout: mean_r, mean_g, mean_b, var_r, var_g, var_b.
std::array<double, 6> channel_stats(const Image& image);

}  // namespace collage
