#pragma once

#include <filesystem>
#include <vector>

namespace dmpad {

/// Interleaved (HWC) float image; RGB channel order, values nominally in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<float> pixels;

  Image() = default;
  Image(int w, int h, int c = 3, float fill = 0.0f)
      : width(w), height(h), channels(c), pixels(static_cast<std::size_t>(w) * h * c, fill) {}

  float& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool empty() const { return pixels.empty(); }
};

/// Decodes any 8-bit image OpenCV can read into RGB floats in [0, 1].
Image read_png(const std::filesystem::path& path);
/// Writes an 8-bit RGB PNG (values clamped to [0, 1], rounded to nearest).
void write_png(const std::filesystem::path& path, const Image& img);
/// Size of an image file without keeping the pixels.
std::pair<int, int> probe_image_size(const std::filesystem::path& path);

}  // namespace dmpad
