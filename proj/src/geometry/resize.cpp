#include "dmpad/geometry/resize.hpp"

#include <algorithm>
#include <cmath>

#include "dmpad/core/error.hpp"

namespace dmpad::geometry {

namespace {

struct Tap {
  int i0, i1;
  float w1;
};

std::vector<Tap> make_taps(int in, int out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int d = 0; d < out; ++d) {
    double s = (d + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    const int i0 = static_cast<int>(std::floor(s));
    const int i1 = std::min(i0 + 1, in - 1);
    taps[d] = {i0, i1, static_cast<float>(s - i0)};
  }
  return taps;
}

// Resamples an interleaved region [x0, x0 + w) x [y0, y0 + h) of a stride-`row_stride` buffer.
void resample(const float* src, int row_stride, int channels, int x0, int y0, int w, int h,
              float* dst, int out_w, int out_h) {
  const auto tx = make_taps(w, out_w);
  const auto ty = make_taps(h, out_h);
  for (int y = 0; y < out_h; ++y) {
    const float* r0 = src + static_cast<std::size_t>(y0 + ty[y].i0) * row_stride;
    const float* r1 = src + static_cast<std::size_t>(y0 + ty[y].i1) * row_stride;
    const float wy = ty[y].w1;
    for (int x = 0; x < out_w; ++x) {
      const int a = (x0 + tx[x].i0) * channels;
      const int b = (x0 + tx[x].i1) * channels;
      const float wx = tx[x].w1;
      for (int c = 0; c < channels; ++c) {
        const float top = r0[a + c] + wx * (r0[b + c] - r0[a + c]);
        const float bot = r1[a + c] + wx * (r1[b + c] - r1[a + c]);
        dst[(static_cast<std::size_t>(y) * out_w + x) * channels + c] = top + wy * (bot - top);
      }
    }
  }
}

}  // namespace

std::vector<float> resize_bilinear(std::span<const float> src, int width, int height,
                                   int out_width, int out_height) {
  if (width < 1 || height < 1 || out_width < 1 || out_height < 1 ||
      src.size() != static_cast<std::size_t>(width) * height) {
    throw ValidationError("resize_bilinear: bad dimensions");
  }
  std::vector<float> out(static_cast<std::size_t>(out_width) * out_height);
  resample(src.data(), width, 1, 0, 0, width, height, out.data(), out_width, out_height);
  return out;
}

Image resize_bilinear(const Image& img, int out_width, int out_height) {
  if (img.empty() || out_width < 1 || out_height < 1) {
    throw ValidationError("resize_bilinear: bad dimensions");
  }
  Image out(out_width, out_height, img.channels);
  resample(img.pixels.data(), img.width * img.channels, img.channels, 0, 0, img.width, img.height,
           out.pixels.data(), out_width, out_height);
  return out;
}

Image crop_and_resize(const Image& img, const Box& box, int out_height, int out_width) {
  const int x0 = std::max(box.x0, 0);
  const int y0 = std::max(box.y0, 0);
  const int x1 = std::min(box.x1, img.width);
  const int y1 = std::min(box.y1, img.height);
  if (x1 <= x0 || y1 <= y0) throw ValidationError("crop region does not intersect the image");
  if (out_width < 1 || out_height < 1) throw ValidationError("crop output size must be positive");
  Image out(out_width, out_height, img.channels);
  resample(img.pixels.data(), img.width * img.channels, img.channels, x0, y0, x1 - x0, y1 - y0,
           out.pixels.data(), out_width, out_height);
  return out;
}

}  // namespace dmpad::geometry
