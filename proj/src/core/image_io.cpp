#include <algorithm>
#include <cmath>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "dmpad/core/error.hpp"
#include "dmpad/core/image.hpp"

namespace dmpad {

Image read_png(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw RuntimeError("cannot decode image: " + path.string());
  Image img(bgr.cols, bgr.rows, 3);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = row[x][2 - c] / 255.0f;
    }
  }
  return img;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 3 && img.channels != 1) {
    throw RuntimeError("write_png expects 1 or 3 channels");
  }
  cv::Mat out(img.height, img.width, img.channels == 3 ? CV_8UC3 : CV_8UC1);
  for (int y = 0; y < img.height; ++y) {
    auto* row = out.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        const float v = std::clamp(img.at(x, y, c), 0.0f, 1.0f);
        const int dst_c = img.channels == 3 ? 2 - c : 0;
        row[x * img.channels + dst_c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
    }
  }
  if (!cv::imwrite(path.string(), out)) throw RuntimeError("cannot write image: " + path.string());
}

std::pair<int, int> probe_image_size(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw RuntimeError("cannot decode image: " + path.string());
  return {m.cols, m.rows};
}

}  // namespace dmpad
