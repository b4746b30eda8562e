#pragma once

#include <array>
#include <filesystem>
#include <vector>

namespace dmpad::geometry {

inline constexpr int kNumLandmarks = 98;

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct FrameSize {
  int width = 0;
  int height = 0;
  bool operator==(const FrameSize&) const = default;
};

/// 98-point WFLW layout (image-left first):
///   contour 0-32 (16 = chin), left brow 33-41, right brow 42-50,
///   nose bridge 51-54 (54 = tip), nose base 55-59 (55/59 = wings),
///   left eye 60-67, right eye 68-75, outer lip 76-87, inner lip 88-95,
///   pupils 96 (left) and 97 (right).
namespace wflw {
inline constexpr int kContourFirst = 0, kContourLast = 32, kChin = 16;
inline constexpr int kLeftBrowFirst = 33, kLeftBrowLast = 41;
inline constexpr int kRightBrowFirst = 42, kRightBrowLast = 50;
inline constexpr int kNoseFirst = 51, kNoseLast = 59, kNoseTip = 54;
inline constexpr int kNoseWingLeft = 55, kNoseWingRight = 59;
inline constexpr int kLeftEyeFirst = 60, kLeftEyeLast = 67;
inline constexpr int kRightEyeFirst = 68, kRightEyeLast = 75;
inline constexpr int kMouthOuterFirst = 76, kMouthOuterLast = 87;
inline constexpr int kMouthFirst = 76, kMouthLast = 95;
inline constexpr int kLeftPupil = 96, kRightPupil = 97;
}  // namespace wflw

struct LandmarkSet {
  std::vector<Point> points;  // kNumLandmarks entries
  FrameSize frame;

  /// Throws ValidationError if the count or any coordinate is out of range.
  void validate() const;
};

/// Maps landmarks from their frame to `target` by independent width/height
/// scale factors; results are clamped into [0, W - eps] x [0, H - eps].
LandmarkSet rescale_landmarks(const LandmarkSet& lm, FrameSize target);

/// Sidecar text format: one "x y" line per landmark.
LandmarkSet read_landmarks(const std::filesystem::path& path, FrameSize frame);
void write_landmarks(const std::filesystem::path& path, const LandmarkSet& lm);

}  // namespace dmpad::geometry
