#pragma once

#include <array>
#include <optional>
#include <string_view>

#include "dmpad/core/image.hpp"
#include "dmpad/geometry/landmarks.hpp"

namespace dmpad::geometry {

inline constexpr int kNumRegions = 7;

/// Canonical region order. Fusion concatenates patch embeddings in this order.
enum class Region : int { forehead, left_eye, right_eye, left_cheek, nose, right_cheek, mouth_chin };

inline constexpr std::array<Region, kNumRegions> kAllRegions = {
    Region::forehead, Region::left_eye,    Region::right_eye, Region::left_cheek,
    Region::nose,     Region::right_cheek, Region::mouth_chin};

std::string_view region_name(Region r);
std::optional<Region> region_from_name(std::string_view name);

/// Half-open integer pixel box [x0, x1) x [y0, y1).
struct Box {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  int area() const { return width() * height(); }
  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
  bool operator==(const Box&) const = default;
};

struct PatchRegion {
  Region name;
  Box box;
};

struct PatchSet {
  std::array<PatchRegion, kNumRegions> regions;
  FrameSize frame;

  const PatchRegion& operator[](Region r) const { return regions[static_cast<int>(r)]; }
};

inline constexpr int kMinBoxSide = 8;
inline constexpr double kGroupPadding = 0.15;
inline constexpr double kForeheadExtent = 0.6;

/// Seven axis-aligned regions from a 98-point landmark set:
///  - eyes, nose, mouth_chin: bounding box of the index group padded by 15% of
///    its diagonal on every side; mouth_chin also reaches down to the chin point;
///  - cheeks: from the face contour to the nose wing, eye bottom to mouth top;
///  - forehead: eyebrow span, upward by 0.6 * (nose tip y - eyebrow top y).
/// Boxes are clamped to the frame, then grown symmetrically to at least 8x8.
/// Throws ValidationError on degenerate (coincident or collinear) landmarks.
PatchSet derive_patch_regions(const LandmarkSet& lm);

/// Same rules before clamping and min-size enforcement (used by tests).
PatchSet derive_patch_regions_unclamped(const LandmarkSet& lm);

/// Copy of `img` with region outlines drawn in per-region colors.
Image draw_patch_boxes(const Image& img, const PatchSet& patches);

}  // namespace dmpad::geometry
