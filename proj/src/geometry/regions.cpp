#include "dmpad/geometry/regions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dmpad/core/error.hpp"

namespace dmpad::geometry {

namespace {

constexpr std::array<std::string_view, kNumRegions> kNames = {
    "forehead", "left_eye", "right_eye", "left_cheek", "nose", "right_cheek", "mouth_chin"};

struct FBox {
  double x0 = std::numeric_limits<double>::infinity();
  double y0 = std::numeric_limits<double>::infinity();
  double x1 = -std::numeric_limits<double>::infinity();
  double y1 = -std::numeric_limits<double>::infinity();

  void add(const Point& p) {
    x0 = std::min(x0, p.x);
    y0 = std::min(y0, p.y);
    x1 = std::max(x1, p.x);
    y1 = std::max(y1, p.y);
  }
};

FBox group_box(const LandmarkSet& lm, int first, int last) {
  FBox b;
  for (int i = first; i <= last; ++i) b.add(lm.points[i]);
  return b;
}

FBox padded(FBox b) {
  const double pad = kGroupPadding * std::hypot(b.x1 - b.x0, b.y1 - b.y0);
  return {b.x0 - pad, b.y0 - pad, b.x1 + pad, b.y1 + pad};
}

Box to_int(const FBox& b) {
  Box out{static_cast<int>(std::floor(b.x0)), static_cast<int>(std::floor(b.y0)),
          static_cast<int>(std::ceil(b.x1)), static_cast<int>(std::ceil(b.y1))};
  if (out.x1 <= out.x0) out.x1 = out.x0 + 1;
  if (out.y1 <= out.y0) out.y1 = out.y0 + 1;
  return out;
}

void check_not_degenerate(const LandmarkSet& lm) {
  double mx = 0, my = 0;
  for (const Point& p : lm.points) {
    mx += p.x;
    my += p.y;
  }
  const double n = static_cast<double>(lm.points.size());
  mx /= n;
  my /= n;
  double sxx = 0, syy = 0, sxy = 0;
  for (const Point& p : lm.points) {
    sxx += (p.x - mx) * (p.x - mx);
    syy += (p.y - my) * (p.y - my);
    sxy += (p.x - mx) * (p.y - my);
  }
  sxx /= n;
  syy /= n;
  sxy /= n;
  const double trace = sxx + syy;
  const double det = sxx * syy - sxy * sxy;
  if (trace < 1e-6 || det < 1e-6 * trace * trace) {
    throw ValidationError("degenerate landmarks: points are coincident or collinear");
  }
}

// Clamp one axis of a box to [0, limit) and grow it to at least kMinBoxSide.
void fit_axis(int& lo, int& hi, int limit) {
  lo = std::clamp(lo, 0, limit);
  hi = std::clamp(hi, 0, limit);
  const int min_side = std::min(kMinBoxSide, limit);
  if (hi - lo < min_side) {
    const int missing = min_side - (hi - lo);
    lo -= missing / 2;
    hi += missing - missing / 2;
    if (lo < 0) {
      hi -= lo;
      lo = 0;
    }
    if (hi > limit) {
      lo -= hi - limit;
      hi = limit;
    }
  }
}

}  // namespace

std::string_view region_name(Region r) { return kNames[static_cast<int>(r)]; }

std::optional<Region> region_from_name(std::string_view name) {
  for (int i = 0; i < kNumRegions; ++i) {
    if (kNames[i] == name) return static_cast<Region>(i);
  }
  return std::nullopt;
}

PatchSet derive_patch_regions_unclamped(const LandmarkSet& lm) {
  lm.validate();
  check_not_degenerate(lm);
  namespace w = wflw;
  const auto& pts = lm.points;

  FBox left_eye = group_box(lm, w::kLeftEyeFirst, w::kLeftEyeLast);
  left_eye.add(pts[w::kLeftPupil]);
  FBox right_eye = group_box(lm, w::kRightEyeFirst, w::kRightEyeLast);
  right_eye.add(pts[w::kRightPupil]);
  const FBox nose = group_box(lm, w::kNoseFirst, w::kNoseLast);
  FBox mouth = padded(group_box(lm, w::kMouthFirst, w::kMouthLast));
  mouth.y1 = std::max(mouth.y1, pts[w::kChin].y);

  FBox brows = group_box(lm, w::kLeftBrowFirst, w::kRightBrowLast);
  const double brow_top = brows.y0;
  const double forehead_top =
      std::max(0.0, brow_top - kForeheadExtent * (pts[w::kNoseTip].y - brow_top));
  const FBox forehead{brows.x0, forehead_top, brows.x1, brow_top};

  // Cheeks span vertically from the lower eyelid to the upper lip.
  const FBox outer_mouth = group_box(lm, w::kMouthOuterFirst, w::kMouthOuterLast);
  auto cheek = [&](int eye_first, int eye_last, bool left) {
    const FBox eye = group_box(lm, eye_first, eye_last);
    FBox b;
    b.y0 = eye.y1;
    b.y1 = std::max(outer_mouth.y0, b.y0 + 1.0);
    const int c_first = left ? w::kContourFirst : w::kChin;
    const int c_last = left ? w::kChin : w::kContourLast;
    double edge = left ? std::numeric_limits<double>::infinity()
                       : -std::numeric_limits<double>::infinity();
    bool found = false;
    for (int i = c_first; i <= c_last; ++i) {
      if (pts[i].y < b.y0 || pts[i].y > b.y1) continue;
      edge = left ? std::min(edge, pts[i].x) : std::max(edge, pts[i].x);
      found = true;
    }
    if (!found) {
      for (int i = c_first; i <= c_last; ++i)
        edge = left ? std::min(edge, pts[i].x) : std::max(edge, pts[i].x);
    }
    const double wing = pts[left ? w::kNoseWingLeft : w::kNoseWingRight].x;
    b.x0 = left ? edge : wing;
    b.x1 = left ? wing : edge;
    if (b.x1 < b.x0) std::swap(b.x0, b.x1);
    return b;
  };

  PatchSet out;
  out.frame = lm.frame;
  out.regions = {{
      {Region::forehead, to_int(forehead)},
      {Region::left_eye, to_int(padded(left_eye))},
      {Region::right_eye, to_int(padded(right_eye))},
      {Region::left_cheek, to_int(cheek(w::kLeftEyeFirst, w::kLeftEyeLast, true))},
      {Region::nose, to_int(padded(nose))},
      {Region::right_cheek, to_int(cheek(w::kRightEyeFirst, w::kRightEyeLast, false))},
      {Region::mouth_chin, to_int(mouth)},
  }};
  return out;
}

PatchSet derive_patch_regions(const LandmarkSet& lm) {
  PatchSet out = derive_patch_regions_unclamped(lm);
  for (PatchRegion& r : out.regions) {
    fit_axis(r.box.x0, r.box.x1, lm.frame.width);
    fit_axis(r.box.y0, r.box.y1, lm.frame.height);
  }
  return out;
}

Image draw_patch_boxes(const Image& img, const PatchSet& patches) {
  static constexpr float kColors[kNumRegions][3] = {
      {1.0f, 0.9f, 0.1f}, {0.1f, 0.9f, 0.2f}, {0.1f, 0.6f, 1.0f}, {1.0f, 0.4f, 0.1f},
      {0.9f, 0.1f, 0.9f}, {0.1f, 0.9f, 0.9f}, {1.0f, 0.1f, 0.2f}};
  Image out = img;
  const float sx = static_cast<float>(img.width) / patches.frame.width;
  const float sy = static_cast<float>(img.height) / patches.frame.height;
  for (int r = 0; r < kNumRegions; ++r) {
    const Box& b = patches.regions[r].box;
    const int x0 = std::clamp(static_cast<int>(b.x0 * sx), 0, img.width - 1);
    const int x1 = std::clamp(static_cast<int>(b.x1 * sx) - 1, 0, img.width - 1);
    const int y0 = std::clamp(static_cast<int>(b.y0 * sy), 0, img.height - 1);
    const int y1 = std::clamp(static_cast<int>(b.y1 * sy) - 1, 0, img.height - 1);
    auto paint = [&](int x, int y) {
      for (int c = 0; c < 3 && c < out.channels; ++c) out.at(x, y, c) = kColors[r][c];
    };
    for (int x = x0; x <= x1; ++x) {
      paint(x, y0);
      paint(x, y1);
    }
    for (int y = y0; y <= y1; ++y) {
      paint(x0, y);
      paint(x1, y);
    }
  }
  return out;
}

}  // namespace dmpad::geometry
