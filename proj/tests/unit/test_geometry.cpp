#include <doctest.h>

#include <cmath>

#include "../oracles/checks.hpp"
#include "dmpad/core/error.hpp"
#include "dmpad/core/rng.hpp"
#include "dmpad/data/synth.hpp"
#include "dmpad/geometry/landmarks.hpp"
#include "dmpad/geometry/regions.hpp"
#include "dmpad/geometry/resize.hpp"

using namespace dmpad;
using namespace dmpad::geometry;

namespace {

LandmarkSet canonical_face(int size, std::uint64_t seed = 3) {
  Rng rng(seed);
  return data::synth::face_landmarks(data::synth::sample_face(rng, size));
}

LandmarkSet filled(FrameSize frame, Point p) {
  LandmarkSet lm;
  lm.frame = frame;
  lm.points.assign(kNumLandmarks, p);
  return lm;
}

}  // namespace

TEST_CASE("rescale_landmarks follows independent width and height factors") {
  auto lm = filled({512, 512}, {0, 0});
  lm.points[0] = {100, 200};
  const auto out = rescale_landmarks(lm, {256, 256});
  CHECK(out.points[0].x == doctest::Approx(50.0));
  CHECK(out.points[0].y == doctest::Approx(100.0));
  CHECK(out.frame == FrameSize{256, 256});

  const auto same = rescale_landmarks(lm, {512, 512});
  CHECK(same.points[0].x == 100.0);
  CHECK(same.points[0].y == 200.0);

  auto wide = filled({400, 300}, {0, 0});
  const double delta = 0.25;
  wide.points[5] = {400 - delta, 150};
  const auto r = rescale_landmarks(wide, {256, 256});
  CHECK(r.points[5].x == doctest::Approx((400 - delta) * 256.0 / 400.0));
  CHECK(r.points[5].y == doctest::Approx(150 * 256.0 / 300.0));
}

TEST_CASE("rescaled points stay inside the target frame") {
  auto lm = filled({100, 100}, {99.9999, 99.9999});
  const auto r = rescale_landmarks(lm, {10, 10});
  for (const auto& p : r.points) {
    CHECK(p.x < 10.0);
    CHECK(p.y < 10.0);
  }
  CHECK_NOTHROW(r.validate());
}

TEST_CASE("patch regions contain their landmark groups on canonical faces") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto lm = canonical_face(256, seed);
    const auto ps = derive_patch_regions(lm);
    auto inside = [&](Region r, int first, int last) {
      for (int i = first; i <= last; ++i) {
        const auto& p = lm.points[i];
        CHECK(ps[r].box.contains(static_cast<int>(std::floor(p.x)), static_cast<int>(std::floor(p.y))));
      }
    };
    inside(Region::left_eye, wflw::kLeftEyeFirst, wflw::kLeftEyeLast);
    inside(Region::right_eye, wflw::kRightEyeFirst, wflw::kRightEyeLast);
    inside(Region::nose, wflw::kNoseFirst, wflw::kNoseLast);
    inside(Region::mouth_chin, wflw::kMouthFirst, wflw::kMouthLast);
    for (int i = 0; i < kNumRegions; ++i) {
      CHECK(ps.regions[i].name == kAllRegions[i]);
      const Box& b = ps.regions[i].box;
      CHECK(b.x0 >= 0);
      CHECK(b.y0 >= 0);
      CHECK(b.x1 <= 256);
      CHECK(b.y1 <= 256);
      CHECK(b.width() >= kMinBoxSide);
      CHECK(b.height() >= kMinBoxSide);
    }
  }
}

TEST_CASE("forehead top edge follows the 0.6 extent rule") {
  const auto lm = canonical_face(256);
  double brow_top = 1e9;
  for (int i = wflw::kLeftBrowFirst; i <= wflw::kRightBrowLast; ++i) brow_top = std::min(brow_top, lm.points[i].y);
  const double expected = std::max(0.0, brow_top - 0.6 * (lm.points[wflw::kNoseTip].y - brow_top));
  const auto ps = derive_patch_regions(lm);
  CHECK(ps[Region::forehead].box.y0 == static_cast<int>(std::floor(expected)));
  CHECK(ps[Region::forehead].box.y1 == static_cast<int>(std::ceil(brow_top)));
}

TEST_CASE("patch regions are translation-equivariant before clamping") {
  auto lm = canonical_face(256, 5);
  lm.frame = {400, 400};
  auto moved = lm;
  for (auto& p : moved.points) {
    p.x += 10;
    p.y += 10;
  }
  const auto a = derive_patch_regions_unclamped(lm);
  const auto b = derive_patch_regions_unclamped(moved);
  for (int i = 0; i < kNumRegions; ++i) {
    const Box& x = a.regions[i].box;
    const Box& y = b.regions[i].box;
    CHECK(y.x0 == x.x0 + 10);
    CHECK(y.y0 == x.y0 + 10);
    CHECK(y.x1 == x.x1 + 10);
    CHECK(y.y1 == x.y1 + 10);
  }
}

TEST_CASE("patch regions are scale-equivariant up to one pixel of rounding") {
  const auto lm = canonical_face(128, 9);
  const auto big = rescale_landmarks(lm, {256, 256});
  const auto a = derive_patch_regions_unclamped(lm);
  const auto b = derive_patch_regions_unclamped(big);
  for (int i = 0; i < kNumRegions; ++i) {
    const Box& x = a.regions[i].box;
    const Box& y = b.regions[i].box;
    CHECK(std::abs(y.x0 - 2 * x.x0) <= 1);
    CHECK(std::abs(y.y0 - 2 * x.y0) <= 1);
    CHECK(std::abs(y.x1 - 2 * x.x1) <= 1);
    CHECK(std::abs(y.y1 - 2 * x.y1) <= 1);
  }
}

TEST_CASE("degenerate landmarks are rejected") {
  CHECK_THROWS_AS(derive_patch_regions(filled({64, 64}, {10, 10})), ValidationError);
  auto line = filled({64, 64}, {0, 0});
  for (int i = 0; i < kNumLandmarks; ++i) line.points[i] = {i * 0.5, i * 0.5};
  CHECK_THROWS_AS(derive_patch_regions(line), ValidationError);
}

TEST_CASE("boxes near the frame edge are clamped then grown to the minimum size") {
  auto lm = canonical_face(128, 2);
  for (auto& p : lm.points) p.x = std::max(0.0, p.x - 60.0);  // push the face off the left edge
  const auto ps = derive_patch_regions(lm);
  for (const auto& r : ps.regions) {
    CHECK(r.box.x0 >= 0);
    CHECK(r.box.width() >= kMinBoxSide);
    CHECK(r.box.height() >= kMinBoxSide);
  }
}

TEST_CASE("region names round-trip in canonical order") {
  for (auto r : kAllRegions) CHECK(region_from_name(region_name(r)) == r);
  CHECK_FALSE(region_from_name("chin").has_value());
}

TEST_CASE("crop_and_resize of the full frame at native size is an identity copy") {
  Image img(5, 4);
  Rng rng(1);
  for (auto& v : img.pixels) v = static_cast<float>(rng.uniform());
  const auto out = crop_and_resize(img, {0, 0, 5, 4}, 4, 5);
  CHECK(out.pixels == img.pixels);
}

TEST_CASE("bilinear upsampling of a 2x2 checkerboard matches the closed form") {
  // Half-pixel centers: output d samples source (d + 0.5) / 2 - 0.5, clamped to [0, 1].
  const std::vector<float> src{1, 0, 0, 1};
  const auto out = resize_bilinear(src, 2, 2, 4, 4);
  const double coord[4] = {0.0, 0.25, 0.75, 1.0};
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      const double fx = coord[x], fy = coord[y];
      const double v = (1 - fx) * (1 - fy) * 1 + fx * (1 - fy) * 0 + (1 - fx) * fy * 0 + fx * fy * 1;
      CHECK(out[y * 4 + x] == doctest::Approx(v).epsilon(1e-6));
    }
}

TEST_CASE("crop output has exactly the requested shape and keeps channel order") {
  Image img(40, 30);
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x < 40; ++x) {
      img.at(x, y, 0) = 0.1f;
      img.at(x, y, 1) = 0.5f;
      img.at(x, y, 2) = 0.9f;
    }
  const auto out = crop_and_resize(img, {5, 3, 27, 19}, 64, 48);
  CHECK(out.width == 48);
  CHECK(out.height == 64);
  CHECK(out.channels == 3);
  CHECK(out.at(10, 10, 0) == doctest::Approx(0.1f));
  CHECK(out.at(10, 10, 2) == doctest::Approx(0.9f));
  CHECK_THROWS_AS(crop_and_resize(img, {50, 50, 60, 60}, 8, 8), ValidationError);
}

TEST_CASE("landmark rescaling round-trips within 1e-4 px") {
  CHECK(checks::landmark_roundtrip_error(1000, 21) <= 1e-4);
}
