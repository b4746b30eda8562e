#include "dmpad/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "dmpad/core/error.hpp"

namespace dmpad::data {

namespace fs = std::filesystem;
using geometry::LandmarkSet;
using geometry::Point;
using geometry::Region;

void SynthConfig::validate() const {
  if (n_subjects_live < 1 || n_subjects_attack < 1) throw ValidationError("subject counts must be >= 1");
  if (images_per_subject < 1) throw ValidationError("images_per_subject must be >= 1");
  if (image_size < 64) throw ValidationError("image_size must be >= 64");
  if (artifact_region_count < 1 || artifact_region_count > geometry::kNumRegions) {
    throw ValidationError("artifact_region_count must be in [1, 7]");
  }
  if (!(style_jitter >= 0.0 && style_jitter <= 1.0)) throw ValidationError("style_jitter must be in [0, 1]");
}

namespace synth {

namespace {

constexpr double kPi = std::numbers::pi;

float smooth_edge(double signed_dist_px) {
  // 1 inside, 0 outside, ~1.5 px transition.
  return static_cast<float>(std::clamp(0.5 - signed_dist_px / 1.5, 0.0, 1.0));
}

// Signed distance (px, approximate) to an axis-aligned ellipse.
double ellipse_sd(double x, double y, double cx, double cy, double rx, double ry) {
  const double u = (x - cx) / rx;
  const double v = (y - cy) / ry;
  const double r = std::sqrt(u * u + v * v);
  return (r - 1.0) * std::min(rx, ry);
}

void blend(float* px, const float* color, float alpha) {
  for (int c = 0; c < 3; ++c) px[c] += alpha * (color[c] - px[c]);
}

}  // namespace

FaceGeometry sample_face(Rng& rng, int size) {
  FaceGeometry g;
  g.size = size;
  const double s = size;
  g.cx = s * (0.5 + rng.uniform(-0.025, 0.025));
  g.cy = s * (0.52 + rng.uniform(-0.02, 0.02));
  g.half_w = s * (0.34 + rng.uniform(-0.02, 0.02));
  g.half_h = s * (0.43 + rng.uniform(-0.015, 0.015));
  g.eye_dx = 0.40 + rng.uniform(-0.03, 0.03);
  g.eye_y = -0.14 + rng.uniform(-0.03, 0.03);
  g.eye_w = 0.17 + rng.uniform(-0.02, 0.02);
  g.eye_h = 0.06 + rng.uniform(-0.01, 0.01);
  g.brow_y = g.eye_y - 0.17 + rng.uniform(-0.02, 0.02);
  g.nose_tip_y = 0.22 + rng.uniform(-0.03, 0.03);
  g.nose_base_y = g.nose_tip_y + 0.06;
  g.nose_w = 0.15 + rng.uniform(-0.02, 0.02);
  g.mouth_y = 0.56 + rng.uniform(-0.03, 0.03);
  g.mouth_w = 0.30 + rng.uniform(-0.04, 0.04);
  g.mouth_h = 0.09 + rng.uniform(-0.015, 0.015);
  const float tone = static_cast<float>(rng.uniform(0.35, 0.85));
  g.skin[0] = std::min(1.0f, tone + 0.12f);
  g.skin[1] = tone * 0.82f;
  g.skin[2] = tone * 0.68f;
  for (float& c : g.background) c = static_cast<float>(rng.uniform(0.1, 0.9));
  g.lips[0] = static_cast<float>(rng.uniform(0.55, 0.8));
  g.lips[1] = g.skin[1] * 0.55f;
  g.lips[2] = g.skin[2] * 0.6f;
  const float iris = static_cast<float>(rng.uniform(0.1, 0.4));
  g.iris[0] = iris;
  g.iris[1] = iris * 0.8f;
  g.iris[2] = iris * 0.6f;
  const float brow = static_cast<float>(rng.uniform(0.08, 0.3));
  g.brow[0] = brow;
  g.brow[1] = brow * 0.8f;
  g.brow[2] = brow * 0.7f;
  return g;
}

LandmarkSet face_landmarks(const FaceGeometry& g) {
  LandmarkSet lm;
  lm.frame = {g.size, g.size};
  lm.points.resize(geometry::kNumLandmarks);
  auto map = [&](double u, double v) { return Point{g.cx + g.half_w * u, g.cy + g.half_h * v}; };
  auto& p = lm.points;

  for (int i = 0; i <= 32; ++i) {
    const double t = kPi * i / 32.0;
    p[i] = map(-std::cos(t), std::sin(t));
  }
  // Eyebrows: five points along the upper edge, four back along the lower edge.
  for (int side = 0; side < 2; ++side) {
    const double sign = side == 0 ? -1.0 : 1.0;
    const int base = side == 0 ? 33 : 42;
    const double center = sign * g.eye_dx;
    const double half_span = 1.25 * g.eye_w;
    for (int j = 0; j < 5; ++j) {
      const double t = j / 4.0;
      const double u = center - sign * half_span + sign * 2.0 * half_span * t;
      p[base + j] = map(u, g.brow_y - 0.035 * std::sin(kPi * t) - 0.012);
    }
    for (int j = 0; j < 4; ++j) {
      const double t = 0.875 - 0.25 * j;
      const double u = center - sign * half_span + sign * 2.0 * half_span * t;
      p[base + 5 + j] = map(u, g.brow_y + 0.018 - 0.025 * std::sin(kPi * t));
    }
  }
  const double bridge_top = g.brow_y + 0.08;
  for (int j = 0; j < 4; ++j) p[51 + j] = map(0.0, bridge_top + (g.nose_tip_y - bridge_top) * j / 3.0);
  const double base_u[5] = {-1.0, -0.5, 0.0, 0.5, 1.0};
  const double base_dv[5] = {0.0, 0.02, 0.03, 0.02, 0.0};
  for (int j = 0; j < 5; ++j) p[55 + j] = map(base_u[j] * g.nose_w, g.nose_base_y + base_dv[j]);
  for (int side = 0; side < 2; ++side) {
    const double cu = side == 0 ? -g.eye_dx : g.eye_dx;
    const int base = side == 0 ? 60 : 68;
    for (int k = 0; k < 8; ++k) {
      const double th = kPi - k * kPi / 4.0;
      p[base + k] = map(cu + g.eye_w * std::cos(th), g.eye_y - g.eye_h * std::sin(th));
    }
    p[side == 0 ? 96 : 97] = map(cu, g.eye_y);
  }
  for (int k = 0; k < 12; ++k) {
    const double th = kPi - k * kPi / 6.0;
    p[76 + k] = map(g.mouth_w * std::cos(th), g.mouth_y - g.mouth_h * std::sin(th));
  }
  for (int k = 0; k < 8; ++k) {
    const double th = kPi - k * kPi / 4.0;
    p[88 + k] = map(0.7 * g.mouth_w * std::cos(th), g.mouth_y - 0.35 * g.mouth_h * std::sin(th));
  }
  return lm;
}

Image render_face(const FaceGeometry& g, Rng& rng) {
  Image img(g.size, g.size, 3);
  const double a = g.half_w, b = g.half_h;
  const double eye_rx = g.eye_w * a, eye_ry = g.eye_h * b;
  const double iris_r = 0.85 * eye_ry;
  const float sclera[3] = {0.93f, 0.92f, 0.9f};
  float shadow[3];
  for (int c = 0; c < 3; ++c) shadow[c] = g.skin[c] * 0.8f;
  float nostril[3];
  for (int c = 0; c < 3; ++c) nostril[c] = g.skin[c] * 0.35f;
  float lip_line[3];
  for (int c = 0; c < 3; ++c) lip_line[c] = g.lips[c] * 0.45f;

  for (int y = 0; y < g.size; ++y) {
    for (int x = 0; x < g.size; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      float* out = &img.at(x, y, 0);
      const double grad = static_cast<double>(y) / g.size - 0.5;
      for (int c = 0; c < 3; ++c) out[c] = g.background[c] * static_cast<float>(1.0 - 0.2 * grad);

      const double u = (px - g.cx) / a, v = (py - g.cy) / b;
      float skin[3];
      const float shade = static_cast<float>(1.0 - 0.18 * (u * u) - 0.08 * v);
      for (int c = 0; c < 3; ++c) skin[c] = g.skin[c] * shade;
      blend(out, skin, smooth_edge(ellipse_sd(px, py, g.cx, g.cy, a, b)));

      for (int side = 0; side < 2; ++side) {
        const double cu = side == 0 ? -g.eye_dx : g.eye_dx;
        const double ex = g.cx + cu * a, ey = g.cy + g.eye_y * b;
        const double bx = ex, by = g.cy + (g.brow_y - 0.01) * b;
        blend(out, g.brow, 0.9f * smooth_edge(ellipse_sd(px, py, bx, by, 1.2 * g.eye_w * a, 0.028 * b)));
        blend(out, sclera, smooth_edge(ellipse_sd(px, py, ex, ey, eye_rx, eye_ry)));
        const float in_eye = smooth_edge(ellipse_sd(px, py, ex, ey, eye_rx, eye_ry));
        blend(out, g.iris, in_eye * smooth_edge(ellipse_sd(px, py, ex, ey, iris_r, iris_r)));
      }
      // Nose: soft shading along the bridge, two nostrils.
      const double nose_top = g.cy + (g.brow_y + 0.08) * b;
      const double nose_bot = g.cy + g.nose_base_y * b;
      if (py > nose_top && py < nose_bot) {
        const double d = (px - (g.cx + 0.04 * a)) / (0.05 * a);
        blend(out, shadow, static_cast<float>(0.5 * std::exp(-d * d)));
      }
      for (int side = 0; side < 2; ++side) {
        const double nx = g.cx + (side == 0 ? -0.5 : 0.5) * g.nose_w * a;
        const double ny = g.cy + (g.nose_base_y + 0.01) * b;
        blend(out, nostril, 0.85f * smooth_edge(ellipse_sd(px, py, nx, ny, 0.05 * a, 0.02 * b)));
      }
      const double mx = g.cx, my = g.cy + g.mouth_y * b;
      blend(out, g.lips, smooth_edge(ellipse_sd(px, py, mx, my, g.mouth_w * a, g.mouth_h * b)));
      blend(out, lip_line, 0.8f * smooth_edge(ellipse_sd(px, py, mx, my, 0.7 * g.mouth_w * a, 0.15 * g.mouth_h * b)));
    }
  }
  for (float& v : img.pixels) v = std::clamp(v + static_cast<float>(0.012 * rng.normal()), 0.0f, 1.0f);
  return img;
}

StyleParams sample_style(Rng& rng, double jitter) {
  StyleParams s;
  s.contrast = static_cast<float>(1.0 + jitter * rng.uniform(-0.35, 0.35));
  s.brightness = static_cast<float>(jitter * rng.uniform(-0.15, 0.15));
  for (float& g : s.gain) g = static_cast<float>(1.0 + jitter * rng.uniform(-0.2, 0.2));
  return s;
}

void apply_style(Image& img, const StyleParams& style) {
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const int c = static_cast<int>(i % 3);
    const float v = (img.pixels[i] - 0.5f) * style.contrast * style.gain[c] + 0.5f + style.brightness;
    img.pixels[i] = std::clamp(v, 0.0f, 1.0f);
  }
}

void plant_artifacts(Image& img, const geometry::PatchSet& patches, const std::vector<Region>& regions,
                     const std::string& kind, Rng& rng) {
  for (Region r : regions) {
    const geometry::Box& box = patches[r].box;
    const double hue = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.7, 2.0);
    const double cos_h = std::cos(hue), sin_h = std::sin(hue);
    const double k = 1.0 / 3.0, sq = std::sqrt(k);
    // Rotation about the gray axis.
    float rot[3][3];
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        double m = (i == j ? cos_h : 0.0) + k * (1.0 - cos_h);
        const int d = (j - i + 3) % 3;
        if (d == 1) m -= sq * sin_h;
        if (d == 2) m += sq * sin_h;
        rot[i][j] = static_cast<float>(m);
      }
    }
    const double fx = rng.uniform(0.25, 0.45), fy = rng.uniform(0.25, 0.45);
    const double phase = rng.uniform(0.0, 2.0 * kPi);
    const double cx = 0.5 * (box.x0 + box.x1), cy = 0.5 * (box.y0 + box.y1);
    const double rx = 0.5 * box.width(), ry = 0.5 * box.height();
    for (int y = std::max(box.y0, 0); y < std::min(box.y1, img.height); ++y) {
      for (int x = std::max(box.x0, 0); x < std::min(box.x1, img.width); ++x) {
        const double u = (x + 0.5 - cx) / rx, v = (y + 0.5 - cy) / ry;
        const float w = static_cast<float>(std::clamp((1.0 - (u * u + v * v)) * 3.0, 0.0, 1.0));
        const double noise = rng.uniform(-1.0, 1.0);
        double tex;
        if (kind == "silicone") {
          tex = 0.7 * std::sin(2.0 * kPi * (fx * x + fy * y) + phase) + 0.3 * noise;
        } else if (kind == "cosmetic") {
          tex = (((x / 2) + (y / 2)) % 2 == 0 ? 0.6 : -0.6) + 0.4 * noise;
        } else {
          tex = noise;
        }
        if (w <= 0.0f) continue;
        float* px = &img.at(x, y, 0);
        float shifted[3];
        for (int i = 0; i < 3; ++i) {
          shifted[i] = rot[i][0] * px[0] + rot[i][1] * px[1] + rot[i][2] * px[2];
          shifted[i] += static_cast<float>(0.2 * tex);
        }
        for (int i = 0; i < 3; ++i) px[i] = std::clamp(px[i] + w * (shifted[i] - px[i]), 0.0f, 1.0f);
      }
    }
  }
}

RenderedSample render_sample(const SynthConfig& cfg, Label label, int subject, int image_index) {
  const Rng root(cfg.seed);
  const std::uint64_t subject_stream =
      (static_cast<std::uint64_t>(label == Label::attack) << 40) | static_cast<std::uint64_t>(subject);
  Rng subject_rng = root.fork(subject_stream);
  Rng image_rng = subject_rng.fork(1000 + static_cast<std::uint64_t>(image_index));

  RenderedSample out;
  FaceGeometry g = sample_face(subject_rng, cfg.image_size);
  if (image_index > 0) {
    // Small per-image pose jitter on top of the subject's layout.
    g.cx += cfg.image_size * image_rng.uniform(-0.01, 0.01);
    g.cy += cfg.image_size * image_rng.uniform(-0.01, 0.01);
  }
  out.landmarks = face_landmarks(g);
  Rng texture_rng = image_rng.fork(1);
  out.clean = render_face(g, texture_rng);
  out.planted = out.clean;
  if (label == Label::attack) {
    out.attack_type = kAttackKinds[subject_rng.below(kAttackKinds.size())];
    Rng plant_rng = image_rng.fork(2);
    std::vector<Region> pool(geometry::kAllRegions.begin(), geometry::kAllRegions.end());
    plant_rng.shuffle(std::span<Region>(pool));
    pool.resize(cfg.artifact_region_count);
    std::sort(pool.begin(), pool.end());
    out.planted_regions = pool;
    const auto patches = geometry::derive_patch_regions(out.landmarks);
    plant_artifacts(out.planted, patches, out.planted_regions, out.attack_type, plant_rng);
  }
  Rng style_rng = image_rng.fork(3);
  out.style = sample_style(style_rng, cfg.style_jitter);
  out.styled = out.planted;
  apply_style(out.styled, out.style);
  return out;
}

}  // namespace synth

DatasetManifest generate_synthetic(const SynthConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  fs::create_directories(out_dir / "landmarks", ec);
  if (ec || !fs::is_directory(out_dir / "images")) {
    throw RuntimeError("cannot create output directory: " + out_dir.string());
  }
  DatasetManifest m;
  m.name = "synthetic";
  auto emit = [&](Label label, int n_subjects) {
    for (int s = 0; s < n_subjects; ++s) {
      char subject[32];
      std::snprintf(subject, sizeof subject, "%s%04d", label == Label::attack ? "A" : "L", s);
      for (int i = 0; i < cfg.images_per_subject; ++i) {
        const auto r = synth::render_sample(cfg, label, s, i);
        FaceSample fs_;
        fs_.sample_id = std::string(subject) + "_" + std::to_string(i);
        fs_.subject_id = subject;
        fs_.label = label;
        if (label == Label::attack) fs_.attack_type = r.attack_type;
        fs_.image_path = fs::absolute(out_dir / "images" / (fs_.sample_id + ".png"));
        fs_.landmark_path = fs::absolute(out_dir / "landmarks" / (fs_.sample_id + ".txt"));
        fs_.reference_size = {cfg.image_size, cfg.image_size};
        write_png(fs_.image_path, r.styled);
        geometry::write_landmarks(fs_.landmark_path, r.landmarks);
        if (label == Label::attack) write_planted_regions(planted_regions_path(fs_), r.planted_regions);
        m.samples.push_back(std::move(fs_));
      }
    }
  };
  emit(Label::bona_fide, cfg.n_subjects_live);
  emit(Label::attack, cfg.n_subjects_attack);
  write_manifest(out_dir / "manifest.csv", m);
  return m;
}

}  // namespace dmpad::data
