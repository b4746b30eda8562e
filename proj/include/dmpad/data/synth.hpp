#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dmpad/core/image.hpp"
#include "dmpad/core/rng.hpp"
#include "dmpad/data/manifest.hpp"
#include "dmpad/geometry/regions.hpp"

namespace dmpad::data {

struct SynthConfig {
  int n_subjects_live = 300;
  int n_subjects_attack = 300;
  int image_size = 128;
  int artifact_region_count = 2;
  double style_jitter = 0.3;
  std::uint64_t seed = 7;
  int images_per_subject = 1;

  void validate() const;
};

/// Renders the dataset into `out_dir` (images/, landmarks/, manifest.csv) and
/// returns the manifest. Same config -> byte-identical files.
DatasetManifest generate_synthetic(const SynthConfig& cfg, const std::filesystem::path& out_dir);

namespace synth {

/// Per-subject face layout in pixels; feature offsets are in head-ellipse units.
struct FaceGeometry {
  int size = 0;
  double cx = 0, cy = 0, half_w = 0, half_h = 0;
  double eye_dx = 0, eye_y = 0, eye_w = 0, eye_h = 0;
  double brow_y = 0, nose_tip_y = 0, nose_base_y = 0, nose_w = 0;
  double mouth_y = 0, mouth_w = 0, mouth_h = 0;
  float skin[3] = {0, 0, 0};
  float background[3] = {0, 0, 0};
  float lips[3] = {0, 0, 0};
  float iris[3] = {0, 0, 0};
  float brow[3] = {0, 0, 0};
};

struct StyleParams {
  float contrast = 1.0f;
  float brightness = 0.0f;
  float gain[3] = {1.0f, 1.0f, 1.0f};
};

FaceGeometry sample_face(Rng& rng, int size);
geometry::LandmarkSet face_landmarks(const FaceGeometry& g);
/// Smooth procedural face plus faint skin texture drawn from `rng`.
Image render_face(const FaceGeometry& g, Rng& rng);
StyleParams sample_style(Rng& rng, double jitter);
/// Pixel-wise affine color transform, clamped to [0, 1].
void apply_style(Image& img, const StyleParams& style);
/// Overlays high-frequency texture and a hue shift inside each chosen box.
/// Pixels outside the chosen boxes are never modified.
void plant_artifacts(Image& img, const geometry::PatchSet& patches,
                     const std::vector<geometry::Region>& regions, const std::string& kind,
                     Rng& rng);

struct RenderedSample {
  geometry::LandmarkSet landmarks;
  Image clean;    // before artifacts and style
  Image planted;  // after artifacts, before style
  Image styled;   // final
  StyleParams style;
  std::vector<geometry::Region> planted_regions;
  std::string attack_type;
};

/// Deterministic rendering of one sample; independent of generation order.
RenderedSample render_sample(const SynthConfig& cfg, Label label, int subject, int image_index);

inline const std::vector<std::string> kAttackKinds = {"latex", "silicone", "cosmetic"};

}  // namespace synth
}  // namespace dmpad::data
