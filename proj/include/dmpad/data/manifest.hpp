#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dmpad/geometry/landmarks.hpp"
#include "dmpad/geometry/regions.hpp"

namespace dmpad::data {

enum class Label { bona_fide = 0, attack = 1 };

std::string_view label_token(Label l);  // "live" / "attack"
std::optional<Label> parse_label(std::string_view token);

struct FaceSample {
  std::string sample_id;
  std::string subject_id;
  std::filesystem::path image_path;     // absolute after loading
  std::filesystem::path landmark_path;  // absolute after loading
  Label label = Label::bona_fide;
  std::optional<std::string> attack_type;
  geometry::FrameSize reference_size;
};

struct DatasetManifest {
  std::string name;
  std::vector<FaceSample> samples;

  std::size_t count(Label l) const;
  /// Throws ValidationError unless both labels are present.
  void require_both_labels() const;
};

inline constexpr std::string_view kManifestHeader =
    "sample_id,subject_id,label,attack_type,image,landmarks,width,height";

struct LoadOptions {
  bool decode_images = true;  // check that each image decodes to its reference size
};

/// Parses and eagerly validates a manifest; relative paths resolve against the
/// manifest's directory. Errors name the offending line.
DatasetManifest load_manifest(const std::filesystem::path& path, const LoadOptions& opts = {});

/// Writes paths relative to the manifest's own directory.
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

geometry::LandmarkSet load_sample_landmarks(const FaceSample& s);

/// Synthetic attack samples carry a sidecar listing the planted regions.
std::filesystem::path planted_regions_path(const FaceSample& s);
std::vector<geometry::Region> read_planted_regions(const std::filesystem::path& path);
void write_planted_regions(const std::filesystem::path& path,
                           const std::vector<geometry::Region>& regions);

}  // namespace dmpad::data
