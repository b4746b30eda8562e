#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dmpad/core/image.hpp"
#include "dmpad/core/tensor.hpp"
#include "dmpad/geometry/regions.hpp"
#include "dmpad/netcore/models.hpp"

namespace dmpad::attention {

/// Max-normalized, non-negative class activation map at model input resolution.
struct Heatmap {
  int width = 0;
  int height = 0;
  std::vector<float> values;  // row-major
  int source_class = 0;

  float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

struct AttentionScores {
  std::array<float, geometry::kNumRegions> scores{};
  double k_percent = 50.0;
};

/// Spatial mean of dLogit/dA per channel: [C, N, h, w] -> [N, C].
Tensor gradcam_channel_weights(const Tensor& grad);

/// ReLU(sum_c w_c A_c) for sample `b`, divided by its max (all-zero stays zero).
/// Returns an h x w row-major map.
std::vector<float> gradcam_map(const Tensor& activations, const Tensor& weights, int b);

struct GradCamBatch {
  Tensor activations;  // F_org, [C, N, h, w]
  Tensor gradients;    // dLogit[target]/dF_org
  Tensor weights;      // [N, C]
  std::vector<int> target;
  std::vector<Heatmap> heatmaps;
};

/// Grad-CAM on the reduced feature map of the full-face model in eval mode.
/// `x` is a standardized [3, N, S, S] batch. The target class defaults to each
/// sample's predicted class. Parameter gradients are left untouched.
GradCamBatch gradcam(nn::FullFaceModel& model, const Tensor& x, std::optional<int> target_class = {});

Heatmap gradcam_heatmap(nn::FullFaceModel& model, const Image& image, std::optional<int> target_class = {});

/// Mean of the ceil(k% * n) largest values (at least one).
double topk_mean(std::vector<float> values, double k_percent);

/// Top-k% pooled heatmap value inside each region (regions already in heatmap pixels).
AttentionScores region_attention_scores(const Heatmap& hm, const geometry::PatchSet& patches, double k_percent);

struct AttentionRow {
  std::string sample_id;
  AttentionScores scores;
};

inline constexpr const char* kAttentionHeader =
    "sample_id,forehead,left_eye,right_eye,left_cheek,nose,right_cheek,mouth_chin,k_percent";

void write_attention_csv(const std::filesystem::path& path, const std::vector<AttentionRow>& rows);
std::vector<AttentionRow> read_attention_csv(const std::filesystem::path& path);

/// Input blended with a jet-colored heatmap (resized to the image) at `alpha`.
Image overlay_heatmap(const Image& img, const Heatmap& hm, float alpha = 0.5f);

}  // namespace dmpad::attention
