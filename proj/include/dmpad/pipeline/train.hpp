#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dmpad/attention/gradcam.hpp"
#include "dmpad/core/image.hpp"
#include "dmpad/data/manifest.hpp"
#include "dmpad/metrics/metrics.hpp"
#include "dmpad/netcore/models.hpp"
#include "dmpad/pipeline/config.hpp"

namespace dmpad::pipeline {

using Progress = std::function<void(const std::string&)>;

struct LoadedSample {
  data::FaceSample meta;
  Image image;
  geometry::LandmarkSet landmarks;  // in image pixels
  int label = 0;                    // 1 = attack
};

/// Decodes every image and landmark file of the manifest.
std::vector<LoadedSample> load_samples(const data::DatasetManifest& manifest);

std::vector<int> labels_of(const std::vector<LoadedSample>& samples);

/// Full-face inputs at size x size (bilinear resize when needed).
std::vector<Image> fullface_inputs(const std::vector<LoadedSample>& samples, int size);
/// Region crops at size x size from landmark-derived boxes.
std::vector<Image> region_crops(const std::vector<LoadedSample>& samples, geometry::Region region, int size);

/// One epoch of class-balanced batches: each batch holds batch_size / 2 indices
/// of each class, drawn from concatenated per-class shuffles. The epoch covers
/// ceil(N / batch_size) batches.
std::vector<std::vector<int>> balanced_batches(const std::vector<int>& labels, int batch_size, Rng& rng);

std::vector<int> gather(const std::vector<int>& v, const std::vector<int>& idx);
std::vector<const Image*> gather_images(const std::vector<Image>& v, const std::vector<int>& idx);

/// Loss-term weights with disabled components zeroed.
losses::LossWeights effective_weights(const Phase1Config& cfg);

struct Phase1Step {
  losses::Phase1Parts parts;
  double total = 0.0;
  int triplets_org = 0;
  int triplets_aug = 0;
};

/// Phase-1 objective on a reduced feature map F_org: CSA branch, heads, CE,
/// triplet focal (mean over mined triplets, on L2-normalized embeddings) and
/// AIAW, combined with the effective weights. When `d_f` is non-null the head
/// gradients are accumulated and dL/dF_org is written to it.
Phase1Step phase1_head_objective(nn::FullFaceModel& model, const Tensor& f_org, const std::vector<int>& labels,
                                 const Phase1Config& cfg, Rng csa_rng, Rng mine_rng, Tensor* d_f);

/// Full step: train-mode features, head objective, and (optionally) backward
/// through the backbone. Optimizer updates are left to the caller.
Phase1Step phase1_step(nn::FullFaceModel& model, const Tensor& x, const std::vector<int>& labels,
                       const Phase1Config& cfg, Rng csa_rng, Rng mine_rng, bool backward);

struct Phase1EpochLog {
  int epoch = 0;
  double total = 0.0;
  losses::Phase1Parts parts;
  double triplets_org = 0.0, triplets_aug = 0.0;
  double wall_seconds = 0.0;
};

struct Phase1Result {
  nn::FullFaceModel model;
  std::vector<Phase1EpochLog> log;
  /// Total loss of every step, in order.
  std::vector<double> step_totals;
};

nn::FullFaceConfig fullface_config(const TrainConfig& cfg);

Phase1Result train_phase1(const TrainConfig& cfg, const std::vector<LoadedSample>& train,
                          const Progress& progress = {});
void write_phase1_log(const std::filesystem::path& path, const std::vector<Phase1EpochLog>& log);

/// Grad-CAM (predicted class) + top-k% region pooling for every sample.
std::vector<attention::AttentionRow> extract_attention(nn::FullFaceModel& model,
                                                       const std::vector<LoadedSample>& samples,
                                                       double k_percent);

struct PatchEpochLog {
  std::string region;
  int epoch = 0;
  double total = 0.0, ce = 0.0, tf = 0.0, triplets = 0.0;
  double wall_seconds = 0.0;
};

struct PatchResult {
  nn::PatchModel model;
  std::vector<PatchEpochLog> log;
};

PatchResult train_patch(const TrainConfig& cfg, const std::vector<LoadedSample>& train, geometry::Region region,
                        const Progress& progress = {});
std::vector<PatchResult> train_phase2(const TrainConfig& cfg, const std::vector<LoadedSample>& train,
                                      const Progress& progress = {});
void write_patch_log(const std::filesystem::path& path, const std::vector<PatchEpochLog>& log);

/// Per-region frozen patch embeddings [N, E] and logits [N, 2].
struct PatchOutputs {
  std::vector<Tensor> embeddings;
  std::vector<Tensor> logits;
};
PatchOutputs patch_outputs(std::vector<nn::PatchModel>& patches, const std::vector<LoadedSample>& samples);

/// Attention scores [N, 7] looked up by sample id.
Tensor attention_matrix(const std::vector<LoadedSample>& samples,
                        const std::map<std::string, attention::AttentionScores>& table);
std::map<std::string, attention::AttentionScores> attention_map(const std::vector<attention::AttentionRow>& rows);

struct FusionEpochLog {
  int epoch = 0;
  double ce = 0.0;
  double wall_seconds = 0.0;
};

struct FusionResult {
  std::optional<nn::FusionModel> model;  // empty in majority_vote mode
  std::vector<FusionEpochLog> log;
};

FusionResult train_fusion(const TrainConfig& cfg, std::vector<nn::PatchModel>& patches,
                          const std::map<std::string, attention::AttentionScores>& table,
                          const std::vector<LoadedSample>& train, const Progress& progress = {});
void write_fusion_log(const std::filesystem::path& path, const std::vector<FusionEpochLog>& log);

struct TrainedSystem {
  nn::FullFaceModel fullface;
  std::vector<nn::PatchModel> patches;  // canonical region order
  std::optional<nn::FusionModel> fusion;
  FusionMode mode = FusionMode::weighted_mlp;
  double k_percent = 50.0;
};

/// Writes phase1.ckpt, patch_<region>.ckpt, fusion.ckpt and norm_stats.txt.
void save_fusion(const std::filesystem::path& dir, const FusionResult& fusion, FusionMode mode);
void write_norm_stats(const std::filesystem::path& dir, const TrainedSystem& system);
TrainedSystem load_system(const std::filesystem::path& dir);

struct Prediction {
  double score = 0.0;  // attack probability (vote share in majority_vote mode)
  int label = 0;
  attention::AttentionScores attention;
};

/// Full inference path: Grad-CAM attention, patch embeddings, fusion.
std::vector<Prediction> predict(TrainedSystem& system, const std::vector<LoadedSample>& samples, double threshold);
std::vector<metrics::ScoredSample> score_samples(TrainedSystem& system, const std::vector<LoadedSample>& samples,
                                                 double threshold);

/// Fusion-stage scores given precomputed attention (used for ablations).
std::vector<double> fusion_scores(const TrainedSystem& system, const PatchOutputs& outputs, const Tensor& attention);

}  // namespace dmpad::pipeline
