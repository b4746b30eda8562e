#pragma once

#include <array>
#include <string>
#include <vector>

#include "dmpad/core/image.hpp"
#include "dmpad/netcore/checkpoint.hpp"
#include "dmpad/netcore/csa.hpp"
#include "dmpad/netcore/layers.hpp"

namespace dmpad::nn {

/// Per-channel input standardization fitted on the training split.
struct Standardizer {
  std::array<float, 3> mean{0.0f, 0.0f, 0.0f};
  std::array<float, 3> std{1.0f, 1.0f, 1.0f};

  void fit(const std::vector<const Image*>& images);
  /// Stacks images (all of one size) into a standardized [3, N, H, W] batch.
  Tensor batch(const std::vector<const Image*>& images) const;
};

/// GAP -> FC(embed) -> FC(2). The layers keep no per-call state, so one head can
/// serve the original and augmented branches of the same step.
class EmbedHead {
 public:
  struct Out {
    std::vector<int> f_shape;
    Tensor pooled;     // [N, C]
    Tensor embedding;  // [N, E]
    Tensor logits;     // [N, 2]
  };

  EmbedHead() = default;
  EmbedHead(int channels, int embed_dim, const std::string& name);

  void init(Rng& rng);
  Out forward(const Tensor& f) const;
  /// Returns dL/dF; accumulates parameter gradients only when `accumulate`.
  Tensor backward(const Out& out, const Tensor& d_embedding, const Tensor& d_logits, bool accumulate);

  std::vector<Param*> params();
  Linear& embed() { return embed_; }
  Linear& cls() { return cls_; }

 private:
  Linear embed_, cls_;
};

struct FullFaceConfig {
  int input_size = 256;
  std::vector<int> widths{16, 32, 64, 128};
  int reduce_channels = 640;
  int embed_dim = 64;
  int num_styles = 64;

  void validate() const;
};

class FullFaceModel {
 public:
  explicit FullFaceModel(const FullFaceConfig& cfg = {});

  void init(Rng& rng);
  /// Backbone + 1x1 reduction: F_org as [C_reduce, N, h_f, w_f].
  Tensor features(const Tensor& x, Mode mode);
  void backward_features(const Tensor& d_f);
  EmbedHead& head() { return head_; }
  const EmbedHead& head() const { return head_; }
  StyleBank& style_bank() { return bank_; }
  const StyleBank& style_bank() const { return bank_; }
  Standardizer& standardizer() { return norm_; }
  const Standardizer& standardizer() const { return norm_; }
  const FullFaceConfig& config() const { return cfg_; }
  int feature_size() const { return backbone_.out_size(cfg_.input_size); }

  std::vector<Param*> params();
  void zero_grad();
  Checkpoint to_checkpoint();
  static FullFaceModel from_checkpoint(const Checkpoint& ck);

 private:
  std::vector<NamedArray> arrays();

  FullFaceConfig cfg_;
  ConvBackbone backbone_;
  Conv2d reduce_;
  EmbedHead head_;
  StyleBank bank_;
  Standardizer norm_;
};

struct PatchConfig {
  int input_size = 64;
  std::vector<int> widths{16, 32, 64};
  int embed_dim = 16;

  void validate() const;
};

class PatchModel {
 public:
  explicit PatchModel(const PatchConfig& cfg = {}, const std::string& region = "patch");

  void init(Rng& rng);
  EmbedHead::Out forward(const Tensor& x, Mode mode);
  void backward(const EmbedHead::Out& out, const Tensor& d_embedding, const Tensor& d_logits);

  const PatchConfig& config() const { return cfg_; }
  const std::string& region() const { return region_; }
  Standardizer& standardizer() { return norm_; }
  const Standardizer& standardizer() const { return norm_; }
  std::vector<Param*> params();
  void zero_grad();
  Checkpoint to_checkpoint();
  static PatchModel from_checkpoint(const Checkpoint& ck);

 private:
  std::vector<NamedArray> arrays();

  PatchConfig cfg_;
  std::string region_;
  ConvBackbone backbone_;
  EmbedHead head_;
  Standardizer norm_;
};

/// 112 -> hidden (ReLU) -> 2 over attention-weighted patch embeddings.
class FusionModel {
 public:
  struct Out {
    Tensor input, hidden_pre, hidden, logits;
  };

  explicit FusionModel(int in_features = 112, int hidden = 64);

  void init(Rng& rng);
  Out forward(const Tensor& x) const;
  void backward(const Out& out, const Tensor& d_logits);

  int in_features() const { return fc1_.in_features(); }
  Linear& fc1() { return fc1_; }
  std::vector<Param*> params();
  void zero_grad();
  Checkpoint to_checkpoint();
  static FusionModel from_checkpoint(const Checkpoint& ck);

 private:
  Linear fc1_, fc2_;
};

/// Concatenates score_i * e_i in canonical region order into [N, 7 * E].
/// `embeddings[r]` is [N, E]; `scores` is [N, 7].
Tensor fuse_input(const std::vector<Tensor>& embeddings, const Tensor& scores);

/// Per-patch argmax votes; attack wins with at least 4 of 7. Returns 1 for attack.
int majority_vote(const std::vector<std::array<float, 2>>& patch_logits);

}  // namespace dmpad::nn
