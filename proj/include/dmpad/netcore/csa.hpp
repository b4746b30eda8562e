#pragma once

#include <optional>
#include <vector>

#include "dmpad/core/rng.hpp"
#include "dmpad/core/tensor.hpp"
#include "dmpad/netcore/layers.hpp"

namespace dmpad::nn {

constexpr float kStdEps = 1e-5f;

/// Per-sample, per-channel spatial mean and (population) std of a [C, N, h, w] map.
struct InstanceStats {
  Tensor mean;  // [N, C]
  Tensor std;   // [N, C]
};

InstanceStats instance_stats(const Tensor& f);

/// Base styles (mean, std) of the categorical style augmentation, each tagged
/// with the class it was clustered from.
class StyleBank {
 public:
  StyleBank() = default;
  StyleBank(int num_styles, int channels);

  /// Per-class k-means over the (mean, std) vectors of the given samples.
  /// Styles are split between the classes in proportion to their counts.
  void init_kmeans(const InstanceStats& stats, const std::vector<int>& labels, Rng& rng,
                   int iterations = 10);

  void begin_epoch();
  /// Assigns each sample to its nearest same-class style and accumulates it.
  void accumulate(const InstanceStats& stats, const std::vector<int>& labels);
  /// style = momentum * style + (1 - momentum) * mean of assigned samples.
  void end_epoch(float momentum = 0.99f);

  bool initialized() const { return initialized_.data[0] != 0.0f; }
  int size() const { return num_styles_; }
  int channels() const { return channels_; }
  int label_of(int s) const { return static_cast<int>(labels_.data[s]); }
  const float* mean(int s) const { return means_.ptr() + static_cast<std::size_t>(s) * channels_; }
  const float* std(int s) const { return stds_.ptr() + static_cast<std::size_t>(s) * channels_; }
  /// Styles tagged with `label`, or every style when that class has none.
  std::vector<int> candidates(int label) const;

  std::vector<NamedArray> arrays();

 private:
  int nearest(const float* mu, const float* sd, int label) const;

  int num_styles_ = 0;
  int channels_ = 0;
  Tensor means_, stds_, labels_, initialized_;
  std::vector<double> acc_;
  std::vector<int> acc_count_;
};

struct CsaOptions {
  /// Replaces the Uniform(0, 1) mixing draw when set.
  std::optional<float> forced_lambda;
};

struct CsaResult {
  Tensor aug;  // [C, N, h, w]
  InstanceStats stats;
  Tensor mix_mean, mix_std;  // [N, C]
  std::vector<int> style;
  std::vector<float> lambda;
};

/// F_aug = std_mix * (F - mean(F)) / (std(F) + eps) + mean_mix, with the mixing
/// style drawn per sample from the sample's own class in the bank.
CsaResult csa_augment(const Tensor& f, const StyleBank& bank, const std::vector<int>& labels, Rng& rng,
                      const CsaOptions& opts = {});

/// dL/dF given dL/dF_aug, including the paths through the instance statistics
/// and the mixed style. The bank draws and lambda are constants.
Tensor csa_backward(const CsaResult& r, const Tensor& f, const Tensor& d_aug);

}  // namespace dmpad::nn
