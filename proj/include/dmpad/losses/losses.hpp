#pragma once

#include <vector>

#include "dmpad/core/rng.hpp"
#include "dmpad/core/tensor.hpp"

namespace dmpad::losses {

/// Symmetric N x N matrix of squared Euclidean distances, in double.
struct DistMatrix {
  int n = 0;
  std::vector<double> d;

  double operator()(int i, int j) const { return d[static_cast<std::size_t>(i) * n + j]; }
};

DistMatrix pairwise_sq_dist(const Tensor& embeddings);

struct TripletConfig {
  double margin = 0.6;
  double sigma = 2.0;

  void validate() const;
};

struct Triplet {
  int anchor, positive, negative;
  bool operator==(const Triplet&) const = default;
};

/// D / sigma is clamped here before exponentiation.
constexpr double kExpClamp = 30.0;

/// exp(min(D / sigma, 30))
double focal_term(double d, double sigma);

/// For every ordered same-label (anchor, positive) pair, draws one negative
/// uniformly from the margin violators; pairs without violators are skipped.
std::vector<Triplet> mine_triplets(const DistMatrix& dist, const std::vector<int>& labels,
                                   const TripletConfig& cfg, Rng& rng);
std::vector<Triplet> mine_triplets(const Tensor& embeddings, const std::vector<int>& labels,
                                   const TripletConfig& cfg, Rng& rng);

/// Sum over triplets of max(0, exp(D(a,p)/sigma) - exp(D(a,n)/sigma) + m).
double triplet_focal_loss(const std::vector<Triplet>& triplets, const DistMatrix& dist,
                          const TripletConfig& cfg);
/// d(loss)/d(embeddings) of triplet_focal_loss, scaled by `scale`.
Tensor triplet_focal_grad(const std::vector<Triplet>& triplets, const DistMatrix& dist, const Tensor& embeddings,
                          const TripletConfig& cfg, double scale = 1.0);

struct AiawConfig {
  double k_live = 9e-4;
  double k_attack = 6e-4;
  double epsilon = 1e-5;

  void validate() const;
};

struct AiawResult {
  double org = 0.0;  // mean over samples of the t = org term
  double aug = 0.0;  // mean over samples of the t = aug term
  Tensor d_org;      // d(org) / d(F_org), when requested
  Tensor d_aug;      // d(aug) / d(F_aug), when requested
  std::vector<int> selected;  // per-sample selection size

  double total() const { return 0.5 * (org + aug); }
};

/// Number of masked entries: ceil(k * C (C - 1) / 2), at least 1.
int aiaw_selection_size(int channels, double k);

/// Whitening loss on [C, N, h, w] original / augmented feature maps.
AiawResult aiaw_loss(const Tensor& f_org, const Tensor& f_aug, const std::vector<int>& labels,
                     const AiawConfig& cfg, bool want_grad);

struct CrossEntropy {
  double loss = 0.0;  // mean over rows
  Tensor d_logits;    // gradient of the mean loss
};

CrossEntropy softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);
/// Softmax probability of class 1 per row.
std::vector<double> attack_probability(const Tensor& logits);

struct LossWeights {
  double alpha1 = 1.0, beta1 = 0.1, gamma1 = 1.0;
  double alpha2 = 1.0, beta2 = 0.1, gamma2 = 1.0;
  double alpha = 1.0, beta = 0.1;

  void validate() const;
};

struct Phase1Parts {
  double aiaw_org = 0.0, tf_org = 0.0, ce_org = 0.0;
  double aiaw_aug = 0.0, tf_aug = 0.0, ce_aug = 0.0;
};

double phase1_total_loss(const Phase1Parts& p, const LossWeights& w);
double patch_loss(double ce, double tf, const LossWeights& w);

}  // namespace dmpad::losses
