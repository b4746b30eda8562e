#include "dmpad/netcore/csa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dmpad/core/error.hpp"
#include "dmpad/kernels/kernels.hpp"

namespace dmpad::nn {

namespace k = dmpad::kernels;

InstanceStats instance_stats(const Tensor& f) {
  if (f.rank() != 4) throw ValidationError("instance_stats: expected [C, N, h, w], got " + f.shape_str());
  const int c = f.dim(0), n = f.dim(1);
  const std::size_t p = static_cast<std::size_t>(f.dim(2)) * f.dim(3);
  InstanceStats s{Tensor({n, c}), Tensor({n, c})};
  for (int ch = 0; ch < c; ++ch) {
    for (int b = 0; b < n; ++b) {
      const float* x = f.ptr() + (static_cast<std::size_t>(ch) * n + b) * p;
      const double mean = k::sum(x, p) / static_cast<double>(p);
      const double var = k::sum_sq_dev(x, mean, p) / static_cast<double>(p);
      s.mean.data[static_cast<std::size_t>(b) * c + ch] = static_cast<float>(mean);
      s.std.data[static_cast<std::size_t>(b) * c + ch] = static_cast<float>(std::sqrt(var));
    }
  }
  return s;
}

// ---------------------------------------------------------------- StyleBank

StyleBank::StyleBank(int num_styles, int channels)
    : num_styles_(num_styles),
      channels_(channels),
      means_({num_styles, channels}),
      stds_({num_styles, channels}, 1.0f),
      labels_({num_styles}),
      initialized_({1}) {}

std::vector<NamedArray> StyleBank::arrays() {
  return {{"style_bank.mean", &means_},
          {"style_bank.std", &stds_},
          {"style_bank.label", &labels_},
          {"style_bank.initialized", &initialized_}};
}

std::vector<int> StyleBank::candidates(int label) const {
  std::vector<int> out;
  for (int s = 0; s < num_styles_; ++s)
    if (label_of(s) == label) out.push_back(s);
  if (out.empty())
    for (int s = 0; s < num_styles_; ++s) out.push_back(s);
  return out;
}

namespace {

// Rows are (mean, std) concatenated: 2C floats.
std::vector<float> stat_rows(const InstanceStats& st, const std::vector<int>& idx, int c) {
  std::vector<float> rows(idx.size() * 2 * c);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(st.mean.ptr() + static_cast<std::size_t>(idx[i]) * c, c, rows.data() + i * 2 * c);
    std::copy_n(st.std.ptr() + static_cast<std::size_t>(idx[i]) * c, c, rows.data() + i * 2 * c + c);
  }
  return rows;
}

std::vector<float> kmeans(const std::vector<float>& pts, int n, int dim, int kk, Rng& rng, int iterations) {
  std::vector<float> centers(static_cast<std::size_t>(kk) * dim);
  auto point = [&](int i) { return pts.data() + static_cast<std::size_t>(i) * dim; };
  auto center = [&](int j) { return centers.data() + static_cast<std::size_t>(j) * dim; };

  // k-means++ seeding
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  int first = static_cast<int>(rng.below(n));
  std::copy_n(point(first), dim, center(0));
  for (int j = 1; j < kk; ++j) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], k::sq_dist(point(i), center(j - 1), dim));
      total += d2[i];
    }
    int pick = n - 1;
    if (total <= 0.0) {
      pick = static_cast<int>(rng.below(n));
    } else {
      double r = rng.uniform() * total;
      for (int i = 0; i < n; ++i) {
        r -= d2[i];
        if (r < 0.0) {
          pick = i;
          break;
        }
      }
    }
    std::copy_n(point(pick), dim, center(j));
  }

  std::vector<int> assign(n, 0);
  std::vector<double> acc(static_cast<std::size_t>(kk) * dim);
  std::vector<int> count(kk);
  for (int it = 0; it < iterations; ++it) {
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int j = 0; j < kk; ++j) {
        const double d = k::sq_dist(point(i), center(j), dim);
        if (d < best) {
          best = d;
          assign[i] = j;
        }
      }
    }
    std::fill(acc.begin(), acc.end(), 0.0);
    std::fill(count.begin(), count.end(), 0);
    for (int i = 0; i < n; ++i) {
      ++count[assign[i]];
      for (int d = 0; d < dim; ++d) acc[static_cast<std::size_t>(assign[i]) * dim + d] += point(i)[d];
    }
    for (int j = 0; j < kk; ++j) {
      if (count[j] == 0) continue;  // empty cluster keeps its center
      for (int d = 0; d < dim; ++d)
        center(j)[d] = static_cast<float>(acc[static_cast<std::size_t>(j) * dim + d] / count[j]);
    }
  }
  return centers;
}

}  // namespace

void StyleBank::init_kmeans(const InstanceStats& stats, const std::vector<int>& labels, Rng& rng,
                            int iterations) {
  const int n = stats.mean.dim(0);
  if (stats.mean.dim(1) != channels_) throw ValidationError("style bank: channel mismatch");
  if (n == 0 || static_cast<int>(labels.size()) != n) throw ValidationError("style bank: no samples");
  std::vector<int> idx[2];
  for (int i = 0; i < n; ++i) idx[labels[i] != 0 ? 1 : 0].push_back(i);

  int kk[2];
  if (idx[0].empty() || idx[1].empty()) {
    kk[0] = idx[0].empty() ? 0 : num_styles_;
    kk[1] = num_styles_ - kk[0];
  } else {
    kk[0] = static_cast<int>(std::lround(static_cast<double>(num_styles_) * idx[0].size() / n));
    kk[0] = std::clamp(kk[0], 1, num_styles_ - 1);
    kk[1] = num_styles_ - kk[0];
  }

  int slot = 0;
  const int dim = 2 * channels_;
  for (int cls = 0; cls < 2; ++cls) {
    if (kk[cls] == 0) continue;
    const auto pts = stat_rows(stats, idx[cls], channels_);
    const auto centers = kmeans(pts, static_cast<int>(idx[cls].size()), dim, kk[cls], rng, iterations);
    for (int j = 0; j < kk[cls]; ++j, ++slot) {
      const float* c = centers.data() + static_cast<std::size_t>(j) * dim;
      std::copy_n(c, channels_, means_.ptr() + static_cast<std::size_t>(slot) * channels_);
      float* sd = stds_.ptr() + static_cast<std::size_t>(slot) * channels_;
      for (int ch = 0; ch < channels_; ++ch) sd[ch] = std::max(c[channels_ + ch], 1e-6f);
      labels_.data[slot] = static_cast<float>(cls);
    }
  }
  initialized_.data[0] = 1.0f;
}

int StyleBank::nearest(const float* mu, const float* sd, int label) const {
  int best_s = -1;
  double best = std::numeric_limits<double>::infinity();
  for (int s : candidates(label)) {
    const double d = k::sq_dist(mu, mean(s), channels_) + k::sq_dist(sd, std(s), channels_);
    if (d < best) {
      best = d;
      best_s = s;
    }
  }
  return best_s;
}

void StyleBank::begin_epoch() {
  acc_.assign(static_cast<std::size_t>(num_styles_) * 2 * channels_, 0.0);
  acc_count_.assign(num_styles_, 0);
}

void StyleBank::accumulate(const InstanceStats& stats, const std::vector<int>& labels) {
  if (acc_count_.empty()) begin_epoch();
  const int n = stats.mean.dim(0);
  for (int i = 0; i < n; ++i) {
    const float* mu = stats.mean.ptr() + static_cast<std::size_t>(i) * channels_;
    const float* sd = stats.std.ptr() + static_cast<std::size_t>(i) * channels_;
    const int s = nearest(mu, sd, labels[i]);
    double* a = acc_.data() + static_cast<std::size_t>(s) * 2 * channels_;
    for (int ch = 0; ch < channels_; ++ch) {
      a[ch] += mu[ch];
      a[channels_ + ch] += sd[ch];
    }
    ++acc_count_[s];
  }
}

void StyleBank::end_epoch(float momentum) {
  if (acc_count_.empty()) return;
  for (int s = 0; s < num_styles_; ++s) {
    if (acc_count_[s] == 0) continue;
    const double* a = acc_.data() + static_cast<std::size_t>(s) * 2 * channels_;
    float* mu = means_.ptr() + static_cast<std::size_t>(s) * channels_;
    float* sd = stds_.ptr() + static_cast<std::size_t>(s) * channels_;
    for (int ch = 0; ch < channels_; ++ch) {
      mu[ch] = static_cast<float>(momentum * mu[ch] + (1.0 - momentum) * a[ch] / acc_count_[s]);
      sd[ch] = std::max(
          static_cast<float>(momentum * sd[ch] + (1.0 - momentum) * a[channels_ + ch] / acc_count_[s]), 1e-6f);
    }
  }
  acc_.clear();
  acc_count_.clear();
}

// ---------------------------------------------------------------- augmentation

CsaResult csa_augment(const Tensor& f, const StyleBank& bank, const std::vector<int>& labels, Rng& rng,
                      const CsaOptions& opts) {
  if (!bank.initialized()) throw RuntimeError("csa_augment: style bank not initialized");
  const int c = f.dim(0), n = f.dim(1);
  if (c != bank.channels()) throw ValidationError("csa_augment: feature channels do not match style bank");
  if (static_cast<int>(labels.size()) != n) throw ValidationError("csa_augment: label count mismatch");
  const std::size_t p = static_cast<std::size_t>(f.dim(2)) * f.dim(3);

  CsaResult r;
  r.stats = instance_stats(f);
  r.mix_mean = Tensor({n, c});
  r.mix_std = Tensor({n, c});
  r.aug = Tensor(f.shape);
  r.style.resize(n);
  r.lambda.resize(n);
  for (int b = 0; b < n; ++b) {
    const auto cand = bank.candidates(labels[b]);
    const int s = cand[rng.below(cand.size())];
    const float lam = opts.forced_lambda ? *opts.forced_lambda : static_cast<float>(rng.uniform());
    r.style[b] = s;
    r.lambda[b] = lam;
    const std::size_t row = static_cast<std::size_t>(b) * c;
    k::affine2(bank.mean(s), r.stats.mean.ptr() + row, lam, 1.0f - lam, 0.0f, r.mix_mean.ptr() + row, c);
    k::affine2(bank.std(s), r.stats.std.ptr() + row, lam, 1.0f - lam, 0.0f, r.mix_std.ptr() + row, c);
  }
  for (int ch = 0; ch < c; ++ch) {
    for (int b = 0; b < n; ++b) {
      const std::size_t i = static_cast<std::size_t>(b) * c + ch;
      const float a = r.mix_std.data[i] / (r.stats.std.data[i] + kStdEps);
      const float sh = r.mix_mean.data[i] - a * r.stats.mean.data[i];
      const std::size_t off = (static_cast<std::size_t>(ch) * n + b) * p;
      k::scale_shift(f.ptr() + off, a, sh, r.aug.ptr() + off, p);
    }
  }
  return r;
}

Tensor csa_backward(const CsaResult& r, const Tensor& f, const Tensor& d_aug) {
  const int c = d_aug.dim(0), n = d_aug.dim(1);
  const std::size_t p = static_cast<std::size_t>(d_aug.dim(2)) * d_aug.dim(3);
  Tensor df(d_aug.shape);
  std::vector<double> z(p);
  for (int ch = 0; ch < c; ++ch) {
    for (int b = 0; b < n; ++b) {
      const std::size_t i = static_cast<std::size_t>(b) * c + ch;
      const std::size_t off = (static_cast<std::size_t>(ch) * n + b) * p;
      const float* x = f.ptr() + off;
      const float* g = d_aug.ptr() + off;
      const double mu = r.stats.mean.data[i], sd = r.stats.std.data[i];
      const double s = sd + kStdEps;
      const double lam = r.lambda[b];
      // y = std_mix * z + mean_mix, z = (x - mu) / (sd + eps)
      double d_mix_std = 0.0, d_mix_mean = 0.0;
      for (std::size_t q = 0; q < p; ++q) {
        z[q] = (x[q] - mu) / s;
        d_mix_std += g[q] * z[q];
        d_mix_mean += g[q];
      }
      const double mix_std = r.mix_std.data[i];
      // dz = mix_std * g; through z: (dz - mean(dz)) / s - z * sum(dz z) / (P sd)
      const double dz_mean = mix_std * d_mix_mean / p;
      const double dz_z = mix_std * d_mix_std;
      const double coef_z = sd > 1e-12 ? dz_z / (p * sd) : 0.0;
      // direct paths: d mean / dx = 1/P, d sd / dx = z s / (P sd)
      const double d_mu = (1.0 - lam) * d_mix_mean;
      const double d_sd = (1.0 - lam) * d_mix_std;
      const double coef_sd = sd > 1e-12 ? d_sd * s / (p * sd) : 0.0;
      float* out = df.ptr() + off;
      for (std::size_t q = 0; q < p; ++q) {
        out[q] = static_cast<float>((mix_std * g[q] - dz_mean) / s - z[q] * coef_z + d_mu / p + z[q] * coef_sd);
      }
    }
  }
  return df;
}

}  // namespace dmpad::nn
