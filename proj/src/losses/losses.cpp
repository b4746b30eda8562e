#include "dmpad/losses/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dmpad/core/error.hpp"
#include "dmpad/kernels/kernels.hpp"

namespace dmpad::losses {

namespace k = dmpad::kernels;

DistMatrix pairwise_sq_dist(const Tensor& e) {
  if (e.rank() != 2) throw ValidationError("pairwise_sq_dist: expected [N, d], got " + e.shape_str());
  const int n = e.dim(0), d = e.dim(1);
  DistMatrix m{n, std::vector<double>(static_cast<std::size_t>(n) * n, 0.0)};
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double v = k::sq_dist(e.ptr() + static_cast<std::size_t>(i) * d, e.ptr() + static_cast<std::size_t>(j) * d, d);
      m.d[static_cast<std::size_t>(i) * n + j] = v;
      m.d[static_cast<std::size_t>(j) * n + i] = v;
    }
  return m;
}

void TripletConfig::validate() const {
  if (!(margin >= 0.0)) throw ValidationError("triplet margin must be >= 0");
  if (!(sigma > 0.0)) throw ValidationError("triplet sigma must be > 0");
}

double focal_term(double d, double sigma) { return std::exp(std::min(d / sigma, kExpClamp)); }

std::vector<Triplet> mine_triplets(const DistMatrix& dist, const std::vector<int>& labels,
                                   const TripletConfig& cfg, Rng& rng) {
  cfg.validate();
  const int n = dist.n;
  if (static_cast<int>(labels.size()) != n) throw ValidationError("mine_triplets: label count mismatch");
  std::vector<Triplet> out;
  std::vector<int> violators;
  for (int a = 0; a < n; ++a) {
    for (int p = 0; p < n; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      const double ep = focal_term(dist(a, p), cfg.sigma);
      violators.clear();
      for (int q = 0; q < n; ++q) {
        if (labels[q] == labels[a]) continue;
        if (ep - focal_term(dist(a, q), cfg.sigma) + cfg.margin > 0.0) violators.push_back(q);
      }
      if (violators.empty()) continue;
      out.push_back({a, p, violators[rng.below(violators.size())]});
    }
  }
  return out;
}

std::vector<Triplet> mine_triplets(const Tensor& embeddings, const std::vector<int>& labels,
                                   const TripletConfig& cfg, Rng& rng) {
  return mine_triplets(pairwise_sq_dist(embeddings), labels, cfg, rng);
}

double triplet_focal_loss(const std::vector<Triplet>& triplets, const DistMatrix& dist,
                          const TripletConfig& cfg) {
  double total = 0.0;
  for (const auto& t : triplets) {
    const double v = focal_term(dist(t.anchor, t.positive), cfg.sigma) -
                     focal_term(dist(t.anchor, t.negative), cfg.sigma) + cfg.margin;
    total += std::max(0.0, v);
  }
  return total;
}

Tensor triplet_focal_grad(const std::vector<Triplet>& triplets, const DistMatrix& dist, const Tensor& e,
                          const TripletConfig& cfg, double scale) {
  const int d = e.dim(1);
  Tensor g(e.shape);
  std::vector<double> acc(g.size(), 0.0);
  // dD(i,j)/de_i = 2 (e_i - e_j)
  auto add_pair = [&](int i, int j, double w) {
    const float* ei = e.ptr() + static_cast<std::size_t>(i) * d;
    const float* ej = e.ptr() + static_cast<std::size_t>(j) * d;
    double* gi = acc.data() + static_cast<std::size_t>(i) * d;
    double* gj = acc.data() + static_cast<std::size_t>(j) * d;
    for (int c = 0; c < d; ++c) {
      const double diff = 2.0 * (static_cast<double>(ei[c]) - ej[c]) * w;
      gi[c] += diff;
      gj[c] -= diff;
    }
  };
  for (const auto& t : triplets) {
    const double dap = dist(t.anchor, t.positive), dan = dist(t.anchor, t.negative);
    const double ep = focal_term(dap, cfg.sigma), en = focal_term(dan, cfg.sigma);
    if (ep - en + cfg.margin <= 0.0) continue;
    const double wp = dap / cfg.sigma < kExpClamp ? ep / cfg.sigma : 0.0;
    const double wn = dan / cfg.sigma < kExpClamp ? -en / cfg.sigma : 0.0;
    add_pair(t.anchor, t.positive, wp * scale);
    add_pair(t.anchor, t.negative, wn * scale);
  }
  for (std::size_t i = 0; i < g.size(); ++i) g.data[i] = static_cast<float>(acc[i]);
  return g;
}

// ---------------------------------------------------------------- AIAW

void AiawConfig::validate() const {
  if (!(k_live > 0.0 && k_live <= 1.0) || !(k_attack > 0.0 && k_attack <= 1.0)) {
    throw ValidationError("aiaw: selection ratios must lie in (0, 1]");
  }
  if (!(epsilon > 0.0)) throw ValidationError("aiaw: epsilon must be > 0");
}

int aiaw_selection_size(int channels, double kk) {
  const double e = 0.5 * static_cast<double>(channels) * (channels - 1);
  // guard against ceil(184.0000000001) style representation noise
  const double raw = kk * e;
  const double r = std::round(raw);
  const double n = std::abs(raw - r) < 1e-9 * std::max(1.0, raw) ? r : std::ceil(raw);
  return std::max(1, static_cast<int>(std::min(n, e)));
}

namespace {

struct Normalized {
  std::vector<float> z;      // [C, P]
  std::vector<double> sd;    // population std per channel
};

Normalized normalize_sample(const Tensor& f, int b, double eps) {
  const int c = f.dim(0), n = f.dim(1);
  const std::size_t p = static_cast<std::size_t>(f.dim(2)) * f.dim(3);
  Normalized out{std::vector<float>(c * p), std::vector<double>(c)};
  for (int ch = 0; ch < c; ++ch) {
    const float* x = f.ptr() + (static_cast<std::size_t>(ch) * n + b) * p;
    const double mean = k::sum(x, p) / static_cast<double>(p);
    const double sd = std::sqrt(k::sum_sq_dev(x, mean, p) / static_cast<double>(p));
    out.sd[ch] = sd;
    const double inv = 1.0 / (sd + eps);
    k::scale_shift(x, static_cast<float>(inv), static_cast<float>(-mean * inv), out.z.data() + ch * p, p);
  }
  return out;
}

void covariance(const std::vector<float>& z, int c, int p, std::vector<float>& sigma) {
  sigma.resize(static_cast<std::size_t>(c) * c);
  k::gemm(k::Trans::no, k::Trans::yes, c, c, p, 1.0f / static_cast<float>(p), z.data(), p, z.data(), p, 0.0f,
          sigma.data(), c);
}

// dF for one sample given dZ, written into the [C, N, h, w] gradient tensor.
void normalize_backward(const Normalized& nz, const std::vector<double>& dz, int b, double eps, Tensor& df) {
  const int c = df.dim(0), n = df.dim(1);
  const std::size_t p = static_cast<std::size_t>(df.dim(2)) * df.dim(3);
  for (int ch = 0; ch < c; ++ch) {
    const double* g = dz.data() + ch * p;
    const float* z = nz.z.data() + ch * p;
    double gsum = 0.0, gz = 0.0;
    bool any = false;
    for (std::size_t q = 0; q < p; ++q) {
      gsum += g[q];
      gz += g[q] * z[q];
      any = any || g[q] != 0.0;
    }
    if (!any) continue;
    const double s = nz.sd[ch] + eps;
    const double gmean = gsum / p;
    const double coef = nz.sd[ch] > 1e-12 ? gz / (p * nz.sd[ch]) : 0.0;
    float* out = df.ptr() + (static_cast<std::size_t>(ch) * n + b) * p;
    for (std::size_t q = 0; q < p; ++q) out[q] += static_cast<float>((g[q] - gmean) / s - z[q] * coef);
  }
}

}  // namespace

AiawResult aiaw_loss(const Tensor& f_org, const Tensor& f_aug, const std::vector<int>& labels,
                     const AiawConfig& cfg, bool want_grad) {
  cfg.validate();
  if (f_org.rank() != 4 || !f_org.same_shape(f_aug)) {
    throw ValidationError("aiaw: original and augmented maps must share a [C, N, h, w] shape");
  }
  const int c = f_org.dim(0), n = f_org.dim(1);
  const int p = f_org.dim(2) * f_org.dim(3);
  if (p < 2) throw ValidationError("aiaw: covariance needs more than one spatial position");
  if (c < 2) throw ValidationError("aiaw: need at least two channels");
  if (static_cast<int>(labels.size()) != n) throw ValidationError("aiaw: label count mismatch");

  AiawResult r;
  if (want_grad) {
    r.d_org = Tensor(f_org.shape);
    r.d_aug = Tensor(f_aug.shape);
  }
  const std::size_t e = static_cast<std::size_t>(c) * (c - 1) / 2;
  std::vector<int> flat(e);
  {
    std::size_t t = 0;
    for (int i = 0; i < c; ++i)
      for (int j = i + 1; j < c; ++j) flat[t++] = i * c + j;
  }
  std::vector<float> s_org, s_aug;
  std::vector<float> diff(e);
  std::vector<int> order(e);
  for (int b = 0; b < n; ++b) {
    const Normalized zo = normalize_sample(f_org, b, cfg.epsilon);
    const Normalized za = normalize_sample(f_aug, b, cfg.epsilon);
    covariance(zo.z, c, p, s_org);
    covariance(za.z, c, p, s_aug);
    const int sel = aiaw_selection_size(c, labels[b] != 0 ? cfg.k_attack : cfg.k_live);
    r.selected.push_back(sel);
    for (std::size_t t = 0; t < e; ++t) diff[t] = std::abs(s_org[flat[t]] - s_aug[flat[t]]);
    std::iota(order.begin(), order.end(), 0);
    // descending |difference|, ties by ascending flat index (order of `flat` is ascending)
    std::partial_sort(order.begin(), order.begin() + sel, order.end(), [&](int x, int y) {
      return diff[x] != diff[y] ? diff[x] > diff[y] : x < y;
    });
    double lo = 0.0, la = 0.0;
    for (int t = 0; t < sel; ++t) {
      lo += std::abs(static_cast<double>(s_org[flat[order[t]]]));
      la += std::abs(static_cast<double>(s_aug[flat[order[t]]]));
    }
    r.org += lo / sel / n;
    r.aug += la / sel / n;
    if (!want_grad) continue;
    const std::size_t cp = static_cast<std::size_t>(c) * p;
    for (int branch = 0; branch < 2; ++branch) {
      const Normalized& nz = branch == 0 ? zo : za;
      const std::vector<float>& sig = branch == 0 ? s_org : s_aug;
      std::vector<double> dz(cp, 0.0);
      for (int t = 0; t < sel; ++t) {
        const int fi = flat[order[t]];
        const int i = fi / c, j = fi % c;
        const float v = sig[fi];
        if (v == 0.0f) continue;
        const double g = (v > 0.0f ? 1.0 : -1.0) / (static_cast<double>(sel) * n * p);
        const float* zi = nz.z.data() + static_cast<std::size_t>(i) * p;
        const float* zj = nz.z.data() + static_cast<std::size_t>(j) * p;
        double* di = dz.data() + static_cast<std::size_t>(i) * p;
        double* dj = dz.data() + static_cast<std::size_t>(j) * p;
        for (int q = 0; q < p; ++q) {
          di[q] += g * zj[q];
          dj[q] += g * zi[q];
        }
      }
      normalize_backward(nz, dz, b, cfg.epsilon, branch == 0 ? r.d_org : r.d_aug);
    }
  }
  return r;
}

// ---------------------------------------------------------------- cross-entropy / composites

CrossEntropy softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2 || static_cast<int>(labels.size()) != logits.dim(0)) {
    throw ValidationError("cross-entropy: logits/labels mismatch");
  }
  const int n = logits.dim(0), c = logits.dim(1);
  CrossEntropy out{0.0, Tensor(logits.shape)};
  for (int i = 0; i < n; ++i) {
    const float* l = logits.ptr() + static_cast<std::size_t>(i) * c;
    double mx = l[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(l[j]));
    double z = 0.0;
    for (int j = 0; j < c; ++j) z += std::exp(l[j] - mx);
    const double logz = mx + std::log(z);
    out.loss += (logz - l[labels[i]]) / n;
    for (int j = 0; j < c; ++j) {
      const double pr = std::exp(l[j] - logz);
      out.d_logits.data[static_cast<std::size_t>(i) * c + j] = static_cast<float>((pr - (j == labels[i])) / n);
    }
  }
  return out;
}

std::vector<double> attack_probability(const Tensor& logits) {
  const int n = logits.dim(0);
  std::vector<double> p(n);
  for (int i = 0; i < n; ++i) {
    const double d = static_cast<double>(logits.data[2 * i]) - logits.data[2 * i + 1];
    p[i] = 1.0 / (1.0 + std::exp(d));
  }
  return p;
}

void LossWeights::validate() const {
  for (double v : {alpha1, beta1, gamma1, alpha2, beta2, gamma2, alpha, beta})
    if (!(v >= 0.0)) throw ValidationError("loss weights must be non-negative");
}

double phase1_total_loss(const Phase1Parts& p, const LossWeights& w) {
  return w.alpha1 * p.aiaw_org + w.beta1 * p.tf_org + w.gamma1 * p.ce_org + w.alpha2 * p.aiaw_aug +
         w.beta2 * p.tf_aug + w.gamma2 * p.ce_aug;
}

double patch_loss(double ce, double tf, const LossWeights& w) { return w.alpha * ce + w.beta * tf; }

}  // namespace dmpad::losses
