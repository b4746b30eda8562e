#include "dmpad/netcore/models.hpp"

#include <algorithm>
#include <cmath>

#include "dmpad/core/error.hpp"
#include "dmpad/kernels/kernels.hpp"

namespace dmpad::nn {

namespace k = dmpad::kernels;

// ---------------------------------------------------------------- Standardizer

void Standardizer::fit(const std::vector<const Image*>& images) {
  double s[3] = {0, 0, 0}, s2[3] = {0, 0, 0};
  std::size_t count = 0;
  for (const Image* img : images) {
    const std::size_t px = static_cast<std::size_t>(img->width) * img->height;
    for (std::size_t i = 0; i < px; ++i)
      for (int c = 0; c < 3; ++c) {
        const double v = img->pixels[i * 3 + c];
        s[c] += v;
        s2[c] += v * v;
      }
    count += px;
  }
  if (count == 0) throw ValidationError("standardizer: no pixels to fit");
  for (int c = 0; c < 3; ++c) {
    const double m = s[c] / count;
    const double var = std::max(0.0, s2[c] / count - m * m);
    mean[c] = static_cast<float>(m);
    std[c] = static_cast<float>(std::max(std::sqrt(var), 1e-5));
  }
}

Tensor Standardizer::batch(const std::vector<const Image*>& images) const {
  if (images.empty()) throw ValidationError("empty batch");
  const int w = images[0]->width, h = images[0]->height;
  const int n = static_cast<int>(images.size());
  Tensor x({3, n, h, w});
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int b = 0; b < n; ++b) {
    const Image& img = *images[b];
    if (img.width != w || img.height != h || img.channels != 3) {
      throw ValidationError("batch images must share one size and have 3 channels");
    }
    for (int c = 0; c < 3; ++c) {
      float* dst = x.ptr() + (static_cast<std::size_t>(c) * n + b) * plane;
      const float inv = 1.0f / std[c];
      for (std::size_t i = 0; i < plane; ++i) dst[i] = (img.pixels[i * 3 + c] - mean[c]) * inv;
    }
  }
  return x;
}

namespace {

void add_norm_arrays(Checkpoint& ck, const Standardizer& s) {
  Tensor m({3}), sd({3});
  for (int c = 0; c < 3; ++c) {
    m.data[c] = s.mean[c];
    sd.data[c] = s.std[c];
  }
  ck.arrays.emplace_back("norm.mean", std::move(m));
  ck.arrays.emplace_back("norm.std", std::move(sd));
}

void restore_norm(const Checkpoint& ck, Standardizer& s) {
  Tensor m({3}), sd({3});
  ck.restore("norm.mean", m);
  ck.restore("norm.std", sd);
  for (int c = 0; c < 3; ++c) {
    s.mean[c] = m.data[c];
    s.std[c] = sd.data[c];
  }
}

void add_arrays(Checkpoint& ck, const std::vector<NamedArray>& arrays) {
  for (const auto& a : arrays) ck.arrays.emplace_back(a.name, *a.tensor);
}

void restore_arrays(const Checkpoint& ck, const std::vector<NamedArray>& arrays) {
  for (const auto& a : arrays) ck.restore(a.name, *a.tensor);
}

std::vector<NamedArray> param_arrays(const std::vector<Param*>& params) {
  std::vector<NamedArray> out;
  for (Param* p : params) out.push_back({p->name, &p->value});
  return out;
}

void check_kind(const Checkpoint& ck, const std::string& kind) {
  if (ck.kind != kind) throw RuntimeError("expected a " + kind + " checkpoint, got '" + ck.kind + "'");
}

}  // namespace

// ---------------------------------------------------------------- EmbedHead

EmbedHead::EmbedHead(int channels, int embed_dim, const std::string& name)
    : embed_(channels, embed_dim, name + ".embed"), cls_(embed_dim, 2, name + ".cls") {}

void EmbedHead::init(Rng& rng) {
  embed_.init(rng);
  cls_.init(rng);
}

EmbedHead::Out EmbedHead::forward(const Tensor& f) const {
  Out o;
  o.f_shape = f.shape;
  o.pooled = global_avg_pool(f);
  o.embedding = embed_.forward(o.pooled);
  o.logits = cls_.forward(o.embedding);
  return o;
}

Tensor EmbedHead::backward(const Out& out, const Tensor& d_embedding, const Tensor& d_logits, bool accumulate) {
  Tensor d_emb = cls_.backward(out.embedding, d_logits, true, accumulate);
  if (!d_embedding.data.empty()) k::axpy(1.0f, d_embedding.ptr(), d_emb.ptr(), d_emb.size());
  Tensor d_pooled = embed_.backward(out.pooled, d_emb, true, accumulate);
  return global_avg_pool_backward(d_pooled, out.f_shape);
}

std::vector<Param*> EmbedHead::params() {
  auto p = embed_.params();
  for (Param* q : cls_.params()) p.push_back(q);
  return p;
}

// ---------------------------------------------------------------- FullFaceModel

void FullFaceConfig::validate() const {
  if (widths.empty()) throw ValidationError("fullface: at least one backbone stage required");
  for (int w : widths)
    if (w < 1) throw ValidationError("fullface: stage widths must be positive");
  if (reduce_channels < 2 || embed_dim < 1 || num_styles < 2) throw ValidationError("fullface: bad head sizes");
  int s = input_size;
  for (std::size_t i = 0; i < widths.size(); ++i) s = (s - 1) / 2 + 1;
  if (s < 2) throw ValidationError("fullface: input_size too small for the backbone depth");
}

FullFaceModel::FullFaceModel(const FullFaceConfig& cfg)
    : cfg_((cfg.validate(), cfg)),
      backbone_(3, cfg.widths, "backbone"),
      reduce_(Conv2dSpec{cfg.widths.back(), cfg.reduce_channels, 1, 1, 0}, "reduce"),
      head_(cfg.reduce_channels, cfg.embed_dim, "head"),
      bank_(cfg.num_styles, cfg.reduce_channels) {}

void FullFaceModel::init(Rng& rng) {
  backbone_.init(rng);
  reduce_.init(rng);
  head_.init(rng);
}

Tensor FullFaceModel::features(const Tensor& x, Mode mode) {
  if (x.rank() != 4 || x.dim(0) != 3 || x.dim(2) != cfg_.input_size || x.dim(3) != cfg_.input_size) {
    throw ValidationError("fullface: expected [3, N, " + std::to_string(cfg_.input_size) + ", " +
                          std::to_string(cfg_.input_size) + "] input, got " + x.shape_str());
  }
  return reduce_.forward(backbone_.forward(x, mode), mode);
}

void FullFaceModel::backward_features(const Tensor& d_f) { backbone_.backward(reduce_.backward(d_f, true)); }

std::vector<Param*> FullFaceModel::params() {
  auto p = backbone_.params();
  for (Param* q : reduce_.params()) p.push_back(q);
  for (Param* q : head_.params()) p.push_back(q);
  return p;
}

void FullFaceModel::zero_grad() {
  for (Param* p : params()) p->zero_grad();
}

std::vector<NamedArray> FullFaceModel::arrays() {
  auto a = param_arrays(params());
  for (auto& b : backbone_.buffers()) a.push_back(b);
  for (auto& b : bank_.arrays()) a.push_back(b);
  return a;
}

Checkpoint FullFaceModel::to_checkpoint() {
  Checkpoint ck;
  ck.kind = "fullface";
  ck.set("input_size", std::to_string(cfg_.input_size));
  ck.set("widths", join_ints(cfg_.widths));
  ck.set("reduce_channels", std::to_string(cfg_.reduce_channels));
  ck.set("embed_dim", std::to_string(cfg_.embed_dim));
  ck.set("num_styles", std::to_string(cfg_.num_styles));
  add_arrays(ck, arrays());
  add_norm_arrays(ck, norm_);
  return ck;
}

FullFaceModel FullFaceModel::from_checkpoint(const Checkpoint& ck) {
  check_kind(ck, "fullface");
  FullFaceConfig cfg;
  cfg.input_size = ck.get_int("input_size");
  cfg.widths = ck.get_ints("widths");
  cfg.reduce_channels = ck.get_int("reduce_channels");
  cfg.embed_dim = ck.get_int("embed_dim");
  cfg.num_styles = ck.get_int("num_styles");
  FullFaceModel m(cfg);
  restore_arrays(ck, m.arrays());
  restore_norm(ck, m.norm_);
  return m;
}

// ---------------------------------------------------------------- PatchModel

void PatchConfig::validate() const {
  if (widths.empty()) throw ValidationError("patch: at least one backbone stage required");
  for (int w : widths)
    if (w < 1) throw ValidationError("patch: stage widths must be positive");
  if (embed_dim < 1 || input_size < 8) throw ValidationError("patch: bad sizes");
}

PatchModel::PatchModel(const PatchConfig& cfg, const std::string& region)
    : cfg_((cfg.validate(), cfg)),
      region_(region),
      backbone_(3, cfg.widths, region + ".backbone"),
      head_(cfg.widths.back(), cfg.embed_dim, region + ".head") {}

void PatchModel::init(Rng& rng) {
  backbone_.init(rng);
  head_.init(rng);
}

EmbedHead::Out PatchModel::forward(const Tensor& x, Mode mode) {
  if (x.rank() != 4 || x.dim(0) != 3 || x.dim(2) != cfg_.input_size || x.dim(3) != cfg_.input_size) {
    throw ValidationError("patch: expected [3, N, " + std::to_string(cfg_.input_size) + ", " +
                          std::to_string(cfg_.input_size) + "] input, got " + x.shape_str());
  }
  return head_.forward(backbone_.forward(x, mode));
}

void PatchModel::backward(const EmbedHead::Out& out, const Tensor& d_embedding, const Tensor& d_logits) {
  backbone_.backward(head_.backward(out, d_embedding, d_logits, true));
}

std::vector<Param*> PatchModel::params() {
  auto p = backbone_.params();
  for (Param* q : head_.params()) p.push_back(q);
  return p;
}

void PatchModel::zero_grad() {
  for (Param* p : params()) p->zero_grad();
}

std::vector<NamedArray> PatchModel::arrays() {
  auto a = param_arrays(params());
  for (auto& b : backbone_.buffers()) a.push_back(b);
  return a;
}

Checkpoint PatchModel::to_checkpoint() {
  Checkpoint ck;
  ck.kind = "patch";
  ck.set("region", region_);
  ck.set("input_size", std::to_string(cfg_.input_size));
  ck.set("widths", join_ints(cfg_.widths));
  ck.set("embed_dim", std::to_string(cfg_.embed_dim));
  add_arrays(ck, arrays());
  add_norm_arrays(ck, norm_);
  return ck;
}

PatchModel PatchModel::from_checkpoint(const Checkpoint& ck) {
  check_kind(ck, "patch");
  PatchConfig cfg;
  cfg.input_size = ck.get_int("input_size");
  cfg.widths = ck.get_ints("widths");
  cfg.embed_dim = ck.get_int("embed_dim");
  PatchModel m(cfg, ck.get("region"));
  restore_arrays(ck, m.arrays());
  restore_norm(ck, m.norm_);
  return m;
}

// ---------------------------------------------------------------- FusionModel

FusionModel::FusionModel(int in_features, int hidden)
    : fc1_(in_features, hidden, "fusion.fc1"), fc2_(hidden, 2, "fusion.fc2") {}

void FusionModel::init(Rng& rng) {
  fc1_.init(rng);
  fc2_.init(rng);
}

FusionModel::Out FusionModel::forward(const Tensor& x) const {
  Out o;
  o.input = x;
  o.hidden_pre = fc1_.forward(x);
  o.hidden = relu(o.hidden_pre);
  o.logits = fc2_.forward(o.hidden);
  return o;
}

void FusionModel::backward(const Out& out, const Tensor& d_logits) {
  Tensor dh = fc2_.backward(out.hidden, d_logits, true);
  fc1_.backward(out.input, relu_backward(out.hidden_pre, dh), false);
}

std::vector<Param*> FusionModel::params() {
  auto p = fc1_.params();
  for (Param* q : fc2_.params()) p.push_back(q);
  return p;
}

void FusionModel::zero_grad() {
  for (Param* p : params()) p->zero_grad();
}

Checkpoint FusionModel::to_checkpoint() {
  Checkpoint ck;
  ck.kind = "fusion";
  ck.set("in_features", std::to_string(fc1_.in_features()));
  ck.set("hidden", std::to_string(fc1_.out_features()));
  add_arrays(ck, param_arrays(params()));
  return ck;
}

FusionModel FusionModel::from_checkpoint(const Checkpoint& ck) {
  check_kind(ck, "fusion");
  FusionModel m(ck.get_int("in_features"), ck.get_int("hidden"));
  restore_arrays(ck, param_arrays(m.params()));
  return m;
}

Tensor fuse_input(const std::vector<Tensor>& embeddings, const Tensor& scores) {
  const int regions = static_cast<int>(embeddings.size());
  if (regions == 0 || scores.rank() != 2 || scores.dim(1) != regions) {
    throw ValidationError("fuse: need one attention score per patch embedding");
  }
  const int n = scores.dim(0), e = embeddings[0].dim(1);
  for (const auto& t : embeddings)
    if (t.rank() != 2 || t.dim(0) != n || t.dim(1) != e) throw ValidationError("fuse: embedding shape mismatch");
  Tensor out({n, regions * e});
  for (int b = 0; b < n; ++b)
    for (int r = 0; r < regions; ++r)
      k::scale_shift(embeddings[r].ptr() + static_cast<std::size_t>(b) * e,
                     scores.data[static_cast<std::size_t>(b) * regions + r], 0.0f,
                     out.ptr() + static_cast<std::size_t>(b) * regions * e + static_cast<std::size_t>(r) * e, e);
  return out;
}

int majority_vote(const std::vector<std::array<float, 2>>& patch_logits) {
  if (patch_logits.size() != 7) throw ValidationError("majority vote needs 7 patch predictions");
  int attack = 0;
  for (const auto& l : patch_logits) attack += l[1] > l[0] ? 1 : 0;
  return attack >= 4 ? 1 : 0;
}

}  // namespace dmpad::nn
