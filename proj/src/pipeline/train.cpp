#include "dmpad/pipeline/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "dmpad/core/error.hpp"
#include "dmpad/geometry/resize.hpp"
#include "dmpad/kernels/kernels.hpp"
#include "dmpad/netcore/optim.hpp"

namespace dmpad::pipeline {

namespace k = dmpad::kernels;

namespace {

// Rng stream ids; every random draw in training derives from (seed, stream).
enum Stream : std::uint64_t {
  kPhase1Init = 1,
  kPhase1Data = 2,
  kPhase1Csa = 3,
  kPhase1Mine = 4,
  kPhase1Bank = 5,
  kPatchInit = 10,
  kPatchData = 20,
  kPatchMine = 30,
  kFusionInit = 40,
  kFusionData = 41,
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void say(const Progress& p, const std::string& msg) {
  if (p) p(msg);
}

}  // namespace

// ---------------------------------------------------------------- data

std::vector<LoadedSample> load_samples(const data::DatasetManifest& manifest) {
  std::vector<LoadedSample> out;
  out.reserve(manifest.samples.size());
  for (const auto& s : manifest.samples) {
    LoadedSample ls;
    ls.meta = s;
    ls.image = read_png(s.image_path);
    if (ls.image.width != s.reference_size.width || ls.image.height != s.reference_size.height) {
      throw ValidationError("image " + s.image_path.string() + " does not match its reference size");
    }
    ls.landmarks = data::load_sample_landmarks(s);
    ls.label = s.label == data::Label::attack ? 1 : 0;
    out.push_back(std::move(ls));
  }
  return out;
}

std::vector<int> labels_of(const std::vector<LoadedSample>& samples) {
  std::vector<int> l;
  for (const auto& s : samples) l.push_back(s.label);
  return l;
}

std::vector<Image> fullface_inputs(const std::vector<LoadedSample>& samples, int size) {
  std::vector<Image> out;
  out.reserve(samples.size());
  for (const auto& s : samples)
    out.push_back(s.image.width == size && s.image.height == size ? s.image
                                                                  : geometry::resize_bilinear(s.image, size, size));
  return out;
}

std::vector<Image> region_crops(const std::vector<LoadedSample>& samples, geometry::Region region, int size) {
  std::vector<Image> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    const auto patches = geometry::derive_patch_regions(s.landmarks);
    out.push_back(geometry::crop_and_resize(s.image, patches[region].box, size, size));
  }
  return out;
}

std::vector<std::vector<int>> balanced_batches(const std::vector<int>& labels, int batch_size, Rng& rng) {
  std::vector<int> cls[2];
  for (int i = 0; i < static_cast<int>(labels.size()); ++i) cls[labels[i] != 0 ? 1 : 0].push_back(i);
  if (cls[0].empty() || cls[1].empty()) throw ValidationError("training set needs both bona fide and attack samples");
  const int half = batch_size / 2;
  const int steps = static_cast<int>((labels.size() + batch_size - 1) / batch_size);
  std::vector<int> stream[2];
  for (int c = 0; c < 2; ++c) {
    while (static_cast<int>(stream[c].size()) < steps * half) {
      std::vector<int> perm = cls[c];
      rng.shuffle(std::span<int>(perm));
      stream[c].insert(stream[c].end(), perm.begin(), perm.end());
    }
  }
  std::vector<std::vector<int>> batches(steps);
  for (int s = 0; s < steps; ++s)
    for (int c = 0; c < 2; ++c)
      batches[s].insert(batches[s].end(), stream[c].begin() + s * half, stream[c].begin() + (s + 1) * half);
  return batches;
}

std::vector<int> gather(const std::vector<int>& v, const std::vector<int>& idx) {
  std::vector<int> out;
  for (int i : idx) out.push_back(v[i]);
  return out;
}

std::vector<const Image*> gather_images(const std::vector<Image>& v, const std::vector<int>& idx) {
  std::vector<const Image*> out;
  for (int i : idx) out.push_back(&v[i]);
  return out;
}

// ---------------------------------------------------------------- phase 1

losses::LossWeights effective_weights(const Phase1Config& cfg) {
  losses::LossWeights w = cfg.weights;
  if (!cfg.use_aiaw) w.alpha1 = w.alpha2 = 0.0;
  if (!cfg.use_tf) w.beta1 = w.beta2 = 0.0;
  return w;
}

namespace {

struct TfBranch {
  double loss = 0.0;
  int triplets = 0;
  Tensor d_embedding;  // empty when no triplets
};

// Mean triplet focal loss on L2-normalized embeddings.
TfBranch triplet_branch(const Tensor& emb, const std::vector<int>& labels, const losses::TripletConfig& cfg,
                        Rng& rng, bool want_grad) {
  TfBranch b;
  const Tensor en = nn::l2_normalize_rows(emb);
  const auto dist = losses::pairwise_sq_dist(en);
  const auto trip = losses::mine_triplets(dist, labels, cfg, rng);
  b.triplets = static_cast<int>(trip.size());
  if (trip.empty()) return b;
  const double inv = 1.0 / static_cast<double>(trip.size());
  b.loss = losses::triplet_focal_loss(trip, dist, cfg) * inv;
  if (want_grad) b.d_embedding = nn::l2_normalize_rows_backward(emb, losses::triplet_focal_grad(trip, dist, en, cfg, inv));
  return b;
}

void scale_in_place(Tensor& t, double s) {
  k::scale_shift(t.ptr(), static_cast<float>(s), 0.0f, t.ptr(), t.size());
}

}  // namespace

Phase1Step phase1_head_objective(nn::FullFaceModel& model, const Tensor& f_org, const std::vector<int>& labels,
                                 const Phase1Config& cfg, Rng csa_rng, Rng mine_rng, Tensor* d_f) {
  const losses::LossWeights w = effective_weights(cfg);
  const bool grad = d_f != nullptr;
  auto& head = model.head();
  const auto org = head.forward(f_org);
  std::optional<nn::CsaResult> csa;
  if (cfg.use_csa) csa = nn::csa_augment(f_org, model.style_bank(), labels, csa_rng);
  const Tensor& f_aug = csa ? csa->aug : f_org;
  const auto aug = head.forward(f_aug);

  Phase1Step st;
  auto ce_o = losses::softmax_cross_entropy(org.logits, labels);
  auto ce_a = losses::softmax_cross_entropy(aug.logits, labels);
  st.parts.ce_org = ce_o.loss;
  st.parts.ce_aug = ce_a.loss;

  TfBranch tf_o, tf_a;
  if (cfg.use_tf) {
    tf_o = triplet_branch(org.embedding, labels, cfg.triplet, mine_rng, grad);
    tf_a = triplet_branch(aug.embedding, labels, cfg.triplet, mine_rng, grad);
    st.parts.tf_org = tf_o.loss;
    st.parts.tf_aug = tf_a.loss;
    st.triplets_org = tf_o.triplets;
    st.triplets_aug = tf_a.triplets;
  }
  losses::AiawResult aiaw;
  const bool run_aiaw = cfg.use_aiaw && (w.alpha1 > 0.0 || w.alpha2 > 0.0 || !grad);
  if (run_aiaw) {
    aiaw = losses::aiaw_loss(f_org, f_aug, labels, cfg.aiaw, grad);
    st.parts.aiaw_org = aiaw.org;
    st.parts.aiaw_aug = aiaw.aug;
  }
  st.total = losses::phase1_total_loss(st.parts, w);
  if (!grad) return st;

  scale_in_place(ce_o.d_logits, w.gamma1);
  scale_in_place(ce_a.d_logits, w.gamma2);
  if (!tf_o.d_embedding.data.empty()) scale_in_place(tf_o.d_embedding, w.beta1);
  if (!tf_a.d_embedding.data.empty()) scale_in_place(tf_a.d_embedding, w.beta2);
  Tensor d_org = head.backward(org, tf_o.d_embedding, ce_o.d_logits, true);
  Tensor d_aug = head.backward(aug, tf_a.d_embedding, ce_a.d_logits, true);
  if (run_aiaw) {
    k::axpy(static_cast<float>(w.alpha1), aiaw.d_org.ptr(), d_org.ptr(), d_org.size());
    k::axpy(static_cast<float>(w.alpha2), aiaw.d_aug.ptr(), d_aug.ptr(), d_aug.size());
  }
  if (csa) {
    const Tensor through = nn::csa_backward(*csa, f_org, d_aug);
    k::axpy(1.0f, through.ptr(), d_org.ptr(), d_org.size());
  } else {
    k::axpy(1.0f, d_aug.ptr(), d_org.ptr(), d_org.size());
  }
  *d_f = std::move(d_org);
  return st;
}

Phase1Step phase1_step(nn::FullFaceModel& model, const Tensor& x, const std::vector<int>& labels,
                       const Phase1Config& cfg, Rng csa_rng, Rng mine_rng, bool backward) {
  const Tensor f = model.features(x, nn::Mode::train);
  Tensor d_f;
  const Phase1Step st = phase1_head_objective(model, f, labels, cfg, csa_rng, mine_rng, backward ? &d_f : nullptr);
  if (backward) model.backward_features(d_f);
  return st;
}

nn::FullFaceConfig fullface_config(const TrainConfig& cfg) {
  nn::FullFaceConfig fc;
  fc.input_size = cfg.phase1.input;
  fc.widths = cfg.phase1.widths;
  fc.reduce_channels = cfg.phase1.reduce_channels;
  fc.embed_dim = cfg.phase1.embed_dim;
  fc.num_styles = cfg.phase1.num_styles;
  return fc;
}

Phase1Result train_phase1(const TrainConfig& cfg, const std::vector<LoadedSample>& train, const Progress& progress) {
  cfg.validate();
  if (train.empty()) throw ValidationError("train-phase1: empty training manifest");
  const auto labels = labels_of(train);
  if (std::count(labels.begin(), labels.end(), 1) == 0 || std::count(labels.begin(), labels.end(), 0) == 0) {
    throw ValidationError("train-phase1: training manifest needs both bona fide and attack samples");
  }
  const auto& p1 = cfg.phase1;
  Phase1Result res{nn::FullFaceModel(fullface_config(cfg)), {}, {}};
  nn::FullFaceModel& model = res.model;
  Rng init_rng(cfg.seed, kPhase1Init);
  model.init(init_rng);

  const auto inputs = fullface_inputs(train, p1.input);
  {
    std::vector<const Image*> all;
    for (const auto& im : inputs) all.push_back(&im);
    model.standardizer().fit(all);
  }
  nn::Adam opt(model.params(), static_cast<float>(p1.lr));
  const Rng data_rng(cfg.seed, kPhase1Data);
  const Rng csa_root(cfg.seed, kPhase1Csa);
  const Rng mine_root(cfg.seed, kPhase1Mine);
  Rng bank_rng(cfg.seed, kPhase1Bank);

  long step_id = 0;
  for (int epoch = 1; epoch <= p1.epochs; ++epoch) {
    const auto t0 = Clock::now();
    Rng epoch_rng = data_rng.fork(static_cast<std::uint64_t>(epoch));
    const auto batches = balanced_batches(labels, p1.batch_size, epoch_rng);
    if (p1.use_csa) model.style_bank().begin_epoch();
    Phase1EpochLog log;
    log.epoch = epoch;
    for (const auto& idx : batches) {
      const auto lab = gather(labels, idx);
      const Tensor x = model.standardizer().batch(gather_images(inputs, idx));
      opt.zero_grad();
      const Tensor f = model.features(x, nn::Mode::train);
      if (p1.use_csa) {
        const auto stats = nn::instance_stats(f);
        if (!model.style_bank().initialized()) model.style_bank().init_kmeans(stats, lab, bank_rng);
        model.style_bank().accumulate(stats, lab);
      }
      Tensor d_f;
      const auto st = phase1_head_objective(model, f, lab, p1, csa_root.fork(step_id), mine_root.fork(step_id), &d_f);
      model.backward_features(d_f);
      opt.step();
      ++step_id;
      res.step_totals.push_back(st.total);
      log.total += st.total;
      log.parts.aiaw_org += st.parts.aiaw_org;
      log.parts.tf_org += st.parts.tf_org;
      log.parts.ce_org += st.parts.ce_org;
      log.parts.aiaw_aug += st.parts.aiaw_aug;
      log.parts.tf_aug += st.parts.tf_aug;
      log.parts.ce_aug += st.parts.ce_aug;
      log.triplets_org += st.triplets_org;
      log.triplets_aug += st.triplets_aug;
      if (!std::isfinite(st.total)) throw RuntimeError("train-phase1: loss became non-finite at epoch " + std::to_string(epoch));
    }
    if (p1.use_csa) model.style_bank().end_epoch(static_cast<float>(p1.style_momentum));
    const double n = static_cast<double>(batches.size());
    log.total /= n;
    for (double* v : {&log.parts.aiaw_org, &log.parts.tf_org, &log.parts.ce_org, &log.parts.aiaw_aug,
                      &log.parts.tf_aug, &log.parts.ce_aug, &log.triplets_org, &log.triplets_aug})
      *v /= n;
    log.wall_seconds = seconds_since(t0);
    res.log.push_back(log);
    std::ostringstream msg;
    msg << "phase1 epoch " << epoch << "/" << p1.epochs << " loss " << std::setprecision(5) << log.total << " ce "
        << log.parts.ce_org << " (" << std::setprecision(3) << log.wall_seconds << " s)";
    say(progress, msg.str());
  }
  return res;
}

void write_phase1_log(const std::filesystem::path& path, const std::vector<Phase1EpochLog>& log) {
  std::ofstream out(path);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out << "epoch,total,aiaw_org,tf_org,ce_org,aiaw_aug,tf_aug,ce_aug,triplets_org,triplets_aug,wall_time_s\n"
      << std::setprecision(9);
  for (const auto& l : log)
    out << l.epoch << ',' << l.total << ',' << l.parts.aiaw_org << ',' << l.parts.tf_org << ',' << l.parts.ce_org
        << ',' << l.parts.aiaw_aug << ',' << l.parts.tf_aug << ',' << l.parts.ce_aug << ',' << l.triplets_org << ','
        << l.triplets_aug << ',' << l.wall_seconds << '\n';
}

// ---------------------------------------------------------------- attention

std::vector<attention::AttentionRow> extract_attention(nn::FullFaceModel& model,
                                                       const std::vector<LoadedSample>& samples,
                                                       double k_percent) {
  const int size = model.config().input_size;
  const auto inputs = fullface_inputs(samples, size);
  std::vector<attention::AttentionRow> rows;
  constexpr int kChunk = 32;
  for (std::size_t start = 0; start < samples.size(); start += kChunk) {
    std::vector<int> idx;
    for (std::size_t i = start; i < std::min(samples.size(), start + kChunk); ++i) idx.push_back(static_cast<int>(i));
    const auto cam = attention::gradcam(model, model.standardizer().batch(gather_images(inputs, idx)));
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const auto& s = samples[idx[j]];
      const auto lm = geometry::rescale_landmarks(s.landmarks, {size, size});
      const auto patches = geometry::derive_patch_regions(lm);
      rows.push_back({s.meta.sample_id, attention::region_attention_scores(cam.heatmaps[j], patches, k_percent)});
    }
  }
  return rows;
}

// ---------------------------------------------------------------- phase 2

PatchResult train_patch(const TrainConfig& cfg, const std::vector<LoadedSample>& train, geometry::Region region,
                        const Progress& progress) {
  cfg.validate();
  const auto& p2 = cfg.phase2;
  const auto labels = labels_of(train);
  const std::string name(geometry::region_name(region));
  nn::PatchConfig pc;
  pc.input_size = p2.input;
  pc.widths = p2.widths;
  pc.embed_dim = p2.embed_dim;
  PatchResult res{nn::PatchModel(pc, name), {}};
  nn::PatchModel& model = res.model;
  Rng init_rng(cfg.seed, kPatchInit + static_cast<std::uint64_t>(region));
  model.init(init_rng);
  const auto crops = region_crops(train, region, p2.input);
  {
    std::vector<const Image*> all;
    for (const auto& im : crops) all.push_back(&im);
    model.standardizer().fit(all);
  }
  nn::Adam opt(model.params(), static_cast<float>(p2.lr));
  const Rng data_rng(cfg.seed, kPatchData);  // shared by all regions
  const Rng mine_root(cfg.seed, kPatchMine + static_cast<std::uint64_t>(region));
  const double beta = p2.use_tf ? p2.beta : 0.0;
  long step_id = 0;
  for (int epoch = 1; epoch <= p2.epochs; ++epoch) {
    const auto t0 = Clock::now();
    Rng epoch_rng = data_rng.fork(static_cast<std::uint64_t>(epoch));
    const auto batches = balanced_batches(labels, p2.batch_size, epoch_rng);
    PatchEpochLog log;
    log.region = name;
    log.epoch = epoch;
    for (const auto& idx : batches) {
      const auto lab = gather(labels, idx);
      const Tensor x = model.standardizer().batch(gather_images(crops, idx));
      opt.zero_grad();
      const auto out = model.forward(x, nn::Mode::train);
      auto ce = losses::softmax_cross_entropy(out.logits, lab);
      scale_in_place(ce.d_logits, p2.alpha);
      TfBranch tf;
      if (p2.use_tf) {
        Rng mine = mine_root.fork(step_id);
        tf = triplet_branch(out.embedding, lab, p2.triplet, mine, true);
        if (!tf.d_embedding.data.empty()) scale_in_place(tf.d_embedding, beta);
      }
      model.backward(out, tf.d_embedding, ce.d_logits);
      opt.step();
      ++step_id;
      const double total = losses::patch_loss(ce.loss, tf.loss, losses::LossWeights{.alpha = p2.alpha, .beta = beta});
      if (!std::isfinite(total)) throw RuntimeError("train-phase2: loss became non-finite for " + name);
      log.total += total;
      log.ce += ce.loss;
      log.tf += tf.loss;
      log.triplets += tf.triplets;
    }
    const double n = static_cast<double>(batches.size());
    log.total /= n;
    log.ce /= n;
    log.tf /= n;
    log.triplets /= n;
    log.wall_seconds = seconds_since(t0);
    res.log.push_back(log);
    std::ostringstream msg;
    msg << "phase2 " << name << " epoch " << epoch << "/" << p2.epochs << " loss " << std::setprecision(5)
        << log.total;
    say(progress, msg.str());
  }
  return res;
}

std::vector<PatchResult> train_phase2(const TrainConfig& cfg, const std::vector<LoadedSample>& train,
                                      const Progress& progress) {
  if (train.empty()) throw ValidationError("train-phase2: empty training manifest");
  std::vector<PatchResult> out;
  for (auto r : geometry::kAllRegions) out.push_back(train_patch(cfg, train, r, progress));
  return out;
}

void write_patch_log(const std::filesystem::path& path, const std::vector<PatchEpochLog>& log) {
  std::ofstream out(path);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out << "region,epoch,total,ce,tf,triplets,wall_time_s\n" << std::setprecision(9);
  for (const auto& l : log)
    out << l.region << ',' << l.epoch << ',' << l.total << ',' << l.ce << ',' << l.tf << ',' << l.triplets << ','
        << l.wall_seconds << '\n';
}

// ---------------------------------------------------------------- fusion

PatchOutputs patch_outputs(std::vector<nn::PatchModel>& patches, const std::vector<LoadedSample>& samples) {
  if (patches.size() != geometry::kNumRegions) throw ValidationError("expected 7 patch models");
  PatchOutputs out;
  for (std::size_t r = 0; r < patches.size(); ++r) {
    auto& m = patches[r];
    const auto crops = region_crops(samples, geometry::kAllRegions[r], m.config().input_size);
    const int n = static_cast<int>(samples.size()), e = m.config().embed_dim;
    Tensor emb({n, e}), logits({n, 2});
    constexpr int kChunk = 64;
    for (int start = 0; start < n; start += kChunk) {
      std::vector<int> idx;
      for (int i = start; i < std::min(n, start + kChunk); ++i) idx.push_back(i);
      const auto o = m.forward(m.standardizer().batch(gather_images(crops, idx)), nn::Mode::eval);
      std::copy(o.embedding.data.begin(), o.embedding.data.end(), emb.data.begin() + static_cast<std::size_t>(start) * e);
      std::copy(o.logits.data.begin(), o.logits.data.end(), logits.data.begin() + static_cast<std::size_t>(start) * 2);
    }
    out.embeddings.push_back(std::move(emb));
    out.logits.push_back(std::move(logits));
  }
  return out;
}

std::map<std::string, attention::AttentionScores> attention_map(const std::vector<attention::AttentionRow>& rows) {
  std::map<std::string, attention::AttentionScores> m;
  for (const auto& r : rows) m[r.sample_id] = r.scores;
  return m;
}

Tensor attention_matrix(const std::vector<LoadedSample>& samples,
                        const std::map<std::string, attention::AttentionScores>& table) {
  const int n = static_cast<int>(samples.size());
  Tensor a({n, geometry::kNumRegions});
  for (int i = 0; i < n; ++i) {
    const auto it = table.find(samples[i].meta.sample_id);
    if (it == table.end()) {
      throw ValidationError("attention table has no row for sample '" + samples[i].meta.sample_id +
                            "' (re-run extract-attention on this manifest)");
    }
    for (int r = 0; r < geometry::kNumRegions; ++r)
      a.data[static_cast<std::size_t>(i) * geometry::kNumRegions + r] = it->second.scores[r];
  }
  return a;
}

FusionResult train_fusion(const TrainConfig& cfg, std::vector<nn::PatchModel>& patches,
                          const std::map<std::string, attention::AttentionScores>& table,
                          const std::vector<LoadedSample>& train, const Progress& progress) {
  cfg.validate();
  FusionResult res;
  if (cfg.fusion.mode == FusionMode::majority_vote) return res;
  if (train.empty()) throw ValidationError("train-fusion: empty training manifest");
  const auto labels = labels_of(train);
  const auto outputs = patch_outputs(patches, train);
  Tensor att = attention_matrix(train, table);
  if (cfg.fusion.mode == FusionMode::unweighted_mlp) std::fill(att.data.begin(), att.data.end(), 1.0f);
  const Tensor input = nn::fuse_input(outputs.embeddings, att);
  const int in_features = input.dim(1);

  nn::FusionModel model(in_features, cfg.fusion.hidden);
  Rng init_rng(cfg.seed, kFusionInit);
  model.init(init_rng);
  nn::Adam opt(model.params(), static_cast<float>(cfg.fusion.lr));
  const Rng data_rng(cfg.seed, kFusionData);
  for (int epoch = 1; epoch <= cfg.fusion.epochs; ++epoch) {
    const auto t0 = Clock::now();
    Rng epoch_rng = data_rng.fork(static_cast<std::uint64_t>(epoch));
    const auto batches = balanced_batches(labels, cfg.fusion.batch_size, epoch_rng);
    FusionEpochLog log;
    log.epoch = epoch;
    for (const auto& idx : batches) {
      Tensor x({static_cast<int>(idx.size()), in_features});
      for (std::size_t j = 0; j < idx.size(); ++j)
        std::copy_n(input.ptr() + static_cast<std::size_t>(idx[j]) * in_features, in_features,
                    x.ptr() + j * in_features);
      opt.zero_grad();
      const auto out = model.forward(x);
      const auto ce = losses::softmax_cross_entropy(out.logits, gather(labels, idx));
      model.backward(out, ce.d_logits);
      opt.step();
      log.ce += ce.loss;
    }
    log.ce /= static_cast<double>(batches.size());
    log.wall_seconds = seconds_since(t0);
    res.log.push_back(log);
    std::ostringstream msg;
    msg << "fusion epoch " << epoch << "/" << cfg.fusion.epochs << " ce " << std::setprecision(5) << log.ce;
    say(progress, msg.str());
  }
  res.model = std::move(model);
  return res;
}

void write_fusion_log(const std::filesystem::path& path, const std::vector<FusionEpochLog>& log) {
  std::ofstream out(path);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out << "epoch,ce,wall_time_s\n" << std::setprecision(9);
  for (const auto& l : log) out << l.epoch << ',' << l.ce << ',' << l.wall_seconds << '\n';
}

// ---------------------------------------------------------------- system IO

void save_fusion(const std::filesystem::path& dir, const FusionResult& fusion, FusionMode mode) {
  nn::Checkpoint ck;
  if (fusion.model) {
    nn::FusionModel copy = *fusion.model;
    ck = copy.to_checkpoint();
  } else {
    ck.kind = "fusion";
  }
  ck.set("mode", fusion_mode_name(mode));
  nn::save_checkpoint(dir / "fusion.ckpt", ck);
}

void write_norm_stats(const std::filesystem::path& dir, const TrainedSystem& system) {
  std::ofstream out(dir / "norm_stats.txt");
  if (!out) throw RuntimeError("cannot write " + (dir / "norm_stats.txt").string());
  out << std::setprecision(9);
  auto line = [&](const std::string& name, const nn::Standardizer& s) {
    out << name << " mean " << s.mean[0] << ' ' << s.mean[1] << ' ' << s.mean[2] << " std " << s.std[0] << ' '
        << s.std[1] << ' ' << s.std[2] << '\n';
  };
  line("fullface", system.fullface.standardizer());
  for (const auto& p : system.patches) line("patch_" + p.region(), p.standardizer());
}

TrainedSystem load_system(const std::filesystem::path& dir) {
  TrainedSystem sys{nn::FullFaceModel::from_checkpoint(nn::load_checkpoint(dir / "phase1.ckpt")), {}, {}, {}, 50.0};
  for (auto r : geometry::kAllRegions) {
    const auto path = dir / ("patch_" + std::string(geometry::region_name(r)) + ".ckpt");
    sys.patches.push_back(nn::PatchModel::from_checkpoint(nn::load_checkpoint(path)));
  }
  const auto fck = nn::load_checkpoint(dir / "fusion.ckpt");
  sys.mode = parse_fusion_mode(fck.get("mode"));
  if (sys.mode != FusionMode::majority_vote) sys.fusion = nn::FusionModel::from_checkpoint(fck);
  return sys;
}

// ---------------------------------------------------------------- inference

std::vector<double> fusion_scores(const TrainedSystem& system, const PatchOutputs& outputs, const Tensor& attention) {
  const int n = attention.dim(0);
  std::vector<double> scores(n);
  if (system.mode == FusionMode::majority_vote) {
    for (int i = 0; i < n; ++i) {
      int votes = 0;
      for (const auto& l : outputs.logits) votes += l.data[2 * i + 1] > l.data[2 * i] ? 1 : 0;
      scores[i] = votes / 7.0;
    }
    return scores;
  }
  if (!system.fusion) throw RuntimeError("fusion model missing (run train-fusion)");
  Tensor att = attention;
  if (system.mode == FusionMode::unweighted_mlp) std::fill(att.data.begin(), att.data.end(), 1.0f);
  const auto out = system.fusion->forward(nn::fuse_input(outputs.embeddings, att));
  return losses::attack_probability(out.logits);
}

std::vector<Prediction> predict(TrainedSystem& system, const std::vector<LoadedSample>& samples, double threshold) {
  if (samples.empty()) return {};
  const auto rows = extract_attention(system.fullface, samples, system.k_percent);
  const Tensor att = attention_matrix(samples, attention_map(rows));
  const auto outputs = patch_outputs(system.patches, samples);
  const auto scores = fusion_scores(system, outputs, att);
  std::vector<Prediction> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out[i].score = scores[i];
    out[i].label = scores[i] >= threshold ? 1 : 0;
    out[i].attention = rows[i].scores;
  }
  return out;
}

std::vector<metrics::ScoredSample> score_samples(TrainedSystem& system, const std::vector<LoadedSample>& samples,
                                                 double threshold) {
  const auto preds = predict(system, samples, threshold);
  std::vector<metrics::ScoredSample> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& m = samples[i].meta;
    out.push_back({m.sample_id, m.subject_id, m.label, m.attack_type, preds[i].score});
  }
  return out;
}

}  // namespace dmpad::pipeline
