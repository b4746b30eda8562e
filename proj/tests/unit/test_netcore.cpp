#include <doctest.h>

#include <cmath>
#include <functional>

#include "dmpad/core/error.hpp"
#include "dmpad/core/rng.hpp"
#include "dmpad/netcore/checkpoint.hpp"
#include "dmpad/netcore/csa.hpp"
#include "dmpad/netcore/layers.hpp"
#include "dmpad/netcore/models.hpp"
#include "dmpad/netcore/optim.hpp"
#include "test_support.hpp"

using namespace dmpad;
using namespace dmpad::nn;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = static_cast<float>(scale * rng.normal());
  return t;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a.data[i]) * b.data[i];
  return s;
}

// Central differences of L(x) = <w, f(x)> against an analytic gradient, on a
// handful of coordinates. Tolerance is relative to the gradient's max magnitude.
void check_gradient(Tensor& x, const Tensor& analytic, const std::function<double()>& loss,
                    double h = 1e-2, double tol = 2e-2, int probes = 24) {
  double scale = 1e-6;
  for (float g : analytic.data) scale = std::max(scale, static_cast<double>(std::abs(g)));
  Rng pick(99);
  for (int p = 0; p < probes; ++p) {
    const auto i = static_cast<std::size_t>(pick.below(x.size()));
    const float saved = x.data[i];
    x.data[i] = saved + static_cast<float>(h);
    const double up = loss();
    x.data[i] = saved - static_cast<float>(h);
    const double down = loss();
    x.data[i] = saved;
    const double numeric = (up - down) / (2 * h);
    CHECK(std::abs(numeric - analytic.data[i]) <= tol * scale);
  }
}

StyleBank toy_bank(const Tensor& f, const std::vector<int>& labels, int styles) {
  StyleBank bank(styles, f.dim(0));
  Rng rng(5);
  bank.init_kmeans(instance_stats(f), labels, rng);
  return bank;
}

}  // namespace

TEST_CASE("conv backbone output shapes follow the stride-2 rule") {
  ConvBackbone bb(3, {4, 8, 16}, "bb");
  Rng rng(1);
  bb.init(rng);
  const auto y = bb.forward(random_tensor({3, 2, 64, 64}, rng), Mode::eval);
  CHECK(y.shape == std::vector<int>{16, 2, 8, 8});
  CHECK(bb.out_size(64) == 8);
  CHECK(bb.out_size(65) == 9);
}

TEST_CASE("full-face and patch models produce the documented shapes") {
  FullFaceConfig cfg;
  cfg.input_size = 64;
  cfg.widths = {4, 8};
  cfg.reduce_channels = 12;
  cfg.embed_dim = 6;
  cfg.num_styles = 4;
  FullFaceModel model(cfg);
  Rng rng(2);
  model.init(rng);
  const auto f = model.features(random_tensor({3, 3, 64, 64}, rng), Mode::eval);
  CHECK(f.shape == std::vector<int>{12, 3, 16, 16});
  CHECK(model.feature_size() == 16);
  const auto out = model.head().forward(f);
  CHECK(out.embedding.shape == std::vector<int>{3, 6});
  CHECK(out.logits.shape == std::vector<int>{3, 2});
  CHECK_THROWS_AS(model.features(random_tensor({3, 1, 32, 32}, rng), Mode::eval), ValidationError);

  PatchModel patch({}, "nose");
  patch.init(rng);
  const auto po = patch.forward(random_tensor({3, 2, 64, 64}, rng), Mode::eval);
  CHECK(po.embedding.shape == std::vector<int>{2, 16});
  CHECK(po.logits.shape == std::vector<int>{2, 2});
}

TEST_CASE("eval mode is deterministic and batch-equivariant") {
  PatchConfig cfg;
  cfg.widths = {4, 8};
  cfg.embed_dim = 5;
  PatchModel model(cfg);
  Rng rng(3);
  model.init(rng);
  const auto x = random_tensor({3, 4, 64, 64}, rng);
  const auto a = model.forward(x, Mode::eval);
  const auto b = model.forward(x, Mode::eval);
  CHECK(a.logits.data == b.logits.data);

  // Reverse the batch: channel-major layout, so permute the N axis of every channel.
  Tensor rev(x.shape);
  const std::size_t plane = 64 * 64;
  for (int c = 0; c < 3; ++c)
    for (int n = 0; n < 4; ++n)
      std::copy_n(x.ptr() + (c * 4 + n) * plane, plane, rev.ptr() + (c * 4 + (3 - n)) * plane);
  const auto r = model.forward(rev, Mode::eval);
  for (int n = 0; n < 4; ++n)
    for (int k = 0; k < 2; ++k)
      CHECK(r.logits.data[(3 - n) * 2 + k] == doctest::Approx(a.logits.data[n * 2 + k]).epsilon(1e-4));
}

TEST_CASE("conv gradients match finite differences") {
  Conv2d conv({3, 4, 3, 2, 1}, "c");
  Rng rng(4);
  conv.init(rng);
  Tensor x = random_tensor({3, 2, 7, 7}, rng);
  const auto w = random_tensor(conv.forward(x, Mode::train).shape, rng);
  for (auto* p : conv.params()) p->zero_grad();
  conv.forward(x, Mode::train);
  const auto dx = conv.backward(w, true);
  auto loss = [&] { return dot(w, conv.forward(x, Mode::train)); };
  check_gradient(x, dx, loss);
  check_gradient(conv.weight().value, conv.weight().grad, loss);
  check_gradient(conv.bias().value, conv.bias().grad, loss);

  Conv2d point({3, 5, 1, 1, 0}, "p");
  point.init(rng);
  const auto w2 = random_tensor({5, 2, 7, 7}, rng);
  point.forward(x, Mode::train);
  const auto dx2 = point.backward(w2, true);
  check_gradient(x, dx2, [&] { return dot(w2, point.forward(x, Mode::train)); });
}

TEST_CASE("batch norm gradients match finite differences in train mode") {
  BatchNorm2d bn(3, "bn");
  Rng rng(6);
  Tensor x = random_tensor({3, 4, 3, 3}, rng, 2.0);
  const auto w = random_tensor(x.shape, rng);
  bn.forward(x, Mode::train);
  const auto dx = bn.backward(w);
  check_gradient(x, dx, [&] { return dot(w, bn.forward(x, Mode::train)); }, 1e-2, 3e-2);
}

TEST_CASE("linear, normalization and pooling gradients match finite differences") {
  Linear fc(6, 4, "fc");
  Rng rng(8);
  fc.init(rng);
  Tensor x = random_tensor({3, 6}, rng);
  const auto w = random_tensor({3, 4}, rng);
  const auto dx = fc.backward(x, w, true);
  auto loss = [&] { return dot(w, fc.forward(x)); };
  check_gradient(x, dx, loss);
  check_gradient(fc.weight().value, fc.weight().grad, loss);

  Tensor y = random_tensor({4, 5}, rng);
  const auto wy = random_tensor({4, 5}, rng);
  check_gradient(y, l2_normalize_rows_backward(y, wy), [&] { return dot(wy, l2_normalize_rows(y)); }, 1e-3);
  const auto n = l2_normalize_rows(y);
  for (int r = 0; r < 4; ++r) {
    double s = 0;
    for (int c = 0; c < 5; ++c) s += n.data[r * 5 + c] * n.data[r * 5 + c];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }

  Tensor f = random_tensor({3, 2, 4, 4}, rng);
  const auto wp = random_tensor({2, 3}, rng);
  check_gradient(f, global_avg_pool_backward(wp, f.shape), [&] { return dot(wp, global_avg_pool(f)); });
}

TEST_CASE("embedding head backward matches finite differences") {
  EmbedHead head(5, 3, "h");
  Rng rng(9);
  head.init(rng);
  Tensor f = random_tensor({5, 2, 3, 3}, rng);
  const auto we = random_tensor({2, 3}, rng);
  const auto wl = random_tensor({2, 2}, rng);
  const auto out = head.forward(f);
  const auto df = head.backward(out, we, wl, true);
  check_gradient(f, df, [&] {
    const auto o = head.forward(f);
    return dot(we, o.embedding) + dot(wl, o.logits);
  });
}

TEST_CASE("instance statistics are per sample and per channel") {
  Tensor f({2, 2, 1, 4});
  const float v[] = {1, 2, 3, 4, 0, 0, 0, 0, 5, 5, 5, 5, -1, 1, -1, 1};
  std::copy(std::begin(v), std::end(v), f.data.begin());
  const auto s = instance_stats(f);
  CHECK(s.mean.data[0] == doctest::Approx(2.5));   // n0, c0
  CHECK(s.mean.data[1] == doctest::Approx(5.0));   // n0, c1
  CHECK(s.mean.data[2] == doctest::Approx(0.0));   // n1, c0
  CHECK(s.std.data[0] == doctest::Approx(std::sqrt(1.25)));
  CHECK(s.std.data[3] == doctest::Approx(1.0));
}

TEST_CASE("style mixing with lambda 0 reproduces the input up to the std epsilon") {
  Rng rng(10);
  const auto f = random_tensor({6, 4, 3, 3}, rng, 3.0);
  const std::vector<int> labels{0, 1, 0, 1};
  const auto bank = toy_bank(f, labels, 4);
  Rng draw(1);
  const auto r = csa_augment(f, bank, labels, draw, {0.0f});
  const auto st = instance_stats(f);
  for (int c = 0; c < 6; ++c)
    for (int n = 0; n < 4; ++n)
      for (int p = 0; p < 9; ++p) {
        const std::size_t i = (static_cast<std::size_t>(c) * 4 + n) * 9 + p;
        const double sd = st.std.data[n * 6 + c];
        const double z = (f.data[i] - st.mean.data[n * 6 + c]) / sd;
        CHECK(std::abs(r.aug.data[i] - f.data[i]) <= 1e-5 * (std::abs(z) + 1.0) + 2e-5 * sd);
      }
}

TEST_CASE("style mixing with lambda 1 transfers the chosen style's statistics") {
  Rng rng(11);
  const auto f = random_tensor({5, 4, 4, 4}, rng, 2.0);
  const std::vector<int> labels{0, 0, 1, 1};
  const auto bank = toy_bank(f, labels, 4);
  Rng draw(2);
  const auto r = csa_augment(f, bank, labels, draw, {1.0f});
  const auto st = instance_stats(r.aug);
  for (int n = 0; n < 4; ++n) {
    CHECK(bank.label_of(r.style[n]) == labels[n]);
    for (int c = 0; c < 5; ++c) {
      CHECK(st.mean.data[n * 5 + c] == doctest::Approx(bank.mean(r.style[n])[c]).epsilon(1e-4));
      CHECK(st.std.data[n * 5 + c] == doctest::Approx(bank.std(r.style[n])[c]).epsilon(1e-4));
    }
  }
}

TEST_CASE("style mixing backward matches finite differences") {
  Rng rng(12);
  Tensor f = random_tensor({4, 3, 3, 3}, rng, 1.5);
  const std::vector<int> labels{0, 1, 1};
  const auto bank = toy_bank(f, labels, 3);
  const auto w = random_tensor(f.shape, rng);
  Rng d0(3);
  const auto r = csa_augment(f, bank, labels, d0);
  const auto df = csa_backward(r, f, w);
  check_gradient(f, df, [&] {
    Rng d(3);
    return dot(w, csa_augment(f, bank, labels, d).aug);
  }, 1e-2, 3e-2, 40);
}

TEST_CASE("style bank clusters per class and falls back when a class is missing") {
  Rng rng(13);
  const auto f = random_tensor({3, 10, 2, 2}, rng);
  const std::vector<int> labels{0, 0, 0, 0, 0, 0, 1, 1, 1, 1};
  const auto bank = toy_bank(f, labels, 5);
  CHECK(bank.initialized());
  int live = 0;
  for (int s = 0; s < 5; ++s) live += bank.label_of(s) == 0;
  CHECK(live == 3);
  CHECK(bank.candidates(0).size() == 3);
  CHECK(bank.candidates(1).size() == 2);
  StyleBank empty(4, 3);
  CHECK_FALSE(empty.initialized());
  Rng d(1);
  CHECK_THROWS_AS(csa_augment(f, empty, labels, d), RuntimeError);
}

TEST_CASE("fusion input scales each patch embedding by its attention score") {
  Rng rng(14);
  std::vector<Tensor> emb;
  for (int r = 0; r < 7; ++r) emb.push_back(random_tensor({2, 3}, rng));
  Tensor scores({2, 7}, 1.0f);
  const auto ones = fuse_input(emb, scores);
  CHECK(ones.shape == std::vector<int>{2, 21});
  for (int n = 0; n < 2; ++n)
    for (int r = 0; r < 7; ++r)
      for (int e = 0; e < 3; ++e) CHECK(ones.data[n * 21 + r * 3 + e] == emb[r].data[n * 3 + e]);
  scores.data[3] = 0.0f;  // sample 0, left cheek
  scores.data[7 + 6] = 0.5f;
  const auto z = fuse_input(emb, scores);
  for (int e = 0; e < 3; ++e) {
    CHECK(z.data[3 * 3 + e] == 0.0f);
    CHECK(z.data[21 + 6 * 3 + e] == doctest::Approx(0.5f * emb[6].data[3 + e]));
  }
  emb.pop_back();
  CHECK_THROWS_AS(fuse_input(emb, scores), ValidationError);
}

TEST_CASE("majority vote needs four attack votes") {
  std::vector<std::array<float, 2>> logits(7, {1.0f, 0.0f});
  CHECK(majority_vote(logits) == 0);
  for (int i = 0; i < 3; ++i) logits[i] = {0.0f, 1.0f};
  CHECK(majority_vote(logits) == 0);
  logits[3] = {0.0f, 1.0f};
  CHECK(majority_vote(logits) == 1);
  logits.pop_back();
  CHECK_THROWS_AS(majority_vote(logits), ValidationError);
}

TEST_CASE("fusion MLP backward matches finite differences") {
  FusionModel mlp(14, 6);
  Rng rng(15);
  mlp.init(rng);
  const auto x = random_tensor({3, 14}, rng);
  const auto w = random_tensor({3, 2}, rng);
  mlp.zero_grad();
  mlp.backward(mlp.forward(x), w);
  auto* p = mlp.params()[0];
  check_gradient(p->value, p->grad, [&] { return dot(w, mlp.forward(x).logits); }, 1e-3);
}

TEST_CASE("Adam takes a signed lr-sized first step") {
  Param p("p", {3});
  p.value.data = {1.0f, -2.0f, 0.5f};
  p.grad.data = {0.3f, -4.0f, 0.0f};
  Adam opt({&p}, 0.1f);
  opt.step();
  CHECK(p.value.data[0] == doctest::Approx(0.9f).epsilon(1e-5));
  CHECK(p.value.data[1] == doctest::Approx(-1.9f).epsilon(1e-5));
  CHECK(p.value.data[2] == 0.5f);
  CHECK(opt.steps() == 1);
}

TEST_CASE("checkpoints round-trip models exactly") {
  test::TempDir dir("ckpt");
  FullFaceConfig cfg;
  cfg.input_size = 32;
  cfg.widths = {4, 8};
  cfg.reduce_channels = 10;
  cfg.embed_dim = 4;
  cfg.num_styles = 4;
  FullFaceModel model(cfg);
  Rng rng(16);
  model.init(rng);
  const auto x = random_tensor({3, 4, 32, 32}, rng);
  model.features(x, Mode::train);  // moves the running stats away from their init
  model.standardizer().mean = {0.1f, 0.2f, 0.3f};
  const std::vector<int> labels{0, 1, 0, 1};
  Rng krng(1);
  model.style_bank().init_kmeans(instance_stats(model.features(x, Mode::eval)), labels, krng);
  save_checkpoint(dir.path / "m.ckpt", model.to_checkpoint());
  auto loaded = FullFaceModel::from_checkpoint(load_checkpoint(dir.path / "m.ckpt"));
  CHECK(loaded.config().widths == cfg.widths);
  CHECK(loaded.standardizer().mean == model.standardizer().mean);
  CHECK(loaded.style_bank().initialized());
  const auto a = model.head().forward(model.features(x, Mode::eval));
  const auto b = loaded.head().forward(loaded.features(x, Mode::eval));
  CHECK(a.logits.data == b.logits.data);

  PatchModel patch(PatchConfig{32, {4}, 3}, "forehead");
  patch.init(rng);
  save_checkpoint(dir.path / "p.ckpt", patch.to_checkpoint());
  auto lp = PatchModel::from_checkpoint(load_checkpoint(dir.path / "p.ckpt"));
  CHECK(lp.region() == "forehead");
  const auto px = random_tensor({3, 2, 32, 32}, rng);
  CHECK(lp.forward(px, Mode::eval).logits.data == patch.forward(px, Mode::eval).logits.data);

  CHECK_THROWS_AS(PatchModel::from_checkpoint(load_checkpoint(dir.path / "m.ckpt")), RuntimeError);
  test::spit(dir.path / "junk.ckpt", "not a checkpoint\n");
  CHECK_THROWS(load_checkpoint(dir.path / "junk.ckpt"));
}
