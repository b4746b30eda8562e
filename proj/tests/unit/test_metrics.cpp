#include <doctest.h>

#include <cmath>

#include "../oracles/oracles.hpp"
#include "dmpad/core/error.hpp"
#include "dmpad/metrics/metrics.hpp"
#include "test_support.hpp"

using namespace dmpad;
using namespace dmpad::metrics;
using data::Label;

namespace {

std::vector<ScoredSample> make(const std::vector<double>& live, const std::vector<double>& attack) {
  std::vector<ScoredSample> s;
  int i = 0;
  for (double v : live) s.push_back({"l" + std::to_string(i++), "s", Label::bona_fide, std::nullopt, v});
  for (double v : attack) s.push_back({"a" + std::to_string(i++), "s", Label::attack, "latex", v});
  return s;
}

}  // namespace

TEST_CASE("ACER is the mean of APCER and BPCER") {
  MetricsReport r;
  r.apcer = 6.84;
  r.bpcer = 11.10;
  CHECK((r.apcer + r.bpcer) / 2.0 == doctest::Approx(8.97));
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> live(20), attack(30);
    for (auto& v : live) v = rng.uniform();
    for (auto& v : attack) v = rng.uniform();
    const auto m = compute_pad_metrics(make(live, attack), 0.5);
    CHECK(m.acer == (m.apcer + m.bpcer) / 2.0);
  }
}

TEST_CASE("hand-counted operating point") {
  // live: 0.2 0.6 (one false alarm); attack: 0.4 0.7 0.9 (one miss)
  const auto m = compute_pad_metrics(make({0.2, 0.6}, {0.4, 0.7, 0.9}), 0.5);
  CHECK(m.bpcer == doctest::Approx(50.0));
  CHECK(m.apcer == doctest::Approx(100.0 / 3.0));
  CHECK(m.accuracy == doctest::Approx(60.0));
  CHECK(m.n_bona_fide == 2);
  CHECK(m.n_attack == 3);
  CHECK(m.apcer_per_attack_type.at("latex") == doctest::Approx(100.0 / 3.0));
  // score == threshold counts as attack
  CHECK(compute_pad_metrics(make({0.5}, {0.5}), 0.5).apcer == 0.0);
}

TEST_CASE("separable scores give zero error and full detection") {
  const auto s = make({0.1, 0.2}, {0.8, 0.9});
  const auto r = full_report(s, 0.5);
  CHECK(r.acer == 0.0);
  CHECK(r.eer == 0.0);
  CHECK(r.tdr_at_fdr == 100.0);
  CHECK(tdr_at_fdr(make({0.8, 0.9}, {0.1, 0.2}), 1.0) == 0.0);
}

TEST_CASE("identical score multisets give an EER of 50") {
  const auto r = eer(make({0.1, 0.4, 0.7}, {0.7, 0.1, 0.4}));
  CHECK(r.eer == doctest::Approx(50.0));
}

TEST_CASE("EER agrees with the brute-force sweep") {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    const int nl = 50 + static_cast<int>(rng.below(200)), na = 50 + static_cast<int>(rng.below(200));
    const double shift = rng.uniform(0, 2);
    std::vector<double> live(nl), attack(na);
    for (auto& v : live) v = rng.normal();
    for (auto& v : attack) v = rng.normal() + shift;
    const double got = eer(make(live, attack)).eer;
    CHECK(std::abs(got - oracle::eer_sweep(live, attack)) <= 0.5);
  }
}

TEST_CASE("metrics are invariant to strictly increasing score transforms") {
  Rng rng(3);
  std::vector<double> live(80), attack(70);
  for (auto& v : live) v = rng.normal();
  for (auto& v : attack) v = rng.normal() + 1.0;
  auto g = [](double x) { return std::exp(3.0 * x) + 2.0; };
  std::vector<double> gl, ga;
  for (double v : live) gl.push_back(g(v));
  for (double v : attack) ga.push_back(g(v));
  const auto a = full_report(make(live, attack), 0.3);
  const auto b = full_report(make(gl, ga), g(0.3));
  CHECK(a.apcer == b.apcer);
  CHECK(a.bpcer == b.bpcer);
  CHECK(a.acer == b.acer);
  CHECK(a.eer == doctest::Approx(b.eer).epsilon(1e-12));
  CHECK(a.tdr_at_fdr == b.tdr_at_fdr);
}

TEST_CASE("TDR picks the smallest threshold within the false-detection budget") {
  // 100 live scores 0..99; 1% FDR allows one live at or above t, so t = 98.5
  std::vector<double> live, attack{98.5, 99.0, 99.5, 50.0};
  for (int i = 0; i < 100; ++i) live.push_back(i);
  CHECK(tdr_at_fdr(make(live, attack), 1.0) == doctest::Approx(75.0));
  CHECK(tdr_at_fdr(make(live, attack), 0.0) == doctest::Approx(25.0));
  CHECK_THROWS_AS(tdr_at_fdr(make(live, attack), 101.0), ValidationError);
}

TEST_CASE("score files round-trip exactly") {
  test::TempDir dir("scores");
  auto s = make({0.1234567890123, 1.0 / 3.0}, {2.0 / 3.0});
  s[2].attack_type = std::nullopt;
  write_scores_csv(dir.path / "s.csv", s);
  const auto back = read_scores_csv(dir.path / "s.csv");
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].score == s[i].score);
    CHECK(back[i].label == s[i].label);
    CHECK(back[i].sample_id == s[i].sample_id);
  }
  CHECK_FALSE(back[2].attack_type.has_value());
}

TEST_CASE("fold summary reports mean and sample standard deviation") {
  MetricsReport a, b;
  a.acer = 2.0;
  b.acer = 4.0;
  const auto j = folds_json({a, b});
  CHECK(j["mean"]["acer"].get<double>() == doctest::Approx(3.0));
  CHECK(j["std"]["acer"].get<double>() == doctest::Approx(std::sqrt(2.0)));
  CHECK(j["folds"].size() == 2);
}
