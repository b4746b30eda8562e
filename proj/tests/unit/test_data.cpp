#include <doctest.h>

#include <algorithm>
#include <set>

#include "dmpad/core/error.hpp"
#include "dmpad/data/manifest.hpp"
#include "dmpad/data/split.hpp"
#include "dmpad/data/synth.hpp"
#include "dmpad/geometry/regions.hpp"
#include "test_support.hpp"

using namespace dmpad;
using namespace dmpad::data;
namespace fs = std::filesystem;

namespace {

SynthConfig tiny_config(int live = 6, int attack = 6) {
  SynthConfig cfg;
  cfg.n_subjects_live = live;
  cfg.n_subjects_attack = attack;
  cfg.image_size = 64;
  cfg.seed = 11;
  return cfg;
}

std::string line_for(const FaceSample& s) {
  return s.sample_id + "," + s.subject_id + "," + std::string(label_token(s.label)) + "," +
         s.attack_type.value_or("") + ",images/" + s.sample_id + ".png,landmarks/" + s.sample_id +
         ".txt,64,64\n";
}

std::string with_field(const std::string& line, int index, const std::string& value) {
  std::vector<std::string> f;
  std::size_t start = 0;
  for (std::size_t pos; (pos = line.find_first_of(",\n", start)) != std::string::npos; start = pos + 1)
    f.push_back(line.substr(start, pos - start));
  f[index] = value;
  std::string out;
  for (std::size_t i = 0; i < f.size(); ++i) out += (i ? "," : "") + f[i];
  return out + "\n";
}

}  // namespace

TEST_CASE("synthetic generation is deterministic to the byte") {
  test::TempDir a("synth_a"), b("synth_b");
  const auto ma = generate_synthetic(tiny_config(2, 2), a.path);
  generate_synthetic(tiny_config(2, 2), b.path);
  REQUIRE(ma.samples.size() == 4);
  CHECK(test::slurp(a.path / "manifest.csv") == test::slurp(b.path / "manifest.csv"));
  for (const auto& s : ma.samples) {
    const auto rel = fs::relative(s.image_path, a.path);
    CHECK(test::slurp(s.image_path) == test::slurp(b.path / rel));
    const auto lrel = fs::relative(s.landmark_path, a.path);
    CHECK(test::slurp(s.landmark_path) == test::slurp(b.path / lrel));
  }
  const auto loaded = load_manifest(a.path / "manifest.csv");
  CHECK(loaded.samples.size() == 4);
  CHECK(loaded.count(Label::attack) == 2);
}

TEST_CASE("every synthetic landmark set yields seven valid regions") {
  const auto cfg = tiny_config(8, 8);
  for (int subject = 0; subject < 8; ++subject) {
    for (Label l : {Label::bona_fide, Label::attack}) {
      const auto r = synth::render_sample(cfg, l, subject, 0);
      const auto ps = geometry::derive_patch_regions(r.landmarks);
      for (const auto& reg : ps.regions) CHECK(reg.box.area() > 0);
    }
  }
}

TEST_CASE("artifacts only touch pixels inside the planted boxes") {
  auto cfg = tiny_config(4, 4);
  cfg.image_size = 96;
  for (int subject = 0; subject < 4; ++subject) {
    const auto r = synth::render_sample(cfg, Label::attack, subject, 0);
    CHECK(static_cast<int>(r.planted_regions.size()) == cfg.artifact_region_count);
    const auto ps = geometry::derive_patch_regions(r.landmarks);
    int changed_inside = 0;
    for (int y = 0; y < r.clean.height; ++y)
      for (int x = 0; x < r.clean.width; ++x) {
        bool inside = false;
        for (auto reg : r.planted_regions) inside = inside || ps[reg].box.contains(x, y);
        for (int c = 0; c < 3; ++c) {
          const float d = r.planted.at(x, y, c) - r.clean.at(x, y, c);
          if (!inside) {
            CHECK(d == 0.0f);
          } else if (d != 0.0f) {
            ++changed_inside;
          }
        }
      }
    CHECK(changed_inside > 0);
  }
  const auto live = synth::render_sample(cfg, Label::bona_fide, 0, 0);
  CHECK(live.planted_regions.empty());
  CHECK(live.planted.pixels == live.clean.pixels);
}

TEST_CASE("manifest validation names the offending line") {
  test::TempDir dir("manifest");
  const auto m = generate_synthetic(tiny_config(2, 2), dir.path);
  const std::string header = std::string(kManifestHeader) + "\n";
  auto expect_error = [&](const std::string& body, const std::string& needle) {
    test::spit(dir.path / "bad.csv", header + body);
    try {
      load_manifest(dir.path / "bad.csv");
      FAIL("expected a validation error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };

  std::string good;
  for (const auto& s : m.samples) good += line_for(s);
  test::spit(dir.path / "good.csv", header + good);
  CHECK(load_manifest(dir.path / "good.csv").samples.size() == 4);

  expect_error(line_for(m.samples[0]) + line_for(m.samples[0]), ":3");
  expect_error(line_for(m.samples[0]) + "a,b,live,,images/x.png\n", ":3");

  auto bad_label = with_field(line_for(m.samples[1]), 2, "spoof");
  expect_error(bad_label, ":2");

  // 97 landmark lines
  const auto lm_path = m.samples[0].landmark_path;
  auto text = test::slurp(lm_path);
  text = text.substr(0, text.rfind('\n', text.size() - 2) + 1);
  test::spit(lm_path, text);
  expect_error(line_for(m.samples[0]), ":2");

  // out-of-frame coordinate
  std::string far;
  for (int i = 0; i < geometry::kNumLandmarks; ++i) far += i == 5 ? "64.5 10\n" : "10 10\n";
  test::spit(lm_path, far);
  expect_error(line_for(m.samples[0]), ":2");

  // declared size does not match the image
  const auto wrong = with_field(line_for(m.samples[1]), 6, "65");
  expect_error(wrong, "65x64");
}

TEST_CASE("a manifest with a single class is rejected where both are required") {
  DatasetManifest m;
  m.name = "one";
  FaceSample s;
  s.sample_id = "x";
  s.subject_id = "s";
  m.samples.push_back(s);
  CHECK_THROWS_AS(m.require_both_labels(), ValidationError);
  m.samples.clear();
  CHECK_THROWS_AS(m.require_both_labels(), ValidationError);
}

TEST_CASE("k-fold splits are subject-disjoint and cover every sample once") {
  DatasetManifest m;
  m.name = "toy";
  for (int subj = 0; subj < 23; ++subj)
    for (int i = 0; i < 3; ++i) {
      FaceSample s;
      s.subject_id = "s" + std::to_string(subj);
      s.sample_id = s.subject_id + "_" + std::to_string(i);
      s.label = subj % 2 ? Label::attack : Label::bona_fide;
      m.samples.push_back(s);
    }
  const auto folds = kfold_subject_split(m, 5, 3);
  REQUIRE(folds.size() == 5);
  std::multiset<std::string> tested;
  for (const auto& f : folds) {
    std::set<std::string> train_subjects, test_subjects;
    for (const auto& s : f.train.samples) train_subjects.insert(s.subject_id);
    for (const auto& s : f.test.samples) {
      test_subjects.insert(s.subject_id);
      tested.insert(s.sample_id);
    }
    for (const auto& t : test_subjects) CHECK(train_subjects.count(t) == 0);
    CHECK(f.train.samples.size() + f.test.samples.size() == m.samples.size());
    CHECK(test_subjects.size() >= 4);
    CHECK(test_subjects.size() <= 5);
  }
  CHECK(tested.size() == m.samples.size());
  for (const auto& s : m.samples) CHECK(tested.count(s.sample_id) == 1);

  const auto again = kfold_subject_split(m, 5, 3);
  for (std::size_t i = 0; i < folds.size(); ++i) {
    REQUIRE(again[i].test.samples.size() == folds[i].test.samples.size());
    for (std::size_t j = 0; j < folds[i].test.samples.size(); ++j)
      CHECK(again[i].test.samples[j].sample_id == folds[i].test.samples[j].sample_id);
  }
  CHECK_THROWS_AS(kfold_subject_split(m, 1, 3), ValidationError);
  CHECK_THROWS_AS(kfold_subject_split(m, 24, 3), ValidationError);

  const auto hold = holdout_subject_split(m, 0.2, 3);
  std::set<std::string> test_subjects;
  for (const auto& s : hold.test.samples) test_subjects.insert(s.subject_id);
  CHECK(test_subjects.size() == 5);  // round(0.2 * 23)
  for (const auto& s : hold.train.samples) CHECK(test_subjects.count(s.subject_id) == 0);
}
