#include "dmpad/data/split.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

#include "dmpad/core/error.hpp"
#include "dmpad/core/rng.hpp"

namespace dmpad::data {

std::vector<std::string> distinct_subjects(const DatasetManifest& manifest) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& s : manifest.samples) {
    if (seen.insert(s.subject_id).second) out.push_back(s.subject_id);
  }
  return out;
}

namespace {

std::vector<std::string> shuffled_subjects(const DatasetManifest& manifest, std::uint64_t seed) {
  auto subjects = distinct_subjects(manifest);
  Rng rng(seed);
  rng.shuffle(std::span<std::string>(subjects));
  return subjects;
}

SplitPair partition(const DatasetManifest& manifest, const std::unordered_set<std::string>& test_subjects,
                    const std::string& suffix) {
  SplitPair out;
  out.train.name = manifest.name + "_train" + suffix;
  out.test.name = manifest.name + "_test" + suffix;
  for (const auto& s : manifest.samples) {
    (test_subjects.count(s.subject_id) ? out.test : out.train).samples.push_back(s);
  }
  return out;
}

}  // namespace

std::vector<SplitPair> kfold_subject_split(const DatasetManifest& manifest, int k, std::uint64_t seed) {
  if (k < 2) throw ValidationError("k must be >= 2");
  const auto subjects = shuffled_subjects(manifest, seed);
  const std::size_t n = subjects.size();
  if (static_cast<std::size_t>(k) > n) {
    throw ValidationError("k = " + std::to_string(k) + " exceeds the number of subjects (" +
                          std::to_string(n) + ")");
  }
  std::vector<SplitPair> folds;
  for (int i = 0; i < k; ++i) {
    const std::size_t lo = n * i / k, hi = n * (i + 1) / k;
    std::unordered_set<std::string> test(subjects.begin() + lo, subjects.begin() + hi);
    folds.push_back(partition(manifest, test, "_fold" + std::to_string(i)));
  }
  return folds;
}

SplitPair holdout_subject_split(const DatasetManifest& manifest, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ValidationError("test_fraction must be in (0, 1)");
  const auto subjects = shuffled_subjects(manifest, seed);
  if (subjects.size() < 2) throw ValidationError("holdout split needs at least two subjects");
  std::size_t n_test = static_cast<std::size_t>(std::llround(test_fraction * subjects.size()));
  n_test = std::clamp<std::size_t>(n_test, 1, subjects.size() - 1);
  std::unordered_set<std::string> test(subjects.begin(), subjects.begin() + n_test);
  return partition(manifest, test, "");
}

}  // namespace dmpad::data
