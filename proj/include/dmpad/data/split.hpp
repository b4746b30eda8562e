#pragma once

#include <cstdint>
#include <vector>

#include "dmpad/data/manifest.hpp"

namespace dmpad::data {

struct SplitPair {
  DatasetManifest train;
  DatasetManifest test;
};

/// Subject-disjoint k-fold partition. Distinct subjects (first-appearance order)
/// are shuffled with Rng(seed); fold i holds subjects [i*S/k, (i+1)*S/k).
/// Samples keep manifest order within each side.
std::vector<SplitPair> kfold_subject_split(const DatasetManifest& manifest, int k, std::uint64_t seed);

/// Single subject-disjoint holdout: round(test_fraction * S) shuffled subjects go to test.
SplitPair holdout_subject_split(const DatasetManifest& manifest, double test_fraction,
                                std::uint64_t seed);

std::vector<std::string> distinct_subjects(const DatasetManifest& manifest);

}  // namespace dmpad::data
