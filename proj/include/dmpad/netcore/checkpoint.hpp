#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dmpad/core/tensor.hpp"

namespace dmpad::nn {

/// Single-file model archive: a text header with the architecture config,
/// then named float32 arrays (little-endian).
struct Checkpoint {
  static constexpr int kVersion = 1;

  std::string kind;
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<std::pair<std::string, Tensor>> arrays;

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::vector<int> get_ints(const std::string& key) const;
  const Tensor& array(const std::string& name) const;
  /// Copies a stored array into `dst`, checking the shape.
  void restore(const std::string& name, Tensor& dst) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string join_ints(const std::vector<int>& v);

}  // namespace dmpad::nn
