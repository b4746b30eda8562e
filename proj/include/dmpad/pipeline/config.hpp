#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dmpad/losses/losses.hpp"

namespace dmpad::pipeline {

enum class FusionMode { weighted_mlp, unweighted_mlp, majority_vote };

std::string fusion_mode_name(FusionMode m);
FusionMode parse_fusion_mode(const std::string& s);

struct Phase1Config {
  int epochs = 30;
  int input = 256;
  double lr = 1e-3;
  int batch_size = 32;
  losses::LossWeights weights;
  losses::TripletConfig triplet{0.6, 2.0};
  losses::AiawConfig aiaw;
  bool use_csa = true;
  bool use_aiaw = true;
  bool use_tf = true;
  std::vector<int> widths{16, 32, 64, 128};
  int reduce_channels = 640;
  int embed_dim = 64;
  int num_styles = 64;
  double style_momentum = 0.99;
};

struct Phase2Config {
  int epochs = 20;
  int input = 64;
  double lr = 1e-3;
  int batch_size = 32;
  losses::TripletConfig triplet{1.0, 1.5};
  double alpha = 1.0;
  double beta = 0.1;
  bool use_tf = true;
  std::vector<int> widths{16, 32, 64};
  int embed_dim = 16;
};

struct AttentionConfig {
  double k_percent = 50.0;
};

struct FusionConfig {
  int epochs = 20;
  double lr = 1e-3;
  int batch_size = 32;
  int hidden = 64;
  FusionMode mode = FusionMode::weighted_mlp;
};

struct EvalConfig {
  double threshold = 0.5;
  double fdr_percent = 1.0;
};

struct TrainConfig {
  Phase1Config phase1;
  Phase2Config phase2;
  AttentionConfig attention;
  FusionConfig fusion;
  EvalConfig eval;
  std::uint64_t seed = 7;

  /// Throws ValidationError on out-of-range values.
  void validate() const;
};

/// One `section.key` of the config file, bound to a field of a TrainConfig.
struct ConfigEntry {
  std::string key;
  std::string help;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

std::vector<ConfigEntry> config_entries(TrainConfig& cfg);

/// Parses `[section]` headers and `key = value` lines (`#` / `;` comments).
TrainConfig load_config(const std::filesystem::path& path);
void apply_config_text(TrainConfig& cfg, const std::string& text, const std::string& origin);
/// Applies one `section.key=value` override.
void apply_override(TrainConfig& cfg, const std::string& assignment);
/// Every entry as an INI document; load_config(snapshot) reproduces cfg.
std::string config_snapshot(const TrainConfig& cfg);
/// Listing of every overridable key with its default, for --help.
std::string config_help();

}  // namespace dmpad::pipeline
