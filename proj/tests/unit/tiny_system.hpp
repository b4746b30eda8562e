#pragma once

#include <filesystem>
#include <string>

#include "dmpad/data/synth.hpp"
#include "dmpad/pipeline/config.hpp"

namespace dmpad::test {

/// Small enough for the unit suite: 12 subjects at 64 px, narrow networks.
inline pipeline::TrainConfig tiny_train_config() {
  pipeline::TrainConfig c;
  c.phase1.epochs = 2;
  c.phase1.input = 64;
  c.phase1.batch_size = 8;
  c.phase1.widths = {4, 8};
  c.phase1.reduce_channels = 16;
  c.phase1.embed_dim = 8;
  c.phase1.num_styles = 4;
  c.phase1.aiaw.k_live = 0.05;
  c.phase1.aiaw.k_attack = 0.03;
  c.phase2.epochs = 2;
  c.phase2.input = 32;
  c.phase2.batch_size = 8;
  c.phase2.widths = {4, 8};
  c.phase2.embed_dim = 4;
  c.fusion.epochs = 3;
  c.fusion.batch_size = 8;
  c.fusion.hidden = 8;
  return c;
}

/// The same settings as --set arguments for the CLI.
inline std::vector<std::string> tiny_overrides() {
  return {"phase1.epochs=2",       "phase1.input=64",        "phase1.batch_size=8",  "phase1.widths=4,8",
          "phase1.reduce_channels=16", "phase1.embed_dim=8", "phase1.num_styles=4",  "phase1.k_live=0.05",
          "phase1.k_attack=0.03",  "phase2.epochs=2",        "phase2.input=32",      "phase2.batch_size=8",
          "phase2.widths=4,8",     "phase2.embed_dim=4",     "fusion.epochs=3",      "fusion.batch_size=8",
          "fusion.hidden=8"};
}

inline data::SynthConfig tiny_synth() {
  data::SynthConfig s;
  s.n_subjects_live = 6;
  s.n_subjects_attack = 6;
  s.image_size = 64;
  s.seed = 5;
  return s;
}

}  // namespace dmpad::test
