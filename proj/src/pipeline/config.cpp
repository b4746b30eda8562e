#include "dmpad/pipeline/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "dmpad/core/error.hpp"

namespace dmpad::pipeline {

std::string fusion_mode_name(FusionMode m) {
  switch (m) {
    case FusionMode::weighted_mlp: return "weighted_mlp";
    case FusionMode::unweighted_mlp: return "unweighted_mlp";
    case FusionMode::majority_vote: return "majority_vote";
  }
  return "weighted_mlp";
}

FusionMode parse_fusion_mode(const std::string& s) {
  if (s == "weighted_mlp") return FusionMode::weighted_mlp;
  if (s == "unweighted_mlp") return FusionMode::unweighted_mlp;
  if (s == "majority_vote") return FusionMode::majority_vote;
  throw ValidationError("fusion mode must be weighted_mlp, unweighted_mlp or majority_vote, got '" + s + "'");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Shortest form that parses back to the same double.
std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::logic_error&) {
    throw ValidationError(key + ": expected a number, got '" + v + "'");
  }
}

long long to_integer(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long d = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::logic_error&) {
    throw ValidationError(key + ": expected an integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ValidationError(key + ": expected true/false, got '" + v + "'");
}

std::vector<int> to_ints(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(static_cast<int>(to_integer(key, trim(tok))));
  if (out.empty()) throw ValidationError(key + ": expected a comma-separated integer list");
  return out;
}

std::string ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

ConfigEntry real(const std::string& key, double& f, const std::string& help) {
  return {key, help, [&f] { return fmt(f); }, [&f, key](const std::string& v) { f = to_double(key, v); }};
}
ConfigEntry integer(const std::string& key, int& f, const std::string& help) {
  return {key, help, [&f] { return std::to_string(f); },
          [&f, key](const std::string& v) { f = static_cast<int>(to_integer(key, v)); }};
}
ConfigEntry flag(const std::string& key, bool& f, const std::string& help) {
  return {key, help, [&f] { return std::string(f ? "true" : "false"); },
          [&f, key](const std::string& v) { f = to_bool(key, v); }};
}
ConfigEntry int_list(const std::string& key, std::vector<int>& f, const std::string& help) {
  return {key, help, [&f] { return ints(f); }, [&f, key](const std::string& v) { f = to_ints(key, v); }};
}

}  // namespace

std::vector<ConfigEntry> config_entries(TrainConfig& c) {
  auto& p1 = c.phase1;
  auto& p2 = c.phase2;
  return {
      {"general.seed", "master seed for every random draw", [&c] { return std::to_string(c.seed); },
       [&c](const std::string& v) {
         const long long s = to_integer("general.seed", v);
         if (s < 0) throw ValidationError("general.seed must be non-negative");
         c.seed = static_cast<std::uint64_t>(s);
       }},
      integer("phase1.epochs", p1.epochs, "full-face training epochs"),
      integer("phase1.input", p1.input, "full-face input resolution (square)"),
      real("phase1.lr", p1.lr, "Adam learning rate"),
      integer("phase1.batch_size", p1.batch_size, "class-balanced batch size"),
      real("phase1.alpha1", p1.weights.alpha1, "weight of AIAW on the original branch"),
      real("phase1.beta1", p1.weights.beta1, "weight of triplet focal loss on the original branch"),
      real("phase1.gamma1", p1.weights.gamma1, "weight of cross-entropy on the original branch"),
      real("phase1.alpha2", p1.weights.alpha2, "weight of AIAW on the augmented branch"),
      real("phase1.beta2", p1.weights.beta2, "weight of triplet focal loss on the augmented branch"),
      real("phase1.gamma2", p1.weights.gamma2, "weight of cross-entropy on the augmented branch"),
      real("phase1.sigma", p1.triplet.sigma, "triplet focal scaling factor"),
      real("phase1.margin", p1.triplet.margin, "triplet focal margin"),
      real("phase1.k_live", p1.aiaw.k_live, "AIAW selection ratio for bona fide samples (fraction)"),
      real("phase1.k_attack", p1.aiaw.k_attack, "AIAW selection ratio for attack samples (fraction)"),
      real("phase1.epsilon", p1.aiaw.epsilon, "epsilon in std divisions"),
      flag("phase1.use_csa", p1.use_csa, "categorical style augmentation"),
      flag("phase1.use_aiaw", p1.use_aiaw, "whitening loss"),
      flag("phase1.use_tf", p1.use_tf, "triplet focal loss"),
      int_list("phase1.widths", p1.widths, "backbone stage widths"),
      integer("phase1.reduce_channels", p1.reduce_channels, "channels after the 1x1 reduction"),
      integer("phase1.embed_dim", p1.embed_dim, "embedding dimension"),
      integer("phase1.num_styles", p1.num_styles, "base styles in the CSA bank"),
      real("phase1.style_momentum", p1.style_momentum, "per-epoch momentum of style bank updates"),
      integer("phase2.epochs", p2.epochs, "patch training epochs"),
      integer("phase2.input", p2.input, "patch resolution (square)"),
      real("phase2.lr", p2.lr, "Adam learning rate"),
      integer("phase2.batch_size", p2.batch_size, "class-balanced batch size"),
      real("phase2.sigma", p2.triplet.sigma, "triplet focal scaling factor"),
      real("phase2.margin", p2.triplet.margin, "triplet focal margin"),
      real("phase2.alpha", p2.alpha, "weight of cross-entropy"),
      real("phase2.beta", p2.beta, "weight of triplet focal loss"),
      flag("phase2.use_tf", p2.use_tf, "triplet focal loss"),
      int_list("phase2.widths", p2.widths, "backbone stage widths"),
      integer("phase2.embed_dim", p2.embed_dim, "patch embedding dimension"),
      real("attention.k_percent", c.attention.k_percent, "top-k% pooling of heatmap values per region"),
      integer("fusion.epochs", c.fusion.epochs, "fusion MLP epochs"),
      real("fusion.lr", c.fusion.lr, "Adam learning rate"),
      integer("fusion.batch_size", c.fusion.batch_size, "class-balanced batch size"),
      integer("fusion.hidden", c.fusion.hidden, "hidden units of the fusion MLP"),
      {"fusion.mode", "weighted_mlp | unweighted_mlp | majority_vote",
       [&c] { return fusion_mode_name(c.fusion.mode); },
       [&c](const std::string& v) { c.fusion.mode = parse_fusion_mode(v); }},
      real("eval.threshold", c.eval.threshold, "operating threshold on the attack score"),
      real("eval.fdr_percent", c.eval.fdr_percent, "FDR operating point for TDR@FDR (percent)"),
  };
}

void TrainConfig::validate() const {
  auto positive = [](bool ok, const std::string& what) {
    if (!ok) throw ValidationError(what);
  };
  positive(phase1.epochs >= 1 && phase2.epochs >= 1 && fusion.epochs >= 1, "epochs must be >= 1");
  positive(phase1.lr > 0 && phase2.lr > 0 && fusion.lr > 0, "learning rates must be > 0");
  positive(phase1.batch_size >= 4 && phase2.batch_size >= 4 && fusion.batch_size >= 2,
           "batch sizes must be >= 4 (>= 2 for fusion)");
  positive(phase1.batch_size % 2 == 0 && phase2.batch_size % 2 == 0 && fusion.batch_size % 2 == 0,
           "batch sizes must be even (half bona fide, half attack)");
  positive(phase1.input >= 16 && phase2.input >= 8, "input resolutions too small");
  positive(attention.k_percent > 0 && attention.k_percent <= 100, "attention.k_percent must lie in (0, 100]");
  positive(fusion.hidden >= 1, "fusion.hidden must be >= 1");
  positive(phase2.alpha >= 0 && phase2.beta >= 0, "phase2 loss weights must be non-negative");
  positive(phase1.style_momentum >= 0 && phase1.style_momentum <= 1, "phase1.style_momentum must lie in [0, 1]");
  positive(eval.fdr_percent >= 0 && eval.fdr_percent <= 100, "eval.fdr_percent must lie in [0, 100]");
  phase1.weights.validate();
  phase1.triplet.validate();
  phase2.triplet.validate();
  phase1.aiaw.validate();
}

void apply_config_text(TrainConfig& cfg, const std::string& text, const std::string& origin) {
  auto entries = config_entries(cfg);
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    const auto hash = line.find_first_of("#;");
    line = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ValidationError(where + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError(where + "expected 'key = value'");
    const std::string key = (section.empty() ? "" : section + ".") + trim(line.substr(0, eq));
    const auto it = std::find_if(entries.begin(), entries.end(), [&](const ConfigEntry& e) { return e.key == key; });
    if (it == entries.end()) throw ValidationError(where + "unknown key '" + key + "'");
    try {
      it->set(trim(line.substr(eq + 1)));
    } catch (const ValidationError& e) {
      throw ValidationError(where + e.what());
    }
  }
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  TrainConfig cfg;
  apply_config_text(cfg, ss.str(), path.string());
  return cfg;
}

void apply_override(TrainConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ValidationError("--set expects section.key=value, got '" + assignment + "'");
  const std::string key = trim(assignment.substr(0, eq));
  auto entries = config_entries(cfg);
  const auto it = std::find_if(entries.begin(), entries.end(), [&](const ConfigEntry& e) { return e.key == key; });
  if (it == entries.end()) throw ValidationError("--set: unknown key '" + key + "' (see --help for the list)");
  it->set(trim(assignment.substr(eq + 1)));
}

std::string config_snapshot(const TrainConfig& cfg) {
  TrainConfig copy = cfg;
  std::ostringstream out;
  std::string section;
  for (const auto& e : config_entries(copy)) {
    const auto dot = e.key.find('.');
    const std::string s = e.key.substr(0, dot);
    if (s != section) {
      out << (section.empty() ? "" : "\n") << '[' << s << "]\n";
      section = s;
    }
    out << e.key.substr(dot + 1) << " = " << e.get() << '\n';
  }
  return out.str();
}

std::string config_help() {
  TrainConfig defaults;
  std::ostringstream out;
  out << "Config keys (override with --set section.key=value; defaults shown):\n";
  for (const auto& e : config_entries(defaults)) {
    std::string head = "  " + e.key + " = " + e.get();
    if (head.size() < 40) head.resize(40, ' ');
    out << head << ' ' << e.help << '\n';
  }
  return out.str();
}

}  // namespace dmpad::pipeline
