#include "dmpad/data/manifest.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "dmpad/core/error.hpp"
#include "dmpad/core/image.hpp"

namespace dmpad::data {

namespace fs = std::filesystem;

std::string_view label_token(Label l) { return l == Label::attack ? "attack" : "live"; }

std::optional<Label> parse_label(std::string_view token) {
  if (token == "live") return Label::bona_fide;
  if (token == "attack") return Label::attack;
  return std::nullopt;
}

std::size_t DatasetManifest::count(Label l) const {
  std::size_t n = 0;
  for (const auto& s : samples) n += s.label == l;
  return n;
}

void DatasetManifest::require_both_labels() const {
  if (samples.empty()) throw ValidationError("manifest '" + name + "' is empty");
  if (count(Label::bona_fide) == 0 || count(Label::attack) == 0) {
    throw ValidationError("manifest '" + name + "' needs both live and attack samples");
  }
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(field);
  return out;
}

int parse_positive(const std::string& s, const std::string& where, const char* what) {
  int v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || v < 1) {
    throw ValidationError(where + ": " + what + " must be a positive integer, got '" + s + "'");
  }
  return v;
}

}  // namespace

DatasetManifest load_manifest(const fs::path& path, const LoadOptions& opts) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open manifest: " + path.string());
  const fs::path base = fs::absolute(path).parent_path();

  DatasetManifest m;
  m.name = path.stem().string();
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty manifest");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kManifestHeader) {
    throw ValidationError(path.string() + ":1: header must be '" + std::string(kManifestHeader) +
                          "'");
  }

  std::set<std::string> seen;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    const auto f = split_csv(line);
    if (f.size() != 8) {
      throw ValidationError(where + ": expected 8 fields, got " + std::to_string(f.size()));
    }
    FaceSample s;
    s.sample_id = f[0];
    s.subject_id = f[1];
    if (s.sample_id.empty() || s.subject_id.empty()) {
      throw ValidationError(where + ": sample_id and subject_id must be non-empty");
    }
    const auto label = parse_label(f[2]);
    if (!label) throw ValidationError(where + ": label must be 'live' or 'attack', got '" + f[2] + "'");
    s.label = *label;
    if (!f[3].empty()) s.attack_type = f[3];
    s.image_path = (base / f[4]).lexically_normal();
    s.landmark_path = (base / f[5]).lexically_normal();
    s.reference_size = {parse_positive(f[6], where, "width"), parse_positive(f[7], where, "height")};
    if (!seen.insert(s.sample_id).second) {
      throw ValidationError(where + ": duplicate sample_id '" + s.sample_id + "'");
    }
    try {
      (void)geometry::read_landmarks(s.landmark_path, s.reference_size);
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
    if (opts.decode_images) {
      if (!fs::exists(s.image_path)) throw ValidationError(where + ": image not found: " + s.image_path.string());
      std::pair<int, int> size;
      try {
        size = probe_image_size(s.image_path);
      } catch (const RuntimeError& e) {
        throw ValidationError(where + ": " + e.what());
      }
      if (size.first != s.reference_size.width || size.second != s.reference_size.height) {
        std::ostringstream os;
        os << where << ": image is " << size.first << "x" << size.second << ", manifest says "
           << s.reference_size.width << "x" << s.reference_size.height;
        throw ValidationError(os.str());
      }
    }
    m.samples.push_back(std::move(s));
  }
  return m;
}

void write_manifest(const fs::path& path, const DatasetManifest& manifest) {
  const fs::path base = fs::absolute(path).parent_path();
  if (!base.empty()) fs::create_directories(base);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write manifest: " + path.string());
  out << kManifestHeader << '\n';
  auto rel = [&](const fs::path& p) {
    return fs::absolute(p).lexically_normal().lexically_relative(base).generic_string();
  };
  for (const auto& s : manifest.samples) {
    out << s.sample_id << ',' << s.subject_id << ',' << label_token(s.label) << ','
        << s.attack_type.value_or("") << ',' << rel(s.image_path) << ',' << rel(s.landmark_path)
        << ',' << s.reference_size.width << ',' << s.reference_size.height << '\n';
  }
}

geometry::LandmarkSet load_sample_landmarks(const FaceSample& s) {
  if (!fs::exists(s.landmark_path)) {
    throw RuntimeError("landmark file missing for sample '" + s.sample_id + "': " +
                       s.landmark_path.string());
  }
  return geometry::read_landmarks(s.landmark_path, s.reference_size);
}

fs::path planted_regions_path(const FaceSample& s) {
  return s.landmark_path.parent_path() / (s.landmark_path.stem().string() + ".regions.txt");
}

std::vector<geometry::Region> read_planted_regions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeError("cannot open planted-region sidecar: " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<geometry::Region> out;
  for (const auto& tok : split_csv(line)) {
    if (tok.empty()) continue;
    const auto r = geometry::region_from_name(tok);
    if (!r) throw ValidationError(path.string() + ": unknown region '" + tok + "'");
    out.push_back(*r);
  }
  return out;
}

void write_planted_regions(const fs::path& path, const std::vector<geometry::Region>& regions) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write sidecar: " + path.string());
  for (std::size_t i = 0; i < regions.size(); ++i) {
    if (i) out << ',';
    out << geometry::region_name(regions[i]);
  }
  out << '\n';
}

}  // namespace dmpad::data
