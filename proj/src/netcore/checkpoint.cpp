#include "dmpad/netcore/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dmpad/core/error.hpp"

namespace dmpad::nn {

namespace {
constexpr const char* kMagic = "DMPAD-CKPT";

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes little-endian floats");
}  // namespace

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

void Checkpoint::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : config)
    if (k == key) {
      v = value;
      return;
    }
  config.emplace_back(key, value);
}

const std::string& Checkpoint::get(const std::string& key) const {
  for (const auto& [k, v] : config)
    if (k == key) return v;
  throw RuntimeError("checkpoint (" + kind + "): missing config key '" + key + "'");
}

int Checkpoint::get_int(const std::string& key) const {
  try {
    return std::stoi(get(key));
  } catch (const std::logic_error&) {
    throw RuntimeError("checkpoint (" + kind + "): config key '" + key + "' is not an integer");
  }
}

std::vector<int> Checkpoint::get_ints(const std::string& key) const {
  std::vector<int> out;
  std::stringstream ss(get(key));
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stoi(tok));
    } catch (const std::logic_error&) {
      throw RuntimeError("checkpoint (" + kind + "): config key '" + key + "' is not an integer list");
    }
  }
  return out;
}

const Tensor& Checkpoint::array(const std::string& name) const {
  for (const auto& [n, t] : arrays)
    if (n == name) return t;
  throw RuntimeError("checkpoint (" + kind + "): missing array '" + name + "'");
}

void Checkpoint::restore(const std::string& name, Tensor& dst) const {
  const Tensor& src = array(name);
  if (src.shape != dst.shape) {
    throw RuntimeError("checkpoint (" + kind + "): array '" + name + "' has shape " + src.shape_str() +
                       ", model expects " + dst.shape_str());
  }
  dst.data = src.data;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write checkpoint " + path.string());
  out << kMagic << ' ' << Checkpoint::kVersion << '\n';
  out << "kind " << ck.kind << '\n';
  out << "config " << ck.config.size() << '\n';
  for (const auto& [k, v] : ck.config) out << k << '=' << v << '\n';
  out << "arrays " << ck.arrays.size() << '\n';
  for (const auto& [name, t] : ck.arrays) {
    out << name << ' ' << t.rank();
    for (int d : t.shape) out << ' ' << d;
    out << '\n';
    out.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    out << '\n';
  }
  if (!out) throw RuntimeError("error writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot open checkpoint " + path.string() + " (run the training stage first)");
  auto fail = [&](const std::string& what) {
    throw RuntimeError("checkpoint " + path.string() + ": " + what);
  };
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != kMagic) fail("not a dmpad checkpoint");
  if (version != Checkpoint::kVersion) fail("unsupported version " + std::to_string(version));
  Checkpoint ck;
  std::string tag;
  std::size_t n = 0;
  in >> tag >> ck.kind;
  if (tag != "kind") fail("missing kind");
  in >> tag >> n;
  if (tag != "config") fail("missing config block");
  in.ignore(1);
  for (std::size_t i = 0; i < n; ++i) {
    std::string line;
    if (!std::getline(in, line)) fail("truncated config");
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("bad config line '" + line + "'");
    ck.config.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  in >> tag >> n;
  if (tag != "arrays") fail("missing arrays block");
  for (std::size_t i = 0; i < n; ++i) {
    std::string name;
    int rank = 0;
    in >> name >> rank;
    if (!in || rank < 0 || rank > 8) fail("bad array header");
    std::vector<int> shape(rank);
    for (int& d : shape) {
      in >> d;
      if (d < 0) fail("bad array shape for '" + name + "'");
    }
    in.ignore(1);
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.ptr()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!in) fail("truncated array '" + name + "'");
    in.ignore(1);
    ck.arrays.emplace_back(std::move(name), std::move(t));
  }
  return ck;
}

}  // namespace dmpad::nn
