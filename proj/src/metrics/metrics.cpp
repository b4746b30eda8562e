#include "dmpad/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "dmpad/core/error.hpp"

namespace dmpad::metrics {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Split {
  std::vector<double> live, attack;
};

Split split_scores(const std::vector<ScoredSample>& scores) {
  Split s;
  for (const auto& x : scores) {
    if (!std::isfinite(x.score)) throw ValidationError("score for " + x.sample_id + " is not finite");
    (x.label == data::Label::attack ? s.attack : s.live).push_back(x.score);
  }
  if (s.live.empty() || s.attack.empty()) {
    throw ValidationError("PAD metrics need both bona fide and attack samples");
  }
  std::sort(s.live.begin(), s.live.end());
  std::sort(s.attack.begin(), s.attack.end());
  return s;
}

// % of sorted values >= t
double pct_at_or_above(const std::vector<double>& v, double t) {
  const auto it = std::lower_bound(v.begin(), v.end(), t);
  return 100.0 * static_cast<double>(v.end() - it) / static_cast<double>(v.size());
}

}  // namespace

MetricsReport compute_pad_metrics(const std::vector<ScoredSample>& scores, double threshold) {
  const Split s = split_scores(scores);
  MetricsReport r;
  r.operating_threshold = threshold;
  r.n_bona_fide = s.live.size();
  r.n_attack = s.attack.size();
  r.apcer = 100.0 - pct_at_or_above(s.attack, threshold);
  r.bpcer = pct_at_or_above(s.live, threshold);
  r.acer = (r.apcer + r.bpcer) / 2.0;
  std::size_t correct = 0;
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_type;  // missed, total
  for (const auto& x : scores) {
    const bool attack_pred = x.score >= threshold;
    const bool is_attack = x.label == data::Label::attack;
    correct += attack_pred == is_attack ? 1 : 0;
    if (is_attack) {
      auto& e = per_type[x.attack_type.value_or("unspecified")];
      e.first += attack_pred ? 0 : 1;
      e.second += 1;
    }
  }
  r.accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(scores.size());
  for (const auto& [type, e] : per_type)
    r.apcer_per_attack_type[type] = 100.0 * static_cast<double>(e.first) / static_cast<double>(e.second);
  return r;
}

EerResult eer(const std::vector<ScoredSample>& scores) {
  const Split s = split_scores(scores);
  std::vector<double> t{-kInf};
  for (const auto* v : {&s.live, &s.attack}) t.insert(t.end(), v->begin(), v->end());
  std::sort(t.begin() + 1, t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  t.push_back(kInf);

  auto apcer = [&](double th) { return 100.0 - pct_at_or_above(s.attack, th); };
  auto bpcer = [&](double th) { return pct_at_or_above(s.live, th); };
  double prev_a = apcer(t[0]), prev_b = bpcer(t[0]);
  for (std::size_t i = 1; i < t.size(); ++i) {
    const double a = apcer(t[i]), b = bpcer(t[i]);
    const double d0 = prev_a - prev_b, d1 = a - b;
    if (d1 >= 0.0) {
      if (d1 == 0.0) return {a, std::isfinite(t[i]) ? t[i] : t[i - 1]};
      const double f = -d0 / (d1 - d0);
      const double rate = prev_a + f * (a - prev_a);
      double th;
      if (!std::isfinite(t[i - 1])) th = t[i];
      else if (!std::isfinite(t[i])) th = t[i - 1];
      else th = t[i - 1] + f * (t[i] - t[i - 1]);
      return {rate, th};
    }
    prev_a = a;
    prev_b = b;
  }
  return {0.0, t[t.size() - 2]};  // unreachable: at +inf APCER - BPCER = 100
}

double tdr_at_fdr(const std::vector<ScoredSample>& scores, double fdr_percent) {
  if (!(fdr_percent >= 0.0 && fdr_percent <= 100.0)) throw ValidationError("FDR must lie in [0, 100]");
  const Split s = split_scores(scores);
  std::vector<double> t(s.live);
  t.insert(t.end(), s.attack.begin(), s.attack.end());
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  t.push_back(kInf);
  for (double th : t)
    if (pct_at_or_above(s.live, th) <= fdr_percent) return pct_at_or_above(s.attack, th);
  return 0.0;
}

MetricsReport full_report(const std::vector<ScoredSample>& scores, double threshold, double fdr_percent) {
  MetricsReport r = compute_pad_metrics(scores, threshold);
  const EerResult e = eer(scores);
  r.eer = e.eer;
  r.eer_threshold = e.threshold;
  r.fdr_percent = fdr_percent;
  r.tdr_at_fdr = tdr_at_fdr(scores, fdr_percent);
  return r;
}

void write_scores_csv(const std::filesystem::path& path, const std::vector<ScoredSample>& scores) {
  std::ofstream out(path);
  if (!out) throw RuntimeError("cannot write score file " + path.string());
  out << kScoreHeader << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& s : scores)
    out << s.sample_id << ',' << s.subject_id << ',' << data::label_token(s.label) << ','
        << s.attack_type.value_or("") << ',' << s.score << '\n';
}

std::vector<ScoredSample> read_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open score file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kScoreHeader) {
    throw ValidationError(path.string() + ":1: expected header '" + std::string(kScoreHeader) + "'");
  }
  std::vector<ScoredSample> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i)
      if (i == line.size() || line[i] == ',') {
        f.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    if (f.size() != 5) throw ValidationError(where + "expected 5 fields, got " + std::to_string(f.size()));
    ScoredSample s;
    s.sample_id = f[0];
    s.subject_id = f[1];
    const auto label = data::parse_label(f[2]);
    if (!label) throw ValidationError(where + "label must be 'live' or 'attack', got '" + f[2] + "'");
    s.label = *label;
    if (!f[3].empty()) s.attack_type = f[3];
    try {
      std::size_t used = 0;
      s.score = std::stod(f[4], &used);
      if (used != f[4].size()) throw std::invalid_argument("trailing");
    } catch (const std::logic_error&) {
      throw ValidationError(where + "score '" + f[4] + "' is not a number");
    }
    if (!std::isfinite(s.score)) throw ValidationError(where + "score is not finite");
    out.push_back(std::move(s));
  }
  return out;
}

nlohmann::ordered_json report_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["accuracy"] = r.accuracy;
  j["apcer"] = r.apcer;
  j["bpcer"] = r.bpcer;
  j["acer"] = r.acer;
  j["eer"] = r.eer;
  j["eer_threshold"] = r.eer_threshold;
  j["tdr_at_fdr"] = r.tdr_at_fdr;
  j["fdr_percent"] = r.fdr_percent;
  j["operating_threshold"] = r.operating_threshold;
  j["threshold_convention"] = "fixed operating threshold; score >= threshold predicts attack";
  j["n_bona_fide"] = r.n_bona_fide;
  j["n_attack"] = r.n_attack;
  j["apcer_per_attack_type"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.apcer_per_attack_type) j["apcer_per_attack_type"][k] = v;
  return j;
}

nlohmann::ordered_json folds_json(const std::vector<MetricsReport>& folds) {
  nlohmann::ordered_json j;
  j["folds"] = nlohmann::ordered_json::array();
  for (const auto& f : folds) j["folds"].push_back(report_json(f));
  const std::vector<std::pair<const char*, double MetricsReport::*>> fields = {
      {"accuracy", &MetricsReport::accuracy}, {"apcer", &MetricsReport::apcer},
      {"bpcer", &MetricsReport::bpcer},       {"acer", &MetricsReport::acer},
      {"eer", &MetricsReport::eer},           {"tdr_at_fdr", &MetricsReport::tdr_at_fdr}};
  nlohmann::ordered_json mean, sd;
  const double n = static_cast<double>(folds.size());
  for (const auto& [name, ptr] : fields) {
    double m = 0.0;
    for (const auto& f : folds) m += f.*ptr;
    m = folds.empty() ? 0.0 : m / n;
    double v = 0.0;
    for (const auto& f : folds) v += (f.*ptr - m) * (f.*ptr - m);
    mean[name] = m;
    sd[name] = folds.size() > 1 ? std::sqrt(v / (n - 1.0)) : 0.0;
  }
  j["mean"] = mean;
  j["std"] = sd;
  return j;
}

void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path);
  if (!out) throw RuntimeError("cannot write report " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace dmpad::metrics
