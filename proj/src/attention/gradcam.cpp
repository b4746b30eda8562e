#include "dmpad/attention/gradcam.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include <opencv2/imgproc.hpp>

#include "dmpad/core/error.hpp"
#include "dmpad/geometry/resize.hpp"
#include "dmpad/kernels/kernels.hpp"

namespace dmpad::attention {

namespace k = dmpad::kernels;

Tensor gradcam_channel_weights(const Tensor& grad) {
  const int c = grad.dim(0), n = grad.dim(1);
  const std::size_t p = static_cast<std::size_t>(grad.dim(2)) * grad.dim(3);
  Tensor w({n, c});
  for (int ch = 0; ch < c; ++ch)
    for (int b = 0; b < n; ++b)
      w.data[static_cast<std::size_t>(b) * c + ch] =
          static_cast<float>(k::sum(grad.ptr() + (static_cast<std::size_t>(ch) * n + b) * p, p) / p);
  return w;
}

std::vector<float> gradcam_map(const Tensor& a, const Tensor& w, int b) {
  const int c = a.dim(0), n = a.dim(1);
  const std::size_t p = static_cast<std::size_t>(a.dim(2)) * a.dim(3);
  std::vector<double> acc(p, 0.0);
  for (int ch = 0; ch < c; ++ch) {
    const double wc = w.data[static_cast<std::size_t>(b) * c + ch];
    if (wc == 0.0) continue;
    const float* x = a.ptr() + (static_cast<std::size_t>(ch) * n + b) * p;
    for (std::size_t q = 0; q < p; ++q) acc[q] += wc * x[q];
  }
  double mx = 0.0;
  for (double& v : acc) {
    v = std::max(v, 0.0);
    mx = std::max(mx, v);
  }
  std::vector<float> out(p, 0.0f);
  if (mx > 0.0)
    for (std::size_t q = 0; q < p; ++q) out[q] = static_cast<float>(acc[q] / mx);
  return out;
}

GradCamBatch gradcam(nn::FullFaceModel& model, const Tensor& x, std::optional<int> target_class) {
  if (target_class && (*target_class < 0 || *target_class > 1)) throw ValidationError("gradcam: target class must be 0 or 1");
  GradCamBatch g;
  g.activations = model.features(x, nn::Mode::eval);
  if (g.activations.rank() != 4) throw RuntimeError("gradcam: model lacks a convolutional feature layer");
  const int n = g.activations.dim(1);
  const auto out = model.head().forward(g.activations);
  Tensor d_logits({n, 2});
  g.target.resize(n);
  for (int b = 0; b < n; ++b) {
    const int t = target_class ? *target_class : (out.logits.data[2 * b + 1] > out.logits.data[2 * b] ? 1 : 0);
    g.target[b] = t;
    d_logits.data[2 * b + t] = 1.0f;
  }
  g.gradients = model.head().backward(out, Tensor(), d_logits, false);
  g.weights = gradcam_channel_weights(g.gradients);
  const int h = g.activations.dim(2), w = g.activations.dim(3);
  const int out_h = x.dim(2), out_w = x.dim(3);
  for (int b = 0; b < n; ++b) {
    const auto raw = gradcam_map(g.activations, g.weights, b);
    Heatmap hm;
    hm.width = out_w;
    hm.height = out_h;
    hm.source_class = g.target[b];
    hm.values = geometry::resize_bilinear(raw, w, h, out_w, out_h);
    for (float& v : hm.values) v = std::clamp(v, 0.0f, 1.0f);
    g.heatmaps.push_back(std::move(hm));
  }
  return g;
}

Heatmap gradcam_heatmap(nn::FullFaceModel& model, const Image& image, std::optional<int> target_class) {
  const int s = model.config().input_size;
  const Image in = (image.width == s && image.height == s) ? image : geometry::resize_bilinear(image, s, s);
  return gradcam(model, model.standardizer().batch({&in}), target_class).heatmaps.at(0);
}

double topk_mean(std::vector<float> values, double k_percent) {
  if (values.empty()) throw ValidationError("top-k pooling over an empty region");
  if (!(k_percent > 0.0 && k_percent <= 100.0)) throw ValidationError("k_percent must lie in (0, 100]");
  const double raw = k_percent / 100.0 * static_cast<double>(values.size());
  const double r = std::round(raw);
  std::size_t n = static_cast<std::size_t>(std::abs(raw - r) < 1e-9 * std::max(1.0, raw) ? r : std::ceil(raw));
  n = std::clamp<std::size_t>(n, 1, values.size());
  std::partial_sort(values.begin(), values.begin() + n, values.end(), std::greater<float>());
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += values[i];
  return s / static_cast<double>(n);
}

AttentionScores region_attention_scores(const Heatmap& hm, const geometry::PatchSet& patches, double k_percent) {
  AttentionScores out;
  out.k_percent = k_percent;
  for (geometry::Region r : geometry::kAllRegions) {
    const geometry::Box b = patches[r].box;
    const int x0 = std::max(b.x0, 0), y0 = std::max(b.y0, 0);
    const int x1 = std::min(b.x1, hm.width), y1 = std::min(b.y1, hm.height);
    if (x1 <= x0 || y1 <= y0) {
      throw ValidationError("region " + std::string(geometry::region_name(r)) + " is empty inside the heatmap");
    }
    std::vector<float> vals;
    vals.reserve(static_cast<std::size_t>(x1 - x0) * (y1 - y0));
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) vals.push_back(hm.at(x, y));
    out.scores[static_cast<int>(r)] = static_cast<float>(topk_mean(std::move(vals), k_percent));
  }
  return out;
}

void write_attention_csv(const std::filesystem::path& path, const std::vector<AttentionRow>& rows) {
  std::ofstream out(path);
  if (!out) throw RuntimeError("cannot write attention table " + path.string());
  out << kAttentionHeader << '\n' << std::setprecision(9);
  for (const auto& r : rows) {
    out << r.sample_id;
    for (float s : r.scores.scores) out << ',' << s;
    out << ',' << r.scores.k_percent << '\n';
  }
}

std::vector<AttentionRow> read_attention_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeError("cannot open attention table " + path.string() + " (run extract-attention first)");
  std::string line;
  if (!std::getline(in, line) || line != kAttentionHeader) {
    throw ValidationError(path.string() + ":1: expected header '" + std::string(kAttentionHeader) + "'");
  }
  std::vector<AttentionRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    if (f.size() != 9) throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": expected 9 fields");
    AttentionRow r;
    r.sample_id = f[0];
    try {
      for (int i = 0; i < 7; ++i) r.scores.scores[i] = std::stof(f[1 + i]);
      r.scores.k_percent = std::stod(f[8]);
    } catch (const std::logic_error&) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": non-numeric score");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

Image overlay_heatmap(const Image& img, const Heatmap& hm, float alpha) {
  const auto vals = (hm.width == img.width && hm.height == img.height)
                        ? hm.values
                        : geometry::resize_bilinear(hm.values, hm.width, hm.height, img.width, img.height);
  cv::Mat gray(img.height, img.width, CV_8UC1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      gray.at<unsigned char>(y, x) = static_cast<unsigned char>(
          std::lround(std::clamp(vals[static_cast<std::size_t>(y) * img.width + x], 0.0f, 1.0f) * 255.0f));
  cv::Mat color;
  cv::applyColorMap(gray, color, cv::COLORMAP_JET);
  Image out(img.width, img.height, 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const cv::Vec3b bgr = color.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c) {
        const float base = img.channels == 3 ? img.at(x, y, c) : img.at(x, y, 0);
        out.at(x, y, c) = (1.0f - alpha) * base + alpha * (bgr[2 - c] / 255.0f);
      }
    }
  return out;
}

}  // namespace dmpad::attention
