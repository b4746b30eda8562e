#include "dmpad/netcore/layers.hpp"

#include <cmath>

#include "dmpad/core/error.hpp"
#include "dmpad/kernels/kernels.hpp"

namespace dmpad::nn {

namespace k = dmpad::kernels;

namespace {

void im2col(const Tensor& x, const Conv2dSpec& s, int ho, int wo, Tensor& col) {
  const int cin = x.dim(0), n = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int ks = s.kernel;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t out_plane = static_cast<std::size_t>(ho) * wo;
  const std::size_t row_len = static_cast<std::size_t>(n) * out_plane;
  col.shape = {cin * ks * ks, n * ho * wo};
  col.data.resize(static_cast<std::size_t>(cin) * ks * ks * row_len);
  const int rows = cin * ks * ks;
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const int ci = r / (ks * ks), ky = (r / ks) % ks, kx = r % ks;
    float* dst = col.ptr() + static_cast<std::size_t>(r) * row_len;
    for (int b = 0; b < n; ++b) {
      const float* src = x.ptr() + (static_cast<std::size_t>(ci) * n + b) * plane;
      for (int oy = 0; oy < ho; ++oy) {
        const int iy = oy * s.stride - s.pad + ky;
        float* out = dst + static_cast<std::size_t>(b) * out_plane + static_cast<std::size_t>(oy) * wo;
        if (iy < 0 || iy >= h) {
          std::fill(out, out + wo, 0.0f);
          continue;
        }
        const float* in_row = src + static_cast<std::size_t>(iy) * w;
        for (int ox = 0; ox < wo; ++ox) {
          const int ix = ox * s.stride - s.pad + kx;
          out[ox] = (ix >= 0 && ix < w) ? in_row[ix] : 0.0f;
        }
      }
    }
  }
}

void col2im(const Tensor& col, const Conv2dSpec& s, const std::vector<int>& x_shape, int ho, int wo,
            Tensor& dx) {
  const int cin = x_shape[0], n = x_shape[1], h = x_shape[2], w = x_shape[3];
  const int ks = s.kernel;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t out_plane = static_cast<std::size_t>(ho) * wo;
  const std::size_t row_len = static_cast<std::size_t>(n) * out_plane;
  dx = Tensor(x_shape);
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < cin; ++ci) {
    for (int ky = 0; ky < ks; ++ky) {
      for (int kx = 0; kx < ks; ++kx) {
        const int r = (ci * ks + ky) * ks + kx;
        const float* src = col.ptr() + static_cast<std::size_t>(r) * row_len;
        for (int b = 0; b < n; ++b) {
          float* dst = dx.ptr() + (static_cast<std::size_t>(ci) * n + b) * plane;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * s.stride - s.pad + ky;
            if (iy < 0 || iy >= h) continue;
            const float* in = src + static_cast<std::size_t>(b) * out_plane + static_cast<std::size_t>(oy) * wo;
            float* out_row = dst + static_cast<std::size_t>(iy) * w;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * s.stride - s.pad + kx;
              if (ix >= 0 && ix < w) out_row[ix] += in[ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(const Conv2dSpec& spec, const std::string& name)
    : spec_(spec),
      weight_(name + ".weight", {spec.out_channels, spec.in_channels * spec.kernel * spec.kernel}),
      bias_(name + ".bias", {spec.out_channels}) {}

void Conv2d::init(Rng& rng) {
  const double fan_in = static_cast<double>(spec_.in_channels) * spec_.kernel * spec_.kernel;
  const double std = std::sqrt(2.0 / fan_in);
  for (float& v : weight_.value.data) v = static_cast<float>(std * rng.normal());
  std::fill(bias_.value.data.begin(), bias_.value.data.end(), 0.0f);
}

Tensor Conv2d::forward(const Tensor& x, Mode mode) {
  if (x.rank() != 4 || x.dim(0) != spec_.in_channels) {
    throw ValidationError("conv " + weight_.name + ": expected [" + std::to_string(spec_.in_channels) +
                          ", N, H, W] input, got " + x.shape_str());
  }
  const int n = x.dim(1);
  const int ho = out_size(x.dim(2)), wo = out_size(x.dim(3));
  if (ho < 1 || wo < 1) throw ValidationError("conv " + weight_.name + ": input too small");
  in_shape_ = x.shape;
  const int cols = n * ho * wo;
  const int kdim = spec_.in_channels * spec_.kernel * spec_.kernel;
  Tensor y({spec_.out_channels, n, ho, wo});
  const float* b_ptr;
  if (is_pointwise()) {
    if (mode == Mode::train) cache_ = x;
    b_ptr = x.ptr();
  } else {
    im2col(x, spec_, ho, wo, cache_);
    b_ptr = cache_.ptr();
  }
  k::gemm(k::Trans::no, k::Trans::no, spec_.out_channels, cols, kdim, 1.0f, weight_.value.ptr(), kdim,
          b_ptr, cols, 0.0f, y.ptr(), cols);
  for (int co = 0; co < spec_.out_channels; ++co) {
    float* row = y.ptr() + static_cast<std::size_t>(co) * cols;
    k::scale_shift(row, 1.0f, bias_.value.data[co], row, cols);
  }
  if (mode == Mode::eval && !is_pointwise()) cache_ = Tensor();
  return y;
}

Tensor Conv2d::backward(const Tensor& dy, bool need_dx) {
  if (cache_.data.empty()) throw RuntimeError("conv " + weight_.name + ": backward without train forward");
  const int n = in_shape_[1];
  const int ho = dy.dim(2), wo = dy.dim(3);
  const int cols = n * ho * wo;
  const int kdim = spec_.in_channels * spec_.kernel * spec_.kernel;
  // dW += dY * Col^T, db += rowsum(dY)
  k::gemm(k::Trans::no, k::Trans::yes, spec_.out_channels, kdim, cols, 1.0f, dy.ptr(), cols,
          cache_.ptr(), cols, 1.0f, weight_.grad.ptr(), kdim);
  for (int co = 0; co < spec_.out_channels; ++co) {
    bias_.grad.data[co] += static_cast<float>(k::sum(dy.ptr() + static_cast<std::size_t>(co) * cols, cols));
  }
  if (!need_dx) return {};
  if (is_pointwise()) {
    Tensor dx(in_shape_);
    k::gemm(k::Trans::yes, k::Trans::no, kdim, cols, spec_.out_channels, 1.0f, weight_.value.ptr(), kdim,
            dy.ptr(), cols, 0.0f, dx.ptr(), cols);
    return dx;
  }
  Tensor dcol({kdim, cols});
  k::gemm(k::Trans::yes, k::Trans::no, kdim, cols, spec_.out_channels, 1.0f, weight_.value.ptr(), kdim,
          dy.ptr(), cols, 0.0f, dcol.ptr(), cols);
  Tensor dx;
  col2im(dcol, spec_, in_shape_, ho, wo, dx);
  return dx;
}

// ---------------------------------------------------------------- BatchNorm2d

BatchNorm2d::BatchNorm2d(int channels, const std::string& name)
    : gamma_(name + ".gamma", {channels}),
      beta_(name + ".beta", {channels}),
      running_mean_({channels}, 0.0f),
      running_var_({channels}, 1.0f),
      name_(name) {
  std::fill(gamma_.value.data.begin(), gamma_.value.data.end(), 1.0f);
}

std::vector<NamedArray> BatchNorm2d::buffers() {
  return {{name_ + ".running_mean", &running_mean_}, {name_ + ".running_var", &running_var_}};
}

Tensor BatchNorm2d::forward(const Tensor& x, Mode mode) {
  const int c = x.dim(0);
  const std::size_t len = x.size() / c;
  Tensor y(x.shape);
  if (mode == Mode::eval) {
    for (int ch = 0; ch < c; ++ch) {
      const float inv = 1.0f / std::sqrt(running_var_.data[ch] + kEps);
      const float a = gamma_.value.data[ch] * inv;
      const float b = beta_.value.data[ch] - running_mean_.data[ch] * a;
      k::scale_shift(x.ptr() + ch * len, a, b, y.ptr() + ch * len, len);
    }
    return y;
  }
  x_cache_ = x;
  mean_.assign(c, 0.0f);
  invstd_.assign(c, 0.0f);
  for (int ch = 0; ch < c; ++ch) {
    const float* row = x.ptr() + ch * len;
    const double mean = k::sum(row, len) / static_cast<double>(len);
    const double var = k::sum_sq_dev(row, mean, len) / static_cast<double>(len);
    const float inv = static_cast<float>(1.0 / std::sqrt(var + kEps));
    mean_[ch] = static_cast<float>(mean);
    invstd_[ch] = inv;
    const float a = gamma_.value.data[ch] * inv;
    const float b = beta_.value.data[ch] - static_cast<float>(mean) * a;
    k::scale_shift(row, a, b, y.ptr() + ch * len, len);
    const double unbiased = len > 1 ? var * len / (len - 1) : var;
    running_mean_.data[ch] = (1 - kMomentum) * running_mean_.data[ch] + kMomentum * static_cast<float>(mean);
    running_var_.data[ch] = (1 - kMomentum) * running_var_.data[ch] + kMomentum * static_cast<float>(unbiased);
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& dy) {
  const int c = dy.dim(0);
  const std::size_t len = dy.size() / c;
  Tensor dx(dy.shape);
  for (int ch = 0; ch < c; ++ch) {
    const float* g = dy.ptr() + ch * len;
    const float* x = x_cache_.ptr() + ch * len;
    const double mean = mean_[ch], inv = invstd_[ch];
    const double s1 = k::sum(g, len);
    const double s2 = inv * (k::dot(g, x, len) - mean * s1);
    gamma_.grad.data[ch] += static_cast<float>(s2);
    beta_.grad.data[ch] += static_cast<float>(s1);
    const double gm = gamma_.value.data[ch];
    const double a = gm * inv;
    const double b = -gm * inv * inv * s2 / len;
    const double cst = -gm * inv * s1 / len + gm * inv * inv * s2 / len * mean;
    k::affine2(g, x, static_cast<float>(a), static_cast<float>(b), static_cast<float>(cst),
               dx.ptr() + ch * len, len);
  }
  return dx;
}

// ---------------------------------------------------------------- ConvBlock / backbone

ConvBlock::ConvBlock(const Conv2dSpec& spec, const std::string& name)
    : conv_(spec, name + ".conv"), bn_(spec.out_channels, name + ".bn") {}

Tensor ConvBlock::forward(const Tensor& x, Mode mode) {
  Tensor z = bn_.forward(conv_.forward(x, mode), mode);
  Tensor y = relu(z);
  if (mode == Mode::train) pre_relu_ = std::move(z);
  return y;
}

Tensor ConvBlock::backward(const Tensor& dy, bool need_dx) {
  return conv_.backward(bn_.backward(relu_backward(pre_relu_, dy)), need_dx);
}

std::vector<Param*> ConvBlock::params() {
  auto p = conv_.params();
  for (Param* q : bn_.params()) p.push_back(q);
  return p;
}

ConvBackbone::ConvBackbone(int in_channels, const std::vector<int>& widths, const std::string& name)
    : widths_(widths) {
  int c = in_channels;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    blocks_.emplace_back(Conv2dSpec{c, widths[i], 3, 2, 1}, name + ".stage" + std::to_string(i));
    c = widths[i];
  }
}

void ConvBackbone::init(Rng& rng) {
  for (auto& b : blocks_) b.init(rng);
}

Tensor ConvBackbone::forward(const Tensor& x, Mode mode) {
  Tensor h = x;
  for (auto& b : blocks_) h = b.forward(h, mode);
  return h;
}

void ConvBackbone::backward(const Tensor& dy) {
  Tensor g = dy;
  for (std::size_t i = blocks_.size(); i-- > 0;) g = blocks_[i].backward(g, i > 0);
}

std::vector<Param*> ConvBackbone::params() {
  std::vector<Param*> out;
  for (auto& b : blocks_)
    for (Param* p : b.params()) out.push_back(p);
  return out;
}

std::vector<NamedArray> ConvBackbone::buffers() {
  std::vector<NamedArray> out;
  for (auto& b : blocks_)
    for (auto& a : b.buffers()) out.push_back(a);
  return out;
}

int ConvBackbone::out_size(int in) const {
  int s = in;
  for (std::size_t i = 0; i < blocks_.size(); ++i) s = (s + 2 - 3) / 2 + 1;
  return s;
}

// ---------------------------------------------------------------- Linear

Linear::Linear(int in, int out, const std::string& name)
    : in_(in), out_(out), weight_(name + ".weight", {out, in}), bias_(name + ".bias", {out}) {}

void Linear::init(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
  for (float& v : weight_.value.data) v = static_cast<float>(rng.uniform(-bound, bound));
  for (float& v : bias_.value.data) v = static_cast<float>(rng.uniform(-bound, bound));
}

Tensor Linear::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != in_) {
    throw ValidationError(weight_.name + ": expected [N, " + std::to_string(in_) + "] input, got " + x.shape_str());
  }
  const int n = x.dim(0);
  Tensor y({n, out_});
  k::gemm(k::Trans::no, k::Trans::yes, n, out_, in_, 1.0f, x.ptr(), in_, weight_.value.ptr(), in_, 0.0f,
          y.ptr(), out_);
  for (int i = 0; i < n; ++i) k::axpy(1.0f, bias_.value.ptr(), y.ptr() + static_cast<std::size_t>(i) * out_, out_);
  return y;
}

Tensor Linear::backward(const Tensor& x, const Tensor& dy, bool need_dx, bool accumulate) {
  const int n = x.dim(0);
  if (accumulate) {
    k::gemm(k::Trans::yes, k::Trans::no, out_, in_, n, 1.0f, dy.ptr(), out_, x.ptr(), in_, 1.0f,
            weight_.grad.ptr(), in_);
    for (int i = 0; i < n; ++i) k::axpy(1.0f, dy.ptr() + static_cast<std::size_t>(i) * out_, bias_.grad.ptr(), out_);
  }
  if (!need_dx) return {};
  Tensor dx({n, in_});
  k::gemm(k::Trans::no, k::Trans::no, n, in_, out_, 1.0f, dy.ptr(), out_, weight_.value.ptr(), in_, 0.0f,
          dx.ptr(), in_);
  return dx;
}

// ---------------------------------------------------------------- elementwise / pooling

Tensor global_avg_pool(const Tensor& x) {
  const int c = x.dim(0), n = x.dim(1);
  const std::size_t p = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  Tensor y({n, c});
  for (int ch = 0; ch < c; ++ch)
    for (int b = 0; b < n; ++b)
      y.data[static_cast<std::size_t>(b) * c + ch] =
          static_cast<float>(k::sum(x.ptr() + (static_cast<std::size_t>(ch) * n + b) * p, p) / p);
  return y;
}

Tensor global_avg_pool_backward(const Tensor& dy, const std::vector<int>& x_shape) {
  const int c = x_shape[0], n = x_shape[1];
  const std::size_t p = static_cast<std::size_t>(x_shape[2]) * x_shape[3];
  Tensor dx(x_shape);
  for (int ch = 0; ch < c; ++ch)
    for (int b = 0; b < n; ++b) {
      const float g = dy.data[static_cast<std::size_t>(b) * c + ch] / static_cast<float>(p);
      float* dst = dx.ptr() + (static_cast<std::size_t>(ch) * n + b) * p;
      std::fill(dst, dst + p, g);
    }
  return dx;
}

Tensor relu(const Tensor& x) {
  Tensor y(x.shape);
  k::relu(x.ptr(), y.ptr(), x.size());
  return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  Tensor dx(x.shape);
  k::relu_backward(x.ptr(), dy.ptr(), dx.ptr(), x.size());
  return dx;
}

Tensor l2_normalize_rows(const Tensor& x) {
  const int n = x.dim(0), d = x.dim(1);
  Tensor y(x.shape);
  for (int i = 0; i < n; ++i) {
    const float* row = x.ptr() + static_cast<std::size_t>(i) * d;
    const double norm = std::sqrt(k::dot(row, row, d));
    const float s = norm > 1e-12 ? static_cast<float>(1.0 / norm) : 0.0f;
    k::scale_shift(row, s, 0.0f, y.ptr() + static_cast<std::size_t>(i) * d, d);
  }
  return y;
}

Tensor l2_normalize_rows_backward(const Tensor& x, const Tensor& dy) {
  const int n = x.dim(0), d = x.dim(1);
  Tensor dx(x.shape);
  for (int i = 0; i < n; ++i) {
    const float* row = x.ptr() + static_cast<std::size_t>(i) * d;
    const float* g = dy.ptr() + static_cast<std::size_t>(i) * d;
    const double norm = std::sqrt(k::dot(row, row, d));
    if (norm <= 1e-12) continue;
    // d(x/|x|) = (g - u (u . g)) / |x|, u = x / |x|
    const double ug = k::dot(row, g, d) / norm;
    k::affine2(g, row, static_cast<float>(1.0 / norm), static_cast<float>(-ug / (norm * norm)), 0.0f,
               dx.ptr() + static_cast<std::size_t>(i) * d, d);
  }
  return dx;
}

}  // namespace dmpad::nn
