#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "dmpad/core/rng.hpp"
#include "dmpad/core/tensor.hpp"

namespace dmpad::nn {

enum class Mode { train, eval };

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param() = default;
  Param(std::string n, std::vector<int> shape) : name(std::move(n)), value(shape), grad(shape) {}
  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0f); }
};

/// Non-trainable array saved with a model (running statistics, style bank...).
struct NamedArray {
  std::string name;
  Tensor* tensor;
};

struct Conv2dSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int pad = 1;
};

/// 2-D convolution on [C, N, H, W] activations via im2col + GEMM.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const Conv2dSpec& spec, const std::string& name);

  void init(Rng& rng);
  Tensor forward(const Tensor& x, Mode mode);
  /// Accumulates parameter gradients; returns dx when `need_dx`.
  Tensor backward(const Tensor& dy, bool need_dx);

  const Conv2dSpec& spec() const { return spec_; }
  int out_size(int in) const { return (in + 2 * spec_.pad - spec_.kernel) / spec_.stride + 1; }
  std::vector<Param*> params() { return {&weight_, &bias_}; }
  Param& weight() { return weight_; }
  Param& bias() { return bias_; }

 private:
  bool is_pointwise() const { return spec_.kernel == 1 && spec_.stride == 1 && spec_.pad == 0; }

  Conv2dSpec spec_;
  Param weight_;  // [out, in * k * k]
  Param bias_;    // [out]
  Tensor cache_;  // im2col buffer, or the input for pointwise convs
  std::vector<int> in_shape_;
};

/// Per-channel batch normalization over (N, H, W).
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(int channels, const std::string& name);

  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& dy);

  std::vector<Param*> params() { return {&gamma_, &beta_}; }
  std::vector<NamedArray> buffers();

  static constexpr float kEps = 1e-5f;
  static constexpr float kMomentum = 0.1f;

 private:
  Param gamma_, beta_;
  Tensor running_mean_, running_var_;
  std::string name_;
  Tensor x_cache_;
  std::vector<float> mean_, invstd_;
};

/// conv -> batch norm -> ReLU
class ConvBlock {
 public:
  ConvBlock() = default;
  ConvBlock(const Conv2dSpec& spec, const std::string& name);

  void init(Rng& rng) { conv_.init(rng); }
  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& dy, bool need_dx);

  std::vector<Param*> params();
  std::vector<NamedArray> buffers() { return bn_.buffers(); }
  Conv2d& conv() { return conv_; }

 private:
  Conv2d conv_;
  BatchNorm2d bn_;
  Tensor pre_relu_;
};

/// Stack of stride-2 ConvBlocks with the given channel widths.
class ConvBackbone {
 public:
  ConvBackbone() = default;
  ConvBackbone(int in_channels, const std::vector<int>& widths, const std::string& name);

  void init(Rng& rng);
  Tensor forward(const Tensor& x, Mode mode);
  void backward(const Tensor& dy);

  std::vector<Param*> params();
  std::vector<NamedArray> buffers();
  int out_channels() const { return widths_.empty() ? 0 : widths_.back(); }
  int out_size(int in) const;
  const std::vector<int>& widths() const { return widths_; }

 private:
  std::vector<int> widths_;
  std::vector<ConvBlock> blocks_;
};

/// Fully connected layer on [N, in] rows. Stateless with respect to inputs so
/// one layer can serve several branches; callers pass the input back to backward().
class Linear {
 public:
  Linear() = default;
  Linear(int in, int out, const std::string& name);

  void init(Rng& rng);
  Tensor forward(const Tensor& x) const;
  /// Accumulates dW/db when `accumulate`; returns dx when `need_dx`.
  Tensor backward(const Tensor& x, const Tensor& dy, bool need_dx, bool accumulate = true);

  int in_features() const { return in_; }
  int out_features() const { return out_; }
  std::vector<Param*> params() { return {&weight_, &bias_}; }
  Param& weight() { return weight_; }
  Param& bias() { return bias_; }
  const Param& weight() const { return weight_; }
  const Param& bias() const { return bias_; }

 private:
  int in_ = 0, out_ = 0;
  Param weight_;  // [out, in]
  Param bias_;    // [out]
};

/// [C, N, H, W] -> [N, C] spatial mean, and its adjoint.
Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Tensor& dy, const std::vector<int>& x_shape);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& dy);

/// [N, F] rows scaled to unit L2 norm (zero rows stay zero), and the adjoint.
Tensor l2_normalize_rows(const Tensor& x);
Tensor l2_normalize_rows_backward(const Tensor& x, const Tensor& dy);

}  // namespace dmpad::nn
