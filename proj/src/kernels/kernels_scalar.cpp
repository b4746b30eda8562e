#include <vector>

#include "dmpad/kernels/kernels.hpp"

namespace dmpad::kernels {
namespace {

void gemm_scalar(Trans ta, Trans tb, int m, int n, int k, float alpha, const float* a, int lda,
                 const float* b, int ldb, float beta, float* c, int ldc) {
  // i-k-j order over a contiguous copy of op(B) rows.
  std::vector<float> bt;
  const float* brows = b;
  int ldbr = ldb;
  if (tb == Trans::yes) {
    bt.resize(static_cast<std::size_t>(k) * n);
    for (int p = 0; p < k; ++p)
      for (int j = 0; j < n; ++j) bt[static_cast<std::size_t>(p) * n + j] = b[static_cast<std::size_t>(j) * ldb + p];
    brows = bt.data();
    ldbr = n;
  }
  for (int i = 0; i < m; ++i) {
    float* crow = c + static_cast<std::size_t>(i) * ldc;
    if (beta == 0.0f) {
      for (int j = 0; j < n; ++j) crow[j] = 0.0f;
    } else if (beta != 1.0f) {
      for (int j = 0; j < n; ++j) crow[j] *= beta;
    }
    for (int p = 0; p < k; ++p) {
      const float av = ta == Trans::no ? a[static_cast<std::size_t>(i) * lda + p]
                                       : a[static_cast<std::size_t>(p) * lda + i];
      const float s = alpha * av;
      if (s == 0.0f) continue;
      const float* brow = brows + static_cast<std::size_t>(p) * ldbr;
      for (int j = 0; j < n; ++j) crow[j] += s * brow[j];
    }
  }
}

double dot_scalar(const float* x, const float* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(x[i]) * y[i];
  return s;
}

double sum_scalar(const float* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

double sum_sq_dev_scalar(const float* x, double mean, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - mean;
    s += d * d;
  }
  return s;
}

double sq_dist_scalar(const float* x, const float* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(x[i]) - y[i];
    s += d * d;
  }
  return s;
}

void axpy_scalar(float alpha, const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_shift_scalar(const float* x, float a, float b, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a * x[i] + b;
}

void affine2_scalar(const float* x, const float* y, float a, float b, float c, float* out,
                    std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i] + b * y[i] + c;
}

void relu_scalar(const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward_scalar(const float* x, const float* dy, float* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dx[i] = x[i] > 0.0f ? dy[i] : 0.0f;
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{
      Isa::scalar,        "scalar",         gemm_scalar,    dot_scalar,
      sum_scalar,         sum_sq_dev_scalar, sq_dist_scalar, axpy_scalar,
      scale_shift_scalar, affine2_scalar,   relu_scalar,    relu_backward_scalar,
  };
  return table;
}

}  // namespace dmpad::kernels
