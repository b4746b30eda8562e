#pragma once

// Arithmetic inner loops used by the network engine, the losses, and Grad-CAM.
//
// Each kernel has a portable scalar reference and an AVX2+FMA variant. The
// variant is chosen once at startup from CPUID (override with DMPAD_ISA=scalar)
// and can be swapped in tests with ScopedIsa to check equivalence.

#include <cstddef>
#include <string_view>

namespace dmpad::kernels {

enum class Isa { scalar, avx2 };

enum class Trans { no, yes };

struct KernelTable {
  Isa isa;
  const char* name;

  // Row-major C[M,N] = alpha * op(A)[M,K] * op(B)[K,N] + beta * C.
  void (*gemm)(Trans ta, Trans tb, int m, int n, int k, float alpha, const float* a, int lda,
               const float* b, int ldb, float beta, float* c, int ldc);
  // Sums accumulate in double.
  double (*dot)(const float* x, const float* y, std::size_t n);
  double (*sum)(const float* x, std::size_t n);
  double (*sum_sq_dev)(const float* x, double mean, std::size_t n);
  double (*sq_dist)(const float* x, const float* y, std::size_t n);
  // y += alpha * x
  void (*axpy)(float alpha, const float* x, float* y, std::size_t n);
  // y = a * x + b
  void (*scale_shift)(const float* x, float a, float b, float* y, std::size_t n);
  // out = a * x + b * y + c
  void (*affine2)(const float* x, const float* y, float a, float b, float c, float* out,
                  std::size_t n);
  void (*relu)(const float* x, float* y, std::size_t n);
  // dx = x > 0 ? dy : 0
  void (*relu_backward)(const float* x, const float* dy, float* dx, std::size_t n);
};

const KernelTable& scalar_table();
/// nullptr when the binary was built without the AVX2 translation unit.
const KernelTable* avx2_table();

bool cpu_has_avx2();
Isa best_isa();
const KernelTable& table_for(Isa isa);
/// Table currently used by the free functions below.
const KernelTable& active();
void set_active(Isa isa);
std::string_view isa_name(Isa isa);

class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa) : prev_(active().isa) { set_active(isa); }
  ~ScopedIsa() { set_active(prev_); }
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa prev_;
};

inline void gemm(Trans ta, Trans tb, int m, int n, int k, float alpha, const float* a, int lda,
                 const float* b, int ldb, float beta, float* c, int ldc) {
  active().gemm(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}
inline double dot(const float* x, const float* y, std::size_t n) { return active().dot(x, y, n); }
inline double sum(const float* x, std::size_t n) { return active().sum(x, n); }
inline double sum_sq_dev(const float* x, double mean, std::size_t n) {
  return active().sum_sq_dev(x, mean, n);
}
inline double sq_dist(const float* x, const float* y, std::size_t n) {
  return active().sq_dist(x, y, n);
}
inline void axpy(float alpha, const float* x, float* y, std::size_t n) {
  active().axpy(alpha, x, y, n);
}
inline void scale_shift(const float* x, float a, float b, float* y, std::size_t n) {
  active().scale_shift(x, a, b, y, n);
}
inline void affine2(const float* x, const float* y, float a, float b, float c, float* out,
                    std::size_t n) {
  active().affine2(x, y, a, b, c, out, n);
}
inline void relu(const float* x, float* y, std::size_t n) { active().relu(x, y, n); }
inline void relu_backward(const float* x, const float* dy, float* dx, std::size_t n) {
  active().relu_backward(x, dy, dx, n);
}

}  // namespace dmpad::kernels
