// AVX2 + FMA variants. This translation unit is compiled with -mavx2 -mfma and
// is only entered after a CPUID check.

#include <immintrin.h>

#include <algorithm>
#include <cstring>
#include <vector>

#include "dmpad/kernels/kernels.hpp"

namespace dmpad::kernels {
namespace {

constexpr int kMr = 6;
constexpr int kNr = 16;
constexpr int kMc = 96;
constexpr int kKc = 256;
constexpr int kNc = 2048;

inline float load_op(Trans t, const float* m, int ld, int row, int col) {
  return t == Trans::no ? m[static_cast<std::size_t>(row) * ld + col]
                        : m[static_cast<std::size_t>(col) * ld + row];
}

// Panels of kMr rows; within a panel element (p, r) sits at p * kMr + r.
void pack_a(Trans ta, const float* a, int lda, int i0, int mc, int p0, int kc, float* dst) {
  for (int ir = 0; ir < mc; ir += kMr) {
    const int rows = std::min(kMr, mc - ir);
    float* panel = dst + static_cast<std::size_t>(ir) * kc;
    if (rows < kMr) std::memset(panel, 0, sizeof(float) * kMr * kc);
    for (int r = 0; r < rows; ++r) {
      const int i = i0 + ir + r;
      if (ta == Trans::no) {
        const float* src = a + static_cast<std::size_t>(i) * lda + p0;
        for (int p = 0; p < kc; ++p) panel[p * kMr + r] = src[p];
      } else {
        for (int p = 0; p < kc; ++p) panel[p * kMr + r] = a[static_cast<std::size_t>(p0 + p) * lda + i];
      }
    }
  }
}

// Panels of kNr columns; within a panel element (p, c) sits at p * kNr + c.
void pack_b(Trans tb, const float* b, int ldb, int p0, int kc, int j0, int nc, float* dst) {
  for (int jr = 0; jr < nc; jr += kNr) {
    const int cols = std::min(kNr, nc - jr);
    float* panel = dst + static_cast<std::size_t>(jr) * kc;
    if (tb == Trans::no) {
      for (int p = 0; p < kc; ++p) {
        const float* src = b + static_cast<std::size_t>(p0 + p) * ldb + j0 + jr;
        float* out = panel + p * kNr;
        if (cols == kNr) {
          _mm256_storeu_ps(out, _mm256_loadu_ps(src));
          _mm256_storeu_ps(out + 8, _mm256_loadu_ps(src + 8));
        } else {
          for (int c = 0; c < cols; ++c) out[c] = src[c];
          for (int c = cols; c < kNr; ++c) out[c] = 0.0f;
        }
      }
    } else {
      if (cols < kNr) std::memset(panel, 0, sizeof(float) * kNr * kc);
      for (int c = 0; c < cols; ++c) {
        const float* src = b + static_cast<std::size_t>(j0 + jr + c) * ldb + p0;
        for (int p = 0; p < kc; ++p) panel[p * kNr + c] = src[p];
      }
    }
  }
}

// acc[6x16] = Apanel * Bpanel; then C = alpha * acc + beta * C on the valid tile.
void micro_kernel(int kc, const float* ap, const float* bp, float* c, int ldc, int mr, int nr,
                  float alpha, float beta) {
  __m256 acc[kMr][2];
  for (int r = 0; r < kMr; ++r) acc[r][0] = acc[r][1] = _mm256_setzero_ps();
  for (int p = 0; p < kc; ++p) {
    const __m256 b0 = _mm256_loadu_ps(bp);
    const __m256 b1 = _mm256_loadu_ps(bp + 8);
    for (int r = 0; r < kMr; ++r) {
      const __m256 av = _mm256_broadcast_ss(ap + r);
      acc[r][0] = _mm256_fmadd_ps(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_ps(av, b1, acc[r][1]);
    }
    ap += kMr;
    bp += kNr;
  }
  const __m256 va = _mm256_set1_ps(alpha);
  if (mr == kMr && nr == kNr) {
    const __m256 vb = _mm256_set1_ps(beta);
    for (int r = 0; r < kMr; ++r) {
      float* crow = c + static_cast<std::size_t>(r) * ldc;
      __m256 o0 = _mm256_mul_ps(va, acc[r][0]);
      __m256 o1 = _mm256_mul_ps(va, acc[r][1]);
      if (beta != 0.0f) {
        o0 = _mm256_fmadd_ps(vb, _mm256_loadu_ps(crow), o0);
        o1 = _mm256_fmadd_ps(vb, _mm256_loadu_ps(crow + 8), o1);
      }
      _mm256_storeu_ps(crow, o0);
      _mm256_storeu_ps(crow + 8, o1);
    }
    return;
  }
  alignas(32) float tile[kMr][kNr];
  for (int r = 0; r < kMr; ++r) {
    _mm256_store_ps(tile[r], _mm256_mul_ps(va, acc[r][0]));
    _mm256_store_ps(tile[r] + 8, _mm256_mul_ps(va, acc[r][1]));
  }
  for (int r = 0; r < mr; ++r) {
    float* crow = c + static_cast<std::size_t>(r) * ldc;
    for (int j = 0; j < nr; ++j) crow[j] = beta == 0.0f ? tile[r][j] : tile[r][j] + beta * crow[j];
  }
}

void gemm_avx2(Trans ta, Trans tb, int m, int n, int k, float alpha, const float* a, int lda,
               const float* b, int ldb, float beta, float* c, int ldc) {
  if (m <= 0 || n <= 0) return;
  if (k <= 0 || alpha == 0.0f) {
    for (int i = 0; i < m; ++i) {
      float* crow = c + static_cast<std::size_t>(i) * ldc;
      for (int j = 0; j < n; ++j) crow[j] = beta == 0.0f ? 0.0f : beta * crow[j];
    }
    return;
  }
  thread_local std::vector<float> bpack;
  bpack.resize(static_cast<std::size_t>(kKc) * (kNc + kNr));
  const int ic_blocks = (m + kMc - 1) / kMc;

  for (int j0 = 0; j0 < n; j0 += kNc) {
    const int nc = std::min(kNc, n - j0);
    for (int p0 = 0; p0 < k; p0 += kKc) {
      const int kc = std::min(kKc, k - p0);
      const float beta_eff = p0 == 0 ? beta : 1.0f;
      pack_b(tb, b, ldb, p0, kc, j0, nc, bpack.data());
      const float* bp_all = bpack.data();
#pragma omp parallel for schedule(static) if (ic_blocks > 1)
      for (int ib = 0; ib < ic_blocks; ++ib) {
        thread_local std::vector<float> apack;
        apack.resize(static_cast<std::size_t>(kMc + kMr) * kKc);
        const int i0 = ib * kMc;
        const int mc = std::min(kMc, m - i0);
        pack_a(ta, a, lda, i0, mc, p0, kc, apack.data());
        for (int jr = 0; jr < nc; jr += kNr) {
          const int nr = std::min(kNr, nc - jr);
          const float* bp = bp_all + static_cast<std::size_t>(jr) * kc;
          for (int ir = 0; ir < mc; ir += kMr) {
            const int mr = std::min(kMr, mc - ir);
            micro_kernel(kc, apack.data() + static_cast<std::size_t>(ir) * kc, bp,
                         c + static_cast<std::size_t>(i0 + ir) * ldc + j0 + jr, ldc, mr, nr, alpha,
                         beta_eff);
          }
        }
      }
    }
  }
}

inline double hsum_pd(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const float* x, const float* y, std::size_t n) {
  __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 xv = _mm256_loadu_ps(x + i);
    const __m256 yv = _mm256_loadu_ps(y + i);
    a0 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(xv)),
                         _mm256_cvtps_pd(_mm256_castps256_ps128(yv)), a0);
    a1 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(xv, 1)),
                         _mm256_cvtps_pd(_mm256_extractf128_ps(yv, 1)), a1);
  }
  double s = hsum_pd(_mm256_add_pd(a0, a1));
  for (; i < n; ++i) s += static_cast<double>(x[i]) * y[i];
  return s;
}

double sum_avx2(const float* x, std::size_t n) {
  __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 xv = _mm256_loadu_ps(x + i);
    a0 = _mm256_add_pd(a0, _mm256_cvtps_pd(_mm256_castps256_ps128(xv)));
    a1 = _mm256_add_pd(a1, _mm256_cvtps_pd(_mm256_extractf128_ps(xv, 1)));
  }
  double s = hsum_pd(_mm256_add_pd(a0, a1));
  for (; i < n; ++i) s += x[i];
  return s;
}

double sum_sq_dev_avx2(const float* x, double mean, std::size_t n) {
  const __m256d m = _mm256_set1_pd(mean);
  __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 xv = _mm256_loadu_ps(x + i);
    const __m256d d0 = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(xv)), m);
    const __m256d d1 = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(xv, 1)), m);
    a0 = _mm256_fmadd_pd(d0, d0, a0);
    a1 = _mm256_fmadd_pd(d1, d1, a1);
  }
  double s = hsum_pd(_mm256_add_pd(a0, a1));
  for (; i < n; ++i) {
    const double d = x[i] - mean;
    s += d * d;
  }
  return s;
}

double sq_dist_avx2(const float* x, const float* y, std::size_t n) {
  __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 xv = _mm256_loadu_ps(x + i);
    const __m256 yv = _mm256_loadu_ps(y + i);
    const __m256d d0 = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(xv)),
                                     _mm256_cvtps_pd(_mm256_castps256_ps128(yv)));
    const __m256d d1 = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(xv, 1)),
                                     _mm256_cvtps_pd(_mm256_extractf128_ps(yv, 1)));
    a0 = _mm256_fmadd_pd(d0, d0, a0);
    a1 = _mm256_fmadd_pd(d1, d1, a1);
  }
  double s = hsum_pd(_mm256_add_pd(a0, a1));
  for (; i < n; ++i) {
    const double d = static_cast<double>(x[i]) - y[i];
    s += d * d;
  }
  return s;
}

void axpy_avx2(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_shift_avx2(const float* x, float a, float b, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(a);
  const __m256 vb = _mm256_set1_ps(b);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), vb));
  for (; i < n; ++i) y[i] = a * x[i] + b;
}

void affine2_avx2(const float* x, const float* y, float a, float b, float c, float* out,
                  std::size_t n) {
  const __m256 va = _mm256_set1_ps(a);
  const __m256 vb = _mm256_set1_ps(b);
  const __m256 vc = _mm256_set1_ps(c);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 t = _mm256_fmadd_ps(vb, _mm256_loadu_ps(y + i), vc);
    _mm256_storeu_ps(out + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), t));
  }
  for (; i < n; ++i) out[i] = a * x[i] + b * y[i] + c;
}

void relu_avx2(const float* x, float* y, std::size_t n) {
  const __m256 z = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), z));
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward_avx2(const float* x, const float* dy, float* dx, std::size_t n) {
  const __m256 z = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), z, _CMP_GT_OQ);
    _mm256_storeu_ps(dx + i, _mm256_and_ps(mask, _mm256_loadu_ps(dy + i)));
  }
  for (; i < n; ++i) dx[i] = x[i] > 0.0f ? dy[i] : 0.0f;
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable table{
      Isa::avx2,        "avx2",          gemm_avx2,    dot_avx2,
      sum_avx2,         sum_sq_dev_avx2, sq_dist_avx2, axpy_avx2,
      scale_shift_avx2, affine2_avx2,    relu_avx2,    relu_backward_avx2,
  };
  return &table;
}

}  // namespace dmpad::kernels
