#include "su11/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <vector>

#if defined(__x86_64__) || defined(__i386__)
#include <immintrin.h>
#define SU11_X86 1
#endif

namespace su11::kernels {

const char* to_string(Isa isa) { return isa == Isa::kAvx2 ? "avx2" : "scalar"; }

bool avx2_available() {
#ifdef SU11_X86
  static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return ok;
#else
  return false;
#endif
}

Isa active_isa() {
  const char* env = std::getenv("SU11_SIMD");
  if (env && std::strcmp(env, "scalar") == 0) return Isa::kScalar;
  return avx2_available() ? Isa::kAvx2 : Isa::kScalar;
}

namespace scalar {

void synthesize_intensity(const double* re, const double* im, int n_coef, const double* cos_tab,
                          const double* sin_tab, int n_out, double scale, double* out) {
  for (int t = 0; t < n_out; ++t) {
    double fr = 0.0, fi = 0.0;
    for (int l = 0; l < n_coef; ++l) {
      const double c = cos_tab[l * n_out + t], s = sin_tab[l * n_out + t];
      fr += re[l] * c - im[l] * s;
      fi += re[l] * s + im[l] * c;
    }
    out[t] = scale * (fr * fr + fi * fi);
  }
}

void circular_autocorr_accumulate(const double* x, int n, double* acc) {
  for (int d = 0; d < n; ++d) {
    double s = 0.0;
    for (int t = 0; t < n; ++t) {
      const int u = t + d < n ? t + d : t + d - n;
      s += x[t] * x[u];
    }
    acc[d] += s;
  }
}

}  // namespace scalar

namespace avx2 {

#ifdef SU11_X86

__attribute__((target("avx2,fma"))) void synthesize_intensity(
    const double* re, const double* im, int n_coef, const double* cos_tab, const double* sin_tab,
    int n_out, double scale, double* out) {
  const __m256d vscale = _mm256_set1_pd(scale);
  int t = 0;
  for (; t + 4 <= n_out; t += 4) {
    __m256d fr = _mm256_setzero_pd(), fi = _mm256_setzero_pd();
    for (int l = 0; l < n_coef; ++l) {
      const __m256d c = _mm256_loadu_pd(cos_tab + l * n_out + t);
      const __m256d s = _mm256_loadu_pd(sin_tab + l * n_out + t);
      const __m256d r = _mm256_set1_pd(re[l]), i = _mm256_set1_pd(im[l]);
      fr = _mm256_fmadd_pd(r, c, fr);
      fr = _mm256_fnmadd_pd(i, s, fr);
      fi = _mm256_fmadd_pd(r, s, fi);
      fi = _mm256_fmadd_pd(i, c, fi);
    }
    const __m256d p = _mm256_fmadd_pd(fr, fr, _mm256_mul_pd(fi, fi));
    _mm256_storeu_pd(out + t, _mm256_mul_pd(vscale, p));
  }
  if (t < n_out) {
    // Tail through the reference loop on a column slice.
    for (; t < n_out; ++t) {
      double fr = 0.0, fi = 0.0;
      for (int l = 0; l < n_coef; ++l) {
        const double c = cos_tab[l * n_out + t], s = sin_tab[l * n_out + t];
        fr += re[l] * c - im[l] * s;
        fi += re[l] * s + im[l] * c;
      }
      out[t] = scale * (fr * fr + fi * fi);
    }
  }
}

__attribute__((target("avx2,fma"))) void circular_autocorr_accumulate(const double* x, int n,
                                                                       double* acc) {
  thread_local std::vector<double> wrapped;
  wrapped.resize(2 * static_cast<std::size_t>(n));
  std::memcpy(wrapped.data(), x, sizeof(double) * n);
  std::memcpy(wrapped.data() + n, x, sizeof(double) * n);
  for (int d = 0; d < n; ++d) {
    const double* y = wrapped.data() + d;
    __m256d s = _mm256_setzero_pd();
    int t = 0;
    for (; t + 4 <= n; t += 4) {
      s = _mm256_fmadd_pd(_mm256_loadu_pd(x + t), _mm256_loadu_pd(y + t), s);
    }
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, s);
    double total = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for (; t < n; ++t) total += x[t] * y[t];
    acc[d] += total;
  }
}

#else

void synthesize_intensity(const double* re, const double* im, int n_coef, const double* cos_tab,
                          const double* sin_tab, int n_out, double scale, double* out) {
  scalar::synthesize_intensity(re, im, n_coef, cos_tab, sin_tab, n_out, scale, out);
}

void circular_autocorr_accumulate(const double* x, int n, double* acc) {
  scalar::circular_autocorr_accumulate(x, n, acc);
}

#endif

}  // namespace avx2

SynthesizeFn synthesize_intensity(Isa isa) {
  return isa == Isa::kAvx2 && avx2_available() ? &avx2::synthesize_intensity
                                               : &scalar::synthesize_intensity;
}

AutocorrFn circular_autocorr_accumulate(Isa isa) {
  return isa == Isa::kAvx2 && avx2_available() ? &avx2::circular_autocorr_accumulate
                                               : &scalar::circular_autocorr_accumulate;
}

}  // namespace su11::kernels
