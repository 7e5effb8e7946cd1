#pragma once

// Inner loops of the frame sampler and the angular covariance estimator.
// Each has a portable scalar reference and an AVX2/FMA variant; dispatch()
// picks one at runtime. Setting SU11_SIMD=scalar forces the reference path.

namespace su11::kernels {

enum class Isa { kScalar, kAvx2 };

const char* to_string(Isa isa);
bool avx2_available();
Isa active_isa();

/// out[t] = scale * |sum_l (re[l] + i im[l]) (cos_tab[l][t] + i sin_tab[l][t])|^2
/// for t in [0, n_out). Tables are row-major n_coef x n_out.
using SynthesizeFn = void (*)(const double* re, const double* im, int n_coef,
                              const double* cos_tab, const double* sin_tab, int n_out,
                              double scale, double* out);

/// acc[d] += sum_t x[t] x[(t + d) mod n] for d in [0, n).
using AutocorrFn = void (*)(const double* x, int n, double* acc);

namespace scalar {
void synthesize_intensity(const double* re, const double* im, int n_coef, const double* cos_tab,
                          const double* sin_tab, int n_out, double scale, double* out);
void circular_autocorr_accumulate(const double* x, int n, double* acc);
}  // namespace scalar

namespace avx2 {
void synthesize_intensity(const double* re, const double* im, int n_coef, const double* cos_tab,
                          const double* sin_tab, int n_out, double scale, double* out);
void circular_autocorr_accumulate(const double* x, int n, double* acc);
}  // namespace avx2

SynthesizeFn synthesize_intensity(Isa isa = active_isa());
AutocorrFn circular_autocorr_accumulate(Isa isa = active_isa());

}  // namespace su11::kernels
