#include "advbench/simd/kernels.hpp"

#if defined(__x86_64__) || defined(__i386__)
#define ADVBENCH_HAS_AVX2_PATH 1
#include <immintrin.h>

#include <algorithm>
#include <bit>
#else
#define ADVBENCH_HAS_AVX2_PATH 0
#endif

namespace advbench::simd {

#if ADVBENCH_HAS_AVX2_PATH
namespace {

#define ADVBENCH_AVX2 __attribute__((target("avx2")))

ADVBENCH_AVX2 std::uint64_t hsum_epi64(__m256i v) {
  const __m128i lo = _mm256_castsi256_si128(v);
  const __m128i hi = _mm256_extracti128_si256(v, 1);
  const __m128i s = _mm_add_epi64(lo, hi);
  return static_cast<std::uint64_t>(_mm_cvtsi128_si64(s)) +
         static_cast<std::uint64_t>(_mm_extract_epi64(s, 1));
}

ADVBENCH_AVX2 DiffStats diff_stats_u8(std::span<const std::uint8_t> a,
                                      std::span<const std::uint8_t> b) {
  const std::size_t n = a.size();
  const __m256i zero = _mm256_setzero_si256();
  __m256i abs_acc = zero;
  __m256i sq_acc = zero;
  __m256i max_acc = zero;
  std::uint64_t zeros = 0;
  std::size_t i = 0;
  for (; i + 32 <= n; i += 32) {
    const __m256i va = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(a.data() + i));
    const __m256i vb = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(b.data() + i));
    const __m256i d = _mm256_or_si256(_mm256_subs_epu8(va, vb), _mm256_subs_epu8(vb, va));

    const auto eq_mask = static_cast<std::uint32_t>(_mm256_movemask_epi8(_mm256_cmpeq_epi8(d, zero)));
    zeros += static_cast<std::uint64_t>(std::popcount(eq_mask));

    abs_acc = _mm256_add_epi64(abs_acc, _mm256_sad_epu8(d, zero));
    max_acc = _mm256_max_epu8(max_acc, d);

    // 255^2 * 2 per 32-bit lane after madd, twice: fits comfortably.
    const __m256i d_lo = _mm256_unpacklo_epi8(d, zero);
    const __m256i d_hi = _mm256_unpackhi_epi8(d, zero);
    const __m256i sq32 = _mm256_add_epi32(_mm256_madd_epi16(d_lo, d_lo), _mm256_madd_epi16(d_hi, d_hi));
    sq_acc = _mm256_add_epi64(sq_acc, _mm256_unpacklo_epi32(sq32, zero));
    sq_acc = _mm256_add_epi64(sq_acc, _mm256_unpackhi_epi32(sq32, zero));
  }

  DiffStats s;
  s.nonzero = static_cast<std::uint64_t>(i) - zeros;
  s.abs_sum = hsum_epi64(abs_acc);
  s.sq_sum = hsum_epi64(sq_acc);
  alignas(32) std::uint8_t lanes[32];
  _mm256_store_si256(reinterpret_cast<__m256i*>(lanes), max_acc);
  for (std::uint8_t v : lanes) s.max_abs = std::max<std::uint32_t>(s.max_abs, v);

  for (; i < n; ++i) {
    const auto d = static_cast<std::uint32_t>(a[i] > b[i] ? a[i] - b[i] : b[i] - a[i]);
    s.nonzero += d != 0;
    s.abs_sum += d;
    s.sq_sum += d * d;
    s.max_abs = std::max(s.max_abs, d);
  }
  return s;
}

ADVBENCH_AVX2 void correlate_valid(std::span<const double> in, std::span<const double> taps,
                                   std::span<double> out) {
  const std::size_t n = out.size();
  const std::size_t k_taps = taps.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t k = 0; k < k_taps; ++k) {
      const __m256d t = _mm256_set1_pd(taps[k]);
      acc = _mm256_add_pd(acc, _mm256_mul_pd(t, _mm256_loadu_pd(in.data() + i + k)));
    }
    _mm256_storeu_pd(out.data() + i, acc);
  }
  for (; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < k_taps; ++k) acc = acc + taps[k] * in[i + k];
    out[i] = acc;
  }
}

ADVBENCH_AVX2 void axpy(std::span<double> acc, std::span<const double> row, double w) {
  const std::size_t n = acc.size();
  const __m256d vw = _mm256_set1_pd(w);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d r = _mm256_mul_pd(vw, _mm256_loadu_pd(row.data() + i));
    _mm256_storeu_pd(acc.data() + i, _mm256_add_pd(_mm256_loadu_pd(acc.data() + i), r));
  }
  for (; i < n; ++i) acc[i] = acc[i] + w * row[i];
}

ADVBENCH_AVX2 void accumulate_weighted_sq_diff(std::span<double> acc, std::span<const float> a,
                                               std::span<const float> b, double w) {
  const std::size_t n = acc.size();
  const __m256d vw = _mm256_set1_pd(w);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d va = _mm256_cvtps_pd(_mm_loadu_ps(a.data() + i));
    const __m256d vb = _mm256_cvtps_pd(_mm_loadu_ps(b.data() + i));
    const __m256d d = _mm256_mul_pd(vw, _mm256_sub_pd(va, vb));
    _mm256_storeu_pd(acc.data() + i, _mm256_add_pd(_mm256_loadu_pd(acc.data() + i), _mm256_mul_pd(d, d)));
  }
  for (; i < n; ++i) {
    const double d = w * (double{a[i]} - double{b[i]});
    acc[i] = acc[i] + d * d;
  }
}

ADVBENCH_AVX2 double dot(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(a.data() + i), _mm256_loadu_pd(b.data() + i)));
    acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(_mm256_loadu_pd(a.data() + i + 4), _mm256_loadu_pd(b.data() + i + 4)));
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, _mm256_add_pd(acc0, acc1));
  double acc = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

ADVBENCH_AVX2 void sign_step_clamp(std::span<double> x, std::span<const double> grad,
                                   std::span<const double> lo, std::span<const double> hi,
                                   double alpha) {
  const std::size_t n = x.size();
  const __m256d zero = _mm256_setzero_pd();
  const __m256d pos = _mm256_set1_pd(alpha);
  const __m256d neg = _mm256_set1_pd(-alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(grad.data() + i);
    const __m256d step = _mm256_or_pd(_mm256_and_pd(_mm256_cmp_pd(g, zero, _CMP_GT_OQ), pos),
                                      _mm256_and_pd(_mm256_cmp_pd(g, zero, _CMP_LT_OQ), neg));
    __m256d v = _mm256_add_pd(_mm256_loadu_pd(x.data() + i), step);
    v = _mm256_max_pd(v, _mm256_loadu_pd(lo.data() + i));
    v = _mm256_min_pd(v, _mm256_loadu_pd(hi.data() + i));
    _mm256_storeu_pd(x.data() + i, v);
  }
  for (; i < n; ++i) {
    const double g = grad[i];
    const double step = g > 0.0 ? alpha : (g < 0.0 ? -alpha : 0.0);
    x[i] = std::min(std::max(x[i] + step, lo[i]), hi[i]);
  }
}

#undef ADVBENCH_AVX2

}  // namespace

const Kernels* avx2_kernels() {
  static constexpr Kernels kernels{
      Isa::avx2, &diff_stats_u8, &correlate_valid, &axpy, &accumulate_weighted_sq_diff,
      &dot,      &sign_step_clamp,
  };
  static const bool supported = __builtin_cpu_supports("avx2");
  return supported ? &kernels : nullptr;
}

#else

const Kernels* avx2_kernels() { return nullptr; }

#endif

}  // namespace advbench::simd
