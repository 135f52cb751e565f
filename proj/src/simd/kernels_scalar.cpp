#include <algorithm>
#include <cstdlib>

#include "advbench/simd/kernels.hpp"

namespace advbench::simd {
namespace {

DiffStats diff_stats_u8(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  DiffStats s;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto d = static_cast<std::uint32_t>(std::abs(int{a[i]} - int{b[i]}));
    s.nonzero += d != 0;
    s.abs_sum += d;
    s.sq_sum += d * d;
    s.max_abs = std::max(s.max_abs, d);
  }
  return s;
}

void correlate_valid(std::span<const double> in, std::span<const double> taps,
                     std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < taps.size(); ++k) acc = acc + taps[k] * in[i + k];
    out[i] = acc;
  }
}

void axpy(std::span<double> acc, std::span<const double> row, double w) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] = acc[i] + w * row[i];
}

void accumulate_weighted_sq_diff(std::span<double> acc, std::span<const float> a,
                                 std::span<const float> b, double w) {
  for (std::size_t i = 0; i < acc.size(); ++i) {
    const double d = w * (double{a[i]} - double{b[i]});
    acc[i] = acc[i] + d * d;
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

void sign_step_clamp(std::span<double> x, std::span<const double> grad,
                     std::span<const double> lo, std::span<const double> hi, double alpha) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double g = grad[i];
    const double step = g > 0.0 ? alpha : (g < 0.0 ? -alpha : 0.0);
    x[i] = std::min(std::max(x[i] + step, lo[i]), hi[i]);
  }
}

}  // namespace

const Kernels& scalar_kernels() {
  static constexpr Kernels kernels{
      Isa::scalar,     &diff_stats_u8, &correlate_valid, &axpy, &accumulate_weighted_sq_diff,
      &dot,            &sign_step_clamp,
  };
  return kernels;
}

}  // namespace advbench::simd
