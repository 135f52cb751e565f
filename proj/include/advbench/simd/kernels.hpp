#pragma once

// Data-parallel inner loops shared by the pixel metrics and the toy detector.
//
// Every kernel has a scalar reference implementation. SIMD variants are
// selected once at startup from the CPU feature set. Kernels documented as
// "lane-exact" perform the same floating-point operations in the same order
// per output element as the scalar reference and therefore agree bit-for-bit;
// the remaining ones only reassociate sums.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace advbench::simd {

enum class Isa { scalar, avx2 };

std::string_view to_string(Isa isa);

/// Exact integer statistics of |a - b| over two byte buffers.
struct DiffStats {
  std::uint64_t nonzero = 0;
  std::uint64_t abs_sum = 0;
  std::uint64_t sq_sum = 0;
  std::uint32_t max_abs = 0;

  friend bool operator==(const DiffStats&, const DiffStats&) = default;
};

struct Kernels {
  Isa isa;

  // Exact; requires a.size() == b.size().
  DiffStats (*diff_stats_u8)(std::span<const std::uint8_t> a,
                             std::span<const std::uint8_t> b);

  // out[i] = sum_k taps[k] * in[i + k], k ascending. Lane-exact.
  // Requires in.size() >= out.size() + taps.size() - 1.
  void (*correlate_valid)(std::span<const double> in, std::span<const double> taps,
                          std::span<double> out);

  // acc[i] += w * row[i]. Lane-exact.
  void (*axpy)(std::span<double> acc, std::span<const double> row, double w);

  // acc[i] += (w * (a[i] - b[i]))^2 with the difference taken in double. Lane-exact.
  void (*accumulate_weighted_sq_diff)(std::span<double> acc, std::span<const float> a,
                                      std::span<const float> b, double w);

  // Reassociating sum of a[i] * b[i].
  double (*dot)(std::span<const double> a, std::span<const double> b);

  // x[i] = clamp(x[i] + alpha * sign(grad[i]), lo[i], hi[i]). Lane-exact.
  void (*sign_step_clamp)(std::span<double> x, std::span<const double> grad,
                          std::span<const double> lo, std::span<const double> hi,
                          double alpha);
};

const Kernels& scalar_kernels();

/// nullptr when the binary was built without AVX2 support or the CPU lacks it.
const Kernels* avx2_kernels();

/// Kernels used by the library. Defaults to the widest supported ISA.
const Kernels& active();

/// Overrides the active ISA; returns false (and changes nothing) when the
/// requested ISA is unavailable on this machine.
bool select(Isa isa);

}  // namespace advbench::simd
