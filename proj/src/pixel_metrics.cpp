#include "advbench/pixel_metrics.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "advbench/error.hpp"
#include "advbench/simd/kernels.hpp"

namespace advbench {

namespace {

void require_same_shape(const ImageBuffer& a, const ImageBuffer& b, const char* metric) {
  if (a.width != b.width || a.height != b.height || a.pixels.size() != b.pixels.size()) {
    fail(ErrorCategory::shape, fmt::format("{}: image sizes differ ({}x{} vs {}x{})", metric, a.width,
                                           a.height, b.width, b.height));
  }
}

}  // namespace

NormBundle lp_norms(const ImageBuffer& a, const ImageBuffer& b) {
  require_same_shape(a, b, "lp_norms");
  const simd::DiffStats s = simd::active().diff_stats_u8(a.pixels, b.pixels);
  NormBundle n;
  n.l0 = s.nonzero;
  n.l1 = static_cast<double>(s.abs_sum);
  n.l2 = std::sqrt(static_cast<double>(s.sq_sum));
  n.linf = static_cast<double>(s.max_abs);
  return n;
}

double psnr(const ImageBuffer& a, const ImageBuffer& b) {
  require_same_shape(a, b, "psnr");
  const simd::DiffStats s = simd::active().diff_stats_u8(a.pixels, b.pixels);
  if (s.sq_sum == 0) return kPsnrIdentical;
  const double mse = static_cast<double>(s.sq_sum) / static_cast<double>(a.pixels.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> taps(static_cast<std::size_t>(size));
  const double center = (size - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - center;
    taps[static_cast<std::size_t>(i)] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    sum += taps[static_cast<std::size_t>(i)];
  }
  for (auto& t : taps) t /= sum;
  return taps;
}

namespace {

// Separable valid-mode Gaussian filter: rows first, then columns.
std::vector<double> filter_valid(const std::vector<double>& plane, int width, int height,
                                 const std::vector<double>& taps, const simd::Kernels& k) {
  const int win = static_cast<int>(taps.size());
  const int out_w = width - win + 1;
  const int out_h = height - win + 1;
  std::vector<double> rows(static_cast<std::size_t>(out_w) * height);
  for (int y = 0; y < height; ++y) {
    k.correlate_valid(std::span(plane).subspan(static_cast<std::size_t>(y) * width, width), taps,
                      std::span(rows).subspan(static_cast<std::size_t>(y) * out_w, out_w));
  }
  std::vector<double> out(static_cast<std::size_t>(out_w) * out_h, 0.0);
  for (int y = 0; y < out_h; ++y) {
    auto dst = std::span(out).subspan(static_cast<std::size_t>(y) * out_w, out_w);
    for (int t = 0; t < win; ++t) {
      k.axpy(dst, std::span<const double>(rows).subspan(static_cast<std::size_t>(y + t) * out_w, out_w),
             taps[static_cast<std::size_t>(t)]);
    }
  }
  return out;
}

}  // namespace

double ssim(const ImageBuffer& a, const ImageBuffer& b, const SsimParams& params) {
  require_same_shape(a, b, "ssim");
  if (a.width < params.window || a.height < params.window) {
    fail(ErrorCategory::shape, fmt::format("ssim: image {}x{} smaller than the {}x{} window", a.width,
                                           a.height, params.window, params.window));
  }
  const simd::Kernels& k = simd::active();
  const auto taps = gaussian_window(params.window, params.sigma);
  const double c1 = (params.k1 * params.dynamic_range) * (params.k1 * params.dynamic_range);
  const double c2 = (params.k2 * params.dynamic_range) * (params.k2 * params.dynamic_range);
  const std::size_t n = static_cast<std::size_t>(a.width) * a.height;

  double channel_sum = 0.0;
  for (int c = 0; c < ImageBuffer::channels; ++c) {
    std::vector<double> pa(n), pb(n), paa(n), pbb(n), pab(n);
    for (std::size_t i = 0; i < n; ++i) {
      pa[i] = a.pixels[i * 3 + static_cast<std::size_t>(c)];
      pb[i] = b.pixels[i * 3 + static_cast<std::size_t>(c)];
      paa[i] = pa[i] * pa[i];
      pbb[i] = pb[i] * pb[i];
      pab[i] = pa[i] * pb[i];
    }
    const auto mu_a = filter_valid(pa, a.width, a.height, taps, k);
    const auto mu_b = filter_valid(pb, a.width, a.height, taps, k);
    const auto e_aa = filter_valid(paa, a.width, a.height, taps, k);
    const auto e_bb = filter_valid(pbb, a.width, a.height, taps, k);
    const auto e_ab = filter_valid(pab, a.width, a.height, taps, k);

    double sum = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double ma = mu_a[i];
      const double mb = mu_b[i];
      const double var_a = e_aa[i] - ma * ma;
      const double var_b = e_bb[i] - mb * mb;
      const double cov = e_ab[i] - ma * mb;
      sum += ((2.0 * (ma * mb) + c1) * (2.0 * cov + c2)) /
             ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
    }
    channel_sum += sum / static_cast<double>(mu_a.size());
  }
  return channel_sum / ImageBuffer::channels;
}

void validate_unit_norm(const PerceptualFeatureSet& features, double tolerance) {
  for (const auto& layer : features.layers) {
    const std::size_t plane = layer.plane();
    for (std::size_t p = 0; p < plane; ++p) {
      double sq = 0.0;
      for (std::size_t c = 0; c < layer.channels; ++c) {
        const double v = layer.activations[c * plane + p];
        sq += v * v;
      }
      if (sq == 0.0) continue;
      const double norm = std::sqrt(sq);
      if (!(std::abs(norm - 1.0) <= tolerance)) {
        fail(ErrorCategory::validation,
             fmt::format("layer {}: channel vector at position {} has norm {}", layer.layer_id, p, norm));
      }
    }
  }
}

double lpips_distance(const PerceptualFeatureSet& a, const PerceptualFeatureSet& b,
                      const LayerWeights& weights) {
  if (a.layers.size() != b.layers.size() || a.layers.size() != weights.per_layer.size()) {
    fail(ErrorCategory::shape, fmt::format("lpips: layer counts differ ({}, {}, {} weights)", a.layers.size(),
                                           b.layers.size(), weights.per_layer.size()));
  }
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    const auto& la = a.layers[l];
    const auto& lb = b.layers[l];
    if (la.layer_id != lb.layer_id || la.channels != lb.channels || la.height != lb.height ||
        la.width != lb.width || weights.per_layer[l].size() != la.channels) {
      fail(ErrorCategory::shape, fmt::format("lpips: layer {} shapes differ", l));
    }
    for (float w : weights.per_layer[l]) {
      if (!(w >= 0.0f)) fail(ErrorCategory::validation, fmt::format("lpips: negative weight in layer {}", l));
    }
  }
  validate_unit_norm(a);
  validate_unit_norm(b);

  const simd::Kernels& k = simd::active();
  double total = 0.0;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    const auto& la = a.layers[l];
    const auto& lb = b.layers[l];
    const std::size_t plane = la.plane();
    std::vector<double> acc(plane, 0.0);
    for (std::size_t c = 0; c < la.channels; ++c) {
      k.accumulate_weighted_sq_diff(acc, std::span(la.activations).subspan(c * plane, plane),
                                    std::span(lb.activations).subspan(c * plane, plane),
                                    static_cast<double>(weights.per_layer[l][c]));
    }
    double layer_sum = 0.0;
    for (double v : acc) layer_sum += v;
    total += layer_sum / static_cast<double>(plane);
  }
  return total;
}

DistanceStats aggregate(std::span<const double> values) {
  if (values.empty()) fail(ErrorCategory::argument, "aggregate of an empty sample");
  DistanceStats s;
  s.n = values.size();
  const auto infinite = static_cast<std::size_t>(
      std::count_if(values.begin(), values.end(), [](double v) { return std::isinf(v) && v > 0; }));
  if (infinite > 0) {
    s.mean = std::numeric_limits<double>::infinity();
    s.std = infinite == values.size() ? 0.0 : std::numeric_limits<double>::infinity();
    return s;
  }
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(s.n);
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(sq / static_cast<double>(s.n));
  return s;
}

std::string format_stats(const DistanceStats& stats) {
  return fmt::format("{:.2f} ± {:.2f}", stats.mean, stats.std);
}

}  // namespace advbench
