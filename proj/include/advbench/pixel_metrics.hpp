#pragma once

// Perceptibility measures between a clean and an adversarial image: L_p norms
// of the 8-bit difference, PSNR, SSIM and the LPIPS distance over
// externally extracted, unit-normalized deep features.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "advbench/data_model.hpp"

namespace advbench {

struct NormBundle {
  std::uint64_t l0 = 0;
  double l1 = 0.0;
  double l2 = 0.0;
  double linf = 0.0;
};

NormBundle lp_norms(const ImageBuffer& a, const ImageBuffer& b);

/// Returned by psnr() for identical images.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

double psnr(const ImageBuffer& a, const ImageBuffer& b);

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 255.0;
};

/// Normalized 1-D Gaussian taps of the SSIM window.
std::vector<double> gaussian_window(int size, double sigma);

/// Mean SSIM over valid (unpadded) window positions, averaged over channels.
double ssim(const ImageBuffer& a, const ImageBuffer& b, const SsimParams& params = {});

struct FeatureLayer {
  std::uint32_t layer_id = 0;
  std::uint32_t channels = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<float> activations;  // channel-major: [c][h][w]

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
};

struct PerceptualFeatureSet {
  std::vector<FeatureLayer> layers;
};

struct LayerWeights {
  std::vector<std::vector<float>> per_layer;
};

/// Throws validation error unless every spatial channel vector has unit norm
/// (within `tolerance`) or is exactly zero.
void validate_unit_norm(const PerceptualFeatureSet& features, double tolerance = 1e-4);

double lpips_distance(const PerceptualFeatureSet& a, const PerceptualFeatureSet& b,
                      const LayerWeights& weights);

// PFEAT ("PFT1") and PFW ("PFW1") little-endian containers.
PerceptualFeatureSet parse_pfeat(std::span<const std::uint8_t> bytes, const std::string& context = "<memory>");
LayerWeights parse_pfw(std::span<const std::uint8_t> bytes, const std::string& context = "<memory>");
std::vector<std::uint8_t> encode_pfeat(const PerceptualFeatureSet& features);
std::vector<std::uint8_t> encode_pfw(const LayerWeights& weights);
PerceptualFeatureSet load_pfeat(const std::filesystem::path& path);
LayerWeights load_pfw(const std::filesystem::path& path);

struct DistanceStats {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

/// Mean and population standard deviation. Samples containing +infinity
/// (identical-image PSNR) give mean +infinity, with std 0 when every sample
/// is infinite and +infinity otherwise.
DistanceStats aggregate(std::span<const double> values);

/// "mean ± std" with two decimals.
std::string format_stats(const DistanceStats& stats);

}  // namespace advbench
