#include <algorithm>
#include <cmath>
#include <vector>

#include "advbench/data_model.hpp"
#include "advbench/error.hpp"

namespace advbench {

namespace {

struct Tap {
  int i0;
  int i1;
  double frac;
};

// Source sample positions for half-pixel-centre alignment, clamped to the edge.
std::vector<Tap> taps_for(int src, int dst) {
  std::vector<Tap> taps(static_cast<std::size_t>(dst));
  const double scale = static_cast<double>(src) / static_cast<double>(dst);
  for (int d = 0; d < dst; ++d) {
    double s = (d + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src - 1));
    const int i0 = static_cast<int>(std::floor(s));
    const int i1 = std::min(i0 + 1, src - 1);
    taps[static_cast<std::size_t>(d)] = Tap{i0, i1, s - i0};
  }
  return taps;
}

}  // namespace

ImageBuffer resize_bilinear(const ImageBuffer& image, int width, int height) {
  if (width <= 0 || height <= 0) fail(ErrorCategory::argument, "resize target must be positive");
  if (width == image.width && height == image.height) return image;

  const auto xs = taps_for(image.width, width);
  const auto ys = taps_for(image.height, height);
  ImageBuffer out(width, height);
  for (int y = 0; y < height; ++y) {
    const Tap& ty = ys[static_cast<std::size_t>(y)];
    for (int x = 0; x < width; ++x) {
      const Tap& tx = xs[static_cast<std::size_t>(x)];
      for (int c = 0; c < ImageBuffer::channels; ++c) {
        const double top = image.at(tx.i0, ty.i0, c) * (1.0 - tx.frac) + image.at(tx.i1, ty.i0, c) * tx.frac;
        const double bottom = image.at(tx.i0, ty.i1, c) * (1.0 - tx.frac) + image.at(tx.i1, ty.i1, c) * tx.frac;
        const double v = top * (1.0 - ty.frac) + bottom * ty.frac;
        out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

}  // namespace advbench
