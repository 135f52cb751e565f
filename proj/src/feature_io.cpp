#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "advbench/error.hpp"
#include "advbench/pixel_metrics.hpp"

namespace advbench {

namespace {

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::string context)
      : bytes_(bytes), context_(std::move(context)) {}

  void magic(const char (&expected)[5]) {
    need(4, "magic");
    if (std::memcmp(bytes_.data(), expected, 4) != 0) {
      fail(ErrorCategory::parse, fmt::format("{}: bad magic, expected '{}'", context_, expected));
    }
    pos_ = 4;
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | bytes_[pos_ + static_cast<std::size_t>(i)];
    pos_ += 4;
    return v;
  }

  void floats(std::vector<float>& out, std::uint64_t count, const char* what) {
    if (count > (bytes_.size() - pos_) / 4) {
      fail(ErrorCategory::parse, fmt::format("{}: truncated {} at byte {} ({} floats declared)", context_,
                                             what, pos_, count));
    }
    out.resize(static_cast<std::size_t>(count));
    for (auto& f : out) f = std::bit_cast<float>(u32(what));
  }

  void finish() const {
    if (pos_ != bytes_.size()) {
      fail(ErrorCategory::parse, fmt::format("{}: {} trailing bytes", context_, bytes_.size() - pos_));
    }
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      fail(ErrorCategory::parse, fmt::format("{}: truncated {} at byte {}", context_, what, pos_));
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::string context_;
  std::size_t pos_ = 0;
};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::resolution, fmt::format("cannot open '{}'", path.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

PerceptualFeatureSet parse_pfeat(std::span<const std::uint8_t> bytes, const std::string& context) {
  Reader r(bytes, context);
  r.magic("PFT1");
  const std::uint32_t n_layers = r.u32("layer count");
  PerceptualFeatureSet set;
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    FeatureLayer layer;
    layer.layer_id = r.u32("layer id");
    layer.channels = r.u32("channel count");
    layer.height = r.u32("height");
    layer.width = r.u32("width");
    if (layer.channels == 0 || layer.height == 0 || layer.width == 0) {
      fail(ErrorCategory::parse, fmt::format("{}: layer {} has an empty dimension", context, l));
    }
    const std::uint64_t count = std::uint64_t{layer.channels} * layer.height * layer.width;
    r.floats(layer.activations, count, "activations");
    set.layers.push_back(std::move(layer));
  }
  r.finish();
  return set;
}

LayerWeights parse_pfw(std::span<const std::uint8_t> bytes, const std::string& context) {
  Reader r(bytes, context);
  r.magic("PFW1");
  const std::uint32_t n_layers = r.u32("layer count");
  LayerWeights w;
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    const std::uint32_t channels = r.u32("channel count");
    std::vector<float> values;
    r.floats(values, channels, "weights");
    w.per_layer.push_back(std::move(values));
  }
  r.finish();
  return w;
}

std::vector<std::uint8_t> encode_pfeat(const PerceptualFeatureSet& features) {
  std::vector<std::uint8_t> out{'P', 'F', 'T', '1'};
  put_u32(out, static_cast<std::uint32_t>(features.layers.size()));
  for (const auto& layer : features.layers) {
    put_u32(out, layer.layer_id);
    put_u32(out, layer.channels);
    put_u32(out, layer.height);
    put_u32(out, layer.width);
    for (float f : layer.activations) put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

std::vector<std::uint8_t> encode_pfw(const LayerWeights& weights) {
  std::vector<std::uint8_t> out{'P', 'F', 'W', '1'};
  put_u32(out, static_cast<std::uint32_t>(weights.per_layer.size()));
  for (const auto& layer : weights.per_layer) {
    put_u32(out, static_cast<std::uint32_t>(layer.size()));
    for (float f : layer) put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

PerceptualFeatureSet load_pfeat(const std::filesystem::path& path) {
  return parse_pfeat(read_bytes(path), path.string());
}

LayerWeights load_pfw(const std::filesystem::path& path) { return parse_pfw(read_bytes(path), path.string()); }

}  // namespace advbench
