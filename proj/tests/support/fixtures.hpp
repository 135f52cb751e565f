#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "advbench/data_model.hpp"
#include "advbench/pixel_metrics.hpp"
#include "advbench/random.hpp"

namespace fixtures {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

void write_file(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
/// PNG writer that creates missing parent directories.
void save_png(const advbench::ImageBuffer& image, const std::filesystem::path& path);

advbench::ImageBuffer random_image(advbench::Rng& rng, int width, int height);
/// Copy with every value shifted by a random amount in [-amplitude, amplitude].
advbench::ImageBuffer perturb(advbench::Rng& rng, const advbench::ImageBuffer& image, int amplitude);

/// Random features with unit-norm channel vectors at every position.
advbench::PerceptualFeatureSet random_features(advbench::Rng& rng, const std::vector<std::uint32_t>& channels,
                                               std::uint32_t height, std::uint32_t width);
advbench::LayerWeights random_weights(advbench::Rng& rng, const std::vector<std::uint32_t>& channels);

/// On-disk benchmark: COCO ground truth, clean and adversarial PNG trees,
/// per-model detection files, LPIPS features and a manifest covering
/// models x attacks. Returns the manifest path.
struct BenchFixtureOptions {
  std::vector<std::string> models{"frcnn", "ssd"};
  std::vector<std::string> attacks{"fgsm", "pgd", "patch"};
  int images = 4;
  bool with_images = true;
  bool with_lpips = true;
  std::uint64_t seed = 1;
};

std::filesystem::path write_bench_fixture(const std::filesystem::path& root, const BenchFixtureOptions& options = {});

}  // namespace fixtures
