#include "fixtures.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include <json.hpp>

namespace fixtures {

namespace fs = std::filesystem;
using nlohmann::json;

TempDir::TempDir() {
  static std::uint64_t counter = 0;
  advbench::Rng rng(static_cast<std::uint64_t>(std::hash<std::string>{}(fs::temp_directory_path().string())) ^
                    static_cast<std::uint64_t>(::getpid()) ^ (++counter << 32));
  for (;;) {
    path_ = fs::temp_directory_path() / ("advbench-test-" + std::to_string(rng.next() % 100000000));
    if (fs::create_directory(path_)) break;
  }
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << content;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

advbench::ImageBuffer random_image(advbench::Rng& rng, int width, int height) {
  advbench::ImageBuffer img(width, height);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

advbench::ImageBuffer perturb(advbench::Rng& rng, const advbench::ImageBuffer& image, int amplitude) {
  advbench::ImageBuffer out = image;
  for (auto& p : out.pixels) {
    const int delta = static_cast<int>(rng.below(static_cast<std::uint64_t>(2 * amplitude + 1))) - amplitude;
    p = static_cast<std::uint8_t>(std::clamp(static_cast<int>(p) + delta, 0, 255));
  }
  return out;
}

advbench::PerceptualFeatureSet random_features(advbench::Rng& rng, const std::vector<std::uint32_t>& channels,
                                               std::uint32_t height, std::uint32_t width) {
  advbench::PerceptualFeatureSet set;
  for (std::size_t l = 0; l < channels.size(); ++l) {
    advbench::FeatureLayer layer;
    layer.layer_id = static_cast<std::uint32_t>(l);
    layer.channels = channels[l];
    layer.height = height;
    layer.width = width;
    const std::size_t plane = layer.plane();
    layer.activations.resize(plane * channels[l]);
    for (std::size_t p = 0; p < plane; ++p) {
      std::vector<double> v(channels[l]);
      double sq = 0.0;
      for (auto& x : v) {
        x = rng.uniform(-1.0, 1.0);
        sq += x * x;
      }
      const double norm = std::sqrt(sq);
      for (std::uint32_t c = 0; c < channels[l]; ++c) {
        layer.activations[c * plane + p] = static_cast<float>(v[c] / norm);
      }
    }
    set.layers.push_back(std::move(layer));
  }
  return set;
}

advbench::LayerWeights random_weights(advbench::Rng& rng, const std::vector<std::uint32_t>& channels) {
  advbench::LayerWeights w;
  for (auto c : channels) {
    std::vector<float> layer(c);
    for (auto& x : layer) x = static_cast<float>(rng.uniform(0.0, 1.0));
    w.per_layer.push_back(std::move(layer));
  }
  return w;
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  write_file(path, std::string(bytes.begin(), bytes.end()));
}

void save_png(const advbench::ImageBuffer& image, const fs::path& path) {
  write_bytes(path, advbench::encode_png(image));
}

fs::path write_bench_fixture(const fs::path& root, const BenchFixtureOptions& o) {
  advbench::Rng rng(o.seed);
  const std::vector<std::string> labels{"person", "car", "dog"};
  json coco{{"images", json::array()}, {"annotations", json::array()}, {"categories", json::array()}};
  for (std::size_t c = 0; c < labels.size(); ++c) {
    coco["categories"].push_back({{"id", static_cast<int>(c) + 1}, {"name", labels[c]}});
  }
  struct Obj {
    double x, y, w, h;
    int cat;
  };
  std::vector<std::vector<Obj>> objects(static_cast<std::size_t>(o.images));
  int ann_id = 1;
  for (int i = 0; i < o.images; ++i) {
    const std::string name = "im" + std::to_string(i);
    coco["images"].push_back({{"id", i + 1}, {"file_name", name + ".png"}, {"width", 24}, {"height", 24}});
    const int n = 1 + static_cast<int>(rng.below(3));
    for (int k = 0; k < n; ++k) {
      Obj ob{static_cast<double>(rng.below(8)), static_cast<double>(rng.below(8)),
             static_cast<double>(4 + rng.below(10)), static_cast<double>(4 + rng.below(10)),
             1 + static_cast<int>(rng.below(3))};
      objects[static_cast<std::size_t>(i)].push_back(ob);
      coco["annotations"].push_back(
          {{"id", ann_id++}, {"image_id", i + 1}, {"category_id", ob.cat}, {"bbox", {ob.x, ob.y, ob.w, ob.h}}});
    }
  }
  write_file(root / "gt.json", coco.dump(1));

  // Detections: benign ones hug the ground truth, attacked ones degrade with the attack index.
  auto detections = [&](double quality) {
    json dets = json::array();
    for (int i = 0; i < o.images; ++i) {
      for (const auto& ob : objects[static_cast<std::size_t>(i)]) {
        if (rng.uniform01() > quality) continue;
        const double shift = rng.uniform01() < quality ? 0.0 : 3.0;
        const int cat = rng.uniform01() < quality ? ob.cat : 1 + (ob.cat % 3);
        dets.push_back({{"image_id", i + 1},
                        {"category_id", cat},
                        {"bbox", {ob.x + shift, ob.y, ob.w, ob.h}},
                        {"score", std::round(rng.uniform(0.3, 1.0) * 100.0) / 100.0}});
      }
      dets.push_back({{"image_id", i + 1}, {"category_id", 1}, {"bbox", {15.0, 15.0, 6.0, 6.0}},
                      {"score", std::round(rng.uniform(0.0, 0.5) * 100.0) / 100.0}});
    }
    return dets;
  };

  const std::vector<std::uint32_t> channels{4, 6};
  const auto weights = random_weights(rng, channels);
  if (o.with_lpips) write_bytes(root / "lpips.pfw", advbench::encode_pfw(weights));

  std::vector<advbench::ImageBuffer> clean;
  if (o.with_images) {
    for (int i = 0; i < o.images; ++i) {
      clean.push_back(random_image(rng, 24, 24));
      save_png(clean.back(), root / "clean" / ("im" + std::to_string(i) + ".png"));
      if (o.with_lpips) {
        write_bytes(root / "features" / "clean" / ("im" + std::to_string(i) + ".pfeat"),
                    advbench::encode_pfeat(random_features(rng, channels, 3, 3)));
      }
    }
  }

  json manifest{{"dataset", {{"path", "gt.json"}, {"format", "coco"}}}, {"conditions", json::array()}};
  if (o.with_images) manifest["benign_image_root"] = "clean";
  for (std::size_t m = 0; m < o.models.size(); ++m) {
    const std::string benign_file = "dets/" + o.models[m] + "_benign.json";
    write_file(root / benign_file, detections(0.95).dump());
    for (std::size_t a = 0; a < o.attacks.size(); ++a) {
      const std::string tag = o.models[m] + "_" + o.attacks[a];
      const std::string det_file = "dets/" + tag + ".json";
      write_file(root / det_file, detections(0.8 - 0.2 * static_cast<double>(a)).dump());
      json cond{{"attack", o.attacks[a]}, {"model", o.models[m]}, {"detections", det_file},
                {"benign_detections", benign_file}};
      if (o.with_images) {
        const std::string adv_root = "adv/" + tag;
        for (int i = 0; i < o.images; ++i) {
          const int amp = 2 + static_cast<int>(4 * a);
          advbench::ImageBuffer adv = perturb(rng, clean[static_cast<std::size_t>(i)], amp);
          if (a == 2 && i == 0) adv = advbench::resize_bilinear(adv, 30, 30);  // a differently-sized output
          save_png(adv, root / adv_root / ("im" + std::to_string(i) + ".png"));
          if (o.with_lpips) {
            write_bytes(root / "features" / tag / ("im" + std::to_string(i) + ".pfeat"),
                        advbench::encode_pfeat(random_features(rng, channels, 3, 3)));
          }
        }
        cond["adversarial_image_root"] = adv_root;
        if (o.with_lpips) {
          cond["clean_feature_root"] = "features/clean";
          cond["adversarial_feature_root"] = "features/" + tag;
          cond["lpips_weights"] = "lpips.pfw";
        }
      }
      manifest["conditions"].push_back(cond);
    }
  }
  write_file(root / "run.json", manifest.dump(2));
  return root / "run.json";
}

}  // namespace fixtures
