#pragma once

// Images, annotations and detections, plus the parsers that ingest them.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace advbench {

/// Axis-aligned box in continuous pixel coordinates, corner form.
struct BoundingBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  /// Validating constructor: finite, non-negative, x2 > x1 and y2 > y1.
  static BoundingBox from_corners(double x1, double y1, double x2, double y2);
  /// Converts the (x, y, width, height) form used by COCO.
  static BoundingBox from_xywh(double x, double y, double w, double h);

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct GroundTruthObject {
  BoundingBox box;
  int class_id = 0;
  bool difficult = false;

  friend bool operator==(const GroundTruthObject&, const GroundTruthObject&) = default;
};

struct Detection {
  BoundingBox box;
  int class_id = 0;
  double score = 0.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct ImageRecord {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::vector<GroundTruthObject> objects;
  std::filesystem::path clean_path;
  std::vector<std::filesystem::path> adversarial_paths;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

enum class AnnotationFormat { coco, voc_xml };

AnnotationFormat parse_annotation_format(const std::string& name);

class Dataset {
 public:
  Dataset() = default;
  /// Validates the type invariants (contiguous labels, unique ids, class
  /// ranges, positive image sizes) and builds the id index.
  Dataset(std::vector<std::string> label_map, std::vector<ImageRecord> images,
          std::vector<int> source_category_ids = {});

  const std::vector<std::string>& label_map() const { return label_map_; }
  const std::vector<ImageRecord>& images() const { return images_; }
  /// External category id for each class index (COCO category ids, or
  /// 1-based positions for VOC).
  const std::vector<int>& source_category_ids() const { return source_category_ids_; }

  int num_classes() const { return static_cast<int>(label_map_.size()); }
  std::optional<std::size_t> index_of(const std::string& image_id) const;
  std::optional<int> class_for_category(int category_id) const;

  /// Copy in which every ground-truth label is rewritten to a single class.
  Dataset fused_single_class() const;

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.label_map_ == b.label_map_ && a.images_ == b.images_ &&
           a.source_category_ids_ == b.source_category_ids_;
  }

 private:
  std::vector<std::string> label_map_;
  std::vector<ImageRecord> images_;
  std::vector<int> source_category_ids_;
  std::unordered_map<std::string, std::size_t> index_;
  std::unordered_map<int, int> category_to_class_;
};

struct DetectionSet {
  std::map<std::string, std::vector<Detection>> by_image;
  std::string source_model;
  std::string attack_tag = "benign";

  const std::vector<Detection>& for_image(const std::string& image_id) const;
  std::size_t size() const;
};

/// 8-bit RGB, row-major, channel-interleaved.
struct ImageBuffer {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  static constexpr int channels = 3;

  ImageBuffer() = default;
  ImageBuffer(int width, int height, std::uint8_t fill = 0);
  ImageBuffer(int width, int height, std::vector<std::uint8_t> pixels);

  std::size_t value_count() const { return pixels.size(); }
  std::uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;
};

Dataset parse_ground_truth(const std::filesystem::path& path, AnnotationFormat format);
Dataset parse_coco_json(const std::string& text, const std::string& context = "<memory>");
/// Parses one VOC annotation document into a single-image record using the
/// given label map.
ImageRecord parse_voc_record(const std::string& xml_text, const std::vector<std::string>& labels,
                             const std::string& context);

DetectionSet parse_detections(const std::filesystem::path& path, const Dataset& dataset);
DetectionSet parse_detections_json(const std::string& text, const Dataset& dataset,
                                   const std::string& context = "<memory>");

/// Writes the dataset as a COCO instances document that parse_ground_truth
/// reads back into an identical Dataset.
std::string dump_coco(const Dataset& dataset);

ImageBuffer load_image(const std::filesystem::path& path);
ImageBuffer decode_image(const std::vector<std::uint8_t>& bytes, const std::string& context);
void write_png(const ImageBuffer& image, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const ImageBuffer& image);

/// Half-pixel-centre bilinear resampling, rounded to nearest and clamped to 8 bits.
ImageBuffer resize_bilinear(const ImageBuffer& image, int width, int height);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace advbench
