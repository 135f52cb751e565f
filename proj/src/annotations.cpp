#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "advbench/data_model.hpp"
#include "advbench/error.hpp"

namespace advbench {

using nlohmann::json;

namespace {

// Standard VOC label order (alphabetical, category ids 1..20).
const std::vector<std::string>& voc_classes() {
  static const std::vector<std::string> names{
      "aeroplane", "bicycle", "bird",  "boat",        "bottle", "bus",   "car",
      "cat",       "chair",   "cow",   "diningtable", "dog",    "horse", "motorbike",
      "person",    "pottedplant", "sheep", "sofa",     "train",  "tvmonitor"};
  return names;
}

std::size_t line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + offset, '\n'));
}

json parse_json_text(const std::string& text, const std::string& context) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCategory::parse, fmt::format("{}:{}: malformed JSON: {}", context,
                                           line_of_offset(text, e.byte), e.what()));
  }
}

// JSON ids may be integers or strings; both become the canonical string id.
std::string id_string(const json& v, const std::string& entity) {
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_string()) return v.get<std::string>();
  fail(ErrorCategory::parse, fmt::format("{}: id must be an integer or string", entity));
}

const json& require(const json& obj, const char* key, const std::string& entity) {
  if (!obj.is_object() || !obj.contains(key)) {
    fail(ErrorCategory::parse, fmt::format("{}: missing field '{}'", entity, key));
  }
  return obj.at(key);
}

double number(const json& v, const std::string& entity) {
  if (!v.is_number()) fail(ErrorCategory::parse, fmt::format("{}: expected a number", entity));
  return v.get<double>();
}

int integer(const json& v, const std::string& entity) {
  if (!v.is_number_integer()) fail(ErrorCategory::parse, fmt::format("{}: expected an integer", entity));
  return v.get<int>();
}

BoundingBox bbox_from_json(const json& v, const std::string& entity) {
  if (!v.is_array() || v.size() != 4) {
    fail(ErrorCategory::parse, fmt::format("{}: bbox must be [x, y, w, h]", entity));
  }
  try {
    return BoundingBox::from_xywh(number(v[0], entity), number(v[1], entity), number(v[2], entity),
                                  number(v[3], entity));
  } catch (const Error& e) {
    fail(e.category(), fmt::format("{}: {}", entity, e.what()));
  }
}

bool is_canonical_integer(const std::string& s) {
  if (s.empty() || s.size() > 18) return false;
  if (s == "0") return true;
  if (s.front() == '0') return false;
  return std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace

BoundingBox BoundingBox::from_corners(double x1, double y1, double x2, double y2) {
  for (double v : {x1, y1, x2, y2}) {
    if (!std::isfinite(v)) fail(ErrorCategory::validation, "box coordinate is not finite");
    if (v < 0.0) fail(ErrorCategory::validation, fmt::format("negative box coordinate {}", v));
  }
  if (!(x2 > x1) || !(y2 > y1)) {
    fail(ErrorCategory::validation,
         fmt::format("degenerate box ({}, {}, {}, {})", x1, y1, x2, y2));
  }
  return BoundingBox{x1, y1, x2, y2};
}

BoundingBox BoundingBox::from_xywh(double x, double y, double w, double h) {
  return from_corners(x, y, x + w, y + h);
}

AnnotationFormat parse_annotation_format(const std::string& name) {
  if (name == "coco") return AnnotationFormat::coco;
  if (name == "voc_xml" || name == "voc") return AnnotationFormat::voc_xml;
  fail(ErrorCategory::validation, fmt::format("unknown annotation format '{}'", name));
}

Dataset::Dataset(std::vector<std::string> label_map, std::vector<ImageRecord> images,
                 std::vector<int> source_category_ids)
    : label_map_(std::move(label_map)),
      images_(std::move(images)),
      source_category_ids_(std::move(source_category_ids)) {
  const int n_classes = static_cast<int>(label_map_.size());
  if (source_category_ids_.empty()) {
    for (int c = 0; c < n_classes; ++c) source_category_ids_.push_back(c + 1);
  }
  if (static_cast<int>(source_category_ids_.size()) != n_classes) {
    fail(ErrorCategory::validation, "category id list does not match the label map");
  }
  for (int c = 0; c < n_classes; ++c) {
    if (!category_to_class_.emplace(source_category_ids_[c], c).second) {
      fail(ErrorCategory::validation,
           fmt::format("duplicate category id {}", source_category_ids_[c]));
    }
  }
  for (std::size_t i = 0; i < images_.size(); ++i) {
    const auto& img = images_[i];
    if (img.width <= 0 || img.height <= 0) {
      fail(ErrorCategory::validation, fmt::format("image '{}' has non-positive size", img.image_id));
    }
    if (!index_.emplace(img.image_id, i).second) {
      fail(ErrorCategory::validation, fmt::format("duplicate image id '{}'", img.image_id));
    }
    for (const auto& obj : img.objects) {
      if (obj.class_id < 0 || obj.class_id >= n_classes) {
        fail(ErrorCategory::referential,
             fmt::format("image '{}': class {} outside label map", img.image_id, obj.class_id));
      }
    }
  }
}

std::optional<std::size_t> Dataset::index_of(const std::string& image_id) const {
  auto it = index_.find(image_id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::optional<int> Dataset::class_for_category(int category_id) const {
  auto it = category_to_class_.find(category_id);
  if (it == category_to_class_.end()) return std::nullopt;
  return it->second;
}

Dataset Dataset::fused_single_class() const {
  std::vector<ImageRecord> images = images_;
  for (auto& img : images) {
    for (auto& obj : img.objects) obj.class_id = 0;
  }
  return Dataset({"object"}, std::move(images), {1});
}

const std::vector<Detection>& DetectionSet::for_image(const std::string& image_id) const {
  static const std::vector<Detection> empty;
  auto it = by_image.find(image_id);
  return it == by_image.end() ? empty : it->second;
}

std::size_t DetectionSet::size() const {
  std::size_t n = 0;
  for (const auto& [_, dets] : by_image) n += dets.size();
  return n;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::resolution, fmt::format("cannot open '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Dataset parse_coco_json(const std::string& text, const std::string& context) {
  const json doc = parse_json_text(text, context);
  if (!doc.is_object()) fail(ErrorCategory::parse, context + ": top level must be an object");

  std::vector<std::pair<int, std::string>> cats;
  const json& categories = require(doc, "categories", context);
  if (!categories.is_array()) fail(ErrorCategory::parse, context + ": 'categories' must be an array");
  for (std::size_t i = 0; i < categories.size(); ++i) {
    const std::string entity = fmt::format("{}: categories[{}]", context, i);
    const json& cat = categories[i];
    cats.emplace_back(integer(require(cat, "id", entity), entity),
                      require(cat, "name", entity).get<std::string>());
  }
  std::sort(cats.begin(), cats.end());
  std::vector<std::string> labels;
  std::vector<int> source_ids;
  for (auto& [id, name] : cats) {
    source_ids.push_back(id);
    labels.push_back(std::move(name));
  }
  std::unordered_map<int, int> cat_to_class;
  for (int c = 0; c < static_cast<int>(source_ids.size()); ++c) {
    if (!cat_to_class.emplace(source_ids[c], c).second) {
      fail(ErrorCategory::parse, fmt::format("{}: duplicate category id {}", context, source_ids[c]));
    }
  }

  std::vector<ImageRecord> images;
  std::unordered_map<std::string, std::size_t> image_index;
  const json& image_list = require(doc, "images", context);
  if (!image_list.is_array()) fail(ErrorCategory::parse, context + ": 'images' must be an array");
  for (std::size_t i = 0; i < image_list.size(); ++i) {
    const std::string entity = fmt::format("{}: images[{}]", context, i);
    const json& im = image_list[i];
    ImageRecord rec;
    rec.image_id = id_string(require(im, "id", entity), entity);
    rec.width = integer(require(im, "width", entity), entity);
    rec.height = integer(require(im, "height", entity), entity);
    if (im.contains("file_name")) rec.clean_path = im.at("file_name").get<std::string>();
    if (im.contains("adversarial_paths")) {
      for (const auto& p : im.at("adversarial_paths")) rec.adversarial_paths.emplace_back(p.get<std::string>());
    }
    if (!image_index.emplace(rec.image_id, images.size()).second) {
      fail(ErrorCategory::validation, fmt::format("{}: duplicate image id '{}'", entity, rec.image_id));
    }
    images.push_back(std::move(rec));
  }

  if (doc.contains("annotations")) {
    const json& anns = doc.at("annotations");
    if (!anns.is_array()) fail(ErrorCategory::parse, context + ": 'annotations' must be an array");
    for (std::size_t i = 0; i < anns.size(); ++i) {
      const std::string entity = fmt::format("{}: annotations[{}]", context, i);
      const json& ann = anns[i];
      const std::string image_id = id_string(require(ann, "image_id", entity), entity);
      const int category = integer(require(ann, "category_id", entity), entity);
      auto img = image_index.find(image_id);
      if (img == image_index.end()) {
        fail(ErrorCategory::referential, fmt::format("{}: unknown image id '{}'", entity, image_id));
      }
      auto cls = cat_to_class.find(category);
      if (cls == cat_to_class.end()) {
        fail(ErrorCategory::referential, fmt::format("{}: unknown category id {}", entity, category));
      }
      GroundTruthObject obj;
      obj.box = bbox_from_json(require(ann, "bbox", entity), entity);
      obj.class_id = cls->second;
      if (ann.contains("iscrowd")) {
        const json& crowd = ann.at("iscrowd");
        obj.difficult = crowd.is_boolean() ? crowd.get<bool>() : integer(crowd, entity) != 0;
      }
      images[img->second].objects.push_back(obj);
    }
  }
  return Dataset(std::move(labels), std::move(images), std::move(source_ids));
}

ImageRecord parse_voc_record(const std::string& xml_text, const std::vector<std::string>& labels,
                             const std::string& context) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(xml_text);
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    fail(ErrorCategory::parse, fmt::format("{}:{}: malformed XML: {}", context, e.line(), e.message()));
  }
  const auto* root = tree.get_child_optional("annotation").get_ptr();
  if (root == nullptr) fail(ErrorCategory::parse, context + ": missing <annotation> root");

  auto get_number = [&](const pt::ptree& node, const std::string& key, const std::string& entity) {
    auto v = node.get_optional<std::string>(key);
    if (!v) fail(ErrorCategory::parse, fmt::format("{}: {}: missing <{}>", context, entity, key));
    try {
      std::size_t used = 0;
      const double d = std::stod(*v, &used);
      if (used != v->size() && v->find_first_not_of(" \t\r\n", used) != std::string::npos) throw std::invalid_argument(*v);
      return d;
    } catch (const std::logic_error&) {
      fail(ErrorCategory::parse, fmt::format("{}: {}: <{}> is not a number: '{}'", context, entity, key, *v));
    }
  };

  ImageRecord rec;
  const std::string filename = root->get<std::string>("filename", "");
  rec.clean_path = filename;
  rec.image_id = std::filesystem::path(filename).stem().string();
  if (rec.image_id.empty()) rec.image_id = std::filesystem::path(context).stem().string();
  const auto* size = root->get_child_optional("size").get_ptr();
  if (size == nullptr) fail(ErrorCategory::parse, context + ": missing <size>");
  rec.width = static_cast<int>(get_number(*size, "width", "size"));
  rec.height = static_cast<int>(get_number(*size, "height", "size"));

  int index = 0;
  for (const auto& [tag, node] : *root) {
    if (tag != "object") continue;
    const std::string entity = fmt::format("object[{}]", index++);
    const std::string name = node.get<std::string>("name", "");
    auto it = std::find(labels.begin(), labels.end(), name);
    if (it == labels.end()) {
      fail(ErrorCategory::referential, fmt::format("{}: {}: unknown class '{}'", context, entity, name));
    }
    const auto* bnd = node.get_child_optional("bndbox").get_ptr();
    if (bnd == nullptr) fail(ErrorCategory::parse, fmt::format("{}: {}: missing <bndbox>", context, entity));
    GroundTruthObject obj;
    try {
      obj.box = BoundingBox::from_corners(get_number(*bnd, "xmin", entity), get_number(*bnd, "ymin", entity),
                                          get_number(*bnd, "xmax", entity), get_number(*bnd, "ymax", entity));
    } catch (const Error& e) {
      if (e.category() == ErrorCategory::parse) throw;
      fail(e.category(), fmt::format("{}: {}: {}", context, entity, e.what()));
    }
    obj.class_id = static_cast<int>(it - labels.begin());
    obj.difficult = node.get<int>("difficult", 0) != 0;
    rec.objects.push_back(obj);
  }
  return rec;
}

namespace {

std::vector<std::string> voc_object_names(const std::string& xml_text, const std::string& context) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(xml_text);
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    fail(ErrorCategory::parse, fmt::format("{}:{}: malformed XML: {}", context, e.line(), e.message()));
  }
  std::vector<std::string> names;
  if (auto root = tree.get_child_optional("annotation")) {
    for (const auto& [tag, node] : *root) {
      if (tag == "object") names.push_back(node.get<std::string>("name", ""));
    }
  }
  return names;
}

Dataset parse_voc(const std::filesystem::path& path) {
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(path)) {
    for (const auto& entry : std::filesystem::directory_iterator(path)) {
      if (entry.is_regular_file() && entry.path().extension() == ".xml") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(path);
  }

  std::vector<std::string> texts;
  std::set<std::string> names;
  for (const auto& f : files) {
    texts.push_back(read_text_file(f));
    for (auto& n : voc_object_names(texts.back(), f.string())) names.insert(std::move(n));
  }
  // The canonical VOC label map when every name belongs to it; otherwise the
  // sorted set of names actually present.
  const auto& voc = voc_classes();
  const bool all_voc = std::all_of(names.begin(), names.end(), [&](const std::string& n) {
    return std::find(voc.begin(), voc.end(), n) != voc.end();
  });
  std::vector<std::string> labels = all_voc ? voc : std::vector<std::string>(names.begin(), names.end());

  std::vector<ImageRecord> images;
  for (std::size_t i = 0; i < files.size(); ++i) {
    images.push_back(parse_voc_record(texts[i], labels, files[i].string()));
  }
  return Dataset(std::move(labels), std::move(images));
}

}  // namespace

Dataset parse_ground_truth(const std::filesystem::path& path, AnnotationFormat format) {
  if (!std::filesystem::exists(path)) {
    fail(ErrorCategory::resolution, fmt::format("ground truth '{}' does not exist", path.string()));
  }
  switch (format) {
    case AnnotationFormat::coco: return parse_coco_json(read_text_file(path), path.string());
    case AnnotationFormat::voc_xml: return parse_voc(path);
  }
  fail(ErrorCategory::argument, "unsupported annotation format");
}

DetectionSet parse_detections_json(const std::string& text, const Dataset& dataset,
                                   const std::string& context) {
  const json doc = parse_json_text(text, context);
  if (!doc.is_array()) fail(ErrorCategory::parse, context + ": detections must be a JSON array");
  DetectionSet set;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string entity = fmt::format("{}: [{}]", context, i);
    const json& entry = doc[i];
    const std::string image_id = id_string(require(entry, "image_id", entity), entity);
    if (!dataset.index_of(image_id)) {
      fail(ErrorCategory::referential, fmt::format("{}: image id '{}' not in dataset", entity, image_id));
    }
    const int category = integer(require(entry, "category_id", entity), entity);
    const auto cls = dataset.class_for_category(category);
    if (!cls) fail(ErrorCategory::referential, fmt::format("{}: unknown category id {}", entity, category));
    const double score = number(require(entry, "score", entity), entity);
    if (!(score >= 0.0 && score <= 1.0)) {
      fail(ErrorCategory::validation, fmt::format("{}: score {} outside [0, 1]", entity, score));
    }
    Detection det;
    det.box = bbox_from_json(require(entry, "bbox", entity), entity);
    det.class_id = *cls;
    det.score = score;
    set.by_image[image_id].push_back(det);
  }
  return set;
}

DetectionSet parse_detections(const std::filesystem::path& path, const Dataset& dataset) {
  return parse_detections_json(read_text_file(path), dataset, path.string());
}

std::string dump_coco(const Dataset& dataset) {
  json doc;
  doc["images"] = json::array();
  doc["annotations"] = json::array();
  doc["categories"] = json::array();
  std::int64_t ann_id = 1;
  for (const auto& img : dataset.images()) {
    json im;
    if (is_canonical_integer(img.image_id)) {
      im["id"] = std::stoll(img.image_id);
    } else {
      im["id"] = img.image_id;
    }
    im["file_name"] = img.clean_path.generic_string();
    im["width"] = img.width;
    im["height"] = img.height;
    if (!img.adversarial_paths.empty()) {
      im["adversarial_paths"] = json::array();
      for (const auto& p : img.adversarial_paths) im["adversarial_paths"].push_back(p.generic_string());
    }
    for (const auto& obj : img.objects) {
      json ann;
      ann["id"] = ann_id++;
      ann["image_id"] = im["id"];
      ann["category_id"] = dataset.source_category_ids()[static_cast<std::size_t>(obj.class_id)];
      ann["bbox"] = {obj.box.x1, obj.box.y1, obj.box.width(), obj.box.height()};
      ann["iscrowd"] = obj.difficult ? 1 : 0;
      doc["annotations"].push_back(std::move(ann));
    }
    doc["images"].push_back(std::move(im));
  }
  for (int c = 0; c < dataset.num_classes(); ++c) {
    doc["categories"].push_back({{"id", dataset.source_category_ids()[static_cast<std::size_t>(c)]},
                                 {"name", dataset.label_map()[static_cast<std::size_t>(c)]}});
  }
  return doc.dump(2);
}

}  // namespace advbench
