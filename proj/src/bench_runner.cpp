#include "advbench/bench_runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <thread>
#include <tuple>

#include <fmt/format.h>
#include <json.hpp>

namespace advbench {

using nlohmann::json;

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::string string_field(const json& obj, const char* key, const std::string& entity) {
  if (!obj.contains(key)) fail(ErrorCategory::validation, fmt::format("{}: missing '{}'", entity, key));
  if (!obj.at(key).is_string()) fail(ErrorCategory::validation, fmt::format("{}: '{}' must be a string", entity, key));
  return obj.at(key).get<std::string>();
}

std::optional<std::string> optional_string(const json& obj, const char* key, const std::string& entity) {
  if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
  return string_field(obj, key, entity);
}

ResizePolicy parse_resize_policy(const std::string& name) {
  if (name == "native_linf") return ResizePolicy::native_linf;
  if (name == "none") return ResizePolicy::none;
  fail(ErrorCategory::validation, fmt::format("unknown resize policy '{}'", name));
}

}  // namespace

RunManifest parse_manifest(const std::string& json_text, const std::filesystem::path& base_dir,
                           const std::string& context) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(ErrorCategory::parse, fmt::format("{}: malformed manifest: {}", context, e.what()));
  }
  if (!doc.is_object()) fail(ErrorCategory::validation, context + ": manifest must be an object");

  RunManifest m;
  std::vector<std::string> missing;
  auto must_exist = [&](const std::filesystem::path& p) {
    if (!std::filesystem::exists(p)) missing.push_back(p.string());
  };

  if (!doc.contains("dataset") || !doc.at("dataset").is_object()) {
    fail(ErrorCategory::validation, context + ": missing 'dataset' object");
  }
  const json& ds = doc.at("dataset");
  m.dataset_path = resolve(base_dir, string_field(ds, "path", context + ": dataset"));
  m.dataset_format = parse_annotation_format(string_field(ds, "format", context + ": dataset"));
  must_exist(m.dataset_path);

  if (auto root = optional_string(doc, "benign_image_root", context)) {
    m.benign_image_root = resolve(base_dir, *root);
    must_exist(*m.benign_image_root);
  }

  if (doc.contains("iou_threshold")) {
    if (!doc.at("iou_threshold").is_number()) fail(ErrorCategory::validation, context + ": iou_threshold must be a number");
    m.eval.iou_threshold = doc.at("iou_threshold").get<double>();
  }
  if (!(m.eval.iou_threshold > 0.0 && m.eval.iou_threshold < 1.0)) {
    fail(ErrorCategory::validation, fmt::format("{}: iou_threshold {} outside (0, 1)", context, m.eval.iou_threshold));
  }

  if (doc.contains("options")) {
    const json& opt = doc.at("options");
    if (!opt.is_object()) fail(ErrorCategory::validation, context + ": 'options' must be an object");
    if (opt.contains("ignore_difficult")) {
      if (!opt.at("ignore_difficult").is_boolean()) fail(ErrorCategory::validation, context + ": ignore_difficult must be a boolean");
      m.eval.ignore_difficult = opt.at("ignore_difficult").get<bool>();
    }
    if (auto mode = optional_string(opt, "ap_mode", context + ": options")) {
      if (*mode == "all_point") {
        m.eval.ap_mode = ApMode::all_point;
      } else if (*mode == "voc11") {
        m.eval.ap_mode = ApMode::voc11;
      } else {
        fail(ErrorCategory::validation, fmt::format("{}: unknown ap_mode '{}'", context, *mode));
      }
    }
    if (auto policy = optional_string(opt, "resize_policy", context + ": options")) {
      m.resize = parse_resize_policy(*policy);
    }
  }

  if (!doc.contains("conditions") || !doc.at("conditions").is_array() || doc.at("conditions").empty()) {
    fail(ErrorCategory::validation, context + ": at least one condition is required");
  }
  const json& conds = doc.at("conditions");
  for (std::size_t i = 0; i < conds.size(); ++i) {
    const std::string entity = fmt::format("{}: conditions[{}]", context, i);
    const json& c = conds[i];
    if (!c.is_object()) fail(ErrorCategory::validation, entity + ": must be an object");
    Condition cond;
    cond.attack_tag = string_field(c, "attack", entity);
    cond.model_tag = string_field(c, "model", entity);
    if (cond.attack_tag.empty() || cond.model_tag.empty()) fail(ErrorCategory::validation, entity + ": empty tag");
    cond.detections = resolve(base_dir, string_field(c, "detections", entity));
    cond.benign_detections = resolve(base_dir, string_field(c, "benign_detections", entity));
    must_exist(cond.detections);
    must_exist(cond.benign_detections);
    if (auto p = optional_string(c, "adversarial_image_root", entity)) {
      cond.adversarial_root = resolve(base_dir, *p);
      must_exist(*cond.adversarial_root);
      if (!m.benign_image_root) {
        fail(ErrorCategory::validation, entity + ": adversarial images need a manifest-level benign_image_root");
      }
    }
    if (auto p = optional_string(c, "clean_feature_root", entity)) cond.clean_feature_root = resolve(base_dir, *p);
    if (auto p = optional_string(c, "adversarial_feature_root", entity)) cond.adversarial_feature_root = resolve(base_dir, *p);
    if (auto p = optional_string(c, "lpips_weights", entity)) cond.lpips_weights = resolve(base_dir, *p);
    const int lpips_parts = int{cond.clean_feature_root.has_value()} + int{cond.adversarial_feature_root.has_value()} +
                            int{cond.lpips_weights.has_value()};
    if (lpips_parts != 0 && lpips_parts != 3) {
      fail(ErrorCategory::validation,
           entity + ": LPIPS needs clean_feature_root, adversarial_feature_root and lpips_weights together");
    }
    if (lpips_parts == 3) {
      if (!cond.adversarial_root) fail(ErrorCategory::validation, entity + ": LPIPS features need adversarial images");
      must_exist(*cond.clean_feature_root);
      must_exist(*cond.adversarial_feature_root);
      must_exist(*cond.lpips_weights);
    }
    m.conditions.push_back(std::move(cond));
  }

  if (!missing.empty()) {
    std::string msg = context + ": missing files:";
    for (const auto& p : missing) msg += "\n  " + p;
    fail(ErrorCategory::resolution, msg);
  }
  return m;
}

RunManifest load_manifest(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  return parse_manifest(text, path.parent_path(), path.string());
}

const std::vector<std::string>& perceptual_metric_names() {
  static const std::vector<std::string> names{"l2", "linf", "ssim", "lpips", "psnr", "l1", "l0"};
  return names;
}

PerceptualSample compare_images(const std::string& name, const ImageBuffer& clean, const ImageBuffer& adversarial,
                                ResizePolicy policy) {
  PerceptualSample s;
  s.name = name;
  if (clean.width == adversarial.width && clean.height == adversarial.height) {
    s.norms = lp_norms(clean, adversarial);
    s.linf_native = s.norms.linf;
    s.psnr = psnr(clean, adversarial);
    s.ssim = ssim(clean, adversarial);
    return s;
  }
  if (policy == ResizePolicy::none) {
    fail(ErrorCategory::shape, fmt::format("{}: clean {}x{} and adversarial {}x{} differ", name, clean.width,
                                           clean.height, adversarial.width, adversarial.height));
  }
  const ImageBuffer back = resize_bilinear(adversarial, clean.width, clean.height);
  s.norms = lp_norms(clean, back);
  s.linf_native = lp_norms(resize_bilinear(clean, adversarial.width, adversarial.height), adversarial).linf;
  s.psnr = psnr(clean, back);
  s.ssim = ssim(clean, back);
  return s;
}

std::map<std::string, DistanceStats> aggregate_samples(const std::vector<PerceptualSample>& samples) {
  std::map<std::string, DistanceStats> stats;
  if (samples.empty()) return stats;
  auto collect = [&](const std::function<double(const PerceptualSample&)>& get) {
    std::vector<double> v;
    v.reserve(samples.size());
    for (const auto& s : samples) v.push_back(get(s));
    return aggregate(v);
  };
  stats["l0"] = collect([](const PerceptualSample& s) { return static_cast<double>(s.norms.l0); });
  stats["l1"] = collect([](const PerceptualSample& s) { return s.norms.l1; });
  stats["l2"] = collect([](const PerceptualSample& s) { return s.norms.l2; });
  stats["linf"] = collect([](const PerceptualSample& s) { return s.linf_native; });
  stats["psnr"] = collect([](const PerceptualSample& s) { return s.psnr; });
  stats["ssim"] = collect([](const PerceptualSample& s) { return s.ssim; });
  if (std::all_of(samples.begin(), samples.end(), [](const PerceptualSample& s) { return s.lpips.has_value(); })) {
    stats["lpips"] = collect([](const PerceptualSample& s) { return *s.lpips; });
  }
  return stats;
}

std::optional<std::filesystem::path> find_variant(const std::filesystem::path& root,
                                                  const std::filesystem::path& relative) {
  const auto exact = root / relative;
  if (std::filesystem::is_regular_file(exact)) return exact;
  for (const char* ext : {".png", ".jpg", ".jpeg", ".PNG", ".JPG", ".JPEG"}) {
    auto candidate = exact;
    candidate.replace_extension(ext);
    if (std::filesystem::is_regular_file(candidate)) return candidate;
  }
  return std::nullopt;
}

namespace {

std::filesystem::path feature_file(const std::filesystem::path& root, const std::filesystem::path& relative) {
  auto p = root / relative;
  p.replace_extension(".pfeat");
  return p;
}

std::vector<PerceptualSample> condition_samples(const RunManifest& manifest, const Dataset& dataset,
                                                const Condition& c) {
  std::optional<LayerWeights> weights;
  if (c.lpips_weights) weights = load_pfw(*c.lpips_weights);
  std::vector<PerceptualSample> samples;
  for (const auto& img : dataset.images()) {
    const std::filesystem::path rel = img.clean_path.empty() ? std::filesystem::path(img.image_id) : img.clean_path;
    const auto clean_path = find_variant(*manifest.benign_image_root, rel);
    if (!clean_path) {
      fail(ErrorCategory::resolution, fmt::format("no clean image for '{}' under {}", img.image_id,
                                                  manifest.benign_image_root->string()));
    }
    const auto adv_path = find_variant(*c.adversarial_root, rel);
    if (!adv_path) {
      fail(ErrorCategory::resolution,
           fmt::format("no adversarial image for '{}' under {}", img.image_id, c.adversarial_root->string()));
    }
    PerceptualSample s = compare_images(img.image_id, load_image(*clean_path), load_image(*adv_path), manifest.resize);
    if (weights) {
      s.lpips = lpips_distance(load_pfeat(feature_file(*c.clean_feature_root, rel)),
                               load_pfeat(feature_file(*c.adversarial_feature_root, rel)), *weights);
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

DetectionSet load_detections(const std::filesystem::path& path, const Dataset& dataset, const std::string& model,
                             const std::string& attack) {
  DetectionSet set = parse_detections(path, dataset);
  set.source_model = model;
  set.attack_tag = attack;
  return set;
}

}  // namespace

ConditionResult evaluate_condition(const RunManifest& manifest, const Dataset& dataset, const Condition& condition) {
  ConditionResult r;
  r.attack_tag = condition.attack_tag;
  r.model_tag = condition.model_tag;
  r.benign = evaluate_all(dataset, load_detections(condition.benign_detections, dataset, condition.model_tag, "benign"),
                          manifest.eval);
  r.attacked = evaluate_all(
      dataset, load_detections(condition.detections, dataset, condition.model_tag, condition.attack_tag), manifest.eval);
  r.drops.map = relative_drop(r.benign.map, r.attacked.map);
  r.drops.ap_loc = relative_drop(r.benign.ap_loc, r.attacked.ap_loc);
  r.drops.csr = relative_drop(r.benign.csr, r.attacked.csr);
  if (condition.adversarial_root) r.stats = aggregate_samples(condition_samples(manifest, dataset, condition));
  return r;
}

namespace {

bool same_bundle(const MetricBundle& a, const MetricBundle& b) {
  return a.map == b.map && a.ap_loc == b.ap_loc && a.csr == b.csr && a.per_class_ap == b.per_class_ap;
}

}  // namespace

BenchReport build_report(std::vector<ConditionResult> results) {
  std::sort(results.begin(), results.end(), [](const ConditionResult& a, const ConditionResult& b) {
    return std::tie(a.model_tag, a.attack_tag) < std::tie(b.model_tag, b.attack_tag);
  });
  BenchReport report;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    if (i > 0 && results[i - 1].model_tag == r.model_tag && results[i - 1].attack_tag == r.attack_tag) {
      fail(ErrorCategory::validation, fmt::format("duplicate condition ({}, {})", r.attack_tag, r.model_tag));
    }
    if (report.benign.empty() || report.benign.back().model_tag != r.model_tag) {
      report.benign.push_back({r.model_tag, r.benign});
    } else if (!same_bundle(report.benign.back().metrics, r.benign)) {
      fail(ErrorCategory::validation, fmt::format("model '{}' has inconsistent benign detections", r.model_tag));
    }
  }
  report.conditions = std::move(results);
  check_consistency(report);
  return report;
}

void check_consistency(const BenchReport& report) {
  for (const auto& c : report.conditions) {
    const std::pair<double, double> checks[] = {
        {c.drops.map, relative_drop(c.benign.map, c.attacked.map)},
        {c.drops.ap_loc, relative_drop(c.benign.ap_loc, c.attacked.ap_loc)},
        {c.drops.csr, relative_drop(c.benign.csr, c.attacked.csr)},
    };
    for (const auto& [stored, recomputed] : checks) {
      if (!(std::abs(stored - recomputed) <= 1e-9)) {
        fail(ErrorCategory::validation,
             fmt::format("({}, {}): stored drop {} disagrees with recomputed {}", c.attack_tag, c.model_tag, stored,
                         recomputed));
      }
    }
  }
}

void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& body) {
  const unsigned threads = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, workers), n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) body(i);
    });
  }
}

RunOutcome run_benchmark(const RunManifest& manifest, unsigned workers) {
  const Dataset dataset = parse_ground_truth(manifest.dataset_path, manifest.dataset_format);

  struct Slot {
    std::optional<ConditionResult> result;
    std::optional<ConditionError> error;
  };
  std::vector<Slot> slots(manifest.conditions.size());
  parallel_for(slots.size(), workers, [&](std::size_t i) {
    const Condition& c = manifest.conditions[i];
    try {
      slots[i].result = evaluate_condition(manifest, dataset, c);
    } catch (const Error& e) {
      slots[i].error = ConditionError{c.attack_tag, c.model_tag, e.category(), e.what()};
    } catch (const std::exception& e) {
      slots[i].error = ConditionError{c.attack_tag, c.model_tag, ErrorCategory::io, e.what()};
    }
  });

  RunOutcome outcome;
  std::vector<ConditionResult> results;
  for (auto& s : slots) {
    if (s.result) results.push_back(std::move(*s.result));
    if (s.error) outcome.errors.push_back(std::move(*s.error));
  }
  outcome.report = build_report(std::move(results));
  return outcome;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCategory::io, fmt::format("cannot write '{}'", path.string()));
  out << content;
  if (!out) fail(ErrorCategory::io, fmt::format("short write to '{}'", path.string()));
}

std::vector<std::string> write_report_files(const BenchReport& report, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(ErrorCategory::io, fmt::format("cannot create '{}': {}", out_dir.string(), ec.message()));
  std::vector<std::string> warnings;
  write_text_file(out_dir / "report.csv", render_report(report, ReportFormat::csv));
  write_text_file(out_dir / "report.md", render_report(report, ReportFormat::markdown));
  write_text_file(out_dir / "report.json", render_report(report, ReportFormat::json));
  write_text_file(out_dir / "plotdata.csv", emit_plot_data(report, &warnings));
  return warnings;
}

}  // namespace advbench
