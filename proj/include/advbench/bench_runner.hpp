#pragma once

// Benchmark orchestration: manifest loading, per-condition evaluation of the
// detection and perceptibility metrics, and report rendering.

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "advbench/data_model.hpp"
#include "advbench/det_metrics.hpp"
#include "advbench/error.hpp"
#include "advbench/pixel_metrics.hpp"

namespace advbench {

/// Which resolution each perceptual metric sees when the adversarial image
/// does not have the clean image's dimensions.
enum class ResizePolicy {
  native_linf,  // L_inf against the clean image resized to the adversarial size; others after resizing back
  none,         // mismatched sizes are a shape error
};

struct Condition {
  std::string attack_tag;
  std::string model_tag;
  std::filesystem::path detections;
  std::filesystem::path benign_detections;
  std::optional<std::filesystem::path> adversarial_root;
  std::optional<std::filesystem::path> clean_feature_root;
  std::optional<std::filesystem::path> adversarial_feature_root;
  std::optional<std::filesystem::path> lpips_weights;
};

struct RunManifest {
  std::filesystem::path dataset_path;
  AnnotationFormat dataset_format = AnnotationFormat::coco;
  std::optional<std::filesystem::path> benign_image_root;
  EvalOptions eval;
  ResizePolicy resize = ResizePolicy::native_linf;
  std::vector<Condition> conditions;
};

/// Paths are resolved against `base_dir`. Missing files are reported
/// together in one resolution error.
RunManifest parse_manifest(const std::string& json_text, const std::filesystem::path& base_dir,
                           const std::string& context = "<memory>");
RunManifest load_manifest(const std::filesystem::path& path);

/// Metrics of one clean/adversarial pair.
struct PerceptualSample {
  std::string name;
  NormBundle norms;         // after resizing to the clean dimensions
  double linf_native = 0.0;  // at the adversarial image's own resolution
  double psnr = 0.0;
  double ssim = 0.0;
  std::optional<double> lpips;
};

PerceptualSample compare_images(const std::string& name, const ImageBuffer& clean, const ImageBuffer& adversarial,
                                ResizePolicy policy);

/// Perceptual metric names reported by the runner, in report order.
const std::vector<std::string>& perceptual_metric_names();

std::map<std::string, DistanceStats> aggregate_samples(const std::vector<PerceptualSample>& samples);

/// Finds `relative` under `root`, falling back to the same stem with a
/// .png/.jpg/.jpeg extension.
std::optional<std::filesystem::path> find_variant(const std::filesystem::path& root,
                                                  const std::filesystem::path& relative);

struct DetectionDrops {
  double map = 0.0;
  double ap_loc = 0.0;
  double csr = 0.0;
};

struct ConditionResult {
  std::string attack_tag;
  std::string model_tag;
  MetricBundle benign;
  MetricBundle attacked;
  DetectionDrops drops;
  std::map<std::string, DistanceStats> stats;  // empty for metrics-only conditions
};

ConditionResult evaluate_condition(const RunManifest& manifest, const Dataset& dataset, const Condition& condition);

struct BenignRow {
  std::string model_tag;
  MetricBundle metrics;
};

struct BenchReport {
  std::vector<BenignRow> benign;           // sorted by model tag
  std::vector<ConditionResult> conditions;  // sorted by model tag, then attack tag
};

BenchReport build_report(std::vector<ConditionResult> results);

/// Throws validation error unless every stored drop matches its recomputation to 1e-9.
void check_consistency(const BenchReport& report);

enum class ReportFormat { csv, markdown, json };

ReportFormat parse_report_format(const std::string& name);
std::string render_report(const BenchReport& report, ReportFormat format);
BenchReport report_from_json(const std::string& json_text);

/// One CSV record per (attack, model, metric) for L2, L_inf, SSIM and LPIPS.
/// Conditions without perceptual statistics are skipped with a warning.
std::string emit_plot_data(const BenchReport& report, std::vector<std::string>* warnings = nullptr);

struct ConditionError {
  std::string attack_tag;
  std::string model_tag;
  ErrorCategory category;
  std::string message;
};

struct RunOutcome {
  BenchReport report;
  std::vector<ConditionError> errors;
};

/// Runs body(i) for every i in [0, n) on up to `workers` threads; body must not throw.
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& body);

/// Evaluates every condition on up to `workers` threads. Output does not
/// depend on the worker count.
RunOutcome run_benchmark(const RunManifest& manifest, unsigned workers);

/// Writes report.csv, report.md, report.json and plotdata.csv.
std::vector<std::string> write_report_files(const BenchReport& report, const std::filesystem::path& out_dir);

void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace advbench
