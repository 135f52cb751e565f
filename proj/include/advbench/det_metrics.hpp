#pragma once

// Detection matching and the impact metrics: mAP, AP_loc (class-fused AP)
// and CSR (classification success ratio), plus relative drops.

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "advbench/data_model.hpp"

namespace advbench {

double iou(const BoundingBox& a, const BoundingBox& b);

struct Assignment {
  std::size_t detection;
  std::size_t ground_truth;
  double iou;

  friend bool operator==(const Assignment&, const Assignment&) = default;
};

struct MatchResult {
  std::vector<Assignment> assignments;      // in processing order
  std::vector<std::size_t> unmatched_detections;
  std::vector<std::size_t> ignored_detections;  // overlapped only difficult ground truth
  std::vector<std::size_t> unmatched_gts;       // non-difficult only

  friend bool operator==(const MatchResult&, const MatchResult&) = default;
};

/// Greedy one-to-one matching. Detections are visited by descending score
/// (ties by index); each takes the still-unmatched, non-difficult ground truth
/// with the largest IoU strictly above `threshold` (lowest index on ties),
/// restricted to its own class when `class_aware`. A detection that finds no
/// such partner but overlaps a difficult ground truth above the threshold is
/// ignored rather than counted as a false positive.
MatchResult greedy_match(std::span<const GroundTruthObject> gts, std::span<const Detection> dets,
                         double threshold, bool class_aware);

struct PRPoint {
  double recall;
  double precision;
};

/// Precision/recall after each detection, in descending score order.
struct PRCurve {
  std::vector<PRPoint> points;
  std::size_t n_gt = 0;
};

enum class ApMode { all_point, voc11 };

/// Area under the monotone precision envelope (or the 11-point VOC-2007
/// approximation). Throws undefined_metric when the curve has no positives.
double average_precision(const PRCurve& curve, ApMode mode = ApMode::all_point);

struct EvalOptions {
  double iou_threshold = 0.5;
  bool ignore_difficult = true;
  ApMode ap_mode = ApMode::all_point;
};

struct MetricBundle {
  double map = 0.0;
  double ap_loc = 0.0;
  double csr = 0.0;
  std::map<int, double> per_class_ap;
};

/// Per-class PR curves built from class-aware matching over the whole dataset.
std::map<int, PRCurve> class_pr_curves(const Dataset& dataset, const DetectionSet& dets,
                                       const EvalOptions& options);

/// Mean AP over classes with at least one counted ground truth, in percent.
double evaluate_map(const Dataset& dataset, const DetectionSet& dets, const EvalOptions& options = {},
                    std::map<int, double>* per_class_ap = nullptr);
double evaluate_ap_loc(const Dataset& dataset, const DetectionSet& dets, const EvalOptions& options = {});
double evaluate_csr(const Dataset& dataset, const DetectionSet& dets, const EvalOptions& options = {});

MetricBundle evaluate_all(const Dataset& dataset, const DetectionSet& dets, const EvalOptions& options = {});

/// (benign - attacked) / benign * 100.
double relative_drop(double benign, double attacked);

}  // namespace advbench
