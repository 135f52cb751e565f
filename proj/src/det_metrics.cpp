#include "advbench/det_metrics.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>

#include "advbench/error.hpp"

namespace advbench {

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

MatchResult greedy_match(std::span<const GroundTruthObject> gts, std::span<const Detection> dets,
                         double threshold, bool class_aware) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });

  MatchResult result;
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t d : order) {
    const Detection& det = dets[d];
    std::size_t best = gts.size();
    double best_iou = threshold;
    bool overlaps_difficult = false;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const GroundTruthObject& gt = gts[g];
      if (class_aware && gt.class_id != det.class_id) continue;
      const double ov = iou(det.box, gt.box);
      if (gt.difficult) {
        overlaps_difficult = overlaps_difficult || ov > threshold;
        continue;
      }
      if (taken[g]) continue;
      if (ov > best_iou) {
        best_iou = ov;
        best = g;
      }
    }
    if (best < gts.size()) {
      taken[best] = true;
      result.assignments.push_back({d, best, best_iou});
    } else if (overlaps_difficult) {
      result.ignored_detections.push_back(d);
    } else {
      result.unmatched_detections.push_back(d);
    }
  }
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (!taken[g] && !gts[g].difficult) result.unmatched_gts.push_back(g);
  }
  return result;
}

double average_precision(const PRCurve& curve, ApMode mode) {
  if (curve.n_gt == 0) fail(ErrorCategory::undefined_metric, "average precision undefined without positives");
  const auto& pts = curve.points;
  if (mode == ApMode::voc11) {
    double sum = 0.0;
    for (int k = 0; k <= 10; ++k) {
      const double t = k / 10.0;
      double best = 0.0;
      for (const auto& p : pts) {
        if (p.recall >= t) best = std::max(best, p.precision);
      }
      sum += best;
    }
    return sum / 11.0;
  }

  // Envelope from the right, then sum it at every point where recall grows.
  // Each such step is one true positive, i.e. a recall increment of 1/n_gt.
  std::vector<double> envelope(pts.size());
  double running = 0.0;
  for (std::size_t i = pts.size(); i-- > 0;) {
    running = std::max(running, pts[i].precision);
    envelope[i] = running;
  }
  double sum = 0.0;
  double previous_recall = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].recall > previous_recall) {
      sum += envelope[i];
      previous_recall = pts[i].recall;
    }
  }
  return sum / static_cast<double>(curve.n_gt);
}

namespace {

std::vector<GroundTruthObject> counted_objects(const ImageRecord& img, const EvalOptions& options) {
  std::vector<GroundTruthObject> objs = img.objects;
  if (!options.ignore_difficult) {
    for (auto& o : objs) o.difficult = false;
  }
  return objs;
}

void check_options(const EvalOptions& options) {
  if (!(options.iou_threshold > 0.0 && options.iou_threshold < 1.0)) {
    fail(ErrorCategory::validation, fmt::format("IoU threshold {} outside (0, 1)", options.iou_threshold));
  }
}

struct ScoredOutcome {
  double score;
  bool true_positive;
};

}  // namespace

std::map<int, PRCurve> class_pr_curves(const Dataset& dataset, const DetectionSet& dets,
                                       const EvalOptions& options) {
  check_options(options);
  std::map<int, std::vector<ScoredOutcome>> outcomes;
  std::map<int, std::size_t> positives;
  for (const auto& img : dataset.images()) {
    const auto objs = counted_objects(img, options);
    for (const auto& o : objs) {
      if (!o.difficult) ++positives[o.class_id];
    }
    const auto& image_dets = dets.for_image(img.image_id);
    const MatchResult m = greedy_match(objs, image_dets, options.iou_threshold, true);
    std::vector<char> state(image_dets.size(), 'F');
    for (const auto& a : m.assignments) state[a.detection] = 'T';
    for (std::size_t d : m.ignored_detections) state[d] = 'I';
    for (std::size_t d = 0; d < image_dets.size(); ++d) {
      if (state[d] == 'I') continue;
      outcomes[image_dets[d].class_id].push_back({image_dets[d].score, state[d] == 'T'});
    }
  }

  std::map<int, PRCurve> curves;
  for (const auto& [cls, n_gt] : positives) {
    PRCurve curve;
    curve.n_gt = n_gt;
    auto& list = outcomes[cls];
    // Stable: equal scores keep dataset order, then per-image detection order.
    std::stable_sort(list.begin(), list.end(),
                     [](const ScoredOutcome& a, const ScoredOutcome& b) { return a.score > b.score; });
    std::size_t tp = 0;
    std::size_t seen = 0;
    for (const auto& o : list) {
      ++seen;
      tp += o.true_positive ? 1 : 0;
      curve.points.push_back({static_cast<double>(tp) / static_cast<double>(n_gt),
                              static_cast<double>(tp) / static_cast<double>(seen)});
    }
    curves.emplace(cls, std::move(curve));
  }
  return curves;
}

double evaluate_map(const Dataset& dataset, const DetectionSet& dets, const EvalOptions& options,
                    std::map<int, double>* per_class_ap) {
  const auto curves = class_pr_curves(dataset, dets, options);
  if (curves.empty()) fail(ErrorCategory::undefined_metric, "dataset has no counted ground-truth objects");
  double sum = 0.0;
  for (const auto& [cls, curve] : curves) {
    const double ap = average_precision(curve, options.ap_mode);
    sum += ap;
    if (per_class_ap != nullptr) (*per_class_ap)[cls] = ap * 100.0;
  }
  return sum / static_cast<double>(curves.size()) * 100.0;
}

double evaluate_ap_loc(const Dataset& dataset, const DetectionSet& dets, const EvalOptions& options) {
  const Dataset fused = dataset.fused_single_class();
  DetectionSet fused_dets = dets;
  for (auto& [_, list] : fused_dets.by_image) {
    for (auto& d : list) d.class_id = 0;
  }
  return evaluate_map(fused, fused_dets, options);
}

double evaluate_csr(const Dataset& dataset, const DetectionSet& dets, const EvalOptions& options) {
  check_options(options);
  std::size_t correct = 0;
  std::size_t n_gt = 0;
  for (const auto& img : dataset.images()) {
    const auto objs = counted_objects(img, options);
    for (const auto& o : objs) n_gt += o.difficult ? 0 : 1;
    const auto& image_dets = dets.for_image(img.image_id);
    const MatchResult m = greedy_match(objs, image_dets, options.iou_threshold, false);
    for (const auto& a : m.assignments) {
      if (image_dets[a.detection].class_id == objs[a.ground_truth].class_id) ++correct;
    }
  }
  if (n_gt == 0) fail(ErrorCategory::undefined_metric, "CSR undefined without counted ground-truth objects");
  return static_cast<double>(correct) / static_cast<double>(n_gt) * 100.0;
}

MetricBundle evaluate_all(const Dataset& dataset, const DetectionSet& dets, const EvalOptions& options) {
  MetricBundle bundle;
  bundle.map = evaluate_map(dataset, dets, options, &bundle.per_class_ap);
  bundle.ap_loc = evaluate_ap_loc(dataset, dets, options);
  bundle.csr = evaluate_csr(dataset, dets, options);
  return bundle;
}

double relative_drop(double benign, double attacked) {
  if (!(benign > 0.0)) {
    fail(ErrorCategory::undefined_metric, fmt::format("relative drop undefined for benign value {}", benign));
  }
  return (benign - attacked) / benign * 100.0;
}

}  // namespace advbench
