// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <string>

#include <fmt/format.h>

#include "advbench/attack_core.hpp"
#include "advbench/bench_runner.hpp"
#include "advbench/det_metrics.hpp"
#include "advbench/error.hpp"
#include "advbench/mix_composer.hpp"
#include "advbench/pixel_metrics.hpp"
#include "advbench/random.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace advbench;

namespace {

// Returns an empty string on success, otherwise the first failure found.
using Check = std::function<std::string()>;

struct Criterion {
  int id;
  std::string name;
  double time_limit_s;  // 0 means unbounded
  Check check;
};

bool report(const Criterion& c) {
  const auto start = std::chrono::steady_clock::now();
  std::string failure;
  try {
    failure = c.check();
  } catch (const std::exception& e) {
    failure = fmt::format("unexpected exception: {}", e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (failure.empty() && c.time_limit_s > 0 && secs >= c.time_limit_s) {
    failure = fmt::format("took {:.2f} s, limit {:.0f} s", secs, c.time_limit_s);
  }
  std::printf("%s [%d] %s (%.2f s)%s\n", failure.empty() ? "PASS" : "FAIL", c.id, c.name.c_str(), secs,
              failure.empty() ? "" : (": " + failure).c_str());
  std::fflush(stdout);
  return failure.empty();
}

std::string metric_oracle() {
  Rng rng(20240501);
  oracle::InstanceLimits limits;
  limits.max_images = 5;
  limits.max_classes = 3;
  limits.max_dets = 10;
  for (int i = 0; i < 200; ++i) {
    const auto inst = oracle::random_instance(rng, limits);
    const auto want = oracle::brute_force_metrics(inst, {1, 2}, true);
    const auto got = evaluate_all(oracle::to_dataset(inst), oracle::to_detections(inst));
    if (!want.map || !want.ap_loc || !want.csr) return fmt::format("instance {}: oracle left a metric undefined", i);
    if (got.map != *want.map || got.ap_loc != *want.ap_loc || got.csr != *want.csr) {
      return fmt::format("instance {}: got ({}, {}, {}), brute force ({}, {}, {})", i, got.map, got.ap_loc, got.csr,
                         *want.map, *want.ap_loc, *want.csr);
    }
  }
  return {};
}

std::string drop_arithmetic() {
  const double a = relative_drop(75.8, 6.6);
  const double b = relative_drop(79.3, 3.4);
  if (std::abs(a - 91.29) > 0.05) return fmt::format("relative_drop(75.8, 6.6) = {}", a);
  if (std::abs(b - 95.71) > 0.05) return fmt::format("relative_drop(79.3, 3.4) = {}", b);
  return {};
}

std::string ap_hand_case() {
  ImageRecord img;
  img.image_id = "a";
  img.width = img.height = 100;
  img.objects = {{BoundingBox::from_corners(0, 0, 10, 10), 0, false}, {BoundingBox::from_corners(50, 50, 60, 60), 0, false}};
  const Dataset ds({"object"}, {img});
  DetectionSet dets;
  dets.by_image["a"] = {{BoundingBox::from_corners(0, 0, 10, 10), 0, 0.9},
                        {BoundingBox::from_corners(80, 80, 90, 90), 0, 0.8},
                        {BoundingBox::from_corners(50, 50, 60, 60), 0, 0.7}};
  const double ap = evaluate_map(ds, dets) / 100.0;
  // 0.8333 is 5/6 printed to four places; compare against the exact value.
  if (std::abs(ap - 5.0 / 6.0) > 1e-6) return fmt::format("AP = {}", ap);
  return {};
}

std::string perceptual_closed_forms() {
  Rng rng(7);
  const ImageBuffer img = fixtures::random_image(rng, 32, 32);
  const auto same = lp_norms(img, img);
  if (ssim(img, img) != 1.0) return fmt::format("SSIM(x, x) = {}", ssim(img, img));
  if (same.l0 != 0 || same.l1 != 0 || same.l2 != 0 || same.linf != 0) return "L_p(x, x) not all zero";
  if (!(std::isinf(psnr(img, img)) && psnr(img, img) > 0)) return fmt::format("PSNR(x, x) = {}", psnr(img, img));

  const double extreme = psnr(ImageBuffer(16, 16, 0), ImageBuffer(16, 16, 255));
  if (std::abs(extreme) > 1e-9) return fmt::format("PSNR(0, 255) = {}", extreme);

  const double s = ssim(ImageBuffer(32, 32, 100), ImageBuffer(32, 32, 150));
  if (std::abs(s - 0.92309) > 1e-4) return fmt::format("SSIM(100, 150) = {}", s);

  ImageBuffer base(24, 24);
  for (auto& v : base.pixels) v = static_cast<std::uint8_t>(rng.below(246));
  ImageBuffer shifted = base;
  for (auto& v : shifted.pixels) v = static_cast<std::uint8_t>(v + 10);
  const auto n = lp_norms(base, shifted);
  const double want_l2 = std::sqrt(100.0 * static_cast<double>(base.value_count()));
  if (n.linf != 10.0) return fmt::format("L_inf of +10 shift = {}", n.linf);
  if (n.l2 != want_l2) return fmt::format("L2 of +10 shift = {}, expected {}", n.l2, want_l2);
  return {};
}

std::string ssim_oracle() {
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    const ImageBuffer a = fixtures::random_image(rng, 32, 32);
    const ImageBuffer b = i % 2 ? fixtures::perturb(rng, a, 1 + static_cast<int>(rng.below(60)))
                                : fixtures::random_image(rng, 32, 32);
    const double got = ssim(a, b);
    const double want = oracle::naive_ssim(a, b);
    if (std::abs(got - want) > 1e-8) return fmt::format("pair {}: {} vs oracle {}", i, got, want);
  }
  return {};
}

std::string gradient_check() {
  Rng rng(13);
  double worst = 0.0;
  for (int m = 0; m < 20; ++m) {
    const auto model = ToyDetectorModel::random(6, 6, 2, 3, rng.next());
    const auto truth = TargetAssignment::random(2, 3, rng.next());
    const auto x = oracle::quantized_input(rng, model.input_size());
    Objective untargeted;
    Objective targeted;
    targeted.kind = ObjectiveKind::targeted;
    targeted.target = TargetAssignment::random(2, 3, rng.next());
    for (const Objective* o : {&untargeted, &targeted}) {
      worst = std::max(worst, oracle::max_gradient_relative_error(model, x, truth, *o, 1e-5));
    }
  }
  if (!(worst < 1e-4)) return fmt::format("max relative error {:.3e}", worst);
  return {};
}

std::string pgd_invariants() {
  Rng rng(17);
  for (int i = 0; i < 50; ++i) {
    const auto model = ToyDetectorModel::random(8, 8, 2, 3, rng.next());
    const auto truth = TargetAssignment::random(2, 3, rng.next());
    const auto clean_img = fixtures::random_image(rng, 8, 8);
    const auto x = to_normalized(clean_img);
    for (std::size_t k = 0; k < x.size(); ++k) {
      if (x[k] != static_cast<double>(clean_img.pixels[k]) / 255.0 || std::round(x[k] * 255.0) != x[k] * 255.0) {
        return fmt::format("attack {}: clean value {} is not k/255", i, x[k]);
      }
    }
    AttackConfig cfg;
    cfg.epsilon = static_cast<double>(1 + rng.below(16)) / 255.0;
    cfg.steps = 10;
    cfg.step_size = cfg.epsilon / 4.0;
    if (i % 2) {
      cfg.objective.kind = ObjectiveKind::targeted;
      cfg.objective.target = TargetAssignment::random(2, 3, rng.next());
    }

    // Same objective as pgd_attack, observed at every iterate.
    std::string bad;
    const ObjectiveFn observed = [&](std::span<const double> xt) {
      for (std::size_t k = 0; k < xt.size() && bad.empty(); ++k) {
        if (std::abs(xt[k] - x[k]) > cfg.epsilon + 1e-9 || xt[k] < 0.0 || xt[k] > 1.0) {
          bad = fmt::format("iterate leaves the feasible set at coordinate {} ({} vs {})", k, xt[k], x[k]);
        }
      }
      ObjectiveSample s;
      s.value = objective_value(model, xt, truth, cfg.objective);
      s.gradient = grad_input(model, xt, truth, cfg.objective);
      return s;
    };
    const auto traced = sign_gradient_ascent(observed, x, cfg.epsilon, cfg.steps, cfg.step_size);
    if (!bad.empty()) return fmt::format("attack {}: {}", i, bad);
    const auto result = pgd_attack(model, x, truth, cfg);
    if (result.x_star != traced.x_star) return fmt::format("attack {}: traced run differs from pgd_attack", i);

    const double achieved = objective_value(model, result.x_star, truth, cfg.objective);
    const double baseline = oracle::best_random_objective(model, x, truth, cfg.objective, cfg.epsilon, 1000, rng);
    if (!(achieved > baseline)) return fmt::format("attack {}: J = {} not above random best {}", i, achieved, baseline);

    const auto exported = to_image(result.x_star, 8, 8);
    const double budget = std::round(255.0 * cfg.epsilon);
    const double linf = lp_norms(clean_img, exported).linf;
    if (linf > budget) return fmt::format("attack {}: 8-bit L_inf {} exceeds {}", i, linf, budget);
  }
  return {};
}

std::string composer() {
  fixtures::TempDir dir;
  const std::vector<std::vector<std::pair<std::string, double>>> splits{
      {{"benign", 0.75}, {"pgd", 0.25}},
      {{"benign", 0.5}, {"fgsm", 0.5}},
      {{"benign", 0.33}, {"fgsm", 0.33}, {"pgd", 0.34}},
  };
  for (const char* tag : {"benign", "fgsm", "pgd"}) {
    for (int i = 0; i < 100; ++i) fixtures::write_file(dir / fmt::format("{}/s{:03}.png", tag, i), tag);
  }
  for (const auto& split : splits) {
    MixtureSpec spec;
    spec.base_dir = dir.path();
    for (int i = 0; i < 100; ++i) spec.source_ids.push_back(fmt::format("s{:03}", i));
    for (const auto& [tag, p] : split) spec.components.push_back({tag, tag, p});
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const auto a = compose(spec, seed);
      const auto b = compose(spec, seed);
      std::set<std::string> seen;
      for (const auto& e : a.assignment) {
        if (!seen.insert(e.image_id).second) return fmt::format("'{}' assigned twice", e.image_id);
      }
      if (seen.size() != spec.source_ids.size()) return "assignment does not cover every image";
      for (const auto& [tag, p] : split) {
        const double count = static_cast<double>(a.counts.at(tag));
        if (!(std::abs(count - 100.0 * p) <= 1.0)) return fmt::format("{}: count {} vs target {}", tag, count, 100.0 * p);
      }
      if (!verify(a, spec).ok()) return "verification reported violations";
      if (mixture_csv(a) != mixture_csv(b) || mixture_header_json(a, spec) != mixture_header_json(b, spec)) {
        return fmt::format("seed {} produced different manifests", seed);
      }
    }
  }
  return {};
}

std::string runner_determinism() {
  fixtures::TempDir dir;
  const auto manifest = load_manifest(fixtures::write_bench_fixture(dir.path()));
  const auto one = run_benchmark(manifest, 1);
  const auto eight = run_benchmark(manifest, 8);
  if (!one.errors.empty() || !eight.errors.empty()) return "fixture conditions failed";
  write_report_files(one.report, dir / "w1");
  write_report_files(eight.report, dir / "w8");
  for (const char* f : {"report.csv", "report.md", "report.json", "plotdata.csv"}) {
    if (fixtures::read_file(dir / "w1" / f) != fixtures::read_file(dir / "w8" / f)) return fmt::format("{} differs", f);
  }
  return {};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "metric oracle: mAP, AP_loc, CSR equal brute force on 200 random instances", 10, metric_oracle},
      {2, "relative drop arithmetic on reference rows", 0, drop_arithmetic},
      {3, "AP hand case (TP, FP, TP over 2 ground truths) = 0.8333", 0, ap_hand_case},
      {4, "perceptual closed forms (identity, PSNR extremes, constant SSIM, uniform shift)", 0,
       perceptual_closed_forms},
      {5, "SSIM matches naive oracle on 100 random 32x32 pairs", 30, ssim_oracle},
      {6, "analytic gradients match central differences on 20 models, both objectives", 10, gradient_check},
      {7, "PGD invariants over 50 random attacks", 0, pgd_invariants},
      {8, "composer counts, partition and seed determinism", 0, composer},
      {9, "runner reports byte-identical at 1 and 8 workers", 0, runner_determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) failures += report(c) ? 0 : 1;
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
