#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "advbench/attack_core.hpp"
#include "advbench/error.hpp"
#include "advbench/pixel_metrics.hpp"
#include "advbench/random.hpp"
#include "advbench/simd/kernels.hpp"
#include "oracles.hpp"

using namespace advbench;

namespace {

ErrorCategory category_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.category();
  }
  ADD_FAILURE() << "no advbench::Error thrown";
  return ErrorCategory::io;
}

// Direct loop over the loss definitions, independent of loss_components.
LossComponents naive_losses(const Predictions& p, const TargetAssignment& t) {
  LossComponents l;
  for (int a = 0; a < p.anchors; ++a) {
    const auto& at = t.anchors[static_cast<std::size_t>(a)];
    if (at.matched) {
      for (int c = 0; c < p.classes; ++c) {
        const double y = c == at.class_id ? 1.0 : 0.0;
        l.cls += -y * std::log(std::max(p.probabilities[static_cast<std::size_t>(a * p.classes + c)], 1e-12));
      }
      for (int j = 0; j < 4; ++j) {
        const double z = at.box[static_cast<std::size_t>(j)] - p.boxes[static_cast<std::size_t>(a * 4 + j)];
        l.loc += std::abs(z) < 1 ? 0.5 * z * z : std::abs(z) - 0.5;
      }
    }
    const double o = p.objectness[static_cast<std::size_t>(a)];
    l.obj += at.objectness ? -std::log(std::max(o, 1e-12)) : -std::log(std::max(1 - o, 1e-12));
  }
  return l;
}

}  // namespace

TEST(Forward, ZeroModelIsUniform) {
  const auto m = ToyDetectorModel::zeros(4, 3, 2, 5);
  const std::vector<double> x(m.input_size(), 0.7);
  const auto p = forward(m, x);
  for (double v : p.probabilities) EXPECT_DOUBLE_EQ(v, 0.2);
  for (double v : p.objectness) EXPECT_EQ(v, 0.5);
  for (double v : p.boxes) EXPECT_EQ(v, 0.0);
}

TEST(Forward, ProbabilitiesNormalized) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = ToyDetectorModel::random(5, 4, 3, 4, rng.next(), 2.0, 3.0);
    const auto x = oracle::quantized_input(rng, m.input_size());
    const auto p = forward(m, x);
    for (int a = 0; a < 3; ++a) {
      double sum = 0.0;
      for (int c = 0; c < 4; ++c) sum += p.probabilities[static_cast<std::size_t>(a * 4 + c)];
      EXPECT_NEAR(sum, 1.0, 1e-9);
      EXPECT_GT(p.objectness[static_cast<std::size_t>(a)], 0.0);
      EXPECT_LT(p.objectness[static_cast<std::size_t>(a)], 1.0);
    }
  }
}

TEST(Forward, HandSizedModel) {
  // 1x1 image (3 inputs), 2 anchors, 2 classes: 14 outputs.
  auto m = ToyDetectorModel::zeros(1, 1, 2, 2);
  const std::vector<double> x{0.5, 1.0, 0.0};
  // Anchor 0: logits (1, 0), box (0.5, -1, 2, 0), objectness logit 0.
  m.weights[0 * 3 + 0] = 2.0;            // logit0 = 2 * 0.5
  m.bias[2] = 0.5;                       // box x
  m.weights[3 * 3 + 1] = -1.0;           // box y = -1 * 1.0
  m.bias[4] = 2.0;                       // box w
  // Anchor 1: logits (0, ln 3), objectness logit ln 4.
  m.bias[7 + 1] = std::log(3.0);
  m.weights[(7 + 6) * 3 + 1] = std::log(4.0);
  const auto p = forward(m, x);
  const double e = std::exp(1.0);
  EXPECT_NEAR(p.probabilities[0], e / (e + 1.0), 1e-15);
  EXPECT_NEAR(p.probabilities[1], 1.0 / (e + 1.0), 1e-15);
  EXPECT_NEAR(p.probabilities[2], 0.25, 1e-15);
  EXPECT_NEAR(p.probabilities[3], 0.75, 1e-15);
  EXPECT_EQ(p.boxes[0], 0.5);
  EXPECT_EQ(p.boxes[1], -1.0);
  EXPECT_EQ(p.boxes[2], 2.0);
  EXPECT_EQ(p.boxes[3], 0.0);
  EXPECT_EQ(p.objectness[0], 0.5);
  EXPECT_NEAR(p.objectness[1], 0.8, 1e-15);
}

TEST(Forward, ShapeAndDimensionErrors) {
  const auto m = ToyDetectorModel::zeros(2, 2, 1, 2);
  EXPECT_EQ(category_of([&] { forward(m, std::vector<double>(11)); }), ErrorCategory::shape);
  EXPECT_EQ(category_of([] { ToyDetectorModel::zeros(0, 2, 1, 2); }), ErrorCategory::argument);
  auto broken = m;
  broken.weights.pop_back();
  EXPECT_EQ(category_of([&] { broken.validate(); }), ErrorCategory::shape);
  broken = m;
  broken.bias[0] = NAN;
  EXPECT_EQ(category_of([&] { broken.validate(); }), ErrorCategory::numeric);
}

TEST(Losses, SmoothL1Branches) {
  EXPECT_EQ(smooth_l1(0.5), 0.125);
  EXPECT_EQ(smooth_l1(-2.0), 1.5);
  EXPECT_EQ(smooth_l1(1.0), 0.5);
  EXPECT_EQ(smooth_l1(0.0), 0.0);
}

TEST(Losses, LocalizationHandCase) {
  Predictions p;
  p.anchors = 1;
  p.classes = 2;
  p.probabilities = {0.5, 0.5};
  p.boxes = {0.0, 0.0, 0.0, 0.0};
  p.objectness = {0.5};
  TargetAssignment t;
  t.anchors = {AnchorTarget{true, 0, {0.5, 2.0, 0.0, 0.0}, 1}};
  EXPECT_DOUBLE_EQ(loss_components(p, t).loc, 1.625);
}

TEST(Losses, PerfectPredictionsAreNearZero) {
  Predictions p;
  p.anchors = 2;
  p.classes = 3;
  p.probabilities = {1.0, 0.0, 0.0, 0.0, 0.0, 1.0};
  p.boxes = {1, 2, 3, 4, -1, -2, -3, -4};
  p.objectness = {1.0, 0.0};
  TargetAssignment t;
  t.anchors = {AnchorTarget{true, 0, {1, 2, 3, 4}, 1}, AnchorTarget{false, 2, {-1, -2, -3, -4}, 0}};
  const auto l = loss_components(p, t);
  EXPECT_LE(l.cls, 1e-9 * 2);
  EXPECT_LE(l.loc, 1e-9 * 2);
  EXPECT_LE(l.obj, 1e-9 * 2);
}

TEST(Losses, SaturationIsClamped) {
  Predictions p;
  p.anchors = 1;
  p.classes = 2;
  p.probabilities = {0.0, 1.0};
  p.boxes = {0, 0, 0, 0};
  p.objectness = {0.0};
  TargetAssignment t;
  t.anchors = {AnchorTarget{true, 0, {0, 0, 0, 0}, 1}};
  const auto l = loss_components(p, t);
  EXPECT_NEAR(l.cls, -std::log(1e-12), 1e-9);
  EXPECT_NEAR(l.obj, -std::log(1e-12), 1e-9);
}

TEST(Losses, MatchNaiveLoopAndDecompose) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = ToyDetectorModel::random(4, 4, 3, 3, rng.next());
    const auto t = TargetAssignment::random(3, 3, rng.next());
    const auto x = oracle::quantized_input(rng, m.input_size());
    const auto p = forward(m, x);
    const auto got = loss_components(p, t);
    const auto want = naive_losses(p, t);
    EXPECT_NEAR(got.cls, want.cls, 1e-10);
    EXPECT_NEAR(got.loc, want.loc, 1e-10);
    EXPECT_NEAR(got.obj, want.obj, 1e-10);
    Objective o;
    o.lambda_loc = rng.uniform(0.1, 2.0);
    o.lambda_obj = rng.uniform(0.1, 2.0);
    EXPECT_NEAR(objective_value(m, x, t, o), want.cls + o.lambda_loc * want.loc + o.lambda_obj * want.obj, 1e-12);
  }
}

TEST(Targets, Validation) {
  TargetAssignment t;
  t.anchors = {AnchorTarget{true, 5, {0, 0, 0, 0}, 1}};
  EXPECT_EQ(category_of([&] { t.validate(3); }), ErrorCategory::validation);
  t.anchors = {AnchorTarget{true, 0, {0, NAN, 0, 0}, 1}};
  EXPECT_EQ(category_of([&] { t.validate(3); }), ErrorCategory::validation);
  t.anchors = {AnchorTarget{false, 0, {0, 0, 0, 0}, 2}};
  EXPECT_EQ(category_of([&] { t.validate(3); }), ErrorCategory::validation);
  const auto m = ToyDetectorModel::zeros(1, 1, 2, 2);
  EXPECT_EQ(category_of([&] { objective_value(m, std::vector<double>(3), t, {}); }), ErrorCategory::shape);
}

TEST(Gradient, ZeroWeightsGiveZeroGradient) {
  auto m = ToyDetectorModel::zeros(3, 3, 2, 3);
  for (auto& b : m.bias) b = 0.3;
  const auto t = TargetAssignment::random(2, 3, 4);
  const auto g = grad_input(m, std::vector<double>(m.input_size(), 0.5), t, {});
  for (double v : g) EXPECT_EQ(v, 0.0);
}

TEST(Gradient, TargetEqualToTruthIsZero) {
  Rng rng(3);
  const auto m = ToyDetectorModel::random(4, 4, 2, 3, 9);
  const auto t = TargetAssignment::random(2, 3, 10);
  Objective o;
  o.kind = ObjectiveKind::targeted;
  o.target = t;
  const auto x = oracle::quantized_input(rng, m.input_size());
  for (double v : grad_input(m, x, t, o)) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(objective_value(m, x, t, o), 0.0);
  AttackConfig cfg;
  cfg.objective = o;
  const auto r = pgd_attack(m, x, t, cfg);
  EXPECT_EQ(r.x_star, x);
}

TEST(Gradient, MatchesFiniteDifferences) {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const auto m = ToyDetectorModel::random(4, 4, 2, 3, rng.next());
    const auto t = TargetAssignment::random(2, 3, rng.next());
    const auto x = oracle::quantized_input(rng, m.input_size());
    Objective untargeted;
    EXPECT_LT(oracle::max_gradient_relative_error(m, x, t, untargeted), 1e-4);
    Objective targeted;
    targeted.kind = ObjectiveKind::targeted;
    targeted.target = TargetAssignment::random(2, 3, rng.next());
    targeted.lambda_loc = 0.5;
    EXPECT_LT(oracle::max_gradient_relative_error(m, x, t, targeted), 1e-4);
  }
}

TEST(Gradient, IsasAgree) {
  if (!simd::avx2_kernels()) GTEST_SKIP() << "no AVX2 on this machine";
  Rng rng(5);
  const auto m = ToyDetectorModel::random(8, 8, 2, 3, 1);
  const auto t = TargetAssignment::random(2, 3, 2);
  const auto x = oracle::quantized_input(rng, m.input_size());
  simd::select(simd::Isa::scalar);
  const auto g_scalar = grad_input(m, x, t, {});
  simd::select(simd::Isa::avx2);
  const auto g_wide = grad_input(m, x, t, {});
  for (std::size_t i = 0; i < g_scalar.size(); ++i) EXPECT_NEAR(g_scalar[i], g_wide[i], 1e-12);
}

TEST(Projection, Examples) {
  const std::vector<double> clean(4, 0.5);
  EXPECT_EQ(project_linf(std::vector<double>{0.45, 0.5, 0.55, 0.6}, clean, 0.1),
            (std::vector<double>{0.45, 0.5, 0.55, 0.6}));
  for (double v : project_linf(std::vector<double>(4, 1.0), clean, 0.1)) EXPECT_EQ(v, 0.6);
  EXPECT_EQ(project_linf(std::vector<double>{-0.3}, std::vector<double>{0.0}, 0.1), (std::vector<double>{0.0}));
  EXPECT_EQ(category_of([] { project_linf(std::vector<double>(2), std::vector<double>(3), 0.1); }),
            ErrorCategory::shape);
}

TEST(Projection, Idempotent) {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> clean(20), adv(20);
    for (auto& v : clean) v = rng.uniform01();
    for (auto& v : adv) v = rng.uniform(-0.5, 1.5);
    const auto once = project_linf(adv, clean, 0.05);
    EXPECT_EQ(project_linf(once, clean, 0.05), once);
  }
}

TEST(Pgd, ConfigValidation) {
  for (auto mutate : std::vector<std::function<void(AttackConfig&)>>{
           [](AttackConfig& c) { c.epsilon = 0; }, [](AttackConfig& c) { c.steps = 0; },
           [](AttackConfig& c) { c.step_size = -1; }, [](AttackConfig& c) { c.epsilon = NAN; }}) {
    AttackConfig c;
    mutate(c);
    EXPECT_EQ(category_of([&] { c.validate(); }), ErrorCategory::validation);
  }
}

TEST(Pgd, TraceAndBudget) {
  Rng rng(7);
  const auto m = ToyDetectorModel::random(8, 8, 2, 3, 3);
  const auto t = TargetAssignment::random(2, 3, 4);
  const auto x = oracle::quantized_input(rng, m.input_size());
  AttackConfig cfg;
  const auto r = pgd_attack(m, x, t, cfg);
  ASSERT_EQ(r.loss_trace.size(), 11u);
  for (int i = 0; i <= 10; ++i) EXPECT_EQ(r.loss_trace[static_cast<std::size_t>(i)].iteration, i);
  EXPECT_EQ(r.loss_trace.front().objective, objective_value(m, x, t, {}));
  EXPECT_LE(r.achieved_linf, cfg.epsilon + 1e-9);
  for (double v : r.x_star) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_GT(objective_value(m, r.x_star, t, {}), r.loss_trace.front().objective);
  const std::string csv = loss_trace_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "iteration,J,L_cls,L_loc,L_obj");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 12);
}

TEST(Pgd, Deterministic) {
  Rng rng(8);
  const auto m = ToyDetectorModel::random(6, 6, 2, 3, 5);
  const auto t = TargetAssignment::random(2, 3, 6);
  const auto x = oracle::quantized_input(rng, m.input_size());
  EXPECT_EQ(pgd_attack(m, x, t, {}).x_star, pgd_attack(m, x, t, {}).x_star);
}

TEST(Pgd, VanishingBudgetLeavesImageUnchanged) {
  Rng rng(9);
  const auto m = ToyDetectorModel::random(8, 8, 2, 3, 7);
  const auto t = TargetAssignment::random(2, 3, 8);
  const auto x = oracle::quantized_input(rng, m.input_size());
  AttackConfig cfg;
  cfg.epsilon = 1e-12;
  cfg.step_size = 1e-12;
  const auto r = pgd_attack(m, x, t, cfg);
  // x + eps is rounded to the nearest double, so the distance can exceed eps by an ulp of x.
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_LE(std::abs(r.x_star[i] - x[i]), 1e-12 + 1e-15);
  EXPECT_EQ(to_image(r.x_star, 8, 8), to_image(x, 8, 8));
}

TEST(Pgd, FgsmIsOptimalForLinearObjectives) {
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> g(50), x(50);
    for (auto& v : g) v = rng.uniform(-1.0, 1.0);
    for (auto& v : x) v = rng.uniform(0.2, 0.8);  // interior: the pixel clamp never binds
    const double eps = 0.05;
    const ObjectiveFn linear = [&](std::span<const double> xt) {
      ObjectiveSample s;
      for (std::size_t i = 0; i < xt.size(); ++i) s.value += g[i] * (xt[i] - x[i]);
      s.gradient = g;
      return s;
    };
    const auto r = sign_gradient_ascent(linear, x, eps, 1, eps);
    const double l1 = std::accumulate(g.begin(), g.end(), 0.0, [](double a, double v) { return a + std::abs(v); });
    EXPECT_NEAR(r.loss_trace.back().objective, eps * l1, 1e-12);
  }
}

TEST(Pgd, NonFiniteObjectiveReportsIteration) {
  const std::vector<double> x(4, 0.5);
  int calls = 0;
  const ObjectiveFn bad = [&](std::span<const double>) {
    ObjectiveSample s;
    s.value = ++calls == 3 ? NAN : 1.0;
    s.gradient.assign(4, 1.0);
    return s;
  };
  try {
    sign_gradient_ascent(bad, x, 0.1, 5, 0.01);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::numeric);
    EXPECT_NE(std::string(e.what()).find("iteration 2"), std::string::npos) << e.what();
  }
}

TEST(Pgd, BeatsRandomSearch) {
  Rng rng(11);
  const auto m = ToyDetectorModel::random(8, 8, 2, 3, 12);
  const auto t = TargetAssignment::random(2, 3, 13);
  const auto x = oracle::quantized_input(rng, m.input_size());
  const AttackConfig cfg;
  const auto r = pgd_attack(m, x, t, cfg);
  EXPECT_GT(r.loss_trace.back().objective, oracle::best_random_objective(m, x, t, {}, cfg.epsilon, 1000, rng));
}

TEST(Pgd, ExportedImageRespectsIntegerBudget) {
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const auto m = ToyDetectorModel::random(8, 8, 2, 3, rng.next());
    const auto t = TargetAssignment::random(2, 3, rng.next());
    const auto x = oracle::quantized_input(rng, m.input_size());
    AttackConfig cfg;
    cfg.epsilon = 10.0 / 255.0;
    const auto r = pgd_attack(m, x, t, cfg);
    // Ten steps of 2/255 saturate the budget: the exported L_inf is exactly 10 levels.
    EXPECT_EQ(lp_norms(to_image(x, 8, 8), to_image(r.x_star, 8, 8)).linf, 10.0);
  }
}
