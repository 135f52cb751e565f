#include "advbench/attack_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "advbench/error.hpp"
#include "advbench/random.hpp"
#include "advbench/simd/kernels.hpp"

namespace advbench {

namespace {

void check_dims(int width, int height, int anchors, int classes) {
  if (width <= 0 || height <= 0 || anchors <= 0 || classes <= 1) {
    fail(ErrorCategory::argument,
         fmt::format("toy detector needs positive dims and at least 2 classes (got {}x{}, A={}, C={})", width,
                     height, anchors, classes));
  }
}

void check_input(const ToyDetectorModel& model, std::span<const double> x) {
  if (x.size() != model.input_size()) {
    fail(ErrorCategory::shape, fmt::format("input has {} values, model expects {}", x.size(), model.input_size()));
  }
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::vector<double> affine(const ToyDetectorModel& model, std::span<const double> x) {
  const simd::Kernels& k = simd::active();
  const std::size_t in = model.input_size();
  std::vector<double> z(model.output_size());
  for (std::size_t r = 0; r < z.size(); ++r) {
    z[r] = k.dot(std::span(model.weights).subspan(r * in, in), x) + model.bias[r];
  }
  return z;
}

Predictions from_outputs(const ToyDetectorModel& model, const std::vector<double>& z) {
  Predictions p;
  p.anchors = model.anchors;
  p.classes = model.classes;
  const std::size_t C = static_cast<std::size_t>(model.classes);
  const std::size_t stride = model.outputs_per_anchor();
  p.probabilities.resize(static_cast<std::size_t>(model.anchors) * C);
  p.boxes.resize(static_cast<std::size_t>(model.anchors) * 4);
  p.objectness.resize(static_cast<std::size_t>(model.anchors));
  for (std::size_t a = 0; a < static_cast<std::size_t>(model.anchors); ++a) {
    const double* row = z.data() + a * stride;
    const double peak = *std::max_element(row, row + C);
    double denom = 0.0;
    for (std::size_t c = 0; c < C; ++c) denom += std::exp(row[c] - peak);
    for (std::size_t c = 0; c < C; ++c) p.probabilities[a * C + c] = std::exp(row[c] - peak) / denom;
    for (std::size_t j = 0; j < 4; ++j) p.boxes[a * 4 + j] = row[C + j];
    p.objectness[a] = sigmoid(row[C + 4]);
  }
  return p;
}

double smooth_l1_slope(double z) {
  if (std::abs(z) < 1.0) return z;
  return z > 0.0 ? 1.0 : -1.0;
}

// dL_total/dz for the raw outputs z of the affine map.
void add_output_gradient(const Predictions& p, const TargetAssignment& t, double lambda_loc, double lambda_obj,
                         double sign, std::vector<double>& g) {
  const std::size_t C = static_cast<std::size_t>(p.classes);
  const std::size_t stride = C + 5;
  for (std::size_t a = 0; a < t.anchors.size(); ++a) {
    const AnchorTarget& at = t.anchors[a];
    double* ga = g.data() + a * stride;
    if (at.matched) {
      const double py = p.probabilities[a * C + static_cast<std::size_t>(at.class_id)];
      if (py >= kLogClamp) {
        for (std::size_t c = 0; c < C; ++c) {
          const double y = c == static_cast<std::size_t>(at.class_id) ? 1.0 : 0.0;
          ga[c] += sign * (p.probabilities[a * C + c] - y);
        }
      }
      for (std::size_t j = 0; j < 4; ++j) {
        const double z = at.box[j] - p.boxes[a * 4 + j];
        ga[C + j] += sign * lambda_loc * -smooth_l1_slope(z);
      }
    }
    const double o = p.objectness[a];
    double d = 0.0;
    if (at.objectness == 1) {
      if (o >= kLogClamp) d = o - 1.0;
    } else {
      if (1.0 - o >= kLogClamp) d = o;
    }
    ga[C + 4] += sign * lambda_obj * d;
  }
}

void check_targets(const ToyDetectorModel& model, const TargetAssignment& t) {
  if (t.anchors.size() != static_cast<std::size_t>(model.anchors)) {
    fail(ErrorCategory::shape,
         fmt::format("target assignment has {} anchors, model has {}", t.anchors.size(), model.anchors));
  }
  t.validate(model.classes);
}

}  // namespace

ToyDetectorModel ToyDetectorModel::zeros(int width, int height, int anchors, int classes) {
  check_dims(width, height, anchors, classes);
  ToyDetectorModel m;
  m.width = width;
  m.height = height;
  m.anchors = anchors;
  m.classes = classes;
  m.weights.assign(m.output_size() * m.input_size(), 0.0);
  m.bias.assign(m.output_size(), 0.0);
  return m;
}

ToyDetectorModel ToyDetectorModel::random(int width, int height, int anchors, int classes, std::uint64_t seed,
                                          double weight_scale, double bias_scale) {
  ToyDetectorModel m = zeros(width, height, anchors, classes);
  m.seed = seed;
  Rng rng(seed);
  for (auto& w : m.weights) w = rng.uniform(-weight_scale, weight_scale);
  for (auto& b : m.bias) b = rng.uniform(-bias_scale, bias_scale);
  return m;
}

void ToyDetectorModel::validate() const {
  check_dims(width, height, anchors, classes);
  if (weights.size() != output_size() * input_size() || bias.size() != output_size()) {
    fail(ErrorCategory::shape, "toy detector parameter sizes inconsistent with its dimensions");
  }
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(weights.begin(), weights.end(), finite) || !std::all_of(bias.begin(), bias.end(), finite)) {
    fail(ErrorCategory::numeric, "toy detector has non-finite parameters");
  }
}

Predictions forward(const ToyDetectorModel& model, std::span<const double> x) {
  check_input(model, x);
  return from_outputs(model, affine(model, x));
}

TargetAssignment TargetAssignment::random(int anchors, int classes, std::uint64_t seed) {
  Rng rng(seed);
  TargetAssignment t;
  t.anchors.resize(static_cast<std::size_t>(anchors));
  for (auto& a : t.anchors) {
    a.matched = rng.uniform01() < 0.5;
    a.class_id = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
    for (auto& b : a.box) b = rng.uniform(-2.0, 2.0);
    a.objectness = a.matched ? 1 : 0;
  }
  if (!t.anchors.empty() && std::none_of(t.anchors.begin(), t.anchors.end(),
                                         [](const AnchorTarget& a) { return a.matched; })) {
    t.anchors.front().matched = true;
    t.anchors.front().objectness = 1;
  }
  return t;
}

void TargetAssignment::validate(int classes) const {
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const auto& a = anchors[i];
    if (a.matched && (a.class_id < 0 || a.class_id >= classes)) {
      fail(ErrorCategory::validation, fmt::format("anchor {}: class {} outside [0, {})", i, a.class_id, classes));
    }
    if (a.objectness != 0 && a.objectness != 1) {
      fail(ErrorCategory::validation, fmt::format("anchor {}: objectness target must be 0 or 1", i));
    }
    for (double b : a.box) {
      if (!std::isfinite(b)) fail(ErrorCategory::validation, fmt::format("anchor {}: non-finite box target", i));
    }
  }
}

double smooth_l1(double z) {
  const double az = std::abs(z);
  return az < 1.0 ? 0.5 * z * z : az - 0.5;
}

LossComponents loss_components(const Predictions& p, const TargetAssignment& t) {
  if (t.anchors.size() != static_cast<std::size_t>(p.anchors)) {
    fail(ErrorCategory::shape, "target assignment and predictions disagree on anchor count");
  }
  const std::size_t C = static_cast<std::size_t>(p.classes);
  LossComponents l;
  for (std::size_t a = 0; a < t.anchors.size(); ++a) {
    const AnchorTarget& at = t.anchors[a];
    if (at.matched) {
      // One-hot targets reduce the inner class sum to the labelled class.
      const double py = p.probabilities[a * C + static_cast<std::size_t>(at.class_id)];
      l.cls -= std::log(std::max(py, kLogClamp));
      for (std::size_t j = 0; j < 4; ++j) l.loc += smooth_l1(at.box[j] - p.boxes[a * 4 + j]);
    }
    const double o = p.objectness[a];
    const double y = at.objectness;
    l.obj -= y * std::log(std::max(o, kLogClamp)) + (1.0 - y) * std::log(std::max(1.0 - o, kLogClamp));
  }
  return l;
}

double objective_value(const ToyDetectorModel& model, std::span<const double> x, const TargetAssignment& targets,
                       const Objective& objective) {
  check_targets(model, targets);
  const Predictions p = forward(model, x);
  double j = loss_components(p, targets).total(objective.lambda_loc, objective.lambda_obj);
  if (objective.kind == ObjectiveKind::targeted) {
    check_targets(model, objective.target);
    j -= loss_components(p, objective.target).total(objective.lambda_loc, objective.lambda_obj);
  }
  return j;
}

std::vector<double> grad_input(const ToyDetectorModel& model, std::span<const double> x,
                               const TargetAssignment& targets, const Objective& objective) {
  check_targets(model, targets);
  const Predictions p = forward(model, x);
  std::vector<double> g_out(model.output_size(), 0.0);
  if (objective.kind == ObjectiveKind::targeted) {
    check_targets(model, objective.target);
    // Per-output difference of the two gradients: exactly zero when y_target == y.
    std::vector<double> g_target(model.output_size(), 0.0);
    add_output_gradient(p, targets, objective.lambda_loc, objective.lambda_obj, 1.0, g_out);
    add_output_gradient(p, objective.target, objective.lambda_loc, objective.lambda_obj, 1.0, g_target);
    for (std::size_t r = 0; r < g_out.size(); ++r) g_out[r] -= g_target[r];
  } else {
    add_output_gradient(p, targets, objective.lambda_loc, objective.lambda_obj, 1.0, g_out);
  }

  const simd::Kernels& k = simd::active();
  const std::size_t in = model.input_size();
  std::vector<double> grad(in, 0.0);
  for (std::size_t r = 0; r < g_out.size(); ++r) {
    if (g_out[r] == 0.0) continue;
    k.axpy(grad, std::span(model.weights).subspan(r * in, in), g_out[r]);
  }
  return grad;
}

std::vector<double> project_linf(std::span<const double> x_adv, std::span<const double> x_clean, double epsilon) {
  if (x_adv.size() != x_clean.size()) fail(ErrorCategory::shape, "projection operands differ in size");
  std::vector<double> out(x_adv.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double lo = std::max(x_clean[i] - epsilon, 0.0);
    const double hi = std::min(x_clean[i] + epsilon, 1.0);
    out[i] = std::min(std::max(x_adv[i], lo), hi);
  }
  return out;
}

void AttackConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) fail(ErrorCategory::validation, "epsilon must be positive");
  if (steps < 1) fail(ErrorCategory::validation, "steps must be at least 1");
  if (!(step_size > 0.0) || !std::isfinite(step_size)) fail(ErrorCategory::validation, "step size must be positive");
}

AdversarialResult sign_gradient_ascent(const ObjectiveFn& objective, std::span<const double> x, double epsilon,
                                       int steps, double step_size) {
  const std::size_t n = x.size();
  std::vector<double> lo(n), hi(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(x[i] >= 0.0 && x[i] <= 1.0)) fail(ErrorCategory::validation, "input pixel outside [0, 1]");
    lo[i] = std::max(x[i] - epsilon, 0.0);
    hi[i] = std::min(x[i] + epsilon, 1.0);
  }

  const simd::Kernels& k = simd::active();
  AdversarialResult result;
  std::vector<double> current(x.begin(), x.end());
  double best = -std::numeric_limits<double>::infinity();
  for (int t = 0; t <= steps; ++t) {
    ObjectiveSample s = objective(current);
    if (!std::isfinite(s.value)) fail(ErrorCategory::numeric, fmt::format("non-finite objective at iteration {}", t));
    result.loss_trace.push_back({t, s.value, s.components});
    if (s.value > best) {
      best = s.value;
      result.x_star = current;
      result.best_iteration = t;
    }
    if (t == steps) break;
    if (!std::all_of(s.gradient.begin(), s.gradient.end(), [](double g) { return std::isfinite(g); })) {
      fail(ErrorCategory::numeric, fmt::format("non-finite gradient at iteration {}", t));
    }
    k.sign_step_clamp(current, s.gradient, lo, hi, step_size);
    for (std::size_t i = 0; i < n; ++i) {
      if (!(std::abs(current[i] - x[i]) <= epsilon + 1e-9) || current[i] < 0.0 || current[i] > 1.0) {
        fail(ErrorCategory::numeric, fmt::format("iterate {} left the feasible set at coordinate {}", t + 1, i));
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    result.achieved_linf = std::max(result.achieved_linf, std::abs(result.x_star[i] - x[i]));
  }
  return result;
}

AdversarialResult pgd_attack(const ToyDetectorModel& model, std::span<const double> x,
                             const TargetAssignment& targets, const AttackConfig& config) {
  config.validate();
  check_input(model, x);
  check_targets(model, targets);
  if (config.objective.kind == ObjectiveKind::targeted) check_targets(model, config.objective.target);

  const ObjectiveFn fn = [&](std::span<const double> xt) {
    ObjectiveSample s;
    const Predictions p = forward(model, xt);
    s.components = loss_components(p, targets);
    s.value = s.components.total(config.objective.lambda_loc, config.objective.lambda_obj);
    if (config.objective.kind == ObjectiveKind::targeted) {
      s.value -= loss_components(p, config.objective.target)
                     .total(config.objective.lambda_loc, config.objective.lambda_obj);
    }
    s.gradient = grad_input(model, xt, targets, config.objective);
    return s;
  };
  return sign_gradient_ascent(fn, x, config.epsilon, config.steps, config.step_size);
}

std::vector<double> to_normalized(const ImageBuffer& image) {
  std::vector<double> x(image.pixels.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = image.pixels[i] / 255.0;
  return x;
}

ImageBuffer to_image(std::span<const double> x, int width, int height) {
  ImageBuffer img(width, height);
  if (x.size() != img.pixels.size()) fail(ErrorCategory::shape, "normalized image size mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) {
    img.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(x[i] * 255.0), 0L, 255L));
  }
  return img;
}

std::string loss_trace_csv(const AdversarialResult& result) {
  std::string out = "iteration,J,L_cls,L_loc,L_obj\n";
  for (const auto& row : result.loss_trace) {
    out += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g}\n", row.iteration, row.objective, row.components.cls,
                       row.components.loc, row.components.obj);
  }
  return out;
}

}  // namespace advbench
