#pragma once

// Adversarial objectives on a toy affine detector with analytic gradients,
// and a sign-gradient projected ascent under an L_inf budget.
//
// Images are flattened, normalized to [0, 1], in the same interleaved
// (y, x, channel) order as ImageBuffer.

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "advbench/data_model.hpp"

namespace advbench {

/// Affine map from the flattened image to A * (C + 4 + 1) outputs; per
/// anchor: C class logits, 4 box values, 1 objectness logit.
struct ToyDetectorModel {
  int width = 0;
  int height = 0;
  int anchors = 0;
  int classes = 0;
  std::uint64_t seed = 0;
  std::vector<double> weights;  // row-major, output_size() x input_size()
  std::vector<double> bias;

  static ToyDetectorModel random(int width, int height, int anchors, int classes, std::uint64_t seed,
                                 double weight_scale = 0.25, double bias_scale = 0.5);
  static ToyDetectorModel zeros(int width, int height, int anchors, int classes);

  std::size_t input_size() const { return static_cast<std::size_t>(width) * height * 3; }
  std::size_t outputs_per_anchor() const { return static_cast<std::size_t>(classes) + 5; }
  std::size_t output_size() const { return static_cast<std::size_t>(anchors) * outputs_per_anchor(); }

  void validate() const;
};

struct Predictions {
  int anchors = 0;
  int classes = 0;
  std::vector<double> probabilities;  // anchors x classes, softmax
  std::vector<double> boxes;          // anchors x 4
  std::vector<double> objectness;     // anchors, sigmoid
};

Predictions forward(const ToyDetectorModel& model, std::span<const double> x);

struct AnchorTarget {
  bool matched = false;
  int class_id = 0;  // one-hot index, meaningful when matched
  std::array<double, 4> box{};
  int objectness = 0;

  friend bool operator==(const AnchorTarget&, const AnchorTarget&) = default;
};

struct TargetAssignment {
  std::vector<AnchorTarget> anchors;

  static TargetAssignment random(int anchors, int classes, std::uint64_t seed);
  void validate(int classes) const;

  friend bool operator==(const TargetAssignment&, const TargetAssignment&) = default;
};

struct LossComponents {
  double cls = 0.0;
  double loc = 0.0;
  double obj = 0.0;

  double total(double lambda_loc, double lambda_obj) const { return cls + lambda_loc * loc + lambda_obj * obj; }
};

inline constexpr double kLogClamp = 1e-12;

double smooth_l1(double z);

LossComponents loss_components(const Predictions& preds, const TargetAssignment& targets);

enum class ObjectiveKind { untargeted, targeted };

struct Objective {
  ObjectiveKind kind = ObjectiveKind::untargeted;
  TargetAssignment target;  // used when targeted
  double lambda_loc = 1.0;
  double lambda_obj = 1.0;
};

/// J(x): the total loss for untargeted attacks, L(x, y) - L(x, y_target) for targeted ones.
double objective_value(const ToyDetectorModel& model, std::span<const double> x,
                       const TargetAssignment& targets, const Objective& objective);

/// Analytic dJ/dx.
std::vector<double> grad_input(const ToyDetectorModel& model, std::span<const double> x,
                               const TargetAssignment& targets, const Objective& objective);

/// Clamp into [x_clean - eps, x_clean + eps] intersected with [0, 1].
std::vector<double> project_linf(std::span<const double> x_adv, std::span<const double> x_clean,
                                 double epsilon);

struct AttackConfig {
  double epsilon = 8.0 / 255.0;
  int steps = 10;
  double step_size = 2.0 / 255.0;
  Objective objective;

  void validate() const;
};

struct LossTraceRow {
  int iteration = 0;
  double objective = 0.0;
  LossComponents components;  // with respect to the true targets
};

struct AdversarialResult {
  std::vector<double> x_star;
  std::vector<LossTraceRow> loss_trace;  // iterates 0..steps
  double achieved_linf = 0.0;
  int best_iteration = 0;
};

struct ObjectiveSample {
  double value = 0.0;
  std::vector<double> gradient;
  LossComponents components;
};

using ObjectiveFn = std::function<ObjectiveSample(std::span<const double>)>;

/// Generic sign-gradient ascent with L_inf projection. Returns the iterate
/// with the largest objective (the first one on ties). Invariants are checked
/// after every step.
AdversarialResult sign_gradient_ascent(const ObjectiveFn& objective, std::span<const double> x,
                                       double epsilon, int steps, double step_size);

/// FGSM is steps = 1 with step_size = epsilon.
AdversarialResult pgd_attack(const ToyDetectorModel& model, std::span<const double> x,
                             const TargetAssignment& targets, const AttackConfig& config);

std::vector<double> to_normalized(const ImageBuffer& image);
/// Rounds to the nearest 8-bit level.
ImageBuffer to_image(std::span<const double> x, int width, int height);

std::string loss_trace_csv(const AdversarialResult& result);

}  // namespace advbench
