#include "advbench/cli.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "advbench/attack_core.hpp"
#include "advbench/bench_runner.hpp"
#include "advbench/error.hpp"
#include "advbench/mix_composer.hpp"
#include "advbench/random.hpp"

namespace advbench::cli {

namespace {

namespace fs = std::filesystem;

unsigned default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

/// Accepts a decimal ("0.0314") or a fraction ("8/255").
double parse_budget(const std::string& text, const char* flag) {
  auto number = [&](std::string_view s) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      fail(ErrorCategory::argument, fmt::format("{}: cannot parse '{}'", flag, text));
    }
    return v;
  };
  const auto slash = text.find('/');
  if (slash == std::string::npos) return number(text);
  const double den = number(std::string_view(text).substr(slash + 1));
  if (den == 0.0) fail(ErrorCategory::argument, fmt::format("{}: zero denominator in '{}'", flag, text));
  return number(std::string_view(text).substr(0, slash)) / den;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string manifest;
  std::string out;
  std::string format;
  std::optional<double> iou_thr;
  unsigned workers = default_workers();
};

int run_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  RunManifest manifest = load_manifest(a.manifest);
  if (a.iou_thr) {
    if (!(*a.iou_thr > 0.0 && *a.iou_thr < 1.0)) {
      fail(ErrorCategory::validation, fmt::format("--iou-thr {} outside (0, 1)", *a.iou_thr));
    }
    manifest.eval.iou_threshold = *a.iou_thr;
  }
  const RunOutcome outcome = run_benchmark(manifest, a.workers);
  for (const auto& w : write_report_files(outcome.report, a.out)) err << "WARNING " << w << "\n";
  if (!a.format.empty()) out << render_report(outcome.report, parse_report_format(a.format));
  if (outcome.errors.empty()) return 0;
  int code = 0;
  for (const auto& e : outcome.errors) {
    err << fmt::format("ERROR {}: ({}, {}): {}\n", to_string(e.category), e.attack_tag, e.model_tag, e.message);
    code = std::max(code, exit_code_for(e.category));
  }
  err << fmt::format("{} of {} conditions failed\n", outcome.errors.size(), manifest.conditions.size());
  return code;
}

// ---------------------------------------------------------------- perceptual

struct PerceptualArgs {
  std::string clean;
  std::string adv;
  std::string features;
  std::string weights;
  std::string out;
  unsigned workers = default_workers();
};

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

/// Image files under root keyed by relative path without extension.
std::map<std::string, fs::path> image_tree(const fs::path& root) {
  if (!fs::is_directory(root)) fail(ErrorCategory::resolution, fmt::format("'{}' is not a directory", root.string()));
  std::map<std::string, fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file() || !is_image_file(entry.path())) continue;
    fs::path key = fs::relative(entry.path(), root);
    key.replace_extension();
    if (!files.emplace(key.generic_string(), entry.path()).second) {
      fail(ErrorCategory::validation, fmt::format("'{}' has several image files for '{}'", root.string(), key.generic_string()));
    }
  }
  return files;
}

std::string sample_value(double v) { return fmt::format("{:.17g}", v); }

int run_perceptual(const PerceptualArgs& a, std::ostream& out, std::ostream&) {
  if (a.features.empty() != a.weights.empty()) {
    fail(ErrorCategory::argument, "--features and --weights must be given together");
  }
  const auto clean = image_tree(a.clean);
  const auto adv = image_tree(a.adv);
  std::vector<std::string> unmatched;
  for (const auto& [k, p] : clean) {
    if (!adv.count(k)) unmatched.push_back(p.string());
  }
  for (const auto& [k, p] : adv) {
    if (!clean.count(k)) unmatched.push_back(p.string());
  }
  if (!unmatched.empty()) {
    std::string msg = fmt::format("{} unmatched files between the trees:", unmatched.size());
    for (const auto& u : unmatched) msg += "\n  " + u;
    fail(ErrorCategory::validation, msg);
  }
  if (clean.empty()) fail(ErrorCategory::validation, fmt::format("no images under '{}'", a.clean));

  std::optional<LayerWeights> weights;
  if (!a.weights.empty()) weights = load_pfw(a.weights);
  const std::vector<std::string> keys = [&] {
    std::vector<std::string> k;
    for (const auto& [key, p] : clean) k.push_back(key);
    return k;
  }();

  std::vector<PerceptualSample> samples(keys.size());
  std::vector<std::optional<Error>> errors(keys.size());
  parallel_for(keys.size(), a.workers, [&](std::size_t i) {
    try {
      samples[i] = compare_images(keys[i], load_image(clean.at(keys[i])), load_image(adv.at(keys[i])),
                                  ResizePolicy::native_linf);
      if (weights) {
        const fs::path base(a.features);
        samples[i].lpips = lpips_distance(load_pfeat(base / "clean" / (keys[i] + ".pfeat")),
                                          load_pfeat(base / "adv" / (keys[i] + ".pfeat")), *weights);
      }
    } catch (const Error& e) {
      errors[i] = e;
    }
  });
  for (const auto& e : errors) {
    if (e) throw *e;
  }

  std::string per_image = "image,l0,l1,l2,linf,psnr,ssim,lpips\n";
  for (const auto& s : samples) {
    per_image += fmt::format("{},{},{},{},{},{},{},{}\n", s.name, s.norms.l0, sample_value(s.norms.l1),
                             sample_value(s.norms.l2), sample_value(s.linf_native), sample_value(s.psnr),
                             sample_value(s.ssim), s.lpips ? sample_value(*s.lpips) : std::string());
  }
  std::string summary = "metric,mean,std,n\n";
  for (const auto& [name, st] : aggregate_samples(samples)) {
    summary += fmt::format("{},{},{},{}\n", name, sample_value(st.mean), sample_value(st.std), st.n);
  }
  if (!a.out.empty()) {
    std::error_code ec;
    fs::create_directories(a.out, ec);
    if (ec) fail(ErrorCategory::io, fmt::format("cannot create '{}': {}", a.out, ec.message()));
    write_text_file(fs::path(a.out) / "perceptual.csv", per_image);
    write_text_file(fs::path(a.out) / "perceptual_summary.csv", summary);
  }
  out << summary;
  return 0;
}

// ---------------------------------------------------------------- compose

struct ComposeArgs {
  std::string spec;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

int run_compose(const ComposeArgs& a, std::ostream& out, std::ostream&) {
  const MixtureSpec spec = load_mixture_spec(a.spec);
  const std::uint64_t seed = a.seed.value_or(spec.seed);
  const MixtureManifest manifest = compose(spec, seed);
  const VerificationReport check = verify(manifest, spec);
  if (!check.ok()) {
    std::string msg = "composed mixture failed verification:";
    for (const auto& v : check.violations) msg += "\n  " + v.detail;
    fail(ErrorCategory::validation, msg);
  }
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) fail(ErrorCategory::io, fmt::format("cannot create '{}': {}", a.out, ec.message()));
  write_text_file(fs::path(a.out) / "mixture.csv", mixture_csv(manifest));
  write_text_file(fs::path(a.out) / "mixture.json", mixture_header_json(manifest, spec));
  materialize(manifest, spec, a.out);
  for (const auto& c : spec.components) out << fmt::format("{}: {}\n", c.tag, manifest.counts.at(c.tag));
  return 0;
}

// ---------------------------------------------------------------- attack-toy

struct AttackArgs {
  std::string eps = "8/255";
  int steps = 10;
  std::string alpha = "2/255";
  bool targeted = false;
  std::uint64_t seed = 0;
  std::string out = ".";
};

constexpr int kToySide = 8;
constexpr int kToyAnchors = 2;
constexpr int kToyClasses = 3;

int run_attack(const AttackArgs& a, std::ostream& out, std::ostream&) {
  AttackConfig config;
  config.epsilon = parse_budget(a.eps, "--eps");
  config.step_size = parse_budget(a.alpha, "--alpha");
  config.steps = a.steps;
  const auto model = ToyDetectorModel::random(kToySide, kToySide, kToyAnchors, kToyClasses, a.seed);
  const auto truth = TargetAssignment::random(kToyAnchors, kToyClasses, a.seed + 1);
  if (a.targeted) {
    config.objective.kind = ObjectiveKind::targeted;
    config.objective.target = TargetAssignment::random(kToyAnchors, kToyClasses, a.seed + 2);
  }
  config.validate();

  Rng rng(a.seed + 3);
  ImageBuffer clean(kToySide, kToySide, 0);
  for (auto& p : clean.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  const auto x = to_normalized(clean);
  const AdversarialResult result = pgd_attack(model, x, truth, config);
  const ImageBuffer adversarial = to_image(result.x_star, kToySide, kToySide);

  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) fail(ErrorCategory::io, fmt::format("cannot create '{}': {}", a.out, ec.message()));
  write_png(clean, fs::path(a.out) / "clean.png");
  write_png(adversarial, fs::path(a.out) / "adversarial.png");
  write_text_file(fs::path(a.out) / "loss_trace.csv", loss_trace_csv(result));
  out << fmt::format("J: {:.6f} -> {:.6f} (best iteration {})\n", result.loss_trace.front().objective,
                     result.loss_trace[static_cast<std::size_t>(result.best_iteration)].objective,
                     result.best_iteration);
  out << fmt::format("L_inf: {:.6f} (8-bit {})\n", result.achieved_linf, lp_norms(clean, adversarial).linf);
  return 0;
}

// ---------------------------------------------------------------- render

struct RenderArgs {
  std::string report;
  std::string format = "markdown";
  std::string out;
};

int run_render(const RenderArgs& a, std::ostream& out, std::ostream&) {
  const BenchReport report = report_from_json(read_text_file(a.report));
  const std::string text = render_report(report, parse_report_format(a.format));
  if (a.out.empty()) {
    out << text;
  } else {
    write_text_file(a.out, text);
  }
  return 0;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adversarial-attack benchmark for object detectors", "advbench"};
  app.require_subcommand(1);

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate every condition of a run manifest and write the reports");
  eval_cmd->add_option("--manifest", eval.manifest, "Run manifest (JSON)")->required();
  eval_cmd->add_option("--out", eval.out, "Output directory for report.csv, report.md, report.json, plotdata.csv")
      ->required();
  eval_cmd->add_option("--format", eval.format, "Also print one rendering to stdout")
      ->check(CLI::IsMember({"csv", "markdown", "json"}));
  eval_cmd->add_option("--iou-thr", eval.iou_thr, "IoU threshold in (0, 1), overrides the manifest");
  eval_cmd->add_option("--workers", eval.workers, "Worker threads (default: logical cores)")
      ->check(CLI::PositiveNumber);

  PerceptualArgs perc;
  auto* perc_cmd = app.add_subcommand("perceptual", "Compare two image trees with L_p, PSNR, SSIM and LPIPS");
  perc_cmd->add_option("--clean", perc.clean, "Directory of clean images")->required();
  perc_cmd->add_option("--adv", perc.adv, "Directory of adversarial images with the same relative names")->required();
  perc_cmd->add_option("--features", perc.features, "Directory with clean/ and adv/ trees of .pfeat files");
  perc_cmd->add_option("--weights", perc.weights, "LPIPS layer weights (.pfw)");
  perc_cmd->add_option("--out", perc.out, "Directory for perceptual.csv and perceptual_summary.csv");
  perc_cmd->add_option("--workers", perc.workers, "Worker threads (default: logical cores)")
      ->check(CLI::PositiveNumber);

  ComposeArgs comp;
  auto* comp_cmd = app.add_subcommand("compose", "Build a seeded mixed-attack training manifest");
  comp_cmd->add_option("--spec", comp.spec, "Mixture spec (JSON)")->required();
  comp_cmd->add_option("--seed", comp.seed, "Shuffle seed (default: the mixture file's seed)");
  comp_cmd->add_option("--out", comp.out, "Directory for mixture.csv and mixture.json")->capture_default_str();

  AttackArgs atk;
  auto* atk_cmd = app.add_subcommand("attack-toy", "Run PGD on a seeded toy affine detector");
  atk_cmd->add_option("--eps", atk.eps, "L_inf budget, decimal or fraction such as 8/255")->capture_default_str();
  atk_cmd->add_option("--steps", atk.steps, "Number of iterations (1 with --alpha equal to --eps is FGSM)")
      ->capture_default_str();
  atk_cmd->add_option("--alpha", atk.alpha, "Step size, decimal or fraction")->capture_default_str();
  atk_cmd->add_flag("--targeted", atk.targeted, "Use a random target assignment instead of the untargeted loss");
  atk_cmd->add_option("--seed", atk.seed, "Seed for model, targets and clean image")->capture_default_str();
  atk_cmd->add_option("--out", atk.out, "Directory for clean.png, adversarial.png and loss_trace.csv")
      ->capture_default_str();

  RenderArgs ren;
  auto* ren_cmd = app.add_subcommand("render", "Re-render a stored report.json");
  ren_cmd->add_option("report", ren.report, "report.json written by eval")->required();
  ren_cmd->add_option("--format", ren.format, "csv, markdown or json")
      ->check(CLI::IsMember({"csv", "markdown", "json"}))
      ->capture_default_str();
  ren_cmd->add_option("--out", ren.out, "Output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    const auto selected = app.get_subcommands();
    out << (selected.empty() ? app.help("", CLI::AppFormatMode::All) : selected.front()->help());
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "ERROR argument: " << e.what() << "\n";
    err << "Run 'advbench --help' for usage.\n";
    return 1;
  }

  try {
    if (*eval_cmd) return run_eval(eval, out, err);
    if (*perc_cmd) return run_perceptual(perc, out, err);
    if (*comp_cmd) return run_compose(comp, out, err);
    if (*atk_cmd) return run_attack(atk, out, err);
    if (*ren_cmd) return run_render(ren, out, err);
  } catch (const Error& e) {
    err << "ERROR " << to_string(e.category()) << ": " << e.what() << "\n";
    return exit_code_for(e.category());
  } catch (const fs::filesystem_error& e) {
    err << "ERROR io: " << e.what() << "\n";
    return exit_code_for(ErrorCategory::io);
  }
  return 1;
}

}  // namespace advbench::cli
