#include <cmath>
#include <limits>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "advbench/bench_runner.hpp"

namespace advbench {

using nlohmann::json;

namespace {

// One decimal place.
std::string cell(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{:.1f}", v);
}

std::string stats_cell(const std::map<std::string, DistanceStats>& stats, const std::string& key) {
  auto it = stats.find(key);
  return it == stats.end() ? std::string() : format_stats(it->second);
}

json number_json(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double number_from_json(const json& v) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    fail(ErrorCategory::parse, fmt::format("report: unexpected numeric string '{}'", s));
  }
  if (!v.is_number()) fail(ErrorCategory::parse, "report: expected a number");
  return v.get<double>();
}

json bundle_json(const MetricBundle& b) {
  json per_class = json::object();
  for (const auto& [cls, ap] : b.per_class_ap) per_class[std::to_string(cls)] = ap;
  return {{"map", b.map}, {"ap_loc", b.ap_loc}, {"csr", b.csr}, {"per_class_ap", per_class}};
}

MetricBundle bundle_from_json(const json& j) {
  MetricBundle b;
  b.map = number_from_json(j.at("map"));
  b.ap_loc = number_from_json(j.at("ap_loc"));
  b.csr = number_from_json(j.at("csr"));
  if (j.contains("per_class_ap")) {
    for (const auto& [k, v] : j.at("per_class_ap").items()) b.per_class_ap[std::stoi(k)] = number_from_json(v);
  }
  return b;
}

std::vector<std::string> attack_columns(const BenchReport& report) {
  std::set<std::string> tags;
  for (const auto& c : report.conditions) tags.insert(c.attack_tag);
  return {tags.begin(), tags.end()};
}

const ConditionResult* find_condition(const BenchReport& report, const std::string& model, const std::string& attack) {
  for (const auto& c : report.conditions) {
    if (c.model_tag == model && c.attack_tag == attack) return &c;
  }
  return nullptr;
}

std::string render_csv(const BenchReport& report) {
  std::string out = "model,attack,map,ap_loc,csr,map_drop,ap_loc_drop,csr_drop";
  for (const auto& m : perceptual_metric_names()) out += "," + m;
  out += "\n";
  for (const auto& b : report.benign) {
    out += fmt::format("{},benign,{},{},{},,,", b.model_tag, cell(b.metrics.map), cell(b.metrics.ap_loc),
                       cell(b.metrics.csr));
    out += std::string(perceptual_metric_names().size(), ',');
    out += "\n";
    for (const auto& c : report.conditions) {
      if (c.model_tag != b.model_tag) continue;
      out += fmt::format("{},{},{},{},{},{},{},{}", c.model_tag, c.attack_tag, cell(c.attacked.map),
                         cell(c.attacked.ap_loc), cell(c.attacked.csr), cell(c.drops.map), cell(c.drops.ap_loc),
                         cell(c.drops.csr));
      for (const auto& m : perceptual_metric_names()) out += "," + stats_cell(c.stats, m);
      out += "\n";
    }
  }
  return out;
}

std::string table_header(const std::vector<std::string>& columns) {
  std::string head = "|";
  std::string rule = "|";
  for (const auto& c : columns) {
    head += " " + c + " |";
    rule += "---|";
  }
  return head + "\n" + rule + "\n";
}

std::string render_markdown(const BenchReport& report) {
  const auto attacks = attack_columns(report);
  std::string out;

  out += "## Detection impact\n\nRelative drop in % compared to the benign mAP (lower is better for the defender).\n\n";
  std::vector<std::string> cols{"Detector", "Benign mAP (%)"};
  cols.insert(cols.end(), attacks.begin(), attacks.end());
  out += table_header(cols);
  for (const auto& b : report.benign) {
    out += fmt::format("| {} | {} |", b.model_tag, cell(b.metrics.map));
    for (const auto& a : attacks) {
      const auto* c = find_condition(report, b.model_tag, a);
      out += c ? fmt::format(" {} |", cell(c->drops.map)) : std::string(" - |");
    }
    out += "\n";
  }

  out += "\n## Localization and classification impact\n\n"
         "Relative drop in % compared to the benign AP_loc / CSR.\n\n";
  cols = {"Detector", "Benign AP_loc / CSR (%)"};
  cols.insert(cols.end(), attacks.begin(), attacks.end());
  out += table_header(cols);
  for (const auto& b : report.benign) {
    out += fmt::format("| {} | {} / {} |", b.model_tag, cell(b.metrics.ap_loc), cell(b.metrics.csr));
    for (const auto& a : attacks) {
      const auto* c = find_condition(report, b.model_tag, a);
      out += c ? fmt::format(" {} / {} |", cell(c->drops.ap_loc), cell(c->drops.csr)) : std::string(" - |");
    }
    out += "\n";
  }

  out += "\n## Perceptibility\n\nMean ± standard deviation over all image pairs.\n\n";
  out += table_header({"Attack", "Model", "L2", "L_inf", "SSIM", "LPIPS", "PSNR (dB)"});
  for (const auto& c : report.conditions) {
    if (c.stats.empty()) continue;
    out += fmt::format("| {} | {} | {} | {} | {} | {} | {} |\n", c.attack_tag, c.model_tag, stats_cell(c.stats, "l2"),
                       stats_cell(c.stats, "linf"), stats_cell(c.stats, "ssim"), stats_cell(c.stats, "lpips"),
                       stats_cell(c.stats, "psnr"));
  }
  return out;
}

json stats_json(const std::map<std::string, DistanceStats>& stats) {
  json j = json::object();
  for (const auto& [k, s] : stats) j[k] = {{"mean", number_json(s.mean)}, {"std", number_json(s.std)}, {"n", s.n}};
  return j;
}

std::string render_json(const BenchReport& report) {
  json doc;
  doc["benign"] = json::array();
  for (const auto& b : report.benign) {
    json row = bundle_json(b.metrics);
    row["model"] = b.model_tag;
    doc["benign"].push_back(std::move(row));
  }
  doc["conditions"] = json::array();
  for (const auto& c : report.conditions) {
    doc["conditions"].push_back({
        {"attack", c.attack_tag},
        {"model", c.model_tag},
        {"benign", bundle_json(c.benign)},
        {"metrics", bundle_json(c.attacked)},
        {"drops", {{"map", c.drops.map}, {"ap_loc", c.drops.ap_loc}, {"csr", c.drops.csr}}},
        {"stats", stats_json(c.stats)},
    });
  }
  return doc.dump(2) + "\n";
}

}  // namespace

ReportFormat parse_report_format(const std::string& name) {
  if (name == "csv") return ReportFormat::csv;
  if (name == "markdown" || name == "md") return ReportFormat::markdown;
  if (name == "json") return ReportFormat::json;
  fail(ErrorCategory::validation, fmt::format("unknown report format '{}'", name));
}

std::string render_report(const BenchReport& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::csv: return render_csv(report);
    case ReportFormat::markdown: return render_markdown(report);
    case ReportFormat::json: return render_json(report);
  }
  return {};
}

BenchReport report_from_json(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(ErrorCategory::parse, fmt::format("malformed report: {}", e.what()));
  }
  BenchReport report;
  try {
    for (const auto& b : doc.at("benign")) report.benign.push_back({b.at("model").get<std::string>(), bundle_from_json(b)});
    for (const auto& c : doc.at("conditions")) {
      ConditionResult r;
      r.attack_tag = c.at("attack").get<std::string>();
      r.model_tag = c.at("model").get<std::string>();
      r.benign = bundle_from_json(c.at("benign"));
      r.attacked = bundle_from_json(c.at("metrics"));
      r.drops.map = number_from_json(c.at("drops").at("map"));
      r.drops.ap_loc = number_from_json(c.at("drops").at("ap_loc"));
      r.drops.csr = number_from_json(c.at("drops").at("csr"));
      for (const auto& [k, s] : c.at("stats").items()) {
        r.stats[k] = DistanceStats{number_from_json(s.at("mean")), number_from_json(s.at("std")),
                                   s.at("n").get<std::size_t>()};
      }
      report.conditions.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    fail(ErrorCategory::parse, fmt::format("report has an unexpected layout: {}", e.what()));
  }
  check_consistency(report);
  return report;
}

std::string emit_plot_data(const BenchReport& report, std::vector<std::string>* warnings) {
  static const char* const metrics[] = {"l2", "linf", "ssim", "lpips"};
  std::string out = "attack,model,metric,mean,std,n\n";
  for (const auto& c : report.conditions) {
    if (c.stats.empty()) {
      if (warnings) warnings->push_back(fmt::format("({}, {}): no perceptual statistics, omitted from plot data",
                                                    c.attack_tag, c.model_tag));
      continue;
    }
    for (const char* m : metrics) {
      auto it = c.stats.find(m);
      if (it == c.stats.end()) continue;
      out += fmt::format("{},{},{},{:.17g},{:.17g},{}\n", c.attack_tag, c.model_tag, m, it->second.mean, it->second.std,
                         it->second.n);
    }
  }
  return out;
}

}  // namespace advbench
