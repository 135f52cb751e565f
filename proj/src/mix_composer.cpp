#include "advbench/mix_composer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "advbench/bench_runner.hpp"
#include "advbench/error.hpp"
#include "advbench/random.hpp"

namespace advbench {

using nlohmann::json;

void MixtureSpec::validate() const {
  if (source_ids.empty()) fail(ErrorCategory::validation, "mixture has no source images");
  if (components.empty()) fail(ErrorCategory::validation, "mixture has no components");
  std::set<std::string> ids;
  for (const auto& id : source_ids) {
    if (!ids.insert(id).second) fail(ErrorCategory::validation, fmt::format("duplicate source image id '{}'", id));
  }
  std::set<std::string> tags;
  double sum = 0.0;
  for (const auto& c : components) {
    if (c.tag.empty()) fail(ErrorCategory::validation, "component with empty tag");
    if (!tags.insert(c.tag).second) fail(ErrorCategory::validation, fmt::format("duplicate component '{}'", c.tag));
    if (!(c.proportion >= 0.0 && c.proportion <= 1.0)) {
      fail(ErrorCategory::validation, fmt::format("component '{}': proportion {} outside [0, 1]", c.tag, c.proportion));
    }
    sum += c.proportion;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    fail(ErrorCategory::validation, fmt::format("component proportions sum to {}, not 1", sum));
  }
}

MixtureSpec parse_mixture_spec(const std::string& json_text, const std::filesystem::path& base_dir,
                               const std::string& context) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(ErrorCategory::parse, fmt::format("{}: malformed mixture spec: {}", context, e.what()));
  }
  MixtureSpec spec;
  spec.base_dir = base_dir;
  try {
    if (doc.contains("image_ids")) {
      for (const auto& id : doc.at("image_ids")) {
        spec.source_ids.push_back(id.is_string() ? id.get<std::string>() : std::to_string(id.get<std::int64_t>()));
      }
    } else if (doc.contains("image_ids_file")) {
      std::istringstream in(read_text_file(base_dir / doc.at("image_ids_file").get<std::string>()));
      for (std::string line; std::getline(in, line);) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) spec.source_ids.push_back(line);
      }
    } else {
      fail(ErrorCategory::validation, context + ": need 'image_ids' or 'image_ids_file'");
    }
    for (const auto& c : doc.at("components")) {
      spec.components.push_back(
          {c.at("tag").get<std::string>(), c.at("root").get<std::string>(), c.at("proportion").get<double>()});
    }
    if (doc.contains("seed")) spec.seed = doc.at("seed").get<std::uint64_t>();
    if (doc.contains("materialize")) {
      const auto m = doc.at("materialize").get<std::string>();
      if (m == "none") {
        spec.materialize = Materialize::none;
      } else if (m == "copy") {
        spec.materialize = Materialize::copy;
      } else if (m == "hardlink") {
        spec.materialize = Materialize::hardlink;
      } else {
        fail(ErrorCategory::validation, fmt::format("{}: unknown materialize mode '{}'", context, m));
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorCategory::validation, fmt::format("{}: {}", context, e.what()));
  }
  spec.validate();
  return spec;
}

MixtureSpec load_mixture_spec(const std::filesystem::path& path) {
  return parse_mixture_spec(read_text_file(path), path.parent_path(), path.string());
}

std::vector<std::size_t> apportion(const std::vector<double>& proportions, std::size_t n) {
  std::vector<std::size_t> counts(proportions.size());
  std::vector<double> remainders(proportions.size());
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < proportions.size(); ++k) {
    const double quota = proportions[k] * static_cast<double>(n);
    counts[k] = static_cast<std::size_t>(std::floor(quota));
    remainders[k] = quota - static_cast<double>(counts[k]);
    assigned += counts[k];
  }
  std::vector<std::size_t> order(proportions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (std::size_t i = 0; assigned < n; i = (i + 1) % order.size()) {
    ++counts[order[i]];
    ++assigned;
  }
  return counts;
}

std::vector<std::string> seeded_shuffle(std::vector<std::string> ids, std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = ids.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(ids[i - 1], ids[j]);
  }
  return ids;
}

namespace {

std::filesystem::path resolved_root(const MixtureSpec& spec, const MixtureComponent& c) {
  return c.root.is_absolute() ? c.root : spec.base_dir / c.root;
}

std::filesystem::path resolved_entry(const MixtureSpec& spec, const std::string& path) {
  std::filesystem::path p(path);
  return p.is_absolute() ? p : spec.base_dir / p;
}

}  // namespace

MixtureManifest compose(const MixtureSpec& spec, std::uint64_t seed) {
  spec.validate();

  // Variant lookup for every (component, image) pair before any assignment.
  std::vector<std::vector<std::string>> variant(spec.components.size());
  std::vector<std::string> missing;
  for (std::size_t k = 0; k < spec.components.size(); ++k) {
    const auto root = resolved_root(spec, spec.components[k]);
    for (const auto& id : spec.source_ids) {
      auto found = find_variant(root, id);
      if (!found) {
        missing.push_back(fmt::format("image '{}' in component '{}' ({})", id, spec.components[k].tag, root.string()));
        variant[k].emplace_back();
      } else {
        variant[k].push_back((spec.components[k].root / found->filename()).generic_string());
      }
    }
  }
  if (!missing.empty()) {
    std::string msg = "missing variant files:";
    for (const auto& m : missing) msg += "\n  " + m;
    fail(ErrorCategory::resolution, msg);
  }

  std::vector<std::string> shuffled = seeded_shuffle(spec.source_ids, seed);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < spec.source_ids.size(); ++i) index[spec.source_ids[i]] = i;

  std::vector<double> proportions;
  for (const auto& c : spec.components) proportions.push_back(c.proportion);
  const auto counts = apportion(proportions, shuffled.size());

  MixtureManifest m;
  m.seed = seed;
  std::size_t cursor = 0;
  for (std::size_t k = 0; k < spec.components.size(); ++k) {
    m.counts[spec.components[k].tag] = counts[k];
    for (std::size_t i = 0; i < counts[k]; ++i, ++cursor) {
      const std::string& id = shuffled[cursor];
      m.assignment.push_back({id, spec.components[k].tag, variant[k][index.at(id)]});
    }
  }
  return m;
}

VerificationReport verify(const MixtureManifest& manifest, const MixtureSpec& spec) {
  VerificationReport report;
  auto add = [&](Violation::Kind kind, std::string detail) { report.violations.push_back({kind, std::move(detail)}); };

  std::map<std::string, std::size_t> seen;
  const std::set<std::string> universe(spec.source_ids.begin(), spec.source_ids.end());
  std::map<std::string, double> proportion;
  for (const auto& c : spec.components) proportion[c.tag] = c.proportion;

  std::map<std::string, std::size_t> counts;
  for (const auto& e : manifest.assignment) {
    if (!universe.count(e.image_id)) add(Violation::Kind::unknown_image, fmt::format("'{}' is not a source image", e.image_id));
    if (++seen[e.image_id] == 2) {
      add(Violation::Kind::duplicate_assignment, fmt::format("'{}' is assigned more than once", e.image_id));
    }
    if (!proportion.count(e.component)) {
      add(Violation::Kind::unknown_component, fmt::format("'{}' uses unknown component '{}'", e.image_id, e.component));
    } else {
      ++counts[e.component];
    }
    if (!std::filesystem::exists(resolved_entry(spec, e.path))) {
      add(Violation::Kind::missing_file, fmt::format("'{}': file '{}' does not exist", e.image_id, e.path));
    }
  }
  for (const auto& id : spec.source_ids) {
    if (!seen.count(id)) add(Violation::Kind::missing_assignment, fmt::format("'{}' is not assigned", id));
  }
  const double n = static_cast<double>(spec.source_ids.size());
  for (const auto& c : spec.components) {
    const double target = c.proportion * n;
    const double count = static_cast<double>(counts[c.tag]);
    if (std::abs(count - target) > 1.0 - 1e-9) {
      add(Violation::Kind::count_tolerance,
          fmt::format("component '{}' has {} images, target {:.6g}", c.tag, counts[c.tag], target));
    }
  }
  return report;
}

std::string mixture_csv(const MixtureManifest& manifest) {
  std::string out = "image_id,component,path\n";
  for (const auto& e : manifest.assignment) out += fmt::format("{},{},{}\n", e.image_id, e.component, e.path);
  return out;
}

std::string mixture_header_json(const MixtureManifest& manifest, const MixtureSpec& spec) {
  json components = json::array();
  for (const auto& c : spec.components) {
    components.push_back({{"tag", c.tag}, {"root", c.root.generic_string()}, {"proportion", c.proportion}});
  }
  json counts = json::object();
  for (const auto& [tag, n] : manifest.counts) counts[tag] = n;
  json doc = {
      {"seed", manifest.seed},
      {"spec", {{"components", components}, {"n_images", spec.source_ids.size()}}},
      {"counts", counts},
  };
  return doc.dump(2) + "\n";
}

void materialize(const MixtureManifest& manifest, const MixtureSpec& spec, const std::filesystem::path& out_dir) {
  if (spec.materialize == Materialize::none) return;
  for (const auto& e : manifest.assignment) {
    const auto src = resolved_entry(spec, e.path);
    const auto dst_dir = out_dir / e.component;
    std::error_code ec;
    std::filesystem::create_directories(dst_dir, ec);
    const auto dst = dst_dir / src.filename();
    std::filesystem::remove(dst, ec);
    if (spec.materialize == Materialize::hardlink) {
      std::filesystem::create_hard_link(src, dst, ec);
    } else {
      std::filesystem::copy_file(src, dst, ec);
    }
    if (ec) fail(ErrorCategory::io, fmt::format("cannot materialize '{}': {}", src.string(), ec.message()));
  }
}

}  // namespace advbench
