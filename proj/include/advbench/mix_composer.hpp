#pragma once

// Mixed-attack adversarial-training sets: every source image contributes
// exactly one variant (benign or one attack), in the requested proportions.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace advbench {

struct MixtureComponent {
  std::string tag;  // attack tag or "benign"
  std::filesystem::path root;
  double proportion = 0.0;
};

enum class Materialize { none, copy, hardlink };

struct MixtureSpec {
  std::vector<std::string> source_ids;
  std::vector<MixtureComponent> components;
  std::uint64_t seed = 0;
  std::filesystem::path base_dir;  // relative roots resolve against this
  Materialize materialize = Materialize::none;

  void validate() const;
};

MixtureSpec parse_mixture_spec(const std::string& json_text, const std::filesystem::path& base_dir,
                               const std::string& context = "<memory>");
MixtureSpec load_mixture_spec(const std::filesystem::path& path);

struct MixtureEntry {
  std::string image_id;
  std::string component;
  std::string path;  // component root joined with the variant file name, as written in the mixture file

  friend bool operator==(const MixtureEntry&, const MixtureEntry&) = default;
};

struct MixtureManifest {
  std::vector<MixtureEntry> assignment;  // component order, shuffled order within a component
  std::uint64_t seed = 0;
  std::map<std::string, std::size_t> counts;
};

/// Largest-remainder apportionment of n items; ties go to the earlier component.
std::vector<std::size_t> apportion(const std::vector<double>& proportions, std::size_t n);

/// Fisher-Yates shuffle driven by advbench::Rng.
std::vector<std::string> seeded_shuffle(std::vector<std::string> ids, std::uint64_t seed);

/// Seeded shuffle, then a contiguous partition by apportioned counts.
/// Every component root must hold a variant of every source id.
MixtureManifest compose(const MixtureSpec& spec, std::uint64_t seed);

struct Violation {
  enum class Kind { duplicate_assignment, missing_assignment, unknown_image, unknown_component, count_tolerance, missing_file };
  Kind kind;
  std::string detail;
};

struct VerificationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

/// Exactly-once cover, |count_k - p_k * n| < 1 per component, file existence.
VerificationReport verify(const MixtureManifest& manifest, const MixtureSpec& spec);

std::string mixture_csv(const MixtureManifest& manifest);
std::string mixture_header_json(const MixtureManifest& manifest, const MixtureSpec& spec);

/// Copies or hard-links every assigned file into out_dir/<component>/.
void materialize(const MixtureManifest& manifest, const MixtureSpec& spec, const std::filesystem::path& out_dir);

}  // namespace advbench
