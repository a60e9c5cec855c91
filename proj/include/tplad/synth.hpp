#pragma once

// Deterministic labeled log corpora: typed templates, a sparse Markov
// chain over them, and injected anomalies of every kind.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace tplad::synth {

enum class SlotType { Time, User, Numeric, State, Resource };

struct Slot {
  SlotType type = SlotType::Numeric;
  long long lo = 0, hi = 100;            // numeric range
  std::vector<std::string> states;       // state values
  std::string app;                       // resource directory
};

struct TemplateSpec {
  std::string text;  // words and {slot} markers
};

struct HoldoutGroup {
  double onset = 0.5;      // corpus fraction from which the variants replace the originals
  std::size_t count = 2;   // templates replaced
};

struct Manifest {
  std::uint64_t seed = 7;
  std::size_t lines = 10000;
  std::size_t template_count = 24;  // used when `templates` is empty
  std::vector<TemplateSpec> templates;
  std::size_t out_degree = 3;
  // Explicit successor lists (template index -> successors); random when empty.
  std::map<std::size_t, std::vector<std::size_t>> transitions;
  double injection_rate = 0.0;           // share of anomalous lines, spread over `kinds`
  std::vector<std::string> kinds;        // default: every kind
  std::map<std::string, std::size_t> counts;  // exact line counts, override the rate
  std::size_t flapping_burst = 8;
  double state_stickiness = 0.9;
  std::size_t user_pool = 30;
  std::vector<HoldoutGroup> holdout;
  std::string start_time = "2024-03-01T08:00:00";

  static Manifest from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Every anomaly kind the generator can inject: "Sequence" and the ten
/// parameter subkinds.
const std::vector<std::string>& all_kinds();

struct TruthLine {
  std::uint64_t line_no = 0;
  bool anomalous = false;
  std::optional<std::string> kind;
  std::size_t template_index = 0;
  bool variant = false;  // holdout variant of the template
};

struct Corpus {
  std::vector<std::string> lines;
  std::vector<TruthLine> truth;
  Manifest manifest;
  std::vector<std::string> template_texts;
};

/// Throws ManifestError.
Corpus generate(const Manifest& m);

/// logs.txt, truth.jsonl and manifest.json under `dir`.
void write_corpus(const Corpus& c, const std::filesystem::path& dir);

}  // namespace tplad::synth
