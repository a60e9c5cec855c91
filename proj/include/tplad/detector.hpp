#pragma once

// Online detection over a frozen model: next-template membership in the
// predicted top-g for sequences, per-type rules over tumbling same-template
// windows for parameters, nearest-template fallback for unseen templates.

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tplad/embedding.hpp"
#include "tplad/paramenc.hpp"
#include "tplad/parser.hpp"
#include "tplad/seqmodel.hpp"

namespace tplad::detector {

struct DetectorConfig {
  std::size_t w = 20;
  std::size_t w_prime = 100;
  std::size_t g = 9;
  double z_threshold = 3.0;
  double freq_ratio = 0.5;  // state flips allowed per window, as a share of w_prime
  double tau_r = 0.3;
  double sim_floor = 0.5;
  double rare_q = 0.01;
  // User positions whose training values were mostly distinct carry no
  // majority to deviate from; the rare-bucket rule is skipped for them.
  double user_distinct_max = 0.5;
  double min_prob = 0.0;  // also flag a top-g member whose probability is below this
  std::size_t stride = 1;  // sequence verdict every `stride` entries
  // Keep a flagged entry out of the window unless the next entry only makes
  // sense with it.
  bool repair_window = true;
  bool flush_partial = true;  // judge partially filled parameter windows at end of stream

  double freq_threshold() const { return freq_ratio * static_cast<double>(w_prime); }
  void validate() const;
};

enum class AnomalyKind { Sequence, Parameter };

enum class ParamSubkind {
  TimeFormat,
  TimeRange,
  UserEmpty,
  UserOutlier,
  NumericInvalid,
  NumericRange,
  StateUnseen,
  StateFlapping,
  ResourcePath,
  ResourceAssociation,
};

inline constexpr std::size_t kSubkindCount = 10;

std::string_view to_string(AnomalyKind k) noexcept;
std::string_view to_string(ParamSubkind s) noexcept;
ParamSubkind subkind_from_string(std::string_view s);

struct AnomalyReport {
  std::uint64_t line_no = 0;
  AnomalyKind kind = AnomalyKind::Sequence;
  std::optional<ParamSubkind> subkind;
  int template_id = -1;
  bool matched = true;
  nlohmann::json evidence = nlohmann::json::object();

  nlohmann::json to_json() const;
  static AnomalyReport from_json(const nlohmann::json& j);
};

/// Read-only view of everything detection needs.
struct ModelView {
  const parser::Parser* parser = nullptr;
  const embedding::EmbeddingProvider* provider = nullptr;
  const std::vector<embedding::TemplateVector>* library = nullptr;
  const paramenc::ParamModels* params = nullptr;
  const seqmodel::ModelWeights* weights = nullptr;
  // Per trained template, mean parameter lanes over its training entries;
  // stands in for lanes whose value could not be encoded.
  const std::vector<std::vector<double>>* param_means = nullptr;

  std::size_t classes() const { return library ? library->size() : 0; }
};

/// Sequence-model input of one entry: template vector followed by the
/// rescaled parameter lanes. Lanes that cannot be encoded, or all lanes when
/// `params` is null, take the template's training mean (zero without one).
seqmodel::Vector entry_input(const ModelView& model, int template_id,
                             const std::vector<std::string>* params);

/// Mean encoded parameter lanes per trained template over (template id,
/// params) entries; only successfully encoded lanes count.
std::vector<std::vector<double>> param_lane_means(
    const ModelView& model, const std::vector<std::pair<int, const std::vector<std::string>*>>& entries);

/// None when `actual` is among the top-g candidates. Throws ModelMissing.
std::optional<AnomalyReport> detect_sequence(const seqmodel::Matrix& window_inputs, int actual,
                                             const seqmodel::ModelWeights* weights,
                                             const DetectorConfig& cfg);

struct BufferedEntry {
  std::uint64_t line_no = 0;
  std::vector<std::string> params;
  bool matched = true;
  std::vector<std::uint8_t> marks;  // per position, set by detect_parameters
};

/// Parameter verdicts for `window` (same template). `history` holds the
/// entries judged before it and only feeds the windowed statistics (state
/// flips, time order); it yields no reports of its own except flapping
/// entries that a later window pushes over the threshold. Marks on both
/// vectors are updated so that no entry is reported twice.
std::vector<AnomalyReport> detect_parameters(std::vector<BufferedEntry>& history,
                                             std::vector<BufferedEntry>& window,
                                             const paramenc::TemplateParamModel& tm,
                                             const paramenc::ParamModels& models,
                                             const DetectorConfig& cfg);

enum class Resolution { Trained, Adopted, Novel, Error };

struct UnmatchedOutcome {
  std::uint64_t line_no = 0;
  Resolution resolution = Resolution::Novel;
  int nearest = -1;
  double similarity = 0.0;
};

struct DetectorStats {
  std::uint64_t lines = 0;
  std::uint64_t errors = 0;
  std::uint64_t matched = 0;
  std::uint64_t unmatched = 0;
  std::uint64_t adopted = 0;
  std::uint64_t novel = 0;
  std::uint64_t sequence_checks = 0;
  std::uint64_t sequence_anomalies = 0;
  std::uint64_t parameter_anomalies = 0;
  std::vector<UnmatchedOutcome> unmatched_lines;

  nlohmann::json to_json() const;
};

class Detector {
 public:
  Detector(ModelView model, DetectorConfig cfg);

  /// Reports completed by this entry (possibly about earlier lines).
  std::vector<AnomalyReport> process(const parser::RawLog& raw);
  /// End of stream: judges partial parameter windows when configured.
  std::vector<AnomalyReport> finish();

  const DetectorStats& stats() const noexcept { return stats_; }
  const parser::Parser& parser() const noexcept { return parser_; }

 private:
  struct Resolved {
    int template_id = -1;
    bool matched = true;
    bool with_params = false;
    Resolution resolution = Resolution::Trained;
    std::optional<AnomalyReport> novel;
  };
  struct TemplateBuffer {
    std::vector<BufferedEntry> pending;
    std::vector<BufferedEntry> history;
  };

  Resolved resolve(const parser::ParsedLog& pl);
  std::vector<AnomalyReport> judge(int template_id, TemplateBuffer& buf);

  ModelView model_;
  DetectorConfig cfg_;
  parser::Parser parser_;
  std::size_t frozen_ = 0;
  using Entry = std::pair<int, seqmodel::Vector>;
  std::deque<Entry> window_;
  std::optional<Entry> held_;  // last flagged entry, kept out of the window
  std::size_t since_verdict_ = 0;
  std::map<int, TemplateBuffer> buffers_;
  std::map<int, std::pair<std::string, std::pair<int, double>>> nearest_cache_;
  DetectorStats stats_;
};

/// Whole-stream detection; reports sorted by line_no (stable within a line).
std::vector<AnomalyReport> stream_detect(const std::vector<parser::RawLog>& stream,
                                         const ModelView& model, const DetectorConfig& cfg,
                                         DetectorStats* stats = nullptr);

}  // namespace tplad::detector
