#pragma once

// Typed parameter encoding: type inference per template position, the five
// encoders (cyclic time, hashed user id, z-scored numbers, bit-spliced
// states, TF-IDF resources), key-position selection and lane merging.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tplad/parser.hpp"

namespace tplad::paramenc {

using Vector = std::vector<double>;

enum class ParamType { Time, UserId, Numeric, State, ResourceId, Unknown };

std::string_view to_string(ParamType t) noexcept;
ParamType param_type_from_string(std::string_view s);

// ---------------------------------------------------------------- time

enum class TimeUnit { Year = 0, Month, Day, Hour, Minute, Second, Millisecond };
inline constexpr std::size_t kTimeUnitCount = 7;

std::string_view to_string(TimeUnit u) noexcept;
TimeUnit time_unit_from_string(std::string_view s);

struct TimeUnits {
  int year_period = 10;
  bool year_enabled = true;

  /// Throws UnknownUnit for a disabled unit.
  int max_of(TimeUnit unit) const;
  bool registered(TimeUnit unit) const noexcept { return unit != TimeUnit::Year || year_enabled; }
};

/// Fields present in a timestamp; absent units stay empty.
struct TimeFields {
  std::array<std::optional<int>, kTimeUnitCount> fields;

  std::optional<int> get(TimeUnit u) const { return fields[static_cast<std::size_t>(u)]; }
  /// Lexicographic key over (year..millisecond), absent fields as zero.
  std::int64_t order_key() const;
};

/// Grammar-level parse: ISO-ish dates/datetimes (`T`, `-`, `_` or space
/// separator, `:` or `.` time separators, optional fraction and zone) and
/// bare clock times. Does not range-check the fields.
std::optional<TimeFields> parse_timestamp(std::string_view s);

/// Every present field within its calendar range.
bool time_in_range(const TimeFields& f);

/// (sin(2*pi*t/max_t), cos(2*pi*t/max_t)); years are reduced modulo the
/// configured period.
std::pair<double, double> encode_time(std::int64_t t, TimeUnit unit, const TimeUnits& units);

/// Concatenated unit-circle coordinates of `units`; nullopt if a unit is
/// missing from `f`.
std::optional<Vector> encode_timestamp(const TimeFields& f, const std::vector<TimeUnit>& units,
                                       const TimeUnits& cfg);

// ---------------------------------------------------------------- user ids

/// "", "-", "\"\"", "''", "null", "(null)", "none" (case-insensitive).
bool is_empty_value(std::string_view s);

/// FNV-1a 64 of the bytes, scaled to [0,1). Throws EmptyUser.
double encode_user(std::string_view u);

// ---------------------------------------------------------------- numbers

std::optional<double> parse_number(std::string_view s);

struct NumericBaseline {
  double mean = 0.0;
  double stddev = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::uint64_t count = 0;

  static NumericBaseline fit(const std::vector<double>& values);
};

inline constexpr double kSigmaEpsilon = 1e-9;

/// z-score; a degenerate baseline maps the mean to 0 and anything else to
/// +/- z_cap.
double encode_numeric(double x, const NumericBaseline& b, double z_cap = 10.0);

/// Throws NotANumber when `raw` does not parse.
double encode_numeric(std::string_view raw, const NumericBaseline& b, double z_cap = 10.0);

// ---------------------------------------------------------------- states

inline constexpr std::size_t kMaxStateCardinality = 30;

struct StateRegistry {
  std::vector<std::string> states;  // first-seen order

  void observe(const std::string& s);
  std::optional<std::size_t> index_of(std::string_view s) const;
  std::size_t size() const noexcept { return states.size(); }
};

/// One-hot over the registry read MSB-first as a binary number: index i of
/// k maps to 2^(k-1-i). Throws UnseenState.
double encode_state(std::string_view s, const StateRegistry& registry);

// ---------------------------------------------------------------- resources

/// Path, URL or IPv4 grammar.
bool is_resource(std::string_view s);

/// Lowercased tokens split on / \ ? & = . :
std::vector<std::string> resource_tokens(std::string_view s);

struct TfidfModel {
  std::vector<std::string> vocabulary;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<double> idf;
  std::size_t documents = 0;

  /// Smoothed idf ln((1+N)/(1+df)) + 1; vocabulary capped by document
  /// frequency, ties broken lexicographically.
  static TfidfModel fit(const std::vector<std::string>& docs, std::size_t max_vocab = 256);
  std::size_t dim() const noexcept { return vocabulary.size(); }
};

struct ResourceEncoding {
  Vector values;
  bool all_oov = false;
};

/// tf*idf over the frozen vocabulary, L2-normalized; out-of-vocabulary tokens
/// ignored.
ResourceEncoding encode_resource(std::string_view r, const TfidfModel& model);

// ---------------------------------------------------------------- typing

/// Per-value cascade without the position-level State rule:
/// Time -> Numeric -> ResourceId -> UserId -> Unknown.
ParamType classify_value(std::string_view raw);

struct PositionStats {
  std::size_t distinct = 0;
  std::size_t state_card_max = 16;
};

/// Full cascade Time -> Numeric -> ResourceId -> State -> UserId -> Unknown.
ParamType classify_parameter(std::string_view raw, const PositionStats& stats);

/// Majority vote of classify_parameter over the training values of one
/// position; ties go to the earlier type in the cascade.
ParamType classify_position(const std::vector<std::string>& values, std::size_t state_card_max);

// ---------------------------------------------------------------- key selection

struct PositionFeatures {
  double variance = 0.0;
  double type_code = 0.0;
  double distinct_ratio = 0.0;
  double presence_rate = 0.0;

  std::vector<double> as_point() const { return {variance, type_code, distinct_ratio, presence_rate}; }
};

struct KeySelectConfig {
  int k_min = 2;
  int k_max = 5;
  double coverage_q = 0.9;
  std::size_t min_samples = 5;
  std::uint64_t seed = 42;
};

struct KeySelection {
  std::vector<int> key;                 // indices into the feature list, ascending
  int chosen_k = 1;
  std::vector<std::pair<int, double>> silhouettes;  // (k, score)
  bool fallback = false;                // too few samples or no usable k
};

/// `occurrences[i]` is the number of training samples behind features[i].
KeySelection select_key_parameters(const std::vector<PositionFeatures>& features,
                                   const std::vector<std::size_t>& occurrences,
                                   const KeySelectConfig& cfg);

// ---------------------------------------------------------------- layout

struct LaneSlot {
  int position = 0;
  ParamType type = ParamType::Unknown;
  std::size_t offset = 0;
  std::size_t width = 0;
};

/// Lanes grouped in type order Time, UserId, Numeric, State, ResourceId;
/// within a type, by placeholder position.
struct Layout {
  std::vector<LaneSlot> slots;
  std::size_t width = 0;

  const LaneSlot* find(int position) const;
};

struct Encoding {
  int position = 0;
  ParamType type = ParamType::Unknown;
  Vector values;
};

struct ParamVector {
  Vector values;
  std::vector<bool> mask;  // one bit per layout slot
};

/// Throws LayoutMismatch for an encoding that targets no slot or has the
/// wrong width or type.
ParamVector merge_param_vectors(const std::vector<Encoding>& encodings, const Layout& layout);

// ---------------------------------------------------------------- fitted models

struct ParamEncConfig {
  std::size_t state_card_max = 16;
  int year_period = 10;
  bool year_enabled = true;
  double z_cap = 10.0;
  std::size_t tfidf_max_vocab = 256;
  std::size_t user_buckets = 1024;
  KeySelectConfig keys;
};

struct PositionModel {
  int position = 0;
  ParamType type = ParamType::Unknown;
  std::size_t samples = 0;
  std::vector<TimeUnit> time_units;
  NumericBaseline numeric;
  StateRegistry states;
  std::map<std::size_t, std::uint64_t> user_buckets;  // bucket -> count
  std::uint64_t user_total = 0;
  Vector resource_centroid;
  PositionFeatures features;

  std::size_t lane_width(std::size_t resource_dim) const;
};

struct TemplateParamModel {
  int template_id = -1;
  std::vector<PositionModel> positions;  // one per placeholder
  std::vector<int> key_positions;
  KeySelection selection;
  Layout layout;
};

std::size_t user_bucket(double encoded, std::size_t buckets);

class ParamModels {
 public:
  ParamModels() = default;

  /// `values_by_template[t][p]` holds the training values of placeholder p
  /// of template t.
  static ParamModels fit(const std::vector<std::vector<std::vector<std::string>>>& values_by_template,
                         const ParamEncConfig& cfg);

  const TemplateParamModel* find(int template_id) const;
  const ParamEncConfig& config() const noexcept { return cfg_; }
  const TimeUnits& time_units() const noexcept { return units_; }
  const TfidfModel& tfidf() const noexcept { return tfidf_; }
  std::size_t max_width() const noexcept { return max_width_; }
  std::size_t template_count() const noexcept { return templates_.size(); }

  /// Encoder output for one raw value at a fitted position; nullopt when the
  /// encoder rejects the value.
  std::optional<Vector> encode_position(const PositionModel& pm, std::string_view raw) const;

  /// Key-position encodings of a parsed entry merged into its template layout.
  ParamVector encode(int template_id, const std::vector<std::string>& params) const;

  /// Bounded rescaling of a ParamVector for the sequence model, zero-padded to
  /// max_width(): numeric lanes / z_cap, state lanes / 2^k.
  Vector model_input(int template_id, const ParamVector& pv) const;

  nlohmann::json to_json() const;
  static ParamModels from_json(const nlohmann::json& j);

 private:
  void build_layout(TemplateParamModel& tm) const;

  ParamEncConfig cfg_;
  TimeUnits units_;
  TfidfModel tfidf_;
  std::vector<TemplateParamModel> templates_;
  std::size_t max_width_ = 0;
};

}  // namespace tplad::paramenc
