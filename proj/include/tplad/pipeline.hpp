#pragma once

// Offline training (parse -> embed -> fit parameter models -> train the
// sequence model), the persisted model bundle, and online detection.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "tplad/detector.hpp"
#include "tplad/embedding.hpp"
#include "tplad/paramenc.hpp"
#include "tplad/parser.hpp"
#include "tplad/seqmodel.hpp"

namespace tplad::pipeline {

inline constexpr std::uint32_t kModelVersion = 1;

struct EvalOptions {
  bool train_on_normal_only = true;
  std::string granularity = "line";  // or "group"
};

struct PipelineConfig {
  std::uint64_t seed = 42;
  parser::ParserConfig parser;
  std::string embedding_provider = "builtin";  // or "subprocess"
  std::string embedding_command;
  embedding::SkipGramConfig skipgram;
  embedding::Weighting weighting = embedding::Weighting::Lambda;
  paramenc::ParamEncConfig paramenc;
  seqmodel::SeqModelConfig seqmodel;  // input_dim and classes are derived
  detector::DetectorConfig detector;  // w and g come from seqmodel
  EvalOptions eval;

  /// Canonical namespaced form; every key, sorted.
  nlohmann::json to_json() const;
  /// Overlay of `j` on the defaults; unknown keys and mistyped values throw
  /// ConfigError.
  static PipelineConfig from_json(const nlohmann::json& j);
  /// Overlay onto this configuration.
  void merge(const nlohmann::json& j);
  std::uint64_t hash() const;
  /// Pushes the seed and shared window settings into the member configs.
  void normalize();
  void validate() const;
};

PipelineConfig load_config(const std::filesystem::path& path);

struct ModelState {
  std::uint32_t version = kModelVersion;
  PipelineConfig config;
  std::uint64_t config_hash = 0;
  parser::Parser parser;
  embedding::TableProvider embeddings{{}, {}};
  std::vector<embedding::TemplateVector> library;
  paramenc::ParamModels params;
  std::vector<std::vector<double>> param_means;
  seqmodel::SeqModelConfig seq_cfg;
  seqmodel::ModelWeights weights;
  nlohmann::json summary = nlohmann::json::object();

  detector::ModelView view() const;
  /// Detection settings: stored config with seqmodel-derived w and g.
  detector::DetectorConfig detector_config() const;

  void write(std::ostream& os) const;
  static ModelState read(std::istream& is);
  /// Write-temp-rename.
  void save(const std::filesystem::path& path) const;
  static ModelState load(const std::filesystem::path& path);
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<StageTiming> stages;
  std::size_t lines = 0;
  std::size_t templates = 0;
  std::size_t windows = 0;
  seqmodel::TrainStats seq;
};

/// Non-blank lines of a file (or stdin for "-") as RawLogs, 1-based.
std::vector<parser::RawLog> read_logs(const std::filesystem::path& path, bool strip_syslog_header);
std::vector<parser::RawLog> read_logs(std::istream& in, bool strip_syslog_header);

/// Errors are re-thrown with a "[stage]" tag in the message.
ModelState train_offline(const std::vector<parser::RawLog>& logs, const PipelineConfig& cfg,
                         TrainReport* report = nullptr);

struct DetectResult {
  std::vector<detector::AnomalyReport> reports;
  detector::DetectorStats stats;
};

DetectResult detect_online(const std::vector<parser::RawLog>& logs, const ModelState& model,
                           const detector::DetectorConfig& cfg);

/// JSON Lines, one report per line.
void write_reports(std::ostream& os, const std::vector<detector::AnomalyReport>& reports);

/// Atomic file write via a sibling temp file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace tplad::pipeline
