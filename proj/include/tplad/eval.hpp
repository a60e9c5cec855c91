#pragma once

// Labeled datasets, precision/recall/F1 scoring and chronological
// train/test split experiments.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tplad/detector.hpp"
#include "tplad/parser.hpp"
#include "tplad/pipeline.hpp"

namespace tplad::eval {

enum class Label { Normal, Anomalous };

struct LabeledRecord {
  parser::RawLog raw;
  Label label = Label::Normal;
  std::optional<std::string> group_key;
  std::optional<std::string> subkind;  // synthetic corpora only
};

enum class DatasetFormat { LineLabeled, GroupLabeled, Synthetic };

DatasetFormat format_from_string(std::string_view s);

/// line_labeled: a file whose first token per line is the label ("-" is
/// normal, anything else anomalous). group_labeled: a directory holding
/// logs.txt and labels.csv (key,label). synthetic: a generated corpus
/// directory, or a manifest file that is regenerated in memory.
std::vector<LabeledRecord> load_dataset(const std::filesystem::path& path, DatasetFormat format,
                                        bool strip_syslog_header = false);

/// First `blk_` identifier in a line, trailing punctuation trimmed.
std::optional<std::string> block_key(std::string_view body);

struct Scorecard {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  // A zero denominator reports the metric as 0 and sets its flag.
  bool precision_undefined = false, recall_undefined = false, f1_undefined = false;

  static Scorecard from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn, std::uint64_t tn);
  nlohmann::json to_json() const;
};

enum class Granularity { Line, Group };

Granularity granularity_from_string(std::string_view s);

/// A unit is predicted anomalous iff at least one report targets one of its
/// lines. Throws AlignmentError for reports on lines absent from `truth`.
Scorecard score(const std::vector<detector::AnomalyReport>& reports,
                const std::vector<LabeledRecord>& truth, Granularity granularity);

struct SplitResult {
  std::string dataset;
  double fraction = 0.0;
  Scorecard card;
  detector::DetectorStats stats;
  std::size_t train_lines = 0;
  std::size_t test_lines = 0;
  std::uint64_t config_hash = 0;
  double unmatched_share = 0.0;  // test lines that matched no trained template
  std::vector<detector::AnomalyReport> reports;  // not serialized

  nlohmann::json to_json() const;
};

/// Chronological prefix split per fraction: train on the prefix, detect on
/// the suffix, score the suffix.
std::vector<SplitResult> run_split_experiment(const std::vector<LabeledRecord>& records,
                                              const std::vector<double>& fractions,
                                              const pipeline::PipelineConfig& cfg,
                                              const std::string& dataset_name = "dataset");

/// Aligned plain-text table of split results.
std::string format_table(const std::vector<SplitResult>& results);

}  // namespace tplad::eval
