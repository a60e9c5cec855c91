#include "tplad/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "tplad/error.hpp"
#include "tplad/synth.hpp"

namespace tplad::eval {

namespace {

using nlohmann::json;

std::string trim(std::string s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  return s.substr(i);
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::ifstream open_or_throw(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorKind::FormatError, "cannot open " + p.string());
  return in;
}

std::vector<LabeledRecord> load_line_labeled(const std::filesystem::path& path, bool strip) {
  auto file = std::filesystem::is_directory(path) ? path / "logs.txt" : path;
  auto in = open_or_throw(file);
  std::vector<LabeledRecord> out;
  std::string line;
  std::uint64_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto start = line.find_first_not_of(" \t");
    auto end = line.find_first_of(" \t", start);
    if (end == std::string::npos || line.find_first_not_of(" \t", end) == std::string::npos)
      throw Error(ErrorKind::FormatError, file.string() + ":" + std::to_string(no) + ": label without a message");
    const auto label = line.substr(start, end - start);
    LabeledRecord r;
    r.raw = parser::make_raw(no, std::string_view(line).substr(line.find_first_not_of(" \t", end)), strip);
    r.label = label == "-" ? Label::Normal : Label::Anomalous;
    out.push_back(std::move(r));
  }
  return out;
}

Label parse_label(const std::string& s, const std::string& where) {
  auto l = lower(trim(s));
  if (l == "normal" || l == "0" || l == "-") return Label::Normal;
  if (l == "anomaly" || l == "anomalous" || l == "abnormal" || l == "1") return Label::Anomalous;
  throw Error(ErrorKind::FormatError, where + ": unknown label '" + s + "'");
}

std::vector<LabeledRecord> load_group_labeled(const std::filesystem::path& dir, bool strip) {
  const auto sidecar = dir / "labels.csv";
  if (!std::filesystem::exists(sidecar))
    throw Error(ErrorKind::FormatError, "missing label sidecar " + sidecar.string());
  auto csv = open_or_throw(sidecar);
  std::unordered_map<std::string, Label> labels;
  std::string line;
  std::uint64_t no = 0;
  while (std::getline(csv, line)) {
    ++no;
    line = trim(line);
    if (line.empty()) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos)
      throw Error(ErrorKind::FormatError, sidecar.string() + ":" + std::to_string(no) + ": expected key,label");
    auto key = trim(line.substr(0, comma));
    auto value = trim(line.substr(comma + 1));
    if (no == 1 && lower(value) == "label") continue;  // header
    labels[key] = parse_label(value, sidecar.string() + ":" + std::to_string(no));
  }
  auto logs = open_or_throw(dir / "logs.txt");
  std::vector<LabeledRecord> out;
  no = 0;
  while (std::getline(logs, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    LabeledRecord r;
    r.raw = parser::make_raw(no, line, strip);
    r.group_key = block_key(line);
    if (r.group_key) {
      auto it = labels.find(*r.group_key);
      if (it == labels.end())
        throw Error(ErrorKind::FormatError, "logs.txt:" + std::to_string(no) + ": group " + *r.group_key + " has no label");
      r.label = it->second;
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<LabeledRecord> from_corpus(const synth::Corpus& c, bool strip) {
  std::vector<LabeledRecord> out;
  for (std::size_t i = 0; i < c.lines.size(); ++i) {
    LabeledRecord r;
    r.raw = parser::make_raw(c.truth[i].line_no, c.lines[i], strip);
    r.label = c.truth[i].anomalous ? Label::Anomalous : Label::Normal;
    r.subkind = c.truth[i].kind;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<LabeledRecord> load_synthetic(const std::filesystem::path& path, bool strip) {
  if (std::filesystem::is_regular_file(path)) {
    auto in = open_or_throw(path);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::ManifestError, path.string() + ": " + e.what());
    }
    return from_corpus(synth::generate(synth::Manifest::from_json(j)), strip);
  }
  auto logs = open_or_throw(path / "logs.txt");
  auto truth = open_or_throw(path / "truth.jsonl");
  std::map<std::uint64_t, std::pair<Label, std::optional<std::string>>> labels;
  std::string line;
  std::uint64_t no = 0;
  while (std::getline(truth, line)) {
    ++no;
    if (trim(line).empty()) continue;
    try {
      auto j = json::parse(line);
      auto label = parse_label(j.at("label").get<std::string>(), "truth.jsonl:" + std::to_string(no));
      std::optional<std::string> kind;
      if (j.contains("kind")) kind = j.at("kind").get<std::string>();
      labels[j.at("line_no").get<std::uint64_t>()] = {label, kind};
    } catch (const json::exception& e) {
      throw Error(ErrorKind::FormatError, "truth.jsonl:" + std::to_string(no) + ": " + e.what());
    }
  }
  std::vector<LabeledRecord> out;
  no = 0;
  while (std::getline(logs, line)) {
    ++no;
    if (trim(line).empty()) continue;
    auto it = labels.find(no);
    if (it == labels.end()) throw Error(ErrorKind::FormatError, "logs.txt:" + std::to_string(no) + ": no ground truth");
    LabeledRecord r;
    r.raw = parser::make_raw(no, line, strip);
    r.label = it->second.first;
    r.subkind = it->second.second;
    out.push_back(std::move(r));
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

DatasetFormat format_from_string(std::string_view s) {
  if (s == "line_labeled") return DatasetFormat::LineLabeled;
  if (s == "group_labeled") return DatasetFormat::GroupLabeled;
  if (s == "synthetic") return DatasetFormat::Synthetic;
  throw Error(ErrorKind::ConfigError, "unknown dataset format '" + std::string(s) + "'");
}

Granularity granularity_from_string(std::string_view s) {
  if (s == "line") return Granularity::Line;
  if (s == "group") return Granularity::Group;
  throw Error(ErrorKind::ConfigError, "unknown granularity '" + std::string(s) + "'");
}

std::optional<std::string> block_key(std::string_view body) {
  auto pos = body.find("blk_");
  while (pos != std::string_view::npos) {
    if (pos == 0 || !std::isalnum(static_cast<unsigned char>(body[pos - 1]))) {
      auto end = pos + 4;
      if (end < body.size() && body[end] == '-') ++end;
      auto digits = end;
      while (end < body.size() && std::isdigit(static_cast<unsigned char>(body[end]))) ++end;
      if (end > digits) return std::string(body.substr(pos, end - pos));
    }
    pos = body.find("blk_", pos + 1);
  }
  return std::nullopt;
}

std::vector<LabeledRecord> load_dataset(const std::filesystem::path& path, DatasetFormat format,
                                        bool strip_syslog_header) {
  if (!std::filesystem::exists(path)) throw Error(ErrorKind::FormatError, "dataset not found: " + path.string());
  switch (format) {
    case DatasetFormat::LineLabeled: return load_line_labeled(path, strip_syslog_header);
    case DatasetFormat::GroupLabeled:
      if (!std::filesystem::is_directory(path))
        throw Error(ErrorKind::FormatError, "group_labeled expects a directory with logs.txt and labels.csv");
      return load_group_labeled(path, strip_syslog_header);
    case DatasetFormat::Synthetic: return load_synthetic(path, strip_syslog_header);
  }
  return {};
}

Scorecard Scorecard::from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn, std::uint64_t tn) {
  Scorecard s;
  s.tp = tp;
  s.fp = fp;
  s.fn = fn;
  s.tn = tn;
  if (tp + fp == 0) s.precision_undefined = true;
  else s.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn == 0) s.recall_undefined = true;
  else s.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (s.precision_undefined || s.recall_undefined || s.precision + s.recall == 0.0) s.f1_undefined = true;
  else s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

json Scorecard::to_json() const {
  return {{"precision", precision},
          {"recall", recall},
          {"f1", f1},
          {"counts", {{"tp", tp}, {"fp", fp}, {"fn", fn}, {"tn", tn}}},
          {"undefined",
           {{"precision", precision_undefined}, {"recall", recall_undefined}, {"f1", f1_undefined}}}};
}

Scorecard score(const std::vector<detector::AnomalyReport>& reports,
                const std::vector<LabeledRecord>& truth, Granularity granularity) {
  std::unordered_map<std::uint64_t, std::size_t> by_line;
  for (std::size_t i = 0; i < truth.size(); ++i) by_line[truth[i].raw.line_no] = i;
  std::vector<char> flagged(truth.size(), 0);
  for (const auto& r : reports) {
    auto it = by_line.find(r.line_no);
    if (it == by_line.end())
      throw Error(ErrorKind::AlignmentError, "report for line " + std::to_string(r.line_no) + " has no ground truth");
    flagged[it->second] = 1;
  }
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  auto tally = [&](bool predicted, bool actual) {
    if (predicted && actual) ++tp;
    else if (predicted) ++fp;
    else if (actual) ++fn;
    else ++tn;
  };
  if (granularity == Granularity::Line) {
    for (std::size_t i = 0; i < truth.size(); ++i) tally(flagged[i], truth[i].label == Label::Anomalous);
  } else {
    std::map<std::string, std::pair<bool, bool>> groups;  // predicted, actual
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (!truth[i].group_key) continue;
      auto& g = groups[*truth[i].group_key];
      g.first |= flagged[i] != 0;
      g.second |= truth[i].label == Label::Anomalous;
    }
    for (const auto& [key, g] : groups) tally(g.first, g.second);
  }
  return Scorecard::from_counts(tp, fp, fn, tn);
}

json SplitResult::to_json() const {
  char hash[20];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash));
  return {{"dataset", dataset},
          {"fraction", fraction},
          {"precision", card.precision},
          {"recall", card.recall},
          {"f1", card.f1},
          {"counts", {{"tp", card.tp}, {"fp", card.fp}, {"fn", card.fn}, {"tn", card.tn}}},
          {"undefined",
           {{"precision", card.precision_undefined},
            {"recall", card.recall_undefined},
            {"f1", card.f1_undefined}}},
          {"train_lines", train_lines},
          {"test_lines", test_lines},
          {"unmatched_share", unmatched_share},
          {"detector", stats.to_json()},
          {"config_hash", hash}};
}

std::vector<SplitResult> run_split_experiment(const std::vector<LabeledRecord>& records,
                                              const std::vector<double>& fractions,
                                              const pipeline::PipelineConfig& cfg,
                                              const std::string& dataset_name) {
  if (records.size() < 100)
    throw Error(ErrorKind::ProtocolError, "split experiments need at least 100 records, got " +
                                              std::to_string(records.size()));
  const auto granularity = granularity_from_string(cfg.eval.granularity);
  std::vector<SplitResult> out;
  for (double f : fractions) {
    if (!(f > 0.0 && f < 1.0))
      throw Error(ErrorKind::ProtocolError, "fraction " + fmt(f) + " leaves an empty train or test set");
    const auto cut = static_cast<std::size_t>(std::floor(f * static_cast<double>(records.size())));
    if (cut == 0 || cut >= records.size())
      throw Error(ErrorKind::ProtocolError, "fraction " + fmt(f) + " leaves an empty train or test set");
    std::vector<parser::RawLog> train, test;
    std::vector<LabeledRecord> truth(records.begin() + static_cast<std::ptrdiff_t>(cut), records.end());
    for (std::size_t i = 0; i < cut; ++i)
      if (!cfg.eval.train_on_normal_only || records[i].label == Label::Normal) train.push_back(records[i].raw);
    for (const auto& r : truth) test.push_back(r.raw);

    auto model = pipeline::train_offline(train, cfg);
    auto det = pipeline::detect_online(test, model, model.detector_config());
    SplitResult r;
    r.dataset = dataset_name;
    r.fraction = f;
    r.card = score(det.reports, truth, granularity);
    r.stats = det.stats;
    r.train_lines = train.size();
    r.test_lines = test.size();
    r.config_hash = model.config_hash;
    r.reports = std::move(det.reports);
    r.unmatched_share = test.empty() ? 0.0 : static_cast<double>(det.stats.unmatched) / static_cast<double>(test.size());
    out.push_back(std::move(r));
  }
  return out;
}

std::string format_table(const std::vector<SplitResult>& results) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-16s %8s %9s %9s %9s %7s %7s %7s %9s\n", "dataset", "fraction",
                "precision", "recall", "f1", "tp", "fp", "fn", "unmatched");
  os << buf;
  for (const auto& r : results) {
    std::snprintf(buf, sizeof buf, "%-16s %8.2f %9.4f %9.4f %9.4f %7llu %7llu %7llu %8.1f%%\n",
                  r.dataset.substr(0, 16).c_str(), r.fraction, r.card.precision, r.card.recall, r.card.f1,
                  static_cast<unsigned long long>(r.card.tp), static_cast<unsigned long long>(r.card.fp),
                  static_cast<unsigned long long>(r.card.fn), 100.0 * r.unmatched_share);
    os << buf;
  }
  return os.str();
}

}  // namespace tplad::eval
