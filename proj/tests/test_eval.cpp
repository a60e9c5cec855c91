#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <unistd.h>

#include "doctest.h"
#include "tplad/error.hpp"
#include "tplad/eval.hpp"
#include "test_support.hpp"

using namespace tplad::eval;
using tplad::detector::AnomalyKind;
using tplad::detector::AnomalyReport;

namespace {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() / ("tplad_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  void write(const std::string& name, const std::string& text) const { std::ofstream(path / name) << text; }
};

AnomalyReport report_at(std::uint64_t line) {
  AnomalyReport r;
  r.line_no = line;
  r.kind = AnomalyKind::Sequence;
  r.evidence = {{"reason", "test"}};
  return r;
}

tplad::ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const tplad::Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return tplad::ErrorKind::IoError;
}

}  // namespace

TEST_CASE("scorecard arithmetic") {
  auto c = Scorecard::from_counts(9, 1, 1, 89);
  CHECK(c.precision == doctest::Approx(0.9));
  CHECK(c.recall == doctest::Approx(0.9));
  CHECK(c.f1 == doctest::Approx(0.9));
  auto p = Scorecard::from_counts(5, 0, 0, 10);
  CHECK(p.precision == 1.0);
  CHECK(p.recall == 1.0);
  CHECK(p.f1 == 1.0);
  auto z = Scorecard::from_counts(0, 0, 4, 10);
  CHECK(z.precision == 0.0);
  CHECK(z.precision_undefined);
  CHECK(z.recall == 0.0);
  CHECK_FALSE(z.recall_undefined);
  CHECK(z.f1 == 0.0);
  CHECK(z.f1_undefined);
}

TEST_CASE("property: scorecard identities over random counts") {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 5000; ++i) {
    auto pick = [&] { return rng() % 4 == 0 ? 0ULL : rng() % 1000; };
    std::uint64_t tp = pick(), fp = pick(), fn = pick(), tn = pick();
    auto c = Scorecard::from_counts(tp, fp, fn, tn);
    CHECK(c.precision_undefined == (tp + fp == 0));
    CHECK(c.recall_undefined == (tp + fn == 0));
    double p = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    double r = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    CHECK(c.precision == p);
    CHECK(c.recall == r);
    bool f_undef = c.precision_undefined || c.recall_undefined || p + r == 0.0;
    CHECK(c.f1_undefined == f_undef);
    CHECK(c.f1 == (f_undef ? 0.0 : 2 * p * r / (p + r)));
    CHECK(c.f1 >= 0.0);
    CHECK(c.f1 <= 1.0);
  }
}

TEST_CASE("line-labeled loader") {
  TempDir d("ll");
  d.write("logs.txt", "- service started\n\nERR disk failed\n- service stopped\n");
  auto recs = load_dataset(d.path / "logs.txt", DatasetFormat::LineLabeled);
  REQUIRE(recs.size() == 3);
  CHECK(recs[0].label == Label::Normal);
  CHECK(recs[0].raw.body == "service started");
  CHECK(recs[1].label == Label::Anomalous);
  CHECK(recs[1].raw.line_no == 3);
  d.write("bad.txt", "- ok line\nLONELY\n");
  CHECK(kind_of([&] { load_dataset(d.path / "bad.txt", DatasetFormat::LineLabeled); }) == tplad::ErrorKind::FormatError);
}

TEST_CASE("group-labeled loader joins on block ids") {
  TempDir d("gl");
  d.write("logs.txt",
          "Receiving block blk_1 src /10.0.0.1\n"
          "Receiving block blk_2 src /10.0.0.2\n"
          "Served block blk_1 to /10.0.0.3\n");
  d.write("labels.csv", "BlockId,Label\nblk_1,Anomaly\nblk_2,Normal\n");
  auto recs = load_dataset(d.path, DatasetFormat::GroupLabeled);
  REQUIRE(recs.size() == 3);
  CHECK(recs[0].label == Label::Anomalous);
  CHECK(recs[1].label == Label::Normal);
  CHECK(recs[2].label == Label::Anomalous);
  CHECK(recs[2].group_key == "blk_1");

  // Group scoring: one report on any blk_1 line marks the whole block.
  auto card = score({report_at(3)}, recs, Granularity::Group);
  CHECK(card.tp == 1);
  CHECK(card.tn == 1);
  auto line_card = score({report_at(3)}, recs, Granularity::Line);
  CHECK(line_card.tp == 1);
  CHECK(line_card.fn == 1);
  CHECK(kind_of([&] { score({report_at(99)}, recs, Granularity::Line); }) == tplad::ErrorKind::AlignmentError);

  std::filesystem::remove(d.path / "labels.csv");
  CHECK(kind_of([&] { load_dataset(d.path, DatasetFormat::GroupLabeled); }) == tplad::ErrorKind::FormatError);
  CHECK(block_key("x blk_-42, y") == "blk_-42");
  CHECK_FALSE(block_key("no block here"));
}

TEST_CASE("split experiment guards") {
  std::vector<LabeledRecord> few(50);
  auto cfg = tplad_test::small_config();
  CHECK(kind_of([&] { run_split_experiment(few, {0.5}, cfg); }) == tplad::ErrorKind::ProtocolError);
  std::vector<LabeledRecord> recs;
  for (const auto& r : tplad_test::to_raw(tplad_test::cycle_corpus(200))) recs.push_back({r, Label::Normal, {}, {}});
  CHECK(kind_of([&] { run_split_experiment(recs, {1.0}, cfg); }) == tplad::ErrorKind::ProtocolError);
  CHECK(kind_of([&] { run_split_experiment(recs, {0.0}, cfg); }) == tplad::ErrorKind::ProtocolError);
}

TEST_CASE("split experiment is chronological and emits one row per fraction") {
  auto lines = tplad_test::cycle_corpus(600, 3);
  lines.insert(lines.begin() + 500, "worker done in 150 ms");
  std::vector<LabeledRecord> recs;
  auto raws = tplad_test::to_raw(lines);
  for (std::size_t i = 0; i < raws.size(); ++i)
    recs.push_back({raws[i], i == 500 ? Label::Anomalous : Label::Normal, {}, {}});
  auto res = run_split_experiment(recs, {0.8}, tplad_test::small_config(), "cycle");
  REQUIRE(res.size() == 1);
  CHECK(res[0].train_lines + res[0].test_lines == recs.size());
  CHECK(res[0].train_lines == static_cast<std::size_t>(0.8 * static_cast<double>(recs.size())));
  CHECK(res[0].card.tp == 1);
  CHECK(res[0].card.fp == 0);
  auto j = res[0].to_json();
  for (auto* k : {"dataset", "fraction", "precision", "recall", "f1", "counts", "config_hash"}) CHECK(j.contains(k));
  auto table = format_table(res);
  CHECK(table.find("cycle") != std::string::npos);
}
