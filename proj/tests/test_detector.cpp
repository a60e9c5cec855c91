#include <algorithm>
#include <sstream>

#include "doctest.h"
#include "tplad/detector.hpp"
#include "tplad/error.hpp"
#include "tplad/pipeline.hpp"
#include "test_support.hpp"

using namespace tplad::detector;
using tplad::paramenc::ParamModels;
using tplad_test::cycle_corpus;
using tplad_test::cycle_model;
using tplad_test::to_raw;

namespace {

std::vector<BufferedEntry> entries(const std::vector<std::string>& values) {
  std::vector<BufferedEntry> out;
  for (std::size_t i = 0; i < values.size(); ++i) out.push_back({i + 1, {values[i]}, true, {}});
  return out;
}

ParamModels one_position(const std::vector<std::string>& training) {
  return ParamModels::fit({{training}}, {});
}

std::string model_bytes(const tplad::pipeline::ModelState& m) {
  std::ostringstream os;
  m.write(os);
  return os.str();
}

}  // namespace

TEST_CASE("sequence membership by rank") {
  tplad::seqmodel::SeqModelConfig sc;
  sc.input_dim = 2;
  sc.hidden_units = 3;
  sc.window_w = 3;
  sc.classes = 5;
  auto w = tplad::seqmodel::ModelWeights::zeros(sc);
  w.out_b << 5, 4, 3, 2, 1;
  DetectorConfig cfg;
  cfg.g = 2;
  tplad::seqmodel::Matrix x = tplad::seqmodel::Matrix::Zero(2, 3);
  CHECK_FALSE(detect_sequence(x, 0, &w, cfg));
  CHECK_FALSE(detect_sequence(x, 1, &w, cfg));
  auto r = detect_sequence(x, 2, &w, cfg);
  REQUIRE(r);
  CHECK(r->kind == AnomalyKind::Sequence);
  CHECK(r->evidence["candidates"] == nlohmann::json::array({0, 1}));
  cfg.min_prob = 0.3;
  CHECK(detect_sequence(x, 1, &w, cfg));
  try {
    detect_sequence(x, 0, nullptr, cfg);
    FAIL("expected ModelMissing");
  } catch (const tplad::Error& e) {
    CHECK(e.kind() == tplad::ErrorKind::ModelMissing);
  }
}

TEST_CASE("state flapping across w'=4") {
  std::vector<std::string> tr;
  for (int i = 0; i < 40; ++i) tr.push_back(i < 20 ? "UP" : "DOWN");
  auto models = one_position(tr);
  const auto& tm = *models.find(0);
  DetectorConfig cfg;
  cfg.w_prime = 4;
  cfg.freq_ratio = 0.5;
  std::vector<BufferedEntry> hist;
  auto win = entries({"UP", "DOWN", "UP", "DOWN"});
  auto reps = detect_parameters(hist, win, tm, models, cfg);
  REQUIRE_FALSE(reps.empty());
  for (const auto& r : reps) CHECK(r.subkind == ParamSubkind::StateFlapping);
  std::vector<BufferedEntry> hist2;
  auto calm = entries({"UP", "UP", "DOWN", "DOWN"});
  CHECK(detect_parameters(hist2, calm, tm, models, cfg).empty());
  std::vector<BufferedEntry> hist3;
  auto unseen = entries({"UP", "UP", "FAULTED", "UP"});
  auto u = detect_parameters(hist3, unseen, tm, models, cfg);
  REQUIRE(u.size() == 1);
  CHECK(u[0].subkind == ParamSubkind::StateUnseen);
  CHECK(u[0].line_no == 3);
}

TEST_CASE("numeric range and validity") {
  std::vector<std::string> tr;
  for (int i = 1; i <= 100; ++i) tr.push_back(std::to_string(i));
  auto models = one_position(tr);
  const auto& tm = *models.find(0);
  const auto& b = tm.positions[0].numeric;
  DetectorConfig cfg;
  cfg.w_prime = 4;
  std::vector<BufferedEntry> hist;
  auto win = entries({"50", std::to_string(b.mean + 5 * b.stddev), "12x4", "60"});
  auto reps = detect_parameters(hist, win, tm, models, cfg);
  REQUIRE(reps.size() == 2);
  CHECK(reps[0].subkind == ParamSubkind::NumericRange);
  CHECK(reps[0].line_no == 2);
  CHECK(reps[1].subkind == ParamSubkind::NumericInvalid);
  std::vector<BufferedEntry> hist2;
  auto edge = entries({std::to_string(b.mean + 2.9 * b.stddev)});
  CHECK(detect_parameters(hist2, edge, tm, models, cfg).empty());
}

TEST_CASE("empty and rare users") {
  std::vector<std::string> tr;
  for (int i = 0; i < 400; ++i) tr.push_back("user_" + std::to_string(i % 20));
  auto models = one_position(tr);
  const auto& tm = *models.find(0);
  REQUIRE(tm.positions[0].type == tplad::paramenc::ParamType::UserId);
  DetectorConfig cfg;
  cfg.w_prime = 3;
  std::vector<BufferedEntry> hist;
  auto win = entries({"user_3", "-", "intruder_99"});
  auto reps = detect_parameters(hist, win, tm, models, cfg);
  REQUIRE(reps.size() == 2);
  CHECK(reps[0].subkind == ParamSubkind::UserEmpty);
  CHECK(reps[1].subkind == ParamSubkind::UserOutlier);
}

TEST_CASE("time format, range and order within a template window") {
  std::vector<std::string> tr;
  for (int i = 0; i < 50; ++i) tr.push_back("2024-03-01T08:" + std::to_string(10 + i) + ":00");
  auto models = one_position(tr);
  const auto& tm = *models.find(0);
  DetectorConfig cfg;
  cfg.w_prime = 4;
  std::vector<BufferedEntry> hist;
  auto win = entries({"2024-03-01T09:00:00", "ts_invalid", "2024-13-01T09:00:00", "2024-03-01T08:30:00"});
  auto reps = detect_parameters(hist, win, tm, models, cfg);
  std::vector<ParamSubkind> kinds;
  for (const auto& r : reps) kinds.push_back(*r.subkind);
  CHECK(kinds == std::vector<ParamSubkind>{ParamSubkind::TimeFormat, ParamSubkind::TimeRange, ParamSubkind::TimeRange});
  CHECK(reps.back().line_no == 4);
}

TEST_CASE("resource grammar and association") {
  std::vector<std::string> tr;
  for (int i = 0; i < 40; ++i) tr.push_back("/data/app/part-" + std::to_string(i % 8) + ".dat");
  auto models = one_position(tr);
  const auto& tm = *models.find(0);
  DetectorConfig cfg;
  cfg.w_prime = 3;
  std::vector<BufferedEntry> hist;
  auto win = entries({"/data/app/part-2.dat", "corrupt#7", "/etc/shadow/key1.pem"});
  auto reps = detect_parameters(hist, win, tm, models, cfg);
  REQUIRE(reps.size() == 2);
  CHECK(reps[0].subkind == ParamSubkind::ResourcePath);
  CHECK(reps[1].subkind == ParamSubkind::ResourceAssociation);
}

TEST_CASE("report json round trip") {
  AnomalyReport r{17, AnomalyKind::Parameter, ParamSubkind::StateFlapping, 3, false, {{"flips", 5}}};
  auto back = AnomalyReport::from_json(r.to_json());
  CHECK(back.to_json() == r.to_json());
  for (std::size_t i = 0; i < kSubkindCount; ++i) {
    auto s = static_cast<ParamSubkind>(i);
    CHECK(subkind_from_string(to_string(s)) == s);
  }
}

TEST_CASE("stream: replay, warm-up, empty stream") {
  const auto& m = cycle_model();
  auto cfg = m.detector_config();
  DetectorStats st;
  auto reps = stream_detect(to_raw(cycle_corpus(600)), m.view(), cfg, &st);
  CHECK(reps.empty());
  CHECK(st.sequence_checks == 600 - cfg.w);
  CHECK(stream_detect({}, m.view(), cfg).empty());
  DetectorStats short_st;
  CHECK(stream_detect(to_raw(cycle_corpus(cfg.w)), m.view(), cfg, &short_st).empty());
  CHECK(short_st.sequence_checks == 0);
}

TEST_CASE("stream: one out-of-order template yields exactly one report") {
  const auto& m = cycle_model();
  auto lines = cycle_corpus(300, 9);
  // ... disk read, [worker done], net send ...
  lines.insert(lines.begin() + 152, "worker done in 150 ms");
  auto reps = stream_detect(to_raw(lines), m.view(), m.detector_config());
  REQUIRE(reps.size() == 1);
  CHECK(reps[0].line_no == 153);
  CHECK(reps[0].kind == AnomalyKind::Sequence);
}

TEST_CASE("stream: unmatched lines are adopted or reported") {
  const auto& m = cycle_model();
  const auto before = model_bytes(m);
  auto lines = cycle_corpus(120, 4);
  lines[61] = "disk read block 120 bytes again";  // a reworded trained template
  lines[90] = "zebra quokka umbrella lantern";    // nothing like the library
  DetectorStats st;
  auto reps = stream_detect(to_raw(lines), m.view(), m.detector_config(), &st);
  REQUIRE(st.unmatched_lines.size() == 2);
  const auto& adopted = st.unmatched_lines[0];
  CHECK(adopted.line_no == 62);
  CHECK(adopted.resolution == Resolution::Adopted);
  auto copy = m.parser;
  CHECK(adopted.nearest == copy.parse_line(tplad::parser::make_raw(1, "disk read block 1 bytes"), copy.size()).template_id);
  CHECK(adopted.similarity >= m.detector_config().sim_floor);
  const auto& novel = st.unmatched_lines[1];
  CHECK(novel.resolution == Resolution::Novel);
  CHECK(novel.similarity < m.detector_config().sim_floor);
  auto it = std::find_if(reps.begin(), reps.end(), [](const auto& r) { return r.line_no == 91; });
  REQUIRE(it != reps.end());
  CHECK(it->kind == AnomalyKind::Sequence);
  CHECK_FALSE(it->matched);
  CHECK(it->evidence["reason"] == "novel_template");
  CHECK(std::none_of(reps.begin(), reps.end(), [](const auto& r) { return r.line_no == 62; }));
  // Online detection leaves the learned state alone.
  CHECK(model_bytes(m) == before);
}

TEST_CASE("stream: determinism and line order") {
  const auto& m = cycle_model();
  auto lines = cycle_corpus(400, 5);
  lines[100] = "cache state MISS";
  lines[250] = "job end id 99999";
  lines.insert(lines.begin() + 300, "job start id 120");
  auto a = stream_detect(to_raw(lines), m.view(), m.detector_config());
  auto b = stream_detect(to_raw(lines), m.view(), m.detector_config());
  REQUIRE(a.size() == b.size());
  REQUIRE_FALSE(a.empty());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].to_json() == b[i].to_json());
  CHECK(std::is_sorted(a.begin(), a.end(), [](const auto& x, const auto& y) { return x.line_no < y.line_no; }));
}
