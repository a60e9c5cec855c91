#include <cmath>
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "tplad/cluster.hpp"
#include "tplad/error.hpp"
#include "tplad/paramenc.hpp"

using namespace tplad::paramenc;

namespace {

double dist2(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// Textbook silhouette, written independently of the library.
double brute_silhouette(const std::vector<std::vector<double>>& pts, const std::vector<int>& lab) {
  std::set<int> clusters(lab.begin(), lab.end());
  if (clusters.size() < 2) return 0.0;
  double total = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    std::map<int, std::pair<double, int>> by;
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (i == j) continue;
      by[lab[j]].first += dist2(pts[i], pts[j]);
      by[lab[j]].second += 1;
    }
    if (by[lab[i]].second == 0) continue;  // singleton scores 0
    double a = by[lab[i]].first / by[lab[i]].second, b = 1e300;
    for (auto& [c, v] : by)
      if (c != lab[i] && v.second) b = std::min(b, v.first / v.second);
    total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(pts.size());
}

}  // namespace

TEST_CASE("classification cascade") {
  PositionStats st{200, 16};
  CHECK(classify_parameter("2024-03-01 12:00:00", st) == ParamType::Time);
  CHECK(classify_parameter("2024-03-01T12:00:00.250Z", st) == ParamType::Time);
  CHECK(classify_parameter("79", st) == ParamType::Numeric);
  CHECK(classify_parameter("/var/log/app.log", st) == ParamType::ResourceId);
  CHECK(classify_parameter("http://h/x?a=1", st) == ParamType::ResourceId);
  CHECK(classify_parameter("FAILED", PositionStats{3, 16}) == ParamType::State);
  CHECK(classify_parameter("user_alice", st) == ParamType::UserId);
  CHECK(classify_parameter("alice@corp", st) == ParamType::UserId);
  // A bare word needs few distinct values (State) or an identity marker.
  CHECK(classify_parameter("alice", st) == ParamType::Unknown);
  std::vector<std::string> vals;
  for (int i = 0; i < 200; ++i) vals.push_back(std::to_string(i));
  vals.push_back("n/a");
  CHECK(classify_position(vals, 16) == ParamType::Numeric);
}

TEST_CASE("time encoding") {
  TimeUnits u;
  auto z = encode_time(0, TimeUnit::Hour, u);
  CHECK(z.first == 0.0);
  CHECK(z.second == 1.0);
  auto q = encode_time(6, TimeUnit::Hour, u);
  CHECK(q.first == doctest::Approx(1.0));
  CHECK(q.second == doctest::Approx(0.0));
  auto m = encode_time(59, TimeUnit::Minute, u);
  CHECK(m.first == doctest::Approx(-0.10453).epsilon(1e-5));
  CHECK(m.second == doctest::Approx(0.99452).epsilon(1e-5));
  TimeUnits no_year;
  no_year.year_enabled = false;
  CHECK_THROWS_AS(encode_time(2024, TimeUnit::Year, no_year), tplad::Error);
}

TEST_CASE("timestamp grammar and range") {
  auto f = parse_timestamp("2024-13-01T08:00:00");
  REQUIRE(f);
  CHECK_FALSE(time_in_range(*f));
  CHECK(time_in_range(*parse_timestamp("2024-03-01 23:59:59")));
  CHECK_FALSE(parse_timestamp("ts_invalid"));
  auto a = parse_timestamp("2024-03-01T08:00:01"), b = parse_timestamp("2024-03-01T08:00:02");
  CHECK(a->order_key() < b->order_key());
}

TEST_CASE("property: time periodicity and neighborhood") {
  TimeUnits u;
  for (std::size_t ui = 0; ui < kTimeUnitCount; ++ui) {
    auto unit = static_cast<TimeUnit>(ui);
    const int mt = u.max_of(unit);
    for (std::int64_t t = -3; t < 3 * mt; t += std::max(1, mt / 17)) {
      auto a = encode_time(t, unit, u), b = encode_time(t + mt, unit, u);
      CHECK(std::abs(a.first - b.first) < 1e-12);
      CHECK(std::abs(a.second - b.second) < 1e-12);
      if (mt >= 4) {
        auto n1 = encode_time(t + 1, unit, u), far = encode_time(t + mt / 2, unit, u);
        CHECK(std::hypot(a.first - n1.first, a.second - n1.second) <
              std::hypot(a.first - far.first, a.second - far.second));
      }
    }
  }
}

TEST_CASE("user encoding") {
  CHECK(encode_user("alice") == encode_user("alice"));
  // 0x508b2abb65a03907 / 2^64, computed with a separate FNV-1a script.
  CHECK(encode_user("alice") == doctest::Approx(0.3146235187065266).epsilon(1e-15));
  CHECK_THROWS_AS(encode_user(""), tplad::Error);
  for (auto* e : {"", "-", "null", "NULL", "(null)", "none", "''"}) CHECK(is_empty_value(e));
  CHECK_FALSE(is_empty_value("bob"));
  std::mt19937_64 rng(3);
  for (int i = 0; i < 500; ++i) {
    std::string s;
    for (std::size_t k = 0; k < 1 + rng() % 12; ++k) s += static_cast<char>(33 + rng() % 90);
    if (is_empty_value(s)) continue;
    double v = encode_user(s);
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("numeric encoding") {
  auto b = NumericBaseline::fit({1, 2, 3, 4, 5});
  CHECK(encode_numeric(b.mean, b) == 0.0);
  CHECK(encode_numeric(b.mean + 2 * b.stddev, b) == doctest::Approx(2.0));
  CHECK_THROWS_AS(encode_numeric(std::string_view("abc"), b), tplad::Error);
  auto flat = NumericBaseline::fit({7, 7, 7});
  CHECK(encode_numeric(7.0, flat) == 0.0);
  CHECK(encode_numeric(8.0, flat, 10.0) == 10.0);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd(50, 10);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> xs, shifted;
    double c = nd(rng);
    for (int k = 0; k < 20; ++k) {
      xs.push_back(nd(rng));
      shifted.push_back(xs.back() + c);
    }
    double q = nd(rng);
    CHECK(encode_numeric(q, NumericBaseline::fit(xs)) ==
          doctest::Approx(encode_numeric(q + c, NumericBaseline::fit(shifted))).epsilon(1e-9));
  }
}

TEST_CASE("state encoding") {
  StateRegistry r;
  r.observe("success");
  r.observe("fail");
  r.observe("success");
  CHECK(encode_state("success", r) == 2.0);
  CHECK(encode_state("fail", r) == 1.0);
  CHECK_THROWS_AS(encode_state("timeout", r), tplad::Error);
}

TEST_CASE("property: state bit splice is exact and injective") {
  for (std::size_t k = 1; k <= kMaxStateCardinality; ++k) {
    StateRegistry r;
    for (std::size_t i = 0; i < k; ++i) r.observe("s" + std::to_string(i));
    std::set<double> seen;
    for (std::size_t i = 0; i < k; ++i) {
      // bits: a one at index i of a k-wide string read MSB first
      std::string bits(k, '0');
      bits[i] = '1';
      double expect = static_cast<double>(std::stoull(bits, nullptr, 2));
      double v = encode_state("s" + std::to_string(i), r);
      CHECK(v == expect);
      seen.insert(v);
    }
    CHECK(seen.size() == k);
  }
}

TEST_CASE("resource encoding") {
  auto m = TfidfModel::fit({"/var/log/app.log", "/var/log/sys.log"});
  auto a = encode_resource("/var/log/app.log", m), b = encode_resource("/var/log/sys.log", m);
  auto dot = [](const Vector& x, const Vector& y) {
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
  };
  CHECK(dot(a.values, a.values) == doctest::Approx(1.0));
  // idf(var)=idf(log)=1, idf(app)=idf(sys)=ln(3/2)+1; tf(log)=2.
  const double r = std::log(1.5) + 1.0;
  CHECK(dot(a.values, b.values) == doctest::Approx(5.0 / (5.0 + r * r)).epsilon(1e-12));
  CHECK(dot(a.values, b.values) == doctest::Approx(0.71681).epsilon(1e-5));
  auto m2 = TfidfModel::fit({"/alpha/beta", "/gamma/delta"});
  CHECK(dot(encode_resource("/alpha/beta", m2).values, encode_resource("/gamma/delta", m2).values) == 0.0);
  CHECK(encode_resource("/zzz", m2).all_oov);
  CHECK(is_resource("/var/log/app.log"));
  CHECK(is_resource("10.0.0.1"));
  CHECK_FALSE(is_resource("corrupt#12"));
}

TEST_CASE("key selection") {
  KeySelectConfig cfg;
  PositionFeatures f{0.5, 0.2, 0.3, 1.0};
  auto all = select_key_parameters({f, f, f}, {10, 10, 10}, cfg);
  CHECK(all.key == std::vector<int>{0, 1, 2});
  auto one = select_key_parameters({f}, {10}, cfg);
  CHECK(one.key == std::vector<int>{0});
  CHECK_FALSE(one.fallback);
  auto few = select_key_parameters({f, PositionFeatures{}}, {1, 1}, cfg);
  CHECK(few.fallback);

  std::vector<PositionFeatures> blobs{{0.90, 0.1, 0.90, 1.0}, {0.92, 0.1, 0.88, 1.0}, {0.88, 0.1, 0.91, 1.0},
                                      {0.02, 0.8, 0.05, 1.0}, {0.01, 0.8, 0.04, 1.0}, {0.03, 0.8, 0.06, 1.0}};
  std::vector<std::size_t> occ(6, 50);
  auto sel = select_key_parameters(blobs, occ, cfg);
  CHECK(sel.chosen_k == 2);
  CHECK(sel.key == std::vector<int>{0, 1, 2});
  // The reported silhouettes agree with the brute-force formula.
  std::vector<std::vector<double>> pts;
  for (const auto& b : blobs) pts.push_back(b.as_point());
  double best = -2;
  int best_k = 0;
  for (auto [k, s] : sel.silhouettes) {
    auto res = tplad::cluster::kmeans(pts, k, cfg.seed);
    CHECK(s == doctest::Approx(brute_silhouette(pts, res.labels)).epsilon(1e-12));
    if (s > best) best = s, best_k = k;
  }
  CHECK(best_k == 2);
  CHECK(brute_silhouette(pts, {0, 0, 0, 1, 1, 1}) == doctest::Approx(best).epsilon(1e-12));
  auto again = select_key_parameters(blobs, occ, cfg);
  CHECK(again.key == sel.key);
  CHECK(again.silhouettes == sel.silhouettes);
}

TEST_CASE("lane merging") {
  Layout l;
  l.slots = {{0, ParamType::Time, 0, 2}, {1, ParamType::Numeric, 2, 1}};
  l.width = 3;
  auto pv = merge_param_vectors({{0, ParamType::Time, {0.0, 1.0}}}, l);
  CHECK(pv.values == Vector{0.0, 1.0, 0.0});
  CHECK(pv.mask == std::vector<bool>{true, false});
  auto none = merge_param_vectors({}, l);
  CHECK(none.values == Vector{0, 0, 0});
  CHECK(none.mask == std::vector<bool>{false, false});
  CHECK_THROWS_AS(merge_param_vectors({{5, ParamType::Time, {0, 1}}}, l), tplad::Error);
  CHECK_THROWS_AS(merge_param_vectors({{1, ParamType::Numeric, {0, 1}}}, l), tplad::Error);
}

TEST_CASE("fitted models: one of each type in lane order, mask soundness") {
  // Positions: resource, state, numeric, user, time (reverse of lane order).
  std::vector<std::vector<std::string>> pos(5);
  const char* states[] = {"UP", "DOWN", "UP", "UP"};
  for (int i = 0; i < 40; ++i) {
    pos[0].push_back("/data/app/part-" + std::to_string(i % 5) + ".dat");
    pos[1].push_back(states[i % 4]);
    pos[2].push_back(std::to_string(100 + (i * 7) % 50));
    pos[3].push_back("user_" + std::to_string(i % 37));
    pos[4].push_back("2024-03-01T08:" + std::to_string(10 + i) + ":00");
  }
  ParamEncConfig cfg;
  cfg.keys.min_samples = 1000;  // keep every position
  auto models = ParamModels::fit({pos}, cfg);
  const auto* tm = models.find(0);
  REQUIRE(tm);
  REQUIRE(tm->layout.slots.size() == 5);
  std::vector<ParamType> order;
  for (const auto& s : tm->layout.slots) order.push_back(s.type);
  CHECK(order == std::vector<ParamType>{ParamType::Time, ParamType::UserId, ParamType::Numeric,
                                        ParamType::State, ParamType::ResourceId});

  std::vector<std::string> entry{"/data/app/part-3.dat", "DOWN", "120", "user_2", "2024-03-01T08:30:00"};
  auto pv = models.encode(0, entry);
  Vector expect;
  const auto& pm_time = tm->positions[4];
  auto tf = *parse_timestamp(entry[4]);
  auto time_lanes = encode_timestamp(tf, pm_time.time_units, models.time_units());
  REQUIRE(time_lanes);
  for (auto x : *time_lanes) expect.push_back(x);
  expect.push_back(encode_user("user_2"));
  expect.push_back(encode_numeric(120.0, tm->positions[2].numeric, cfg.z_cap));
  expect.push_back(encode_state("DOWN", tm->positions[1].states));
  for (auto x : encode_resource(entry[0], models.tfidf()).values) expect.push_back(x);
  REQUIRE(pv.values.size() == expect.size());
  for (std::size_t i = 0; i < expect.size(); ++i) CHECK(pv.values[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  CHECK(pv.mask == std::vector<bool>(5, true));

  auto bad = models.encode(0, {"corrupt#1", "FAULTED", "12x4", "-", "ts_invalid"});
  CHECK(bad.mask == std::vector<bool>(5, false));
  for (double x : bad.values) CHECK(x == 0.0);

  // Mixed: each lane's bit follows its own encoder.
  auto mixed = models.encode(0, {"/data/app/part-1.dat", "FAULTED", "130", "-", "2024-03-01T08:11:00"});
  CHECK(mixed.mask == std::vector<bool>{true, false, true, false, true});

  auto rt = ParamModels::from_json(models.to_json());
  CHECK(rt.to_json() == models.to_json());
  CHECK(rt.encode(0, entry).values == pv.values);
  CHECK_THROWS_AS(models.encode(3, entry), tplad::Error);
  CHECK_THROWS_AS(models.encode(0, {"x"}), tplad::Error);
}
