#include <cmath>
#include <random>

#include "doctest.h"
#include "tplad/embedding.hpp"
#include "tplad/error.hpp"
#include "test_support.hpp"

using namespace tplad::embedding;
using tplad::parser::Template;
using tplad::parser::Token;

namespace {

Template words_tmpl(const std::vector<std::string>& ws, int id = 0) {
  Template t;
  t.id = id;
  for (const auto& w : ws) t.tokens.push_back(w == "<*>" ? Token::wildcard() : Token::lit(w));
  return t;
}

TableProvider table(const std::vector<std::pair<std::string, Vector>>& entries) {
  WordTable wt;
  std::vector<Vector> vs;
  for (const auto& [w, v] : entries) {
    wt.add(w);
    vs.push_back(v);
  }
  return TableProvider(wt, vs, "test");
}

// Direct transliteration: lambda_i = mean cosine to the other words, then
// the weighted mean of lambda_i * v_i with weights lambda_i.
Vector oracle(const std::vector<Vector>& v) {
  const std::size_t n = v.size(), d = v[0].size();
  auto cosv = [&](const Vector& a, const Vector& b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t k = 0; k < d; ++k) {
      ab += a[k] * b[k];
      aa += a[k] * a[k];
      bb += b[k] * b[k];
    }
    return ab / std::sqrt(aa * bb);
  };
  std::vector<double> lam(n, 1.0);
  if (n > 1)
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) s += cosv(v[i], v[j]);
      lam[i] = s / static_cast<double>(n - 1);
    }
  double total = 0;
  for (double l : lam) total += l;
  Vector out(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) out[k] += lam[i] * (lam[i] * v[i][k]) / total;
  return out;
}

}  // namespace

TEST_CASE("word table deduplicates in first-seen order") {
  auto wt = build_word_table({words_tmpl({"open", "file", "<*>"}), words_tmpl({"close", "file", "<*>"})});
  CHECK(wt.words == std::vector<std::string>{"open", "file", "close"});
  CHECK(build_word_table({words_tmpl({"a", "a", "b"})}).words == std::vector<std::string>{"a", "b"});
  CHECK_THROWS_AS(build_word_table({}), tplad::Error);
}

TEST_CASE("word weights by hand") {
  const double r = 1.0 / std::sqrt(2.0);
  std::vector<Vector> v{{1, 0}, {0, 1}, {r, r}};
  CHECK(word_weight(v, 0) == doctest::Approx(0.35355).epsilon(1e-5));
  CHECK(word_weight(v, 1) == doctest::Approx(0.35355).epsilon(1e-5));
  CHECK(word_weight(v, 2) == doctest::Approx(0.70711).epsilon(1e-5));
  CHECK(word_weight({{1, 2}, {1, 2}}, 0) == doctest::Approx(1.0));
  CHECK(word_weight({{1, 0}, {0, 3}}, 1) == doctest::Approx(0.0));
  CHECK(word_weight({{4, 1}}, 0) == 1.0);
}

TEST_CASE("template vectors by hand") {
  const double r = 1.0 / std::sqrt(2.0);
  auto p = table({{"a", {1, 0}}, {"b", {0, 1}}, {"c", {r, r}}, {"d", {0.6, 0.8}}});
  auto tv = template_vector(words_tmpl({"a", "b", "c"}), p);
  auto expect = oracle({{1, 0}, {0, 1}, {r, r}});
  CHECK(tv.values[0] == doctest::Approx(expect[0]).epsilon(1e-12));
  CHECK(tv.values[1] == doctest::Approx(expect[1]).epsilon(1e-12));
  // lambda = (0.35355, 0.35355, 0.70711): (0.125 + 0.35355) / 1.41421
  CHECK(tv.values[0] == doctest::Approx(0.33839).epsilon(1e-4));
  auto same = template_vector(words_tmpl({"d", "d", "<*>"}), p);
  CHECK(same.values[0] == doctest::Approx(0.6));
  CHECK(same.values[1] == doctest::Approx(0.8));
  auto single = template_vector(words_tmpl({"d", "<*>"}), p);
  CHECK(single.values == Vector{0.6, 0.8});
}

TEST_CASE("opposed words fall back to the plain mean") {
  auto pooled = pool_words({{1, 0}, {-1, 0}, {0, 1}});
  CHECK(pooled.fallback);
  CHECK(pooled.values[1] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("nearest template") {
  std::vector<TemplateVector> lib{{0, {1, 0, 0}}, {1, {0, 1, 0}}, {3, {0, 0, 1}}};
  auto [id, sim] = nearest_template({0, 0, 1}, lib);
  CHECK(id == 3);
  CHECK(sim == doctest::Approx(1.0));
  auto tie = nearest_template({1, 1, 0}, lib);
  CHECK(tie.first == 0);
  CHECK_THROWS_AS(nearest_template({1, 0, 0}, {}), tplad::Error);
}

TEST_CASE("unknown words share the designated vector") {
  auto p = table({{"a", {1, 0, 0}}});
  auto u1 = p.vector("zzz"), u2 = p.vector("qqq");
  CHECK(u1 == u2);
  CHECK(u1 == hashed_unit_vector(std::string(kUnknownWord), 3));
  CHECK(u1 != p.vector("a"));
}

TEST_CASE("skip-gram: co-occurring words end up closer") {
  // "login" and "logout" share every context; "disk" never meets them.
  std::vector<std::vector<std::string>> corpus;
  for (int i = 0; i < 200; ++i) {
    corpus.push_back({"user", "login", "session", "ok"});
    corpus.push_back({"user", "logout", "session", "ok"});
    corpus.push_back({"disk", "full", "volume", "warn"});
  }
  SkipGramConfig cfg;
  cfg.dim = 16;
  cfg.epochs = 10;
  auto p = train_builtin_embeddings(corpus, cfg);
  CHECK(cosine(p.vector("login"), p.vector("logout")) > cosine(p.vector("login"), p.vector("disk")));
  for (const auto& v : p.matrix()) {
    double n = 0;
    for (double x : v) n += x * x;
    CHECK(n == doctest::Approx(1.0).epsilon(1e-9));
  }
  auto again = train_builtin_embeddings(corpus, cfg);
  CHECK(again.matrix() == p.matrix());
  CHECK_THROWS_AS(train_builtin_embeddings({{"x", "x"}}, cfg), tplad::Error);
}

TEST_CASE("property: oracle equivalence and invariances") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 1 + rng() % 6, d = 2 + rng() % 6;
    std::vector<std::pair<std::string, Vector>> entries;
    std::vector<std::string> ws;
    std::vector<Vector> vs;
    for (std::size_t i = 0; i < n; ++i) {
      Vector v(d);
      for (auto& x : v) x = nd(rng);
      ws.push_back("w" + std::to_string(i));
      entries.push_back({ws.back(), v});
      vs.push_back(v);
    }
    auto p = table(entries);
    auto pooled = pool_words(vs);
    if (pooled.fallback) continue;
    auto tv = template_vector(words_tmpl(ws), p);
    auto ref = oracle(vs);
    for (std::size_t k = 0; k < d; ++k) CHECK(std::abs(tv.values[k] - ref[k]) < 1e-9);

    // Scale invariance of lambda.
    double c = scale(rng);
    std::vector<Vector> scaled = vs;
    for (auto& v : scaled)
      for (auto& x : v) x *= c;
    for (std::size_t i = 0; i < n; ++i)
      CHECK(word_weight(scaled, i) == doctest::Approx(word_weight(vs, i)).epsilon(1e-12));

    // Permutation invariance.
    std::vector<std::string> perm = ws;
    std::shuffle(perm.begin(), perm.end(), rng);
    auto tp = template_vector(words_tmpl(perm), p);
    for (std::size_t k = 0; k < d; ++k) CHECK(std::abs(tp.values[k] - tv.values[k]) < 1e-9);

    // Argmax invariance under positive rescaling of the query.
    std::vector<TemplateVector> lib;
    for (int t = 0; t < 5; ++t) {
      Vector v(d);
      for (auto& x : v) x = nd(rng);
      lib.push_back({t, v});
    }
    Vector q = tv.values, q2 = q;
    for (auto& x : q2) x *= c;
    CHECK(nearest_template(q, lib).first == nearest_template(q2, lib).first);
  }
}

TEST_CASE("subprocess provider speaks line-delimited JSON") {
  const std::string cmd = "python3 " + (std::filesystem::path(TPLAD_FIXTURE_DIR).parent_path() / "tools" / "hash_embed.py").string() + " 8";
  SubprocessProvider p(cmd, 8);
  auto a = p.vector("disk");
  CHECK(a.size() == 8);
  CHECK(p.vector("disk") == a);
  auto vs = p.vectors({"disk", "full", "disk"});
  CHECK(vs[0] == vs[2]);
  auto tv = template_vector(words_tmpl({"disk", "full", "<*>"}), p);
  CHECK(tv.values.size() == 8);
  SubprocessProvider wrong(cmd, 5);
  CHECK_THROWS_AS(wrong.vector("disk"), tplad::Error);
}
