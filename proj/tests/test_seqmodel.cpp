#include <cstring>
#include <random>
#include <sstream>

#include "doctest.h"
#include "tplad/error.hpp"
#include "tplad/seqmodel.hpp"

using namespace tplad::seqmodel;

namespace {

SeqModelConfig small_cfg() {
  SeqModelConfig c;
  c.input_dim = 3;
  c.hidden_units = 4;
  c.attention_units = 3;
  c.window_w = 5;
  c.classes = 4;
  c.epochs = 30;
  c.batch = 8;
  c.lr = 1e-2;
  return c;
}

TrainingWindow random_window(std::mt19937_64& rng, const SeqModelConfig& c) {
  std::normal_distribution<double> n(0.0, 1.0);
  TrainingWindow tw;
  tw.inputs.resize(static_cast<Eigen::Index>(c.input_dim), static_cast<Eigen::Index>(c.window_w));
  for (Eigen::Index i = 0; i < tw.inputs.size(); ++i) tw.inputs.data()[i] = n(rng);
  tw.target = static_cast<int>(rng() % c.classes);
  return tw;
}

// One-hot cyclic sequence 0,1,2,3,0,1,... ; the next class is determined.
WindowSet cyclic(const SeqModelConfig& c, std::size_t n) {
  std::vector<TrainingWindow> ws;
  for (std::size_t s = 0; s < n; ++s) {
    TrainingWindow tw;
    tw.inputs = Matrix::Zero(static_cast<Eigen::Index>(c.input_dim), static_cast<Eigen::Index>(c.window_w));
    for (std::size_t t = 0; t < c.window_w; ++t) {
      auto k = (s + t) % c.classes;
      if (k < c.input_dim) tw.inputs(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(t)) = 1.0;
    }
    tw.target = static_cast<int>((s + c.window_w) % c.classes);
    ws.push_back(tw);
  }
  return pack(ws);
}

}  // namespace

TEST_CASE("analytic gradients agree with finite differences") {
  auto c = small_cfg();
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 3; ++trial) {
    auto w = ModelWeights::xavier(c, 100 + trial);
    // Nonzero biases exercise the bias paths too.
    std::normal_distribution<double> n(0.0, 0.3);
    for (auto* b : {&w.fwd.b, &w.bwd.b, &w.att_b, &w.out_b})
      for (Eigen::Index i = 0; i < b->size(); ++i) b->data()[i] = n(rng);
    CHECK(grad_check(w, random_window(rng, c)) < 1e-5);
  }
}

TEST_CASE("forward output is a distribution and attention sums to one") {
  auto c = small_cfg();
  std::mt19937_64 rng(1);
  auto w = ModelWeights::xavier(c, 3);
  for (int i = 0; i < 20; ++i) {
    auto r = forward_full(random_window(rng, c).inputs, w);
    CHECK(r.probs.size() == 4);
    CHECK(r.probs.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.probs.minCoeff() >= 0.0);
    CHECK(r.attention.sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("training lowers the loss on a learnable sequence") {
  auto c = small_cfg();
  auto data = cyclic(c, 64);
  TrainStats st;
  auto w = train(data, c, &st);
  REQUIRE(st.epoch_loss.size() == 30);
  CHECK(st.epoch_loss.back() < st.initial_loss);
  CHECK(mean_loss(data, w) < 0.5 * st.initial_loss);
}

TEST_CASE("training is deterministic for a fixed seed") {
  auto c = small_cfg();
  c.epochs = 3;
  auto data = cyclic(c, 32);
  auto a = train(data, c, nullptr);
  auto b = train(data, c, nullptr);
  std::ostringstream sa, sb;
  a.write(sa);
  b.write(sb);
  CHECK(sa.str() == sb.str());
}

TEST_CASE("weights survive a binary round trip") {
  auto c = small_cfg();
  auto w = ModelWeights::xavier(c, 9);
  std::ostringstream os;
  w.write(os);
  std::istringstream is(os.str());
  auto r = ModelWeights::read(is);
  std::ostringstream os2;
  r.write(os2);
  CHECK(os.str() == os2.str());
}

TEST_CASE("truncated weight data is rejected") {
  auto w = ModelWeights::xavier(small_cfg(), 9);
  std::ostringstream os;
  w.write(os);
  auto s = os.str();
  std::istringstream is(s.substr(0, s.size() / 2));
  CHECK_THROWS_AS(ModelWeights::read(is), tplad::Error);
}

TEST_CASE("input dimension mismatch is a shape error") {
  auto c = small_cfg();
  auto w = ModelWeights::xavier(c, 1);
  Matrix bad = Matrix::Zero(5, 5);
  try {
    forward(bad, w);
    FAIL("expected throw");
  } catch (const tplad::Error& e) {
    CHECK(e.kind() == tplad::ErrorKind::ShapeMismatch);
  }
}

TEST_CASE("top_g orders by probability, ties to smaller id") {
  Vector p(5);
  p << 0.1, 0.3, 0.1, 0.3, 0.2;
  auto t = top_g(p, 3);
  CHECK(t == std::vector<int>{1, 3, 4});
  CHECK(top_g(p, 10).size() == 5);
  CHECK(top_g(p, 5) == std::vector<int>{1, 3, 4, 0, 2});
}

TEST_CASE("top_g small cases") {
  Vector a(3);
  a << 0.5, 0.3, 0.2;
  CHECK(top_g(a, 2) == std::vector<int>{0, 1});
  Vector u = Vector::Constant(3, 1.0 / 3.0);
  CHECK(top_g(u, 2) == std::vector<int>{0, 1});
  Vector b(3);
  b << 0.1, 0.2, 0.7;
  CHECK(top_g(b, 2) == std::vector<int>{2, 1});
}

TEST_CASE("zero weights give a uniform distribution") {
  auto c = small_cfg();
  auto w = ModelWeights::zeros(c);
  std::mt19937_64 rng(4);
  auto p = forward(random_window(rng, c).inputs, w);
  for (Eigen::Index i = 0; i < p.size(); ++i) CHECK(p(i) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("A B A B with w=2 is learned") {
  SeqModelConfig c;
  c.input_dim = 2;
  c.hidden_units = 6;
  c.window_w = 2;
  c.classes = 2;
  c.candidate_g = 1;
  c.epochs = 60;
  c.batch = 8;
  c.lr = 0.02;
  std::vector<TrainingWindow> ws;
  for (int s = 0; s < 40; ++s) {
    TrainingWindow tw;
    tw.inputs = Matrix::Zero(2, 2);
    tw.inputs(s % 2, 0) = 1.0;
    tw.inputs((s + 1) % 2, 1) = 1.0;
    tw.target = s % 2;
    ws.push_back(tw);
  }
  auto data = pack(ws);
  auto w = train(data, c);
  for (const auto& tw : ws) CHECK(forward(tw.inputs, w)(tw.target) > 0.9);
}

TEST_CASE("a single window is memorized") {
  auto c = small_cfg();
  c.epochs = 300;
  c.lr = 0.05;
  std::mt19937_64 rng(12);
  auto tw = random_window(rng, c);
  auto data = pack({tw});
  auto init = ModelWeights::xavier(c, c.seed);
  double before = forward(tw.inputs, init)(tw.target);
  auto w = train(data, c, init);
  double after = forward(tw.inputs, w)(tw.target);
  CHECK(after > before);
  CHECK(after > 0.99);
}

TEST_CASE("learning rate zero leaves weights and loss unchanged") {
  auto c = small_cfg();
  c.lr = 0.0;
  c.epochs = 2;
  auto data = cyclic(c, 16);
  auto init = ModelWeights::xavier(c, 5);
  auto w = train(data, c, init);
  std::ostringstream a, b;
  init.write(a);
  w.write(b);
  CHECK(a.str() == b.str());
  CHECK(mean_loss(data, w) == mean_loss(data, init));
}

TEST_CASE("save, load, forward is bit-identical") {
  auto c = small_cfg();
  auto w = ModelWeights::xavier(c, 21);
  std::mt19937_64 rng(2);
  auto x = random_window(rng, c).inputs;
  std::ostringstream os;
  w.write(os);
  std::istringstream is(os.str());
  auto r = ModelWeights::read(is);
  Vector p = forward(x, w), q = forward(x, r);
  CHECK(std::memcmp(p.data(), q.data(), sizeof(double) * static_cast<std::size_t>(p.size())) == 0);
}

TEST_CASE("gradient check over 20 seeds, zero input and doubled eps") {
  SeqModelConfig c;
  c.input_dim = 3;
  c.hidden_units = 8;
  c.window_w = 4;
  c.classes = 5;
  std::mt19937_64 rng(99);
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto w = ModelWeights::xavier(c, s);
    auto tw = random_window(rng, c);
    CHECK(grad_check(w, tw) < 1e-4);
    CHECK(grad_check(w, tw, 2e-5) < 1e-3);
  }
  auto w = ModelWeights::xavier(c, 77);
  TrainingWindow zero{Matrix::Zero(3, 4), 2};
  CHECK(grad_check(w, zero) < 1e-4);
}
