#include "tplad/seqmodel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tplad/binio.hpp"
#include "tplad/error.hpp"

namespace tplad::seqmodel {

namespace {

Matrix sigmoid(const Matrix& z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }
Matrix tanh_m(const Matrix& z) { return z.array().tanh().matrix(); }

struct DirCache {
  std::vector<Matrix> i, f, g, o, c, tc, h;
};

void lstm_forward(const LstmWeights& w, const std::vector<Matrix>& xs, bool reverse,
                  DirCache& cache) {
  const auto T = xs.size();
  const auto H = w.wh.cols();
  const auto B = xs.front().cols();
  for (auto* v : {&cache.i, &cache.f, &cache.g, &cache.o, &cache.c, &cache.tc, &cache.h})
    v->assign(T, Matrix());
  Matrix hprev = Matrix::Zero(H, B), cprev = Matrix::Zero(H, B);
  for (std::size_t k = 0; k < T; ++k) {
    const std::size_t t = reverse ? T - 1 - k : k;
    Matrix z = w.wx * xs[t] + w.wh * hprev;
    z.colwise() += w.b.col(0);
    cache.i[t] = sigmoid(z.topRows(H));
    cache.f[t] = sigmoid(z.middleRows(H, H));
    cache.g[t] = tanh_m(z.middleRows(2 * H, H));
    cache.o[t] = sigmoid(z.bottomRows(H));
    cache.c[t] = cache.f[t].cwiseProduct(cprev) + cache.i[t].cwiseProduct(cache.g[t]);
    cache.tc[t] = tanh_m(cache.c[t]);
    cache.h[t] = cache.o[t].cwiseProduct(cache.tc[t]);
    hprev = cache.h[t];
    cprev = cache.c[t];
  }
}

void lstm_backward(const LstmWeights& w, const std::vector<Matrix>& xs, bool reverse,
                   const DirCache& cache, const std::vector<Matrix>& dh_in, LstmWeights& grad) {
  const auto T = xs.size();
  const auto H = w.wh.cols();
  const auto B = xs.front().cols();
  Matrix dh_next = Matrix::Zero(H, B), dc_next = Matrix::Zero(H, B);
  Matrix dz(4 * H, B);
  const Matrix zero = Matrix::Zero(H, B);
  for (std::size_t kk = T; kk-- > 0;) {
    const std::size_t t = reverse ? T - 1 - kk : kk;
    const bool first = kk == 0;
    const std::size_t tp = reverse ? t + 1 : t - 1;
    const Matrix& hprev = first ? zero : cache.h[tp];
    const Matrix& cprev = first ? zero : cache.c[tp];

    Matrix dh = dh_in[t] + dh_next;
    Matrix dc = dc_next + dh.cwiseProduct(cache.o[t])
                              .cwiseProduct((1.0 - cache.tc[t].array().square()).matrix());
    const auto& i = cache.i[t];
    const auto& f = cache.f[t];
    const auto& g = cache.g[t];
    const auto& o = cache.o[t];
    dz.topRows(H) = (dc.array() * g.array() * i.array() * (1.0 - i.array())).matrix();
    dz.middleRows(H, H) = (dc.array() * cprev.array() * f.array() * (1.0 - f.array())).matrix();
    dz.middleRows(2 * H, H) = (dc.array() * i.array() * (1.0 - g.array().square())).matrix();
    dz.bottomRows(H) = (dh.array() * cache.tc[t].array() * o.array() * (1.0 - o.array())).matrix();

    grad.wx.noalias() += dz * xs[t].transpose();
    grad.wh.noalias() += dz * hprev.transpose();
    grad.b.col(0) += dz.rowwise().sum();
    dh_next.noalias() = w.wh.transpose() * dz;
    dc_next = dc.cwiseProduct(f);
  }
}

struct BatchCache {
  std::vector<Matrix> xs;  // per step, D x B
  DirCache fwd, bwd;
  std::vector<Matrix> hs;  // per step, 2H x B
  std::vector<Matrix> u;   // per step, A x B
  Matrix alpha;            // T x B
  Matrix ctx;              // 2H x B
  Matrix probs;            // C x B
};

void check_shapes(const ModelWeights& w, std::size_t input_rows) {
  if (static_cast<std::size_t>(w.fwd.wx.cols()) != input_rows)
    throw Error(ErrorKind::ShapeMismatch, "input dimension " + std::to_string(input_rows) +
                                              " does not match model input " +
                                              std::to_string(w.fwd.wx.cols()));
}

void forward_batch(const ModelWeights& w, BatchCache& bc) {
  const auto T = bc.xs.size();
  const auto H = w.hidden();
  const auto B = bc.xs.front().cols();
  lstm_forward(w.fwd, bc.xs, false, bc.fwd);
  lstm_forward(w.bwd, bc.xs, true, bc.bwd);
  bc.hs.assign(T, Matrix());
  bc.u.assign(T, Matrix());
  bc.alpha.resize(static_cast<Eigen::Index>(T), B);
  for (std::size_t t = 0; t < T; ++t) {
    bc.hs[t].resize(static_cast<Eigen::Index>(2 * H), B);
    bc.hs[t].topRows(static_cast<Eigen::Index>(H)) = bc.fwd.h[t];
    bc.hs[t].bottomRows(static_cast<Eigen::Index>(H)) = bc.bwd.h[t];
    Matrix pre = w.att_w * bc.hs[t];
    pre.colwise() += w.att_b.col(0);
    bc.u[t] = tanh_m(pre);
    bc.alpha.row(static_cast<Eigen::Index>(t)) = w.att_v.col(0).transpose() * bc.u[t];
  }
  for (Eigen::Index b = 0; b < B; ++b) {
    auto col = bc.alpha.col(b);
    double mx = col.maxCoeff();
    col = (col.array() - mx).exp().matrix();
    col /= col.sum();
  }
  bc.ctx = Matrix::Zero(static_cast<Eigen::Index>(2 * H), B);
  for (std::size_t t = 0; t < T; ++t)
    bc.ctx += bc.hs[t] * bc.alpha.row(static_cast<Eigen::Index>(t)).asDiagonal();
  Matrix logits = w.out_w * bc.ctx;
  logits.colwise() += w.out_b.col(0);
  bc.probs.resize(logits.rows(), B);
  for (Eigen::Index b = 0; b < B; ++b) {
    double mx = logits.col(b).maxCoeff();
    Vector e = (logits.col(b).array() - mx).exp().matrix();
    bc.probs.col(b) = e / e.sum();
  }
}

void gather(const WindowSet& data, const std::vector<std::size_t>& batch, BatchCache& bc) {
  const auto D = data.entries.rows();
  const auto B = static_cast<Eigen::Index>(batch.size());
  bc.xs.assign(data.window, Matrix(D, B));
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto s = data.starts[batch[static_cast<std::size_t>(b)]];
    for (std::size_t t = 0; t < data.window; ++t)
      bc.xs[t].col(b) = data.entries.col(static_cast<Eigen::Index>(s + t));
  }
}

void zero_like(ModelWeights& g, const ModelWeights& w) {
  auto gt = g.tensors();
  auto wt = w.tensors();
  for (std::size_t i = 0; i < wt.size(); ++i) *gt[i].second = Matrix::Zero(wt[i].second->rows(), wt[i].second->cols());
}

void xavier_fill(Matrix& m, std::mt19937_64& rng, double fan_in, double fan_out) {
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> u(-a, a);
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = u(rng);
}

}  // namespace

void SeqModelConfig::validate() const {
  if (hidden_units < 1) throw Error(ErrorKind::ConfigError, "hidden_units must be >= 1");
  if (window_w < 2) throw Error(ErrorKind::ConfigError, "window_w must be >= 2");
  if (classes < 1) throw Error(ErrorKind::ConfigError, "classes must be >= 1");
  if (input_dim < 1) throw Error(ErrorKind::ConfigError, "input_dim must be >= 1");
  if (batch < 1) throw Error(ErrorKind::ConfigError, "batch must be >= 1");
}

ModelWeights ModelWeights::zeros(const SeqModelConfig& cfg) {
  const auto D = static_cast<Eigen::Index>(cfg.input_dim);
  const auto H = static_cast<Eigen::Index>(cfg.hidden_units);
  const auto A = static_cast<Eigen::Index>(cfg.attention());
  const auto C = static_cast<Eigen::Index>(cfg.classes);
  ModelWeights w;
  for (auto* l : {&w.fwd, &w.bwd}) {
    l->wx = Matrix::Zero(4 * H, D);
    l->wh = Matrix::Zero(4 * H, H);
    l->b = Matrix::Zero(4 * H, 1);
  }
  w.att_w = Matrix::Zero(A, 2 * H);
  w.att_b = Matrix::Zero(A, 1);
  w.att_v = Matrix::Zero(A, 1);
  w.out_w = Matrix::Zero(C, 2 * H);
  w.out_b = Matrix::Zero(C, 1);
  return w;
}

ModelWeights ModelWeights::xavier(const SeqModelConfig& cfg, std::uint64_t seed) {
  auto w = zeros(cfg);
  std::mt19937_64 rng(seed);
  const double D = static_cast<double>(cfg.input_dim);
  const double H = static_cast<double>(cfg.hidden_units);
  const double A = static_cast<double>(cfg.attention());
  const double C = static_cast<double>(cfg.classes);
  for (auto* l : {&w.fwd, &w.bwd}) {
    xavier_fill(l->wx, rng, D, 4 * H);
    xavier_fill(l->wh, rng, H, 4 * H);
  }
  xavier_fill(w.att_w, rng, 2 * H, A);
  xavier_fill(w.att_v, rng, A, 1);
  xavier_fill(w.out_w, rng, 2 * H, C);
  return w;
}

std::vector<std::pair<std::string, Matrix*>> ModelWeights::tensors() {
  return {{"fwd.wx", &fwd.wx}, {"fwd.wh", &fwd.wh}, {"fwd.b", &fwd.b},
          {"bwd.wx", &bwd.wx}, {"bwd.wh", &bwd.wh}, {"bwd.b", &bwd.b},
          {"att.w", &att_w},   {"att.b", &att_b},   {"att.v", &att_v},
          {"out.w", &out_w},   {"out.b", &out_b}};
}

std::vector<std::pair<std::string, const Matrix*>> ModelWeights::tensors() const {
  std::vector<std::pair<std::string, const Matrix*>> out;
  for (auto& [name, m] : const_cast<ModelWeights*>(this)->tensors()) out.emplace_back(name, m);
  return out;
}

bool ModelWeights::finite() const {
  for (const auto& [name, m] : tensors())
    if (!m->allFinite()) return false;
  return true;
}

void ModelWeights::write(std::ostream& os) const {
  auto ts = tensors();
  binio::put_u32(os, static_cast<std::uint32_t>(ts.size()));
  for (const auto& [name, m] : ts) {
    binio::put_str(os, name);
    binio::put_u32(os, static_cast<std::uint32_t>(m->rows()));
    binio::put_u32(os, static_cast<std::uint32_t>(m->cols()));
    for (Eigen::Index i = 0; i < m->size(); ++i) binio::put_f64(os, m->data()[i]);
  }
}

ModelWeights ModelWeights::read(std::istream& is) {
  ModelWeights w;
  auto ts = w.tensors();
  auto n = binio::get_u32(is);
  if (n != ts.size()) throw Error(ErrorKind::FormatError, "unexpected weight tensor count");
  for (auto& [name, m] : ts) {
    auto got = binio::get_str(is);
    if (got != name) throw Error(ErrorKind::FormatError, "expected tensor " + name + ", found " + got);
    auto rows = binio::get_u32(is);
    auto cols = binio::get_u32(is);
    if (static_cast<std::uint64_t>(rows) * cols > (1ULL << 28))
      throw Error(ErrorKind::FormatError, "tensor too large");
    m->resize(rows, cols);
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = binio::get_f64(is);
  }
  const auto H = w.fwd.wh.cols();
  if (w.fwd.wh.rows() != 4 * H || w.bwd.wh.rows() != 4 * H || w.att_w.cols() != 2 * H ||
      w.out_w.cols() != 2 * H || w.bwd.wx.cols() != w.fwd.wx.cols() ||
      w.out_b.rows() != w.out_w.rows() || w.att_v.rows() != w.att_w.rows())
    throw Error(ErrorKind::ShapeMismatch, "inconsistent weight shapes");
  if (!w.finite()) throw Error(ErrorKind::FormatError, "non-finite weights");
  return w;
}

WindowSet pack(const std::vector<TrainingWindow>& windows) {
  WindowSet ws;
  if (windows.empty()) return ws;
  const auto D = windows.front().inputs.rows();
  const auto w = windows.front().inputs.cols();
  ws.window = static_cast<std::size_t>(w);
  ws.entries.resize(D, w * static_cast<Eigen::Index>(windows.size()));
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (windows[i].inputs.rows() != D || windows[i].inputs.cols() != w)
      throw Error(ErrorKind::ShapeMismatch, "windows differ in shape");
    ws.entries.middleCols(static_cast<Eigen::Index>(i) * w, w) = windows[i].inputs;
    ws.starts.push_back(i * static_cast<std::size_t>(w));
    ws.targets.push_back(windows[i].target);
  }
  return ws;
}

ForwardResult forward_full(const Matrix& inputs, const ModelWeights& weights) {
  check_shapes(weights, static_cast<std::size_t>(inputs.rows()));
  if (inputs.cols() < 1) throw Error(ErrorKind::ShapeMismatch, "empty window");
  BatchCache bc;
  bc.xs.reserve(static_cast<std::size_t>(inputs.cols()));
  for (Eigen::Index t = 0; t < inputs.cols(); ++t) bc.xs.push_back(inputs.col(t));
  forward_batch(weights, bc);
  return {bc.probs.col(0), bc.alpha.col(0)};
}

Vector forward(const Matrix& inputs, const ModelWeights& weights) {
  return forward_full(inputs, weights).probs;
}

double loss_and_grad(const WindowSet& data, const std::vector<std::size_t>& batch,
                     const ModelWeights& w, ModelWeights* grad) {
  check_shapes(w, static_cast<std::size_t>(data.entries.rows()));
  BatchCache bc;
  gather(data, batch, bc);
  forward_batch(w, bc);
  const auto B = static_cast<Eigen::Index>(batch.size());
  const auto C = static_cast<Eigen::Index>(w.classes());
  double loss = 0.0;
  Matrix dlogits = bc.probs;
  for (Eigen::Index b = 0; b < B; ++b) {
    const int target = data.targets[batch[static_cast<std::size_t>(b)]];
    if (target < 0 || target >= C) throw Error(ErrorKind::ShapeMismatch, "target outside class range");
    loss -= std::log(std::max(bc.probs(target, b), 1e-300));
    dlogits(target, b) -= 1.0;
  }
  loss /= static_cast<double>(B);
  if (!grad) return loss;

  zero_like(*grad, w);
  dlogits /= static_cast<double>(B);
  const auto T = bc.xs.size();
  const auto H = static_cast<Eigen::Index>(w.hidden());

  grad->out_w.noalias() += dlogits * bc.ctx.transpose();
  grad->out_b.col(0) += dlogits.rowwise().sum();
  Matrix dctx = w.out_w.transpose() * dlogits;  // 2H x B

  // Attention pooling.
  Matrix dalpha(static_cast<Eigen::Index>(T), B);
  for (std::size_t t = 0; t < T; ++t)
    dalpha.row(static_cast<Eigen::Index>(t)) = (dctx.array() * bc.hs[t].array()).colwise().sum();
  Matrix de(static_cast<Eigen::Index>(T), B);
  for (Eigen::Index b = 0; b < B; ++b) {
    double s = bc.alpha.col(b).dot(dalpha.col(b));
    de.col(b) = (bc.alpha.col(b).array() * (dalpha.col(b).array() - s)).matrix();
  }
  std::vector<Matrix> dh_f(T), dh_b(T);
  for (std::size_t t = 0; t < T; ++t) {
    const auto ti = static_cast<Eigen::Index>(t);
    Matrix dH = dctx * bc.alpha.row(ti).asDiagonal();
    Matrix du = w.att_v * de.row(ti);  // A x B
    grad->att_v.col(0) += bc.u[t] * de.row(ti).transpose();
    Matrix dpre = (du.array() * (1.0 - bc.u[t].array().square())).matrix();
    grad->att_w.noalias() += dpre * bc.hs[t].transpose();
    grad->att_b.col(0) += dpre.rowwise().sum();
    dH.noalias() += w.att_w.transpose() * dpre;
    dh_f[t] = dH.topRows(H);
    dh_b[t] = dH.bottomRows(H);
  }
  lstm_backward(w.fwd, bc.xs, false, bc.fwd, dh_f, grad->fwd);
  lstm_backward(w.bwd, bc.xs, true, bc.bwd, dh_b, grad->bwd);
  return loss;
}

double mean_loss(const WindowSet& data, const ModelWeights& weights) {
  if (data.size() == 0) return 0.0;
  double total = 0.0;
  constexpr std::size_t chunk = 256;
  for (std::size_t s = 0; s < data.size(); s += chunk) {
    std::vector<std::size_t> idx;
    for (std::size_t i = s; i < std::min(data.size(), s + chunk); ++i) idx.push_back(i);
    total += loss_and_grad(data, idx, weights, nullptr) * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(data.size());
}

ModelWeights train(const WindowSet& data, const SeqModelConfig& cfg, TrainStats* stats) {
  return train(data, cfg, ModelWeights::xavier(cfg, cfg.seed), stats);
}

ModelWeights train(const WindowSet& data, const SeqModelConfig& cfg, ModelWeights w,
                   TrainStats* stats) {
  cfg.validate();
  if (data.size() == 0) throw Error(ErrorKind::TooFewSamples, "no training windows");
  if (data.window != cfg.window_w)
    throw Error(ErrorKind::ShapeMismatch, "window length differs from window_w");
  if (stats) stats->initial_loss = mean_loss(data, w);

  ModelWeights grad, m, v;
  zero_like(grad, w);
  zero_like(m, w);
  zero_like(v, w);
  auto wt = w.tensors();
  auto gt = grad.tensors();
  auto mt = m.tensors();
  auto vt = v.tensors();

  std::mt19937_64 rng(cfg.seed ^ 0x5eedULL);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::uint64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t s = 0; s < order.size(); s += cfg.batch) {
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(s),
                                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), s + cfg.batch)));
      double loss = loss_and_grad(data, batch, w, &grad);
      if (!std::isfinite(loss))
        throw Error(ErrorKind::DivergedLoss, "loss became non-finite in epoch " + std::to_string(epoch));
      epoch_loss += loss * static_cast<double>(batch.size());

      double sq = 0.0;
      for (const auto& [name, g] : gt) sq += g->squaredNorm();
      const double gnorm = std::sqrt(sq);
      const double scale = (cfg.clip_norm > 0.0 && gnorm > cfg.clip_norm) ? cfg.clip_norm / gnorm : 1.0;

      ++step;
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (std::size_t i = 0; i < wt.size(); ++i) {
        Matrix g = *gt[i].second * scale;
        *mt[i].second = cfg.beta1 * *mt[i].second + (1.0 - cfg.beta1) * g;
        *vt[i].second = cfg.beta2 * *vt[i].second + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        wt[i].second->array() -= cfg.lr * (mt[i].second->array() / bc1) /
                                 ((vt[i].second->array() / bc2).sqrt() + cfg.adam_eps);
      }
    }
    epoch_loss /= static_cast<double>(order.size());
    if (stats) stats->epoch_loss.push_back(epoch_loss);
  }
  if (!w.finite()) throw Error(ErrorKind::DivergedLoss, "weights became non-finite");
  return w;
}

double grad_check(const ModelWeights& weights, const TrainingWindow& window, double eps) {
  auto data = pack({window});
  std::vector<std::size_t> batch{0};
  ModelWeights analytic;
  loss_and_grad(data, batch, weights, &analytic);
  ModelWeights probe = weights;
  auto pt = probe.tensors();
  auto at = analytic.tensors();
  double worst = 0.0;
  for (std::size_t k = 0; k < pt.size(); ++k) {
    Matrix& m = *pt[k].second;
    Matrix numeric(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double orig = m.data()[i];
      m.data()[i] = orig + eps;
      const double lp = loss_and_grad(data, batch, probe, nullptr);
      m.data()[i] = orig - eps;
      const double lm = loss_and_grad(data, batch, probe, nullptr);
      m.data()[i] = orig;
      numeric.data()[i] = (lp - lm) / (2.0 * eps);
    }
    const double denom = at[k].second->norm() + numeric.norm();
    if (denom < 1e-10) continue;
    worst = std::max(worst, (*at[k].second - numeric).norm() / denom);
  }
  return worst;
}

std::vector<int> top_g(const Vector& probs, std::size_t g) {
  std::vector<int> ids(static_cast<std::size_t>(probs.size()));
  std::iota(ids.begin(), ids.end(), 0);
  g = std::min(g, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(g), ids.end(),
                    [&](int a, int b) {
                      return probs(a) != probs(b) ? probs(a) > probs(b) : a < b;
                    });
  ids.resize(g);
  return ids;
}

}  // namespace tplad::seqmodel
