#pragma once

// Next-template predictor: bidirectional LSTM over the window, additive
// attention against a learned query, softmax over the trained classes.
// Gradients are derived by hand; grad_check compares them against central
// finite differences.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace tplad::seqmodel {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct SeqModelConfig {
  std::size_t input_dim = 0;
  std::size_t hidden_units = 256;
  std::size_t attention_units = 0;  // 0: same as hidden_units
  std::size_t window_w = 20;
  std::size_t classes = 0;
  std::size_t candidate_g = 9;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 5.0;
  int epochs = 10;
  std::size_t batch = 32;
  std::uint64_t seed = 42;

  std::size_t attention() const { return attention_units ? attention_units : hidden_units; }
  void validate() const;
};

struct LstmWeights {
  Matrix wx;  // 4H x D, gate order input, forget, cell, output
  Matrix wh;  // 4H x H
  Matrix b;   // 4H x 1
};

struct ModelWeights {
  LstmWeights fwd;
  LstmWeights bwd;
  Matrix att_w;  // A x 2H
  Matrix att_b;  // A x 1
  Matrix att_v;  // A x 1 (query)
  Matrix out_w;  // C x 2H
  Matrix out_b;  // C x 1

  static ModelWeights zeros(const SeqModelConfig& cfg);
  /// Xavier-uniform matrices, zero biases.
  static ModelWeights xavier(const SeqModelConfig& cfg, std::uint64_t seed);

  std::vector<std::pair<std::string, Matrix*>> tensors();
  std::vector<std::pair<std::string, const Matrix*>> tensors() const;
  std::size_t input_dim() const { return static_cast<std::size_t>(fwd.wx.cols()); }
  std::size_t hidden() const { return static_cast<std::size_t>(fwd.wh.cols()); }
  std::size_t classes() const { return static_cast<std::size_t>(out_w.rows()); }
  bool finite() const;

  /// Little-endian: tensor count, then per tensor its name, u32 rows, u32 cols
  /// and f64 values column-major.
  void write(std::ostream& os) const;
  static ModelWeights read(std::istream& is);
};

/// Window entries in stream order (D x N) plus window starts and targets.
/// Window i covers columns [starts[i], starts[i] + w) and predicts targets[i].
struct WindowSet {
  Matrix entries;
  std::vector<std::size_t> starts;
  std::vector<int> targets;
  std::size_t window = 0;

  std::size_t size() const { return starts.size(); }
};

struct TrainingWindow {
  Matrix inputs;  // D x w
  int target = 0;
};

WindowSet pack(const std::vector<TrainingWindow>& windows);

struct ForwardResult {
  Vector probs;
  Vector attention;  // one weight per window position
};

/// Throws ShapeMismatch when the input does not fit the weights.
ForwardResult forward_full(const Matrix& inputs, const ModelWeights& weights);
Vector forward(const Matrix& inputs, const ModelWeights& weights);

/// Mean cross-entropy of a batch and its exact gradient.
double loss_and_grad(const WindowSet& data, const std::vector<std::size_t>& batch,
                     const ModelWeights& weights, ModelWeights* grad);

struct TrainStats {
  std::vector<double> epoch_loss;  // mean loss over each epoch
  double initial_loss = 0.0;       // before the first update
};

/// Adam on next-template cross-entropy with global-norm clipping. Throws
/// DivergedLoss on a non-finite loss.
ModelWeights train(const WindowSet& data, const SeqModelConfig& cfg, TrainStats* stats = nullptr);
ModelWeights train(const WindowSet& data, const SeqModelConfig& cfg, ModelWeights init,
                   TrainStats* stats = nullptr);

double mean_loss(const WindowSet& data, const ModelWeights& weights);

/// Max over weight tensors of |analytic - numeric| / (|analytic| + |numeric|)
/// (Euclidean norms), numeric gradients by central differences.
double grad_check(const ModelWeights& weights, const TrainingWindow& window, double eps = 1e-5);

/// Ids of the g largest probabilities, descending; ties to the smaller id.
std::vector<int> top_g(const Vector& probs, std::size_t g);

}  // namespace tplad::seqmodel
