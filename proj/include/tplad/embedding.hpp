#pragma once

// Template vectorization: a word table over template literals, word vectors
// from a pluggable provider, and similarity-weighted pooling into one vector
// per template.

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tplad/parser.hpp"

namespace tplad::embedding {

using Vector = std::vector<double>;

inline constexpr int kEmbeddingVersion = 1;
inline constexpr double kWeightEpsilon = 1e-12;
// Every out-of-vocabulary word maps to the hashed vector of this token, so a
// template of unknown words pools to one fixed direction.
inline constexpr std::string_view kUnknownWord = "<unk>";

struct WordTable {
  std::vector<std::string> words;
  std::unordered_map<std::string, int> index;

  std::size_t size() const noexcept { return words.size(); }
  bool contains(const std::string& w) const { return index.count(w) != 0; }
  /// Appends if absent; returns the dense id.
  int add(const std::string& w);
};

/// Lowercased literal words of a template, pure-punctuation tokens dropped.
/// Falls back to every lowercased literal when the filter leaves nothing.
std::vector<std::string> template_words(const parser::Template& tmpl);

WordTable build_word_table(const std::vector<parser::Template>& templates);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string name() const = 0;
  virtual std::size_t dim() const = 0;
  /// Same word, same vector. Out-of-vocabulary words get the provider's
  /// designated unknown vector.
  virtual Vector vector(const std::string& word) const = 0;
  virtual std::vector<Vector> vectors(const std::vector<std::string>& words) const;
};

/// Deterministic unit vector derived from the word's hash.
Vector hashed_unit_vector(const std::string& word, std::size_t dim);

/// Lookup table provider (the trained skip-gram model, or an imported table).
class TableProvider final : public EmbeddingProvider {
 public:
  TableProvider(WordTable table, std::vector<Vector> vectors, std::string name = "skipgram");

  std::string name() const override { return name_; }
  std::size_t dim() const override { return dim_; }
  Vector vector(const std::string& word) const override;
  bool contains(const std::string& word) const { return table_.contains(word); }

  const WordTable& table() const noexcept { return table_; }
  const std::vector<Vector>& matrix() const noexcept { return vectors_; }

  /// `{version, dim, words:[...], vectors:[[...]]}`
  nlohmann::json to_json() const;
  static TableProvider from_json(const nlohmann::json& j);

 private:
  WordTable table_;
  std::vector<Vector> vectors_;
  std::string name_;
  std::size_t dim_ = 0;
  Vector unknown_;
};

struct SkipGramConfig {
  std::size_t dim = 64;
  int window = 2;
  int negatives = 5;
  int epochs = 5;
  double lr = 0.025;
  std::uint64_t seed = 42;
};

/// Skip-gram with negative sampling over the word sequences of the corpus
/// (one sequence per log line). Exported vectors are L2-normalized.
TableProvider train_builtin_embeddings(const std::vector<std::vector<std::string>>& corpus,
                                       const SkipGramConfig& cfg);

/// External provider speaking line-delimited JSON over a subprocess pipe:
/// request `{"words":[...]}`, response `{"vectors":[[...]]}`.
class SubprocessProvider final : public EmbeddingProvider {
 public:
  SubprocessProvider(std::string command, std::size_t dim);
  ~SubprocessProvider() override;
  SubprocessProvider(const SubprocessProvider&) = delete;
  SubprocessProvider& operator=(const SubprocessProvider&) = delete;

  std::string name() const override { return "subprocess:" + command_; }
  std::size_t dim() const override { return dim_; }
  Vector vector(const std::string& word) const override;
  std::vector<Vector> vectors(const std::vector<std::string>& words) const override;

 private:
  std::vector<Vector> request(const std::vector<std::string>& words) const;

  std::string command_;
  std::size_t dim_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  mutable std::mutex mu_;
  mutable std::unordered_map<std::string, Vector> cache_;
  mutable std::string pending_;
};

/// Throws ZeroVector if either side has zero norm.
double cosine(const Vector& a, const Vector& b);

/// Mean cosine from word i to every other word; 1.0 for a lone word.
double word_weight(const std::vector<Vector>& word_vectors, std::size_t i);

enum class Weighting { Lambda, Uniform };

struct PooledVector {
  Vector values;
  std::vector<double> weights;  // lambda per word
  std::vector<Vector> scaled;   // lambda * original
  bool fallback = false;        // sum of weights vanished; plain mean used
};

PooledVector pool_words(const std::vector<Vector>& word_vectors,
                        Weighting weighting = Weighting::Lambda);

struct TemplateVector {
  int template_id = -1;
  Vector values;
};

TemplateVector template_vector(const parser::Template& tmpl, const EmbeddingProvider& provider,
                               Weighting weighting = Weighting::Lambda);

/// Argmax cosine; ties resolve to the smaller template id. Throws EmptyLibrary.
std::pair<int, double> nearest_template(const Vector& query,
                                        const std::vector<TemplateVector>& library);

}  // namespace tplad::embedding
