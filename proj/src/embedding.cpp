#include "tplad/embedding.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csignal>
#include <numeric>
#include <random>

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include "tplad/error.hpp"
#include "tplad/hash.hpp"

namespace tplad::embedding {

namespace {

double dot(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const Vector& a) { return std::sqrt(dot(a, a)); }

void normalize(Vector& v) {
  double n = norm(v);
  if (n > 0.0)
    for (auto& x : v) x /= n;
}

std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

bool is_punctuation(const std::string& s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::ispunct(c) != 0; });
}

}  // namespace

int WordTable::add(const std::string& w) {
  auto [it, inserted] = index.emplace(w, static_cast<int>(words.size()));
  if (inserted) words.push_back(w);
  return it->second;
}

std::vector<std::string> template_words(const parser::Template& tmpl) {
  std::vector<std::string> words, all;
  for (const auto& tok : tmpl.tokens) {
    if (tok.placeholder) continue;
    auto w = lowercase(tok.literal);
    all.push_back(w);
    if (!is_punctuation(w)) words.push_back(std::move(w));
  }
  return words.empty() ? all : words;
}

WordTable build_word_table(const std::vector<parser::Template>& templates) {
  if (templates.empty()) throw Error(ErrorKind::NoLiterals, "no templates given");
  WordTable table;
  for (const auto& t : templates)
    for (const auto& w : template_words(t)) table.add(w);
  if (table.size() == 0) throw Error(ErrorKind::NoLiterals, "templates carry no literal words");
  return table;
}

std::vector<Vector> EmbeddingProvider::vectors(const std::vector<std::string>& words) const {
  std::vector<Vector> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(vector(w));
  return out;
}

Vector hashed_unit_vector(const std::string& word, std::size_t dim) {
  std::mt19937_64 rng(fnv1a64(word) ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(dim);
  for (auto& x : v) x = normal(rng);
  normalize(v);
  return v;
}

TableProvider::TableProvider(WordTable table, std::vector<Vector> vectors, std::string name)
    : table_(std::move(table)), vectors_(std::move(vectors)), name_(std::move(name)) {
  if (table_.size() != vectors_.size())
    throw Error(ErrorKind::ShapeMismatch, "word table and vector count differ");
  dim_ = vectors_.empty() ? 0 : vectors_.front().size();
  for (const auto& v : vectors_)
    if (v.size() != dim_) throw Error(ErrorKind::ShapeMismatch, "ragged embedding matrix");
  unknown_ = hashed_unit_vector(std::string(kUnknownWord), dim_);
}

Vector TableProvider::vector(const std::string& word) const {
  auto it = table_.index.find(word);
  if (it == table_.index.end()) return unknown_;
  return vectors_[static_cast<std::size_t>(it->second)];
}

nlohmann::json TableProvider::to_json() const {
  return {{"version", kEmbeddingVersion},
          {"name", name_},
          {"dim", dim_},
          {"words", table_.words},
          {"vectors", vectors_}};
}

TableProvider TableProvider::from_json(const nlohmann::json& j) {
  try {
    if (j.value("version", kEmbeddingVersion) > kEmbeddingVersion)
      throw Error(ErrorKind::VersionError, "embedding table version is newer than supported");
    WordTable table;
    for (const auto& w : j.at("words")) table.add(w.get<std::string>());
    auto vectors = j.at("vectors").get<std::vector<Vector>>();
    auto dim = j.at("dim").get<std::size_t>();
    TableProvider p(std::move(table), std::move(vectors), j.value("name", "skipgram"));
    if (p.dim() != dim && !p.table().words.empty()) throw Error(ErrorKind::ShapeMismatch, "dim field disagrees");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::FormatError, std::string("embedding table: ") + e.what());
  }
}

TableProvider train_builtin_embeddings(const std::vector<std::vector<std::string>>& corpus,
                                       const SkipGramConfig& cfg) {
  WordTable table;
  std::vector<std::uint64_t> counts;
  std::vector<std::vector<int>> sentences;
  sentences.reserve(corpus.size());
  for (const auto& sent : corpus) {
    std::vector<int> ids;
    for (const auto& w : sent) {
      int id = table.add(w);
      if (static_cast<std::size_t>(id) >= counts.size()) counts.push_back(0);
      ++counts[static_cast<std::size_t>(id)];
      ids.push_back(id);
    }
    sentences.push_back(std::move(ids));
  }
  if (table.size() < 2)
    throw Error(ErrorKind::InsufficientCorpus, "need at least two distinct words");

  const std::size_t vocab = table.size();
  const std::size_t d = cfg.dim;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> init(-0.5 / static_cast<double>(d),
                                              0.5 / static_cast<double>(d));
  std::vector<Vector> in(vocab, Vector(d)), out(vocab, Vector(d, 0.0));
  for (auto& v : in)
    for (auto& x : v) x = init(rng);

  // Unigram^0.75 sampling table.
  std::vector<double> weights(vocab);
  for (std::size_t i = 0; i < vocab; ++i) weights[i] = std::pow(static_cast<double>(counts[i]), 0.75);
  std::discrete_distribution<int> unigram(weights.begin(), weights.end());

  std::uint64_t total_pairs = 0;
  for (const auto& s : sentences) total_pairs += s.size();
  total_pairs *= static_cast<std::uint64_t>(std::max(cfg.epochs, 1));
  std::uint64_t seen = 0;

  Vector grad(d);
  auto sigmoid = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& s : sentences) {
      for (std::size_t i = 0; i < s.size(); ++i, ++seen) {
        double lr = cfg.lr * std::max(1e-4, 1.0 - static_cast<double>(seen) /
                                                      static_cast<double>(total_pairs + 1));
        const int center = s[i];
        auto lo = i >= static_cast<std::size_t>(cfg.window) ? i - static_cast<std::size_t>(cfg.window) : 0;
        auto hi = std::min(s.size(), i + static_cast<std::size_t>(cfg.window) + 1);
        for (std::size_t j = lo; j < hi; ++j) {
          if (j == i || s[j] == center) continue;
          const int context = s[j];
          auto& vin = in[static_cast<std::size_t>(center)];
          std::fill(grad.begin(), grad.end(), 0.0);
          auto update = [&](int target, double label) {
            auto& vout = out[static_cast<std::size_t>(target)];
            double g = (label - sigmoid(dot(vin, vout))) * lr;
            for (std::size_t k = 0; k < d; ++k) {
              grad[k] += g * vout[k];
              vout[k] += g * vin[k];
            }
          };
          update(context, 1.0);
          for (int n = 0; n < cfg.negatives; ++n) {
            int neg = unigram(rng);
            if (neg == context || neg == center) continue;
            update(neg, 0.0);
          }
          for (std::size_t k = 0; k < d; ++k) vin[k] += grad[k];
        }
      }
    }
  }
  for (auto& v : in) normalize(v);
  return TableProvider(std::move(table), std::move(in), "skipgram");
}

SubprocessProvider::SubprocessProvider(std::string command, std::size_t dim)
    : command_(std::move(command)), dim_(dim) {
  int in_pipe[2], out_pipe[2];
  if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0)
    throw Error(ErrorKind::ProviderError, "pipe() failed");
  pid_t pid = fork();
  if (pid < 0) throw Error(ErrorKind::ProviderError, "fork() failed");
  if (pid == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  std::signal(SIGPIPE, SIG_IGN);
}

SubprocessProvider::~SubprocessProvider() {
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  if (pid_ > 0) waitpid(pid_, nullptr, 0);
}

std::vector<Vector> SubprocessProvider::request(const std::vector<std::string>& words) const {
  std::string line = nlohmann::json{{"words", words}}.dump() + "\n";
  const char* p = line.data();
  std::size_t left = line.size();
  while (left > 0) {
    auto n = write(to_child_, p, left);
    if (n <= 0) throw Error(ErrorKind::ProviderError, "provider closed its input");
    p += n;
    left -= static_cast<std::size_t>(n);
  }
  std::string reply;
  while (true) {
    auto nl = pending_.find('\n');
    if (nl != std::string::npos) {
      reply = pending_.substr(0, nl);
      pending_.erase(0, nl + 1);
      break;
    }
    char buf[4096];
    auto n = read(from_child_, buf, sizeof buf);
    if (n <= 0) throw Error(ErrorKind::ProviderError, "provider closed its output");
    pending_.append(buf, static_cast<std::size_t>(n));
  }
  std::vector<Vector> vecs;
  try {
    vecs = nlohmann::json::parse(reply).at("vectors").get<std::vector<Vector>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ProviderError, std::string("malformed provider reply: ") + e.what());
  }
  if (vecs.size() != words.size())
    throw Error(ErrorKind::ProviderError, "provider returned wrong number of vectors");
  for (const auto& v : vecs)
    if (v.size() != dim_)
      throw Error(ErrorKind::ProviderError, "provider vector dimension " +
                                                std::to_string(v.size()) + " != configured " +
                                                std::to_string(dim_));
  return vecs;
}

std::vector<Vector> SubprocessProvider::vectors(const std::vector<std::string>& words) const {
  std::lock_guard lock(mu_);
  std::vector<std::string> missing;
  for (const auto& w : words)
    if (!cache_.count(w) && std::find(missing.begin(), missing.end(), w) == missing.end())
      missing.push_back(w);
  if (!missing.empty()) {
    auto got = request(missing);
    for (std::size_t i = 0; i < missing.size(); ++i) cache_.emplace(missing[i], std::move(got[i]));
  }
  std::vector<Vector> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(cache_.at(w));
  return out;
}

Vector SubprocessProvider::vector(const std::string& word) const { return vectors({word}).front(); }

double cosine(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw Error(ErrorKind::ShapeMismatch, "cosine of unequal dimensions");
  double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw Error(ErrorKind::ZeroVector, "zero-norm vector");
  return dot(a, b) / (na * nb);
}

double word_weight(const std::vector<Vector>& word_vectors, std::size_t i) {
  const std::size_t n = word_vectors.size();
  if (i >= n) throw Error(ErrorKind::ShapeMismatch, "word position out of range");
  if (n == 1) {
    if (norm(word_vectors[0]) == 0.0) throw Error(ErrorKind::ZeroVector, "zero-norm vector");
    return 1.0;
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j)
    if (j != i) sum += cosine(word_vectors[i], word_vectors[j]);
  return sum / static_cast<double>(n - 1);
}

PooledVector pool_words(const std::vector<Vector>& word_vectors, Weighting weighting) {
  if (word_vectors.empty()) throw Error(ErrorKind::NoLiterals, "no words to pool");
  const std::size_t d = word_vectors.front().size();
  PooledVector out;
  out.values.assign(d, 0.0);
  for (std::size_t i = 0; i < word_vectors.size(); ++i) {
    double lambda = word_weight(word_vectors, i);
    out.weights.push_back(lambda);
    Vector s(d);
    for (std::size_t k = 0; k < d; ++k) s[k] = lambda * word_vectors[i][k];
    out.scaled.push_back(std::move(s));
  }
  if (weighting == Weighting::Uniform) {
    for (const auto& s : out.scaled)
      for (std::size_t k = 0; k < d; ++k) out.values[k] += s[k];
    for (auto& x : out.values) x /= static_cast<double>(word_vectors.size());
    return out;
  }
  double total = std::accumulate(out.weights.begin(), out.weights.end(), 0.0);
  if (total <= kWeightEpsilon) {
    out.fallback = true;
    for (const auto& v : word_vectors)
      for (std::size_t k = 0; k < d; ++k) out.values[k] += v[k];
    for (auto& x : out.values) x /= static_cast<double>(word_vectors.size());
    return out;
  }
  for (std::size_t i = 0; i < out.scaled.size(); ++i)
    for (std::size_t k = 0; k < d; ++k) out.values[k] += out.weights[i] * out.scaled[i][k];
  for (auto& x : out.values) x /= total;
  return out;
}

TemplateVector template_vector(const parser::Template& tmpl, const EmbeddingProvider& provider,
                               Weighting weighting) {
  auto words = template_words(tmpl);
  auto vecs = provider.vectors(words);
  return TemplateVector{tmpl.id, pool_words(vecs, weighting).values};
}

std::pair<int, double> nearest_template(const Vector& query,
                                        const std::vector<TemplateVector>& library) {
  if (library.empty()) throw Error(ErrorKind::EmptyLibrary, "no trained template vectors");
  int best = -1;
  double best_sim = -2.0;
  const double nq = norm(query);
  for (const auto& tv : library) {
    double nt = norm(tv.values);
    double sim = (nq == 0.0 || nt == 0.0) ? 0.0 : dot(query, tv.values) / (nq * nt);
    if (sim > best_sim || (sim == best_sim && tv.template_id < best)) {
      best_sim = sim;
      best = tv.template_id;
    }
  }
  return {best, best_sim};
}

}  // namespace tplad::embedding
