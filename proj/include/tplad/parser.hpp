#pragma once

// Drain-style online template miner: fixed-depth prefix tree keyed by token
// count and leading tokens, leaves hold candidate templates.

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace tplad::parser {

inline constexpr std::string_view kPlaceholder = "<*>";
inline constexpr int kLibraryVersion = 1;

struct RawLog {
  std::uint64_t line_no = 0;
  std::optional<std::string> timestamp_text;
  std::string body;
};

struct Token {
  bool placeholder = false;
  std::string literal;  // empty when placeholder

  static Token lit(std::string s) { return Token{false, std::move(s)}; }
  static Token wildcard() { return Token{true, {}}; }
  bool operator==(const Token&) const = default;
};

struct Template {
  int id = 0;
  std::vector<Token> tokens;
  std::uint64_t support = 1;
  // Branch keys used to reach this template's leaf; fixed at creation.
  std::vector<std::string> path;

  std::size_t placeholder_count() const;
  std::size_t literal_count() const;
  std::string render() const;
};

struct ParsedLog {
  int template_id = -1;
  std::vector<std::string> params;
  std::uint64_t line_no = 0;
  bool matched = true;
};

struct ParserConfig {
  double sim_threshold = 0.5;
  int depth = 4;
  int max_children = 100;
  bool strip_syslog_header = false;
};

/// Splits on runs of whitespace. Throws EmptyLine for blank input.
std::vector<std::string> tokenize(std::string_view body);

/// Digits, hex literals and IPv4 addresses; masked during tree descent only.
bool is_numeric_like(std::string_view token);

/// Fraction of positions where the token equals the literal or the template
/// has a placeholder. Throws LengthMismatch.
double seq_similarity(const std::vector<std::string>& tokens, const Template& tmpl);

/// Builds a RawLog, optionally splitting an RFC 3164 style header
/// ("Mmm dd hh:mm:ss host") off into timestamp_text.
RawLog make_raw(std::uint64_t line_no, std::string_view line, bool strip_syslog_header = false);

/// Placeholder-position tokens of `tokens` under `tmpl`, in order.
std::vector<std::string> extract_params(const Template& tmpl,
                                        const std::vector<std::string>& tokens);

/// Inverse of extract_params.
std::vector<std::string> reconstruct(const Template& tmpl, const std::vector<std::string>& params);

class Parser {
 public:
  explicit Parser(ParserConfig cfg = {});
  Parser(const Parser& other);
  Parser& operator=(const Parser& other);
  Parser(Parser&&) noexcept;
  Parser& operator=(Parser&&) noexcept;
  ~Parser();

  /// Learning mode: merge into the best candidate or mint a new template.
  ParsedLog parse_line(const RawLog& raw);

  /// Detection mode. Templates with id < frozen_count are never mutated; a
  /// line resolves to one of them only on a full literal match. Anything else
  /// merges into, or mints, a template with id >= frozen_count.
  ParsedLog parse_line(const RawLog& raw, std::size_t frozen_count);

  const std::vector<Template>& templates() const noexcept { return templates_; }
  const Template& at(int id) const { return templates_.at(static_cast<std::size_t>(id)); }
  const ParserConfig& config() const noexcept { return cfg_; }
  std::size_t size() const noexcept { return templates_.size(); }

  nlohmann::json to_json() const;
  static Parser from_json(const nlohmann::json& j);

 private:
  struct Node;

  std::vector<std::string> route(const std::vector<std::string>& tokens) const;
  Node& leaf_for(const std::vector<std::string>& path, std::size_t length);
  const Node* find_leaf(const std::vector<std::string>& path, std::size_t length) const;
  ParsedLog mint(const std::vector<std::string>& tokens, std::vector<std::string> path,
                 std::uint64_t line_no);
  ParsedLog resolve(const std::vector<std::string>& tokens, std::uint64_t line_no,
                    std::optional<std::size_t> frozen_count);
  void check_alignment(const ParsedLog& out) const;

  ParserConfig cfg_;
  std::map<std::size_t, std::unique_ptr<Node>> roots_;
  std::vector<Template> templates_;
};

}  // namespace tplad::parser
