#include "tplad/parser.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "tplad/error.hpp"

namespace tplad::parser {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

bool all_of(std::string_view s, int (*pred)(int)) {
  return !s.empty() && std::all_of(s.begin(), s.end(),
                                   [pred](char c) { return pred(static_cast<unsigned char>(c)) != 0; });
}

bool is_ipv4(std::string_view s) {
  // a.b.c.d with an optional :port
  if (auto colon = s.find(':'); colon != std::string_view::npos) {
    if (!all_of(s.substr(colon + 1), ::isdigit)) return false;
    s = s.substr(0, colon);
  }
  int parts = 0;
  std::size_t start = 0;
  while (true) {
    auto dot = s.find('.', start);
    auto part = s.substr(start, dot == std::string_view::npos ? s.size() - start : dot - start);
    if (part.empty() || part.size() > 3 || !all_of(part, ::isdigit)) return false;
    ++parts;
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  return parts == 4;
}

}  // namespace

std::size_t Template::placeholder_count() const {
  return static_cast<std::size_t>(
      std::count_if(tokens.begin(), tokens.end(), [](const Token& t) { return t.placeholder; }));
}

std::size_t Template::literal_count() const { return tokens.size() - placeholder_count(); }

std::string Template::render() const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i].placeholder ? std::string(kPlaceholder) : tokens[i].literal;
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view body) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < body.size()) {
    while (i < body.size() && is_space(body[i])) ++i;
    std::size_t j = i;
    while (j < body.size() && !is_space(body[j])) ++j;
    if (j > i) out.emplace_back(body.substr(i, j - i));
    i = j;
  }
  if (out.empty()) throw Error(ErrorKind::EmptyLine, "line is empty or whitespace-only");
  return out;
}

bool is_numeric_like(std::string_view t) {
  if (all_of(t, ::isdigit)) return true;
  if (t.size() > 2 && t[0] == '0' && (t[1] == 'x' || t[1] == 'X') && all_of(t.substr(2), ::isxdigit))
    return true;
  return is_ipv4(t);
}

double seq_similarity(const std::vector<std::string>& tokens, const Template& tmpl) {
  if (tokens.size() != tmpl.tokens.size())
    throw Error(ErrorKind::LengthMismatch, "token count " + std::to_string(tokens.size()) +
                                               " vs template length " +
                                               std::to_string(tmpl.tokens.size()));
  if (tokens.empty()) return 1.0;
  std::size_t same = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (tmpl.tokens[i].placeholder || tmpl.tokens[i].literal == tokens[i]) ++same;
  return static_cast<double>(same) / static_cast<double>(tokens.size());
}

RawLog make_raw(std::uint64_t line_no, std::string_view line, bool strip_syslog_header) {
  RawLog raw;
  raw.line_no = line_no;
  while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.remove_suffix(1);
  if (strip_syslog_header) {
    static constexpr std::array<std::string_view, 12> months = {
        "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};
    // "Mmm dd hh:mm:ss host rest"
    if (line.size() > 16 &&
        std::find(months.begin(), months.end(), line.substr(0, 3)) != months.end() &&
        line[3] == ' ' && line[9] == ':' && line[12] == ':' && line[15] == ' ') {
      raw.timestamp_text = std::string(line.substr(0, 15));
      auto rest = line.substr(16);
      auto host_end = rest.find(' ');
      line = host_end == std::string_view::npos ? std::string_view{} : rest.substr(host_end + 1);
    }
  }
  raw.body = std::string(line);
  return raw;
}

std::vector<std::string> extract_params(const Template& tmpl,
                                        const std::vector<std::string>& tokens) {
  if (tokens.size() != tmpl.tokens.size())
    throw Error(ErrorKind::LengthMismatch, "cannot extract parameters: length differs");
  std::vector<std::string> params;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (tmpl.tokens[i].placeholder) params.push_back(tokens[i]);
  return params;
}

std::vector<std::string> reconstruct(const Template& tmpl, const std::vector<std::string>& params) {
  if (params.size() != tmpl.placeholder_count())
    throw Error(ErrorKind::LengthMismatch, "parameter count does not match placeholders");
  std::vector<std::string> out;
  out.reserve(tmpl.tokens.size());
  std::size_t p = 0;
  for (const auto& t : tmpl.tokens) out.push_back(t.placeholder ? params[p++] : t.literal);
  return out;
}

struct Parser::Node {
  std::map<std::string, std::unique_ptr<Node>> children;
  std::vector<int> templates;

  std::unique_ptr<Node> clone() const {
    auto n = std::make_unique<Node>();
    n->templates = templates;
    for (const auto& [k, v] : children) n->children.emplace(k, v->clone());
    return n;
  }
};

Parser::Parser(ParserConfig cfg) : cfg_(cfg) {
  if (cfg_.depth < 3) throw Error(ErrorKind::ConfigError, "parser depth must be >= 3");
  if (cfg_.max_children < 1) throw Error(ErrorKind::ConfigError, "max_children must be >= 1");
}

Parser::Parser(const Parser& other) : cfg_(other.cfg_), templates_(other.templates_) {
  for (const auto& [len, node] : other.roots_) roots_.emplace(len, node->clone());
}

Parser& Parser::operator=(const Parser& other) {
  if (this != &other) {
    Parser tmp(other);
    *this = std::move(tmp);
  }
  return *this;
}

Parser::~Parser() = default;
Parser::Parser(Parser&&) noexcept = default;
Parser& Parser::operator=(Parser&&) noexcept = default;

std::vector<std::string> Parser::route(const std::vector<std::string>& tokens) const {
  const auto want = static_cast<std::size_t>(cfg_.depth - 2);
  std::vector<std::string> keys;
  for (const auto& t : tokens) {
    if (keys.size() == want) break;
    // Any digit-bearing token ("sshd[812]:", "fetcher#3") is as unstable a
    // branch key as a bare number.
    if (!is_numeric_like(t) && std::none_of(t.begin(), t.end(), ::isdigit)) keys.push_back(t);
  }
  while (keys.size() < want) keys.emplace_back(kPlaceholder);
  return keys;
}

const Parser::Node* Parser::find_leaf(const std::vector<std::string>& keys,
                                      std::size_t length) const {
  auto it = roots_.find(length);
  if (it == roots_.end()) return nullptr;
  const Node* node = it->second.get();
  for (const auto& key : keys) {
    auto c = node->children.find(key);
    if (c == node->children.end()) c = node->children.find(std::string(kPlaceholder));
    if (c == node->children.end()) return nullptr;
    node = c->second.get();
  }
  return node;
}

Parser::Node& Parser::leaf_for(const std::vector<std::string>& path, std::size_t length) {
  auto& root = roots_[length];
  if (!root) root = std::make_unique<Node>();
  Node* node = root.get();
  for (const auto& key : path) {
    auto& child = node->children[key];
    if (!child) child = std::make_unique<Node>();
    node = child.get();
  }
  return *node;
}

ParsedLog Parser::mint(const std::vector<std::string>& tokens, std::vector<std::string> keys,
                       std::uint64_t line_no) {
  // Creation path: existing branch, else a new branch while there is room,
  // else the wildcard branch.
  std::vector<std::string> path;
  const Node* node = nullptr;
  if (auto it = roots_.find(tokens.size()); it != roots_.end()) node = it->second.get();
  for (auto& key : keys) {
    if (node) {
      if (node->children.count(key)) {
      } else if (static_cast<int>(node->children.size()) >= cfg_.max_children) {
        key = std::string(kPlaceholder);
      }
      auto c = node->children.find(key);
      node = c == node->children.end() ? nullptr : c->second.get();
    }
    path.push_back(key);
  }

  Template t;
  t.id = static_cast<int>(templates_.size());
  for (const auto& tok : tokens) t.tokens.push_back(Token::lit(tok));
  t.support = 1;
  t.path = path;
  leaf_for(path, tokens.size()).templates.push_back(t.id);
  templates_.push_back(std::move(t));

  ParsedLog out;
  out.template_id = templates_.back().id;
  out.line_no = line_no;
  return out;
}

ParsedLog Parser::resolve(const std::vector<std::string>& tokens, std::uint64_t line_no,
                          std::optional<std::size_t> frozen_count) {
  auto keys = route(tokens);
  const Node* leaf = find_leaf(keys, tokens.size());

  auto is_frozen = [&](int id) {
    return frozen_count && static_cast<std::size_t>(id) < *frozen_count;
  };

  if (leaf) {
    int best = -1;
    double best_sim = -1.0;
    int exact_frozen = -1;
    for (int id : leaf->templates) {
      double sim = seq_similarity(tokens, templates_[static_cast<std::size_t>(id)]);
      if (is_frozen(id)) {
        if (sim == 1.0 && (exact_frozen < 0 || id < exact_frozen)) exact_frozen = id;
        continue;
      }
      if (sim > best_sim || (sim == best_sim && id < best)) {
        best_sim = sim;
        best = id;
      }
    }
    if (exact_frozen >= 0) {
      auto& t = templates_[static_cast<std::size_t>(exact_frozen)];
      ParsedLog out{t.id, extract_params(t, tokens), line_no, true};
      check_alignment(out);
      return out;
    }
    if (best >= 0 && best_sim >= cfg_.sim_threshold) {
      auto& t = templates_[static_cast<std::size_t>(best)];
      std::vector<Token> merged = t.tokens;
      for (std::size_t i = 0; i < merged.size(); ++i)
        if (!merged[i].placeholder && merged[i].literal != tokens[i]) merged[i] = Token::wildcard();
      bool any_literal = std::any_of(merged.begin(), merged.end(),
                                     [](const Token& tok) { return !tok.placeholder; });
      if (any_literal) {
        t.tokens = std::move(merged);
        ++t.support;
        ParsedLog out{t.id, extract_params(t, tokens), line_no, true};
        check_alignment(out);
        return out;
      }
      // Merge would erase every literal: keep the template as is.
    }
  }
  auto out = mint(tokens, std::move(keys), line_no);
  check_alignment(out);
  return out;
}

void Parser::check_alignment(const ParsedLog& out) const {
  const auto& t = templates_.at(static_cast<std::size_t>(out.template_id));
  if (out.params.size() != t.placeholder_count())
    throw Error(ErrorKind::LengthMismatch, "parameter/placeholder misalignment");
}

ParsedLog Parser::parse_line(const RawLog& raw) {
  return resolve(tokenize(raw.body), raw.line_no, std::nullopt);
}

ParsedLog Parser::parse_line(const RawLog& raw, std::size_t frozen_count) {
  return resolve(tokenize(raw.body), raw.line_no, frozen_count);
}

nlohmann::json Parser::to_json() const {
  nlohmann::json templates = nlohmann::json::array();
  for (const auto& t : templates_) {
    nlohmann::json tokens = nlohmann::json::array();
    for (const auto& tok : t.tokens) {
      if (tok.placeholder)
        tokens.push_back("*");
      else
        tokens.push_back({{"lit", tok.literal}});
    }
    templates.push_back({{"id", t.id}, {"tokens", tokens}, {"support", t.support}, {"path", t.path}});
  }
  return {{"version", kLibraryVersion},
          {"config",
           {{"sim_threshold", cfg_.sim_threshold},
            {"depth", cfg_.depth},
            {"max_children", cfg_.max_children},
            {"strip_syslog_header", cfg_.strip_syslog_header}}},
          {"templates", templates}};
}

Parser Parser::from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() > kLibraryVersion)
      throw Error(ErrorKind::VersionError, "template library version is newer than supported");
    ParserConfig cfg;
    if (j.contains("config")) {
      const auto& c = j.at("config");
      cfg.sim_threshold = c.at("sim_threshold").get<double>();
      cfg.depth = c.at("depth").get<int>();
      cfg.max_children = c.at("max_children").get<int>();
      cfg.strip_syslog_header = c.value("strip_syslog_header", false);
    }
    Parser p(cfg);
    for (const auto& jt : j.at("templates")) {
      Template t;
      t.id = jt.at("id").get<int>();
      if (t.id != static_cast<int>(p.templates_.size()))
        throw Error(ErrorKind::FormatError, "template ids must be dense and ordered");
      for (const auto& tok : jt.at("tokens")) {
        if (tok.is_string() && tok.get<std::string>() == "*")
          t.tokens.push_back(Token::wildcard());
        else
          t.tokens.push_back(Token::lit(tok.at("lit").get<std::string>()));
      }
      if (t.literal_count() == 0)
        throw Error(ErrorKind::FormatError, "template " + std::to_string(t.id) + " has no literal");
      t.support = jt.at("support").get<std::uint64_t>();
      if (jt.contains("path")) {
        t.path = jt.at("path").get<std::vector<std::string>>();
      } else {
        std::vector<std::string> toks;
        for (const auto& tok : t.tokens)
          toks.push_back(tok.placeholder ? std::string(kPlaceholder) : tok.literal);
        t.path = p.route(toks);
      }
      p.leaf_for(t.path, t.tokens.size()).templates.push_back(t.id);
      p.templates_.push_back(std::move(t));
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::FormatError, std::string("template library: ") + e.what());
  }
}

}  // namespace tplad::parser
