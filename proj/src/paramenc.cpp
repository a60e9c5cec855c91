#include "tplad/paramenc.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>
#include <set>

#include "tplad/cluster.hpp"
#include "tplad/error.hpp"
#include "tplad/hash.hpp"

namespace tplad::paramenc {

namespace {

constexpr std::array<ParamType, 6> kTypeOrder = {ParamType::Time,  ParamType::Numeric,
                                                 ParamType::ResourceId, ParamType::State,
                                                 ParamType::UserId, ParamType::Unknown};
constexpr std::array<ParamType, 5> kLaneOrder = {ParamType::Time, ParamType::UserId,
                                                 ParamType::Numeric, ParamType::State,
                                                 ParamType::ResourceId};

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool digit(char c) { return c >= '0' && c <= '9'; }

// Reads between min_d and max_d digits at s[i]; advances i.
std::optional<int> read_digits(std::string_view s, std::size_t& i, std::size_t min_d,
                               std::size_t max_d) {
  std::size_t start = i;
  int v = 0;
  while (i < s.size() && digit(s[i]) && i - start < max_d) v = v * 10 + (s[i++] - '0');
  if (i - start < min_d) {
    i = start;
    return std::nullopt;
  }
  return v;
}

bool parse_clock(std::string_view s, std::size_t& i, TimeFields& f, bool allow_dot_sep) {
  auto h = read_digits(s, i, 1, 2);
  if (!h || i >= s.size()) return false;
  char sep = s[i];
  if (sep != ':' && !(allow_dot_sep && sep == '.')) return false;
  ++i;
  auto mi = read_digits(s, i, 2, 2);
  if (!mi || i >= s.size() || s[i] != sep) return false;
  ++i;
  auto sec = read_digits(s, i, 2, 2);
  if (!sec) return false;
  f.fields[static_cast<std::size_t>(TimeUnit::Hour)] = *h;
  f.fields[static_cast<std::size_t>(TimeUnit::Minute)] = *mi;
  f.fields[static_cast<std::size_t>(TimeUnit::Second)] = *sec;
  if (i < s.size() && (s[i] == '.' || s[i] == ',')) {
    std::size_t j = i + 1;
    std::size_t start = j;
    int ms = 0;
    while (j < s.size() && digit(s[j])) {
      if (j - start < 3) ms = ms * 10 + (s[j] - '0');
      ++j;
    }
    if (j == start) return false;
    for (std::size_t k = j - start; k < 3; ++k) ms *= 10;
    f.fields[static_cast<std::size_t>(TimeUnit::Millisecond)] = ms;
    i = j;
  }
  if (i < s.size()) {
    if (s[i] == 'Z') {
      ++i;
    } else if (s[i] == '+' || s[i] == '-') {
      std::size_t j = i + 1;
      if (!read_digits(s, j, 2, 2)) return false;
      if (j < s.size() && s[j] == ':') ++j;
      if (j < s.size() && !read_digits(s, j, 2, 2)) return false;
      i = j;
    }
  }
  return true;
}

bool segment_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-' ||
         c == '~' || c == '+' || c == '@' || c == '%' || c == '=' || c == ',';
}

bool valid_segments(std::string_view s, char sep) {
  // non-empty segments of legal characters; a single trailing separator is fine
  if (s.empty()) return true;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto next = s.find(sep, start);
    auto seg = s.substr(start, next == std::string_view::npos ? s.size() - start : next - start);
    bool last = next == std::string_view::npos;
    if (seg.empty()) return last && start == s.size();
    if (!std::all_of(seg.begin(), seg.end(), segment_char)) return false;
    if (last) break;
    start = next + 1;
  }
  return true;
}

bool is_ipv4_port(std::string_view s) {
  if (auto colon = s.find(':'); colon != std::string_view::npos) {
    auto port = s.substr(colon + 1);
    if (port.empty() || !std::all_of(port.begin(), port.end(), digit)) return false;
    s = s.substr(0, colon);
  }
  int parts = 0;
  std::size_t start = 0;
  while (true) {
    auto dot = s.find('.', start);
    auto part = s.substr(start, dot == std::string_view::npos ? s.size() - start : dot - start);
    if (part.empty() || part.size() > 3 || !std::all_of(part.begin(), part.end(), digit))
      return false;
    if (std::stoi(std::string(part)) > 255) return false;
    ++parts;
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  return parts == 4;
}

bool is_hexish(std::string_view s) {
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X'))
    return std::all_of(s.begin() + 2, s.end(),
                       [](char c) { return std::isxdigit(static_cast<unsigned char>(c)) != 0; });
  if (s.size() < 6) return false;
  bool has_digit = false, has_alpha = false;
  for (char c : s) {
    if (digit(c))
      has_digit = true;
    else if ((c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F'))
      has_alpha = true;
    else if (c != '-')
      return false;
  }
  return has_digit && has_alpha;
}

bool has_user_marker(std::string_view s) {
  auto l = lower(s);
  for (std::string_view p : {"user", "usr", "uid", "id", "acct", "u_"})
    if (l.rfind(p, 0) == 0) return true;
  return l.find("user") != std::string::npos || l.find("uid") != std::string::npos ||
         l.find('@') != std::string::npos;
}

double population_variance(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  return v / static_cast<double>(xs.size());
}

double type_code(ParamType t) {
  switch (t) {
    case ParamType::Time: return 0.0;
    case ParamType::UserId: return 0.25;
    case ParamType::Numeric: return 0.5;
    case ParamType::State: return 0.75;
    case ParamType::ResourceId: return 1.0;
    case ParamType::Unknown: break;
  }
  return 0.0;
}

}  // namespace

std::string_view to_string(ParamType t) noexcept {
  switch (t) {
    case ParamType::Time: return "time";
    case ParamType::UserId: return "user";
    case ParamType::Numeric: return "numeric";
    case ParamType::State: return "state";
    case ParamType::ResourceId: return "resource";
    case ParamType::Unknown: return "unknown";
  }
  return "unknown";
}

ParamType param_type_from_string(std::string_view s) {
  for (auto t : kTypeOrder)
    if (to_string(t) == s) return t;
  throw Error(ErrorKind::FormatError, "unknown parameter type '" + std::string(s) + "'");
}

std::string_view to_string(TimeUnit u) noexcept {
  static constexpr std::array<std::string_view, kTimeUnitCount> names = {
      "year", "month", "day", "hour", "minute", "second", "millisecond"};
  return names[static_cast<std::size_t>(u)];
}

TimeUnit time_unit_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kTimeUnitCount; ++i)
    if (to_string(static_cast<TimeUnit>(i)) == s) return static_cast<TimeUnit>(i);
  throw Error(ErrorKind::UnknownUnit, "unknown time unit '" + std::string(s) + "'");
}

int TimeUnits::max_of(TimeUnit unit) const {
  switch (unit) {
    case TimeUnit::Year:
      if (!year_enabled) throw Error(ErrorKind::UnknownUnit, "year lane is disabled");
      return year_period;
    case TimeUnit::Month: return 12;
    case TimeUnit::Day: return 31;
    case TimeUnit::Hour: return 24;
    case TimeUnit::Minute: return 60;
    case TimeUnit::Second: return 60;
    case TimeUnit::Millisecond: return 1000;
  }
  throw Error(ErrorKind::UnknownUnit, "unknown time unit");
}

std::int64_t TimeFields::order_key() const {
  static constexpr std::array<std::int64_t, kTimeUnitCount> radix = {1, 13, 32, 24, 60, 61, 1000};
  std::int64_t key = 0;
  for (std::size_t i = 0; i < kTimeUnitCount; ++i) key = key * radix[i] + fields[i].value_or(0);
  return key;
}

std::optional<TimeFields> parse_timestamp(std::string_view s) {
  TimeFields f;
  std::size_t i = 0;
  if (auto y = read_digits(s, i, 4, 4); y && i < s.size() && (s[i] == '-' || s[i] == '/')) {
    char sep = s[i++];
    auto mo = read_digits(s, i, 1, 2);
    if (!mo || i >= s.size() || s[i] != sep) return std::nullopt;
    ++i;
    auto d = read_digits(s, i, 1, 2);
    if (!d) return std::nullopt;
    f.fields[static_cast<std::size_t>(TimeUnit::Year)] = *y;
    f.fields[static_cast<std::size_t>(TimeUnit::Month)] = *mo;
    f.fields[static_cast<std::size_t>(TimeUnit::Day)] = *d;
    if (i == s.size()) return f;
    char sep2 = s[i];
    if (sep2 != 'T' && sep2 != ' ' && sep2 != '-' && sep2 != '_') return std::nullopt;
    ++i;
    if (!parse_clock(s, i, f, true) || i != s.size()) return std::nullopt;
    return f;
  }
  i = 0;
  if (!parse_clock(s, i, f, false) || i != s.size()) return std::nullopt;
  return f;
}

bool time_in_range(const TimeFields& f) {
  auto in = [&](TimeUnit u, int lo, int hi) {
    auto v = f.get(u);
    return !v || (*v >= lo && *v <= hi);
  };
  return in(TimeUnit::Month, 1, 12) && in(TimeUnit::Day, 1, 31) && in(TimeUnit::Hour, 0, 23) &&
         in(TimeUnit::Minute, 0, 59) && in(TimeUnit::Second, 0, 60) &&
         in(TimeUnit::Millisecond, 0, 999);
}

std::pair<double, double> encode_time(std::int64_t t, TimeUnit unit, const TimeUnits& units) {
  if (!units.registered(unit))
    throw Error(ErrorKind::UnknownUnit, std::string(to_string(unit)) + " is not registered");
  const auto max_t = static_cast<std::int64_t>(units.max_of(unit));
  if (unit == TimeUnit::Year) t = ((t % max_t) + max_t) % max_t;
  const double angle = 2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(max_t);
  return {std::sin(angle), std::cos(angle)};
}

std::optional<Vector> encode_timestamp(const TimeFields& f, const std::vector<TimeUnit>& units,
                                       const TimeUnits& cfg) {
  Vector out;
  out.reserve(units.size() * 2);
  for (auto u : units) {
    auto v = f.get(u);
    if (!v) return std::nullopt;
    auto [s, c] = encode_time(*v, u, cfg);
    out.push_back(s);
    out.push_back(c);
  }
  return out;
}

bool is_empty_value(std::string_view s) {
  if (s.empty() || s == "-" || s == "\"\"" || s == "''") return true;
  auto l = lower(s);
  return l == "null" || l == "(null)" || l == "none";
}

double encode_user(std::string_view u) {
  if (is_empty_value(u)) throw Error(ErrorKind::EmptyUser, "user identification is empty");
  const double x = std::ldexp(static_cast<double>(fnv1a64(u)), -64);
  // Hashes within half an ulp of 2^64 round up to 1.0.
  return x < 1.0 ? x : std::nextafter(1.0, 0.0);
}

std::optional<double> parse_number(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  // from_chars would accept "inf"/"nan"; only plain decimal forms count.
  if (!std::all_of(s.begin(), s.end(), [](char c) {
        return digit(c) || c == '.' || c == '-' || c == 'e' || c == 'E' || c == '+';
      }))
    return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

NumericBaseline NumericBaseline::fit(const std::vector<double>& values) {
  NumericBaseline b;
  b.count = values.size();
  if (values.empty()) return b;
  b.min = *std::min_element(values.begin(), values.end());
  b.max = *std::max_element(values.begin(), values.end());
  double m = 0.0;
  for (double x : values) m += x;
  b.mean = m / static_cast<double>(values.size());
  b.stddev = std::sqrt(population_variance(values));
  return b;
}

double encode_numeric(double x, const NumericBaseline& b, double z_cap) {
  if (b.stddev < kSigmaEpsilon) {
    if (std::abs(x - b.mean) <= kSigmaEpsilon * std::max(1.0, std::abs(b.mean))) return 0.0;
    return x > b.mean ? z_cap : -z_cap;
  }
  return (x - b.mean) / b.stddev;
}

double encode_numeric(std::string_view raw, const NumericBaseline& b, double z_cap) {
  auto x = parse_number(raw);
  if (!x) throw Error(ErrorKind::NotANumber, "'" + std::string(raw) + "' is not a valid number");
  return encode_numeric(*x, b, z_cap);
}

void StateRegistry::observe(const std::string& s) {
  if (!index_of(s)) states.push_back(s);
}

std::optional<std::size_t> StateRegistry::index_of(std::string_view s) const {
  for (std::size_t i = 0; i < states.size(); ++i)
    if (states[i] == s) return i;
  return std::nullopt;
}

double encode_state(std::string_view s, const StateRegistry& registry) {
  auto idx = registry.index_of(s);
  if (!idx)
    throw Error(ErrorKind::UnseenState,
                "'" + std::string(s) + "' is not in the predefined set of states");
  if (registry.size() > kMaxStateCardinality)
    throw Error(ErrorKind::LayoutMismatch, "state registry exceeds 30 entries");
  // Bits: one-hot in registry order, most significant first.
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < registry.size(); ++i) bits = (bits << 1) | (i == *idx ? 1u : 0u);
  return static_cast<double>(bits);
}

bool is_resource(std::string_view s) {
  if (s.empty()) return false;
  if (is_ipv4_port(s)) return true;
  if (auto scheme_end = s.find("://"); scheme_end != std::string_view::npos) {
    auto scheme = s.substr(0, scheme_end);
    if (scheme.empty() || !std::isalpha(static_cast<unsigned char>(scheme[0]))) return false;
    if (!std::all_of(scheme.begin(), scheme.end(), [](char c) {
          return std::isalnum(static_cast<unsigned char>(c)) || c == '+' || c == '.' || c == '-';
        }))
      return false;
    auto rest = s.substr(scheme_end + 3);
    auto query = rest.find('?');
    auto path_part = rest.substr(0, query);
    auto slash = path_part.find('/');
    auto host = path_part.substr(0, slash);
    if (host.empty() || !std::all_of(host.begin(), host.end(), [](char c) {
          return std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == ':';
        }))
      return false;
    if (slash != std::string_view::npos && !valid_segments(path_part.substr(slash + 1), '/'))
      return false;
    return true;
  }
  auto path = s;
  if (auto q = path.find('?'); q != std::string_view::npos) path = path.substr(0, q);
  if (path.size() >= 3 && std::isalpha(static_cast<unsigned char>(path[0])) && path[1] == ':' &&
      path[2] == '\\')
    return valid_segments(path.substr(3), '\\');
  for (std::string_view prefix : {"/", "./", "../", "~/"})
    if (path.substr(0, prefix.size()) == prefix)
      return path.size() > prefix.size() && valid_segments(path.substr(prefix.size()), '/');
  return false;
}

std::vector<std::string> resource_tokens(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == '/' || c == '\\' || c == '?' || c == '&' || c == '=' || c == '.' || c == ':') {
      if (!cur.empty()) out.push_back(lower(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(lower(cur));
  return out;
}

TfidfModel TfidfModel::fit(const std::vector<std::string>& docs, std::size_t max_vocab) {
  TfidfModel m;
  m.documents = docs.size();
  std::map<std::string, std::size_t> df;
  for (const auto& d : docs) {
    auto toks = resource_tokens(d);
    std::set<std::string> uniq(toks.begin(), toks.end());
    for (const auto& t : uniq) ++df[t];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(df.begin(), df.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > max_vocab) ranked.resize(max_vocab);
  for (const auto& [tok, count] : ranked) {
    m.index.emplace(tok, m.vocabulary.size());
    m.vocabulary.push_back(tok);
    m.idf.push_back(std::log((1.0 + static_cast<double>(m.documents)) /
                             (1.0 + static_cast<double>(count))) +
                    1.0);
  }
  return m;
}

ResourceEncoding encode_resource(std::string_view r, const TfidfModel& model) {
  ResourceEncoding enc;
  enc.values.assign(model.dim(), 0.0);
  for (const auto& t : resource_tokens(r))
    if (auto it = model.index.find(t); it != model.index.end()) enc.values[it->second] += 1.0;
  double n2 = 0.0;
  for (std::size_t i = 0; i < enc.values.size(); ++i) {
    enc.values[i] *= model.idf[i];
    n2 += enc.values[i] * enc.values[i];
  }
  if (n2 == 0.0) {
    enc.all_oov = true;
    return enc;
  }
  const double n = std::sqrt(n2);
  for (auto& x : enc.values) x /= n;
  return enc;
}

ParamType classify_value(std::string_view raw) {
  if (parse_timestamp(raw)) return ParamType::Time;
  if (parse_number(raw)) return ParamType::Numeric;
  if (is_resource(raw)) return ParamType::ResourceId;
  if (is_hexish(raw) || has_user_marker(raw)) return ParamType::UserId;
  return ParamType::Unknown;
}

ParamType classify_parameter(std::string_view raw, const PositionStats& stats) {
  auto t = classify_value(raw);
  if (t == ParamType::Time || t == ParamType::Numeric || t == ParamType::ResourceId) return t;
  if (stats.distinct > 0 && stats.distinct <= stats.state_card_max) return ParamType::State;
  return t;
}

ParamType classify_position(const std::vector<std::string>& values, std::size_t state_card_max) {
  std::set<std::string_view> distinct;
  for (const auto& v : values)
    if (!is_empty_value(v)) distinct.insert(v);
  PositionStats stats{distinct.size(), state_card_max};
  std::map<ParamType, std::size_t> votes;
  for (const auto& v : values)
    if (!is_empty_value(v)) ++votes[classify_parameter(v, stats)];
  ParamType best = ParamType::Unknown;
  std::size_t best_votes = 0;
  for (auto t : kTypeOrder) {
    auto it = votes.find(t);
    if (it != votes.end() && it->second > best_votes) {
      best = t;
      best_votes = it->second;
    }
  }
  if (best == ParamType::State && distinct.size() > kMaxStateCardinality) best = ParamType::ResourceId;
  return best;
}

KeySelection select_key_parameters(const std::vector<PositionFeatures>& features,
                                   const std::vector<std::size_t>& occurrences,
                                   const KeySelectConfig& cfg) {
  KeySelection sel;
  const std::size_t n = features.size();
  auto all_key = [&](bool fallback) {
    sel.key.clear();
    for (std::size_t i = 0; i < n; ++i) sel.key.push_back(static_cast<int>(i));
    sel.fallback = fallback;
    return sel;
  };
  if (n == 0) return sel;
  if (n == 1) return all_key(false);
  bool enough = std::all_of(occurrences.begin(), occurrences.end(),
                            [&](std::size_t c) { return c >= cfg.min_samples; });
  if (!enough || occurrences.size() != n) return all_key(true);

  std::vector<cluster::Point> pts;
  for (const auto& f : features) pts.push_back(f.as_point());
  bool identical = std::all_of(pts.begin(), pts.end(), [&](const auto& p) {
    for (std::size_t j = 0; j < p.size(); ++j)
      if (std::abs(p[j] - pts.front()[j]) > 1e-12) return false;
    return true;
  });
  if (identical) return all_key(false);

  const int k_hi = std::min(cfg.k_max, static_cast<int>(n) - 1);
  if (k_hi < cfg.k_min) return all_key(true);

  double best_score = -2.0;
  std::vector<int> labels;
  for (int k = cfg.k_min; k <= k_hi; ++k) {
    auto res = cluster::kmeans(pts, k, cfg.seed);
    double s = cluster::silhouette(pts, res.labels);
    sel.silhouettes.emplace_back(k, s);
    if (s > best_score) {
      best_score = s;
      sel.chosen_k = k;
      labels = res.labels;
    }
  }

  // Rank clusters by mean variance; take clusters until the covered share of
  // total variance reaches coverage_q.
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < n; ++i) members[labels[i]].push_back(i);
  double total = 0.0;
  for (const auto& f : features) total += std::max(0.0, f.variance);
  if (total <= 0.0) return all_key(false);
  struct Ranked {
    double mean_var;
    std::size_t first;
    std::vector<std::size_t> idx;
  };
  std::vector<Ranked> ranked;
  for (auto& [label, idx] : members) {
    double s = 0.0;
    for (auto i : idx) s += std::max(0.0, features[i].variance);
    ranked.push_back({s / static_cast<double>(idx.size()), idx.front(), idx});
  }
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    return a.mean_var != b.mean_var ? a.mean_var > b.mean_var : a.first < b.first;
  });
  double covered = 0.0;
  for (const auto& r : ranked) {
    for (auto i : r.idx) {
      sel.key.push_back(static_cast<int>(i));
      covered += std::max(0.0, features[i].variance);
    }
    if (covered >= cfg.coverage_q * total) break;
  }
  std::sort(sel.key.begin(), sel.key.end());
  return sel;
}

const LaneSlot* Layout::find(int position) const {
  for (const auto& s : slots)
    if (s.position == position) return &s;
  return nullptr;
}

ParamVector merge_param_vectors(const std::vector<Encoding>& encodings, const Layout& layout) {
  ParamVector pv;
  pv.values.assign(layout.width, 0.0);
  pv.mask.assign(layout.slots.size(), false);
  for (const auto& e : encodings) {
    std::size_t slot_idx = layout.slots.size();
    for (std::size_t i = 0; i < layout.slots.size(); ++i)
      if (layout.slots[i].position == e.position) slot_idx = i;
    if (slot_idx == layout.slots.size())
      throw Error(ErrorKind::LayoutMismatch,
                  "no lane for parameter position " + std::to_string(e.position));
    const auto& slot = layout.slots[slot_idx];
    if (slot.type != e.type || slot.width != e.values.size())
      throw Error(ErrorKind::LayoutMismatch,
                  "encoding does not fit lane of position " + std::to_string(e.position));
    std::copy(e.values.begin(), e.values.end(),
              pv.values.begin() + static_cast<std::ptrdiff_t>(slot.offset));
    pv.mask[slot_idx] = true;
  }
  return pv;
}

std::size_t PositionModel::lane_width(std::size_t resource_dim) const {
  switch (type) {
    case ParamType::Time: return 2 * time_units.size();
    case ParamType::UserId:
    case ParamType::Numeric:
    case ParamType::State: return 1;
    case ParamType::ResourceId: return resource_dim;
    case ParamType::Unknown: break;
  }
  return 0;
}

std::size_t user_bucket(double encoded, std::size_t buckets) {
  auto b = static_cast<std::size_t>(encoded * static_cast<double>(buckets));
  return std::min(b, buckets - 1);
}

std::optional<Vector> ParamModels::encode_position(const PositionModel& pm,
                                                   std::string_view raw) const {
  switch (pm.type) {
    case ParamType::Time: {
      auto f = parse_timestamp(raw);
      if (!f || !time_in_range(*f)) return std::nullopt;
      return encode_timestamp(*f, pm.time_units, units_);
    }
    case ParamType::UserId:
      if (is_empty_value(raw)) return std::nullopt;
      return Vector{encode_user(raw)};
    case ParamType::Numeric: {
      auto x = parse_number(raw);
      if (!x) return std::nullopt;
      return Vector{encode_numeric(*x, pm.numeric, cfg_.z_cap)};
    }
    case ParamType::State:
      if (!pm.states.index_of(raw)) return std::nullopt;
      return Vector{encode_state(raw, pm.states)};
    case ParamType::ResourceId: {
      if (!is_resource(raw)) return std::nullopt;
      auto enc = encode_resource(raw, tfidf_);
      if (enc.all_oov) return std::nullopt;
      return std::move(enc.values);
    }
    case ParamType::Unknown: break;
  }
  return std::nullopt;
}

void ParamModels::build_layout(TemplateParamModel& tm) const {
  tm.layout = Layout{};
  for (auto type : kLaneOrder) {
    for (int p : tm.key_positions) {
      const auto& pm = tm.positions[static_cast<std::size_t>(p)];
      if (pm.type != type) continue;
      auto w = pm.lane_width(tfidf_.dim());
      if (w == 0) continue;
      tm.layout.slots.push_back({p, type, tm.layout.width, w});
      tm.layout.width += w;
    }
  }
}

ParamModels ParamModels::fit(
    const std::vector<std::vector<std::vector<std::string>>>& values_by_template,
    const ParamEncConfig& cfg) {
  ParamModels m;
  m.cfg_ = cfg;
  m.units_.year_period = cfg.year_period;
  m.units_.year_enabled = cfg.year_enabled;
  if (cfg.year_period < 2) throw Error(ErrorKind::ConfigError, "year_period must be >= 2");

  // Pass 1: typing, and the shared TF-IDF corpus.
  std::vector<std::string> resource_docs;
  m.templates_.resize(values_by_template.size());
  for (std::size_t t = 0; t < values_by_template.size(); ++t) {
    auto& tm = m.templates_[t];
    tm.template_id = static_cast<int>(t);
    for (std::size_t p = 0; p < values_by_template[t].size(); ++p) {
      const auto& vals = values_by_template[t][p];
      PositionModel pm;
      pm.position = static_cast<int>(p);
      pm.samples = vals.size();
      pm.type = classify_position(vals, cfg.state_card_max);
      if (pm.type == ParamType::ResourceId)
        for (const auto& v : vals)
          if (!is_empty_value(v)) resource_docs.push_back(v);
      tm.positions.push_back(std::move(pm));
    }
  }
  m.tfidf_ = TfidfModel::fit(resource_docs, cfg.tfidf_max_vocab);

  // Pass 2: per-type baselines and features.
  for (std::size_t t = 0; t < values_by_template.size(); ++t) {
    auto& tm = m.templates_[t];
    for (auto& pm : tm.positions) {
      const auto& vals = values_by_template[t][static_cast<std::size_t>(pm.position)];
      std::set<std::string_view> distinct(vals.begin(), vals.end());
      pm.features.type_code = type_code(pm.type);
      pm.features.distinct_ratio =
          vals.empty() ? 0.0 : static_cast<double>(distinct.size()) / static_cast<double>(vals.size());
      std::size_t ok = 0;
      switch (pm.type) {
        case ParamType::Time: {
          std::array<std::size_t, kTimeUnitCount> present{};
          std::vector<TimeFields> parsed;
          for (const auto& v : vals)
            if (auto f = parse_timestamp(v); f && time_in_range(*f)) {
              parsed.push_back(*f);
              for (std::size_t u = 0; u < kTimeUnitCount; ++u)
                if (f->fields[u]) ++present[u];
            }
          for (std::size_t u = 0; u < kTimeUnitCount; ++u) {
            auto unit = static_cast<TimeUnit>(u);
            if (!m.units_.registered(unit)) continue;
            if (!parsed.empty() && 2 * present[u] >= parsed.size()) pm.time_units.push_back(unit);
          }
          std::vector<Vector> encs;
          for (const auto& f : parsed)
            if (auto e = encode_timestamp(f, pm.time_units, m.units_)) encs.push_back(*e);
          ok = encs.size();
          double var = 0.0;
          if (!encs.empty() && !pm.time_units.empty()) {
            for (std::size_t u = 0; u < pm.time_units.size(); ++u) {
              double ms = 0.0, mc = 0.0;
              for (const auto& e : encs) {
                ms += e[2 * u];
                mc += e[2 * u + 1];
              }
              ms /= static_cast<double>(encs.size());
              mc /= static_cast<double>(encs.size());
              var += 1.0 - ms * ms - mc * mc;
            }
            var /= static_cast<double>(pm.time_units.size());
          }
          pm.features.variance = var;
          break;
        }
        case ParamType::UserId: {
          std::vector<double> encs;
          for (const auto& v : vals)
            if (!is_empty_value(v)) {
              double e = encode_user(v);
              encs.push_back(e);
              ++pm.user_buckets[user_bucket(e, cfg.user_buckets)];
            }
          pm.user_total = encs.size();
          ok = encs.size();
          pm.features.variance = 12.0 * population_variance(encs);
          break;
        }
        case ParamType::Numeric: {
          std::vector<double> xs;
          for (const auto& v : vals)
            if (auto x = parse_number(v)) xs.push_back(*x);
          pm.numeric = NumericBaseline::fit(xs);
          ok = xs.size();
          std::vector<double> zs;
          for (double x : xs)
            zs.push_back(std::clamp(encode_numeric(x, pm.numeric, cfg.z_cap), -cfg.z_cap, cfg.z_cap));
          pm.features.variance = population_variance(zs);
          break;
        }
        case ParamType::State: {
          std::map<std::string, std::size_t> freq;
          for (const auto& v : vals)
            if (!is_empty_value(v)) {
              pm.states.observe(v);
              ++freq[v];
              ++ok;
            }
          double gini = 1.0;
          for (const auto& [s, c] : freq) {
            double p = static_cast<double>(c) / static_cast<double>(ok);
            gini -= p * p;
          }
          pm.features.variance = ok ? gini : 0.0;
          break;
        }
        case ParamType::ResourceId: {
          Vector centroid(m.tfidf_.dim(), 0.0);
          double mean_sq = 0.0;
          for (const auto& v : vals) {
            if (is_empty_value(v)) continue;
            auto e = encode_resource(v, m.tfidf_);
            ++ok;
            for (std::size_t i = 0; i < centroid.size(); ++i) {
              centroid[i] += e.values[i];
              mean_sq += e.values[i] * e.values[i];
            }
          }
          if (ok) {
            for (auto& x : centroid) x /= static_cast<double>(ok);
            mean_sq /= static_cast<double>(ok);
          }
          double c2 = 0.0;
          for (double x : centroid) c2 += x * x;
          pm.resource_centroid = std::move(centroid);
          pm.features.variance = std::max(0.0, mean_sq - c2);
          break;
        }
        case ParamType::Unknown: break;
      }
      pm.features.presence_rate =
          vals.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(vals.size());
    }

    // Key selection over the encodable positions.
    std::vector<int> candidates;
    std::vector<PositionFeatures> feats;
    std::vector<std::size_t> occ;
    for (const auto& pm : tm.positions)
      if (pm.type != ParamType::Unknown && pm.lane_width(m.tfidf_.dim()) > 0) {
        candidates.push_back(pm.position);
        feats.push_back(pm.features);
        occ.push_back(pm.samples);
      }
    KeySelectConfig kcfg = cfg.keys;
    kcfg.seed = cfg.keys.seed ^ static_cast<std::uint64_t>(t);
    tm.selection = select_key_parameters(feats, occ, kcfg);
    for (int i : tm.selection.key) tm.key_positions.push_back(candidates[static_cast<std::size_t>(i)]);
    m.build_layout(tm);
    m.max_width_ = std::max(m.max_width_, tm.layout.width);
  }
  return m;
}

const TemplateParamModel* ParamModels::find(int template_id) const {
  if (template_id < 0 || static_cast<std::size_t>(template_id) >= templates_.size()) return nullptr;
  return &templates_[static_cast<std::size_t>(template_id)];
}

ParamVector ParamModels::encode(int template_id, const std::vector<std::string>& params) const {
  const auto* tm = find(template_id);
  if (!tm) throw Error(ErrorKind::UnfittedTemplate, "no parameter model for template " +
                                                         std::to_string(template_id));
  if (params.size() != tm->positions.size())
    throw Error(ErrorKind::LayoutMismatch, "parameter count differs from the fitted template");
  std::vector<Encoding> encs;
  for (const auto& slot : tm->layout.slots) {
    const auto& pm = tm->positions[static_cast<std::size_t>(slot.position)];
    if (auto v = encode_position(pm, params[static_cast<std::size_t>(slot.position)]))
      encs.push_back({slot.position, slot.type, std::move(*v)});
  }
  return merge_param_vectors(encs, tm->layout);
}

Vector ParamModels::model_input(int template_id, const ParamVector& pv) const {
  Vector out(max_width_, 0.0);
  const auto* tm = find(template_id);
  if (!tm) return out;
  for (std::size_t s = 0; s < tm->layout.slots.size(); ++s) {
    const auto& slot = tm->layout.slots[s];
    if (!pv.mask[s]) continue;
    for (std::size_t i = 0; i < slot.width; ++i) {
      double v = pv.values[slot.offset + i];
      if (slot.type == ParamType::Numeric) {
        v = std::clamp(v, -cfg_.z_cap, cfg_.z_cap) / cfg_.z_cap;
      } else if (slot.type == ParamType::State) {
        const auto k = tm->positions[static_cast<std::size_t>(slot.position)].states.size();
        v = v / std::ldexp(1.0, static_cast<int>(k > 0 ? k - 1 : 0));
      }
      out[slot.offset + i] = v;
    }
  }
  return out;
}

nlohmann::json ParamModels::to_json() const {
  using nlohmann::json;
  json numeric = json::array(), states = json::array(), keys = json::array(),
       positions = json::array();
  for (const auto& tm : templates_) {
    keys.push_back({{"template_id", tm.template_id},
                    {"positions", tm.key_positions},
                    {"chosen_k", tm.selection.chosen_k},
                    {"fallback", tm.selection.fallback}});
    for (const auto& pm : tm.positions) {
      json units = json::array();
      for (auto u : pm.time_units) units.push_back(std::string(to_string(u)));
      json buckets = json::array();
      for (const auto& [b, c] : pm.user_buckets) buckets.push_back({b, c});
      positions.push_back({{"template_id", tm.template_id},
                           {"position", pm.position},
                           {"type", std::string(to_string(pm.type))},
                           {"samples", pm.samples},
                           {"time_units", units},
                           {"user_buckets", buckets},
                           {"user_total", pm.user_total},
                           {"resource_centroid", pm.resource_centroid},
                           {"features",
                            {pm.features.variance, pm.features.type_code,
                             pm.features.distinct_ratio, pm.features.presence_rate}}});
      if (pm.type == ParamType::Numeric)
        numeric.push_back({{"template_id", tm.template_id},
                           {"position", pm.position},
                           {"mean", pm.numeric.mean},
                           {"stddev", pm.numeric.stddev},
                           {"min", pm.numeric.min},
                           {"max", pm.numeric.max},
                           {"count", pm.numeric.count}});
      if (pm.type == ParamType::State)
        states.push_back({{"template_id", tm.template_id},
                          {"position", pm.position},
                          {"states", pm.states.states},
                          {"frozen_size", pm.states.size()}});
    }
  }
  return {{"config",
           {{"state_card_max", cfg_.state_card_max},
            {"z_cap", cfg_.z_cap},
            {"tfidf_max_vocab", cfg_.tfidf_max_vocab},
            {"user_buckets", cfg_.user_buckets},
            {"k_min", cfg_.keys.k_min},
            {"k_max", cfg_.keys.k_max},
            {"coverage_q", cfg_.keys.coverage_q},
            {"min_samples", cfg_.keys.min_samples},
            {"seed", cfg_.keys.seed}}},
          {"template_count", templates_.size()},
          {"time_units", {{"year_period", units_.year_period}, {"year_enabled", units_.year_enabled}}},
          {"tfidf", {{"vocabulary", tfidf_.vocabulary}, {"idf", tfidf_.idf}, {"documents", tfidf_.documents}}},
          {"numeric_baselines", numeric},
          {"state_registries", states},
          {"key_positions", keys},
          {"positions", positions}};
}

ParamModels ParamModels::from_json(const nlohmann::json& j) {
  try {
    ParamModels m;
    const auto& c = j.at("config");
    m.cfg_.state_card_max = c.at("state_card_max").get<std::size_t>();
    m.cfg_.z_cap = c.at("z_cap").get<double>();
    m.cfg_.tfidf_max_vocab = c.at("tfidf_max_vocab").get<std::size_t>();
    m.cfg_.user_buckets = c.at("user_buckets").get<std::size_t>();
    m.cfg_.keys.k_min = c.at("k_min").get<int>();
    m.cfg_.keys.k_max = c.at("k_max").get<int>();
    m.cfg_.keys.coverage_q = c.at("coverage_q").get<double>();
    m.cfg_.keys.min_samples = c.at("min_samples").get<std::size_t>();
    m.cfg_.keys.seed = c.at("seed").get<std::uint64_t>();
    m.units_.year_period = j.at("time_units").at("year_period").get<int>();
    m.units_.year_enabled = j.at("time_units").at("year_enabled").get<bool>();
    m.cfg_.year_period = m.units_.year_period;
    m.cfg_.year_enabled = m.units_.year_enabled;
    const auto& tf = j.at("tfidf");
    m.tfidf_.vocabulary = tf.at("vocabulary").get<std::vector<std::string>>();
    m.tfidf_.idf = tf.at("idf").get<std::vector<double>>();
    m.tfidf_.documents = tf.at("documents").get<std::size_t>();
    for (std::size_t i = 0; i < m.tfidf_.vocabulary.size(); ++i)
      m.tfidf_.index.emplace(m.tfidf_.vocabulary[i], i);

    m.templates_.resize(j.at("template_count").get<std::size_t>());
    for (std::size_t t = 0; t < m.templates_.size(); ++t) m.templates_[t].template_id = static_cast<int>(t);
    auto pos_ref = [&](const nlohmann::json& e) -> PositionModel& {
      auto t = e.at("template_id").get<std::size_t>();
      auto p = e.at("position").get<std::size_t>();
      auto& tm = m.templates_.at(t);
      if (tm.positions.size() <= p) tm.positions.resize(p + 1);
      tm.positions[p].position = static_cast<int>(p);
      return tm.positions[p];
    };
    for (const auto& e : j.at("positions")) {
      auto& pm = pos_ref(e);
      pm.type = param_type_from_string(e.at("type").get<std::string>());
      pm.samples = e.at("samples").get<std::size_t>();
      for (const auto& u : e.at("time_units")) pm.time_units.push_back(time_unit_from_string(u.get<std::string>()));
      for (const auto& b : e.at("user_buckets"))
        pm.user_buckets[b.at(0).get<std::size_t>()] = b.at(1).get<std::uint64_t>();
      pm.user_total = e.at("user_total").get<std::uint64_t>();
      pm.resource_centroid = e.at("resource_centroid").get<Vector>();
      auto f = e.at("features").get<std::vector<double>>();
      pm.features = {f.at(0), f.at(1), f.at(2), f.at(3)};
    }
    for (const auto& e : j.at("numeric_baselines")) {
      auto& pm = pos_ref(e);
      pm.numeric = {e.at("mean").get<double>(), e.at("stddev").get<double>(), e.at("min").get<double>(),
                    e.at("max").get<double>(), e.at("count").get<std::uint64_t>()};
    }
    for (const auto& e : j.at("state_registries")) {
      auto& pm = pos_ref(e);
      pm.states.states = e.at("states").get<std::vector<std::string>>();
    }
    for (const auto& e : j.at("key_positions")) {
      auto& tm = m.templates_.at(e.at("template_id").get<std::size_t>());
      tm.key_positions = e.at("positions").get<std::vector<int>>();
      tm.selection.chosen_k = e.at("chosen_k").get<int>();
      tm.selection.fallback = e.at("fallback").get<bool>();
    }
    for (auto& tm : m.templates_) {
      m.build_layout(tm);
      m.max_width_ = std::max(m.max_width_, tm.layout.width);
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::FormatError, std::string("parameter models: ") + e.what());
  }
}

}  // namespace tplad::paramenc
