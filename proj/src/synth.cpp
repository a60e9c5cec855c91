#include "tplad/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "tplad/error.hpp"
#include "tplad/paramenc.hpp"
#include "tplad/pipeline.hpp"

namespace tplad::synth {

namespace {

using nlohmann::json;

const std::vector<std::string> kComponents = {"dfs",  "rpc",  "sched", "cache", "auth",  "net",
                                              "disk", "jvm",  "kernel", "mem",  "queue", "lock",
                                              "repl", "index", "shard", "proxy"};
const std::vector<std::string> kActions = {"open",  "close", "flush", "commit", "fetch", "send",
                                           "recv",  "alloc", "free",  "sync",   "scan",  "merge",
                                           "split", "evict", "retry", "report"};
const std::vector<std::string> kNouns = {"block",  "segment", "channel", "session", "buffer",
                                         "ticket", "lease",   "page",    "stream",  "handle",
                                         "record", "batch",   "region",  "socket",  "volume",
                                         "snapshot", "journal", "epoch", "token",   "chunk"};
const std::vector<std::string> kFresh = {"zeta",   "quartz", "ember",  "tundra", "lagoon",
                                         "nimbus", "obsidian", "prism", "saffron", "vortex",
                                         "willow", "yonder"};
const std::vector<std::vector<std::string>> kStateSets = {
    {"OPEN", "CLOSED", "PENDING"}, {"UP", "DOWN"}, {"ACTIVE", "IDLE", "BUSY"},
    {"READY", "WAITING", "RUNNING", "BLOCKED"}};
const std::vector<std::string> kApps = {"ingest", "archive", "spool", "export", "stage", "warehouse"};

struct Piece {
  bool slot = false;
  std::string word;
  Slot spec;
};

struct Tmpl {
  std::vector<Piece> pieces;
  std::vector<Piece> variant;  // empty unless held out
  std::size_t onset_line = SIZE_MAX;
};

std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

std::string format_time(std::int64_t secs) {
  std::int64_t z = secs / 86400 + 719468;
  const std::int64_t rem = secs % 86400;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  y += m <= 2;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lld", static_cast<long long>(y), m, d,
                static_cast<long long>(rem / 3600), static_cast<long long>(rem / 60 % 60),
                static_cast<long long>(rem % 60));
  return buf;
}

std::int64_t parse_start(const std::string& s) {
  int y, mo, d, h, mi, se;
  if (std::sscanf(s.c_str(), "%d-%d-%dT%d:%d:%d", &y, &mo, &d, &h, &mi, &se) != 6)
    throw Error(ErrorKind::ManifestError, "start_time must look like 2024-03-01T08:00:00");
  return days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)) * 86400 + h * 3600 +
         mi * 60 + se;
}

std::string slot_type_name(SlotType t) {
  switch (t) {
    case SlotType::Time: return "time";
    case SlotType::User: return "user";
    case SlotType::Numeric: return "numeric";
    case SlotType::State: return "state";
    case SlotType::Resource: return "resource";
  }
  return "numeric";
}

std::optional<SlotType> kind_slot(const std::string& kind) {
  if (kind == "TimeFormat" || kind == "TimeRange") return SlotType::Time;
  if (kind == "UserEmpty" || kind == "UserOutlier") return SlotType::User;
  if (kind == "NumericInvalid" || kind == "NumericRange") return SlotType::Numeric;
  if (kind == "StateUnseen" || kind == "StateFlapping") return SlotType::State;
  if (kind == "ResourcePath" || kind == "ResourceAssociation") return SlotType::Resource;
  return std::nullopt;
}

template <class Rng>
long long uniform(Rng& rng, long long lo, long long hi) {
  return std::uniform_int_distribution<long long>(lo, hi)(rng);
}

template <class Rng>
Slot random_slot(SlotType type, Rng& rng) {
  Slot s;
  s.type = type;
  s.lo = 10 * uniform(rng, 0, 50);
  s.hi = s.lo + uniform(rng, 20, 400);
  s.states = kStateSets[static_cast<std::size_t>(uniform(rng, 0, static_cast<long long>(kStateSets.size()) - 1))];
  s.app = kApps[static_cast<std::size_t>(uniform(rng, 0, static_cast<long long>(kApps.size()) - 1))];
  return s;
}

template <class Rng>
Piece parse_marker(const std::string& tok, Rng& rng) {
  auto body = tok.substr(1, tok.size() - 2);
  std::vector<std::string> parts;
  std::stringstream ss(body);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  if (parts.empty()) throw Error(ErrorKind::ManifestError, "empty slot marker");
  const auto& name = parts[0];
  SlotType type;
  if (name == "time") type = SlotType::Time;
  else if (name == "user") type = SlotType::User;
  else if (name == "numeric") type = SlotType::Numeric;
  else if (name == "state") type = SlotType::State;
  else if (name == "resource") type = SlotType::Resource;
  else throw Error(ErrorKind::ManifestError, "unknown slot type '" + name + "'");
  Piece p;
  p.slot = true;
  p.spec = random_slot(type, rng);
  try {
    if (type == SlotType::Numeric && parts.size() == 3) {
      p.spec.lo = std::stoll(parts[1]);
      p.spec.hi = std::stoll(parts[2]);
      if (p.spec.hi <= p.spec.lo) throw Error(ErrorKind::ManifestError, "numeric slot needs lo < hi");
    } else if (type == SlotType::State && parts.size() == 2) {
      p.spec.states.clear();
      std::stringstream vs(parts[1]);
      for (std::string v; std::getline(vs, v, '|');)
        if (!v.empty()) p.spec.states.push_back(v);
      if (p.spec.states.size() < 2) throw Error(ErrorKind::ManifestError, "state slot needs two values");
    } else if (type == SlotType::Resource && parts.size() == 2) {
      p.spec.app = parts[1];
    } else if (parts.size() != 1) {
      throw Error(ErrorKind::ManifestError, "malformed slot marker '" + tok + "'");
    }
  } catch (const std::logic_error&) {
    throw Error(ErrorKind::ManifestError, "malformed slot marker '" + tok + "'");
  }
  return p;
}

std::string connector(SlotType t, std::size_t salt) {
  static const std::vector<std::vector<std::string>> words = {
      {"at", "since"}, {"user", "by"}, {"size", "count", "took"}, {"state", "status"}, {"path", "file"}};
  const auto& w = words[static_cast<std::size_t>(t)];
  return w[salt % w.size()];
}

template <class Rng>
std::vector<Tmpl> build_templates(const Manifest& m, Rng& rng) {
  std::vector<Tmpl> out;
  if (!m.templates.empty()) {
    for (const auto& spec : m.templates) {
      Tmpl t;
      std::stringstream ss(spec.text);
      for (std::string tok; ss >> tok;) {
        if (tok.size() > 2 && tok.front() == '{' && tok.back() == '}') t.pieces.push_back(parse_marker(tok, rng));
        else t.pieces.push_back({false, tok, {}});
      }
      if (t.pieces.empty()) throw Error(ErrorKind::ManifestError, "empty template text");
      if (t.pieces[0].slot) throw Error(ErrorKind::ManifestError, "a template must start with a word");
      out.push_back(std::move(t));
    }
    return out;
  }
  std::set<std::pair<std::size_t, std::size_t>> used;
  std::size_t type_cursor = 0;
  for (std::size_t i = 0; i < m.template_count; ++i) {
    std::size_t c = i % kComponents.size();
    std::size_t a = (i * 7 + i / kComponents.size()) % kActions.size();
    while (used.count({c, a})) a = (a + 1) % kActions.size();
    used.insert({c, a});
    Tmpl t;
    t.pieces.push_back({false, kComponents[c], {}});
    t.pieces.push_back({false, kActions[a], {}});
    t.pieces.push_back({false, kNouns[static_cast<std::size_t>(uniform(rng, 0, static_cast<long long>(kNouns.size()) - 1))], {}});
    const std::size_t slots = i % 5 == 4 ? 0 : 1 + (i % 2);
    for (std::size_t s = 0; s < slots; ++s) {
      auto type = static_cast<SlotType>(type_cursor++ % 5);
      t.pieces.push_back({false, connector(type, i), {}});
      Piece p;
      p.slot = true;
      p.spec = random_slot(type, rng);
      t.pieces.push_back(p);
    }
    t.pieces.push_back({false, kNouns[static_cast<std::size_t>(uniform(rng, 0, static_cast<long long>(kNouns.size()) - 1))], {}});
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<Piece> make_variant(const std::vector<Piece>& base, std::size_t style, std::size_t salt) {
  auto v = base;
  switch (style % 4) {
    case 0: {  // one literal reworded, same shape
      for (std::size_t i = v.size(); i-- > 2;)
        if (!v[i].slot) {
          v[i].word = kFresh[salt % kFresh.size()];
          break;
        }
      break;
    }
    case 1:  // one extra literal
      v.push_back({false, "again", {}});
      break;
    case 2: {  // one extra numeric parameter
      v.push_back({false, "extra", {}});
      Piece p;
      p.slot = true;
      p.spec.type = SlotType::Numeric;
      p.spec.lo = 0;
      p.spec.hi = 9;
      v.push_back(p);
      break;
    }
    default:  // every literal replaced
      for (std::size_t i = 0; i < v.size(); ++i)
        if (!v[i].slot) v[i].word = kFresh[(salt + i) % kFresh.size()] + std::to_string(i);
      break;
  }
  return v;
}

struct SlotState {
  std::size_t current = 0;
  std::size_t burst_left = 0;
  std::size_t burst_other = 0;
  std::size_t burst_base = 0;
  std::size_t burst_pos = 0;
};

}  // namespace

const std::vector<std::string>& all_kinds() {
  static const std::vector<std::string> kinds = {
      "Sequence",     "TimeFormat",  "TimeRange",     "UserEmpty",    "UserOutlier", "NumericInvalid",
      "NumericRange", "StateUnseen", "StateFlapping", "ResourcePath", "ResourceAssociation"};
  return kinds;
}

Manifest Manifest::from_json(const json& j) {
  static const std::set<std::string> known = {
      "seed",       "lines",          "template_count", "templates",        "out_degree",
      "transitions", "injection_rate", "kinds",         "counts",           "flapping_burst",
      "state_stickiness", "user_pool", "holdout",       "start_time"};
  if (!j.is_object()) throw Error(ErrorKind::ManifestError, "manifest must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw Error(ErrorKind::ManifestError, "unknown manifest key '" + k + "'");
  Manifest m;
  try {
    m.seed = j.value("seed", m.seed);
    m.lines = j.value("lines", m.lines);
    m.template_count = j.value("template_count", m.template_count);
    if (j.contains("templates"))
      for (const auto& t : j.at("templates")) m.templates.push_back({t.get<std::string>()});
    m.out_degree = j.value("out_degree", m.out_degree);
    if (j.contains("transitions"))
      for (const auto& [k, v] : j.at("transitions").items())
        m.transitions[std::stoul(k)] = v.get<std::vector<std::size_t>>();
    m.injection_rate = j.value("injection_rate", m.injection_rate);
    if (j.contains("kinds")) m.kinds = j.at("kinds").get<std::vector<std::string>>();
    if (j.contains("counts")) m.counts = j.at("counts").get<std::map<std::string, std::size_t>>();
    m.flapping_burst = j.value("flapping_burst", m.flapping_burst);
    m.state_stickiness = j.value("state_stickiness", m.state_stickiness);
    m.user_pool = j.value("user_pool", m.user_pool);
    if (j.contains("holdout"))
      for (const auto& h : j.at("holdout")) m.holdout.push_back({h.at("onset").get<double>(), h.at("count").get<std::size_t>()});
    m.start_time = j.value("start_time", m.start_time);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ManifestError, e.what());
  } catch (const std::logic_error& e) {
    throw Error(ErrorKind::ManifestError, e.what());
  }
  return m;
}

json Manifest::to_json() const {
  json j = {{"seed", seed},
            {"lines", lines},
            {"template_count", template_count},
            {"out_degree", out_degree},
            {"injection_rate", injection_rate},
            {"kinds", kinds},
            {"counts", counts},
            {"flapping_burst", flapping_burst},
            {"state_stickiness", state_stickiness},
            {"user_pool", user_pool},
            {"start_time", start_time}};
  j["templates"] = json::array();
  for (const auto& t : templates) j["templates"].push_back(t.text);
  j["transitions"] = json::object();
  for (const auto& [k, v] : transitions) j["transitions"][std::to_string(k)] = v;
  j["holdout"] = json::array();
  for (const auto& h : holdout) j["holdout"].push_back({{"onset", h.onset}, {"count", h.count}});
  return j;
}

Corpus generate(const Manifest& m) {
  const auto& every = all_kinds();
  const auto kinds = m.kinds.empty() ? every : m.kinds;
  for (const auto& k : kinds)
    if (std::find(every.begin(), every.end(), k) == every.end())
      throw Error(ErrorKind::ManifestError, "unknown anomaly kind '" + k + "'");
  for (const auto& [k, n] : m.counts)
    if (std::find(every.begin(), every.end(), k) == every.end())
      throw Error(ErrorKind::ManifestError, "unknown anomaly kind '" + k + "'");
  if (m.lines == 0) throw Error(ErrorKind::ManifestError, "lines must be positive");
  if (m.injection_rate < 0.0 || m.injection_rate > 0.5)
    throw Error(ErrorKind::ManifestError, "injection_rate must be in [0, 0.5]");
  if (m.flapping_burst < 3) throw Error(ErrorKind::ManifestError, "flapping_burst must be >= 3");
  if (m.user_pool < 1) throw Error(ErrorKind::ManifestError, "user_pool must be >= 1");
  if (m.state_stickiness < 0.0 || m.state_stickiness > 1.0)
    throw Error(ErrorKind::ManifestError, "state_stickiness must be in [0,1]");
  if (m.out_degree < 1) throw Error(ErrorKind::ManifestError, "out_degree must be >= 1");

  std::mt19937_64 rng(m.seed);
  auto tmpls = build_templates(m, rng);
  const std::size_t n = tmpls.size();
  if (n < 2) throw Error(ErrorKind::ManifestError, "need at least two templates");
  const std::int64_t start = parse_start(m.start_time);

  // Transition structure.
  std::vector<std::vector<std::size_t>> succ(n);
  std::vector<std::vector<double>> weight(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (auto it = m.transitions.find(i); it != m.transitions.end()) {
      succ[i] = it->second;
      for (auto s : succ[i])
        if (s >= n) throw Error(ErrorKind::ManifestError, "transition target out of range");
      if (succ[i].empty()) throw Error(ErrorKind::ManifestError, "empty successor list");
    } else if (!m.transitions.empty()) {
      throw Error(ErrorKind::ManifestError, "transitions must list every template");
    } else {
      succ[i].push_back((i + 1) % n);
      std::vector<std::size_t> others;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i && j != (i + 1) % n) others.push_back(j);
      std::shuffle(others.begin(), others.end(), rng);
      const std::size_t extra = std::min(others.size(), static_cast<std::size_t>(uniform(rng, 0, static_cast<long long>(m.out_degree) - 1)));
      succ[i].insert(succ[i].end(), others.begin(), others.begin() + static_cast<std::ptrdiff_t>(extra));
    }
    for (std::size_t k = 0; k < succ[i].size(); ++k)
      weight[i].push_back(std::uniform_real_distribution<double>(1.0, 3.0)(rng));
  }

  // Holdout variants.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  // Replace the busiest templates first: a variant then has real support once
  // it is in the training prefix, and real weight when it is not.
  std::vector<double> pi(n, 1.0 / static_cast<double>(n));
  for (int it = 0; it < 500; ++it) {
    std::vector<double> next(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double total = 0.0;
      for (double w : weight[i]) total += w;
      for (std::size_t k = 0; k < succ[i].size(); ++k) next[succ[i][k]] += pi[i] * weight[i][k] / total;
    }
    pi = std::move(next);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pi[a] > pi[b]; });
  // Each group leads with one wholly reworded template; the rest cycle
  // through the milder edits.
  std::size_t cursor = 0;
  for (std::size_t gi = 0; gi < m.holdout.size(); ++gi) {
    const auto& g = m.holdout[gi];
    if (g.onset <= 0.0 || g.onset >= 1.0) throw Error(ErrorKind::ManifestError, "holdout onset must be in (0,1)");
    for (std::size_t k = 0; k < g.count; ++k) {
      if (cursor >= n) throw Error(ErrorKind::ManifestError, "holdout replaces more templates than exist");
      auto& t = tmpls[order[cursor++]];
      const std::size_t style = k == 0 ? 3 : (gi + k - 1) % 3;
      t.variant = make_variant(t.pieces, style, cursor * 3 + 1);
      t.onset_line = static_cast<std::size_t>(g.onset * static_cast<double>(m.lines));
    }
  }

  // Injection plan, counted in lines.
  std::map<std::string, std::size_t> plan;
  if (!m.counts.empty()) {
    plan = m.counts;
  } else if (m.injection_rate > 0.0) {
    const auto total = static_cast<std::size_t>(std::llround(m.injection_rate * static_cast<double>(m.lines)));
    for (std::size_t k = 0; k < kinds.size(); ++k)
      plan[kinds[k]] = total / kinds.size() + (k < total % kinds.size() ? 1 : 0);
  }
  std::vector<std::string> events;
  for (const auto& [kind, count] : plan) {
    if (count == 0) continue;
    const std::size_t e = kind == "StateFlapping" ? std::max<std::size_t>(1, (count + m.flapping_burst / 2) / m.flapping_burst) : count;
    for (std::size_t i = 0; i < e; ++i) events.push_back(kind);
  }
  std::shuffle(events.begin(), events.end(), rng);
  std::map<std::size_t, std::string> schedule;
  if (!events.empty()) {
    const double span = static_cast<double>(m.lines) / static_cast<double>(events.size() + 1);
    for (std::size_t e = 0; e < events.size(); ++e) {
      const auto jitter = static_cast<long long>(span / 4.0);
      auto pos = static_cast<long long>(span * static_cast<double>(e + 1)) + (jitter > 0 ? uniform(rng, -jitter, jitter) : 0);
      pos = std::clamp<long long>(pos, 1, static_cast<long long>(m.lines) - 1);
      auto p = static_cast<std::size_t>(pos);
      while (schedule.count(p) && p + 1 < m.lines) ++p;
      schedule[p] = events[e];
    }
  }

  // Users, with outlier names chosen outside every pool bucket.
  const std::size_t buckets = paramenc::ParamEncConfig{}.user_buckets;
  std::vector<std::string> users;
  std::set<std::size_t> pool_buckets;
  std::set<std::string> seen_users;
  while (users.size() < m.user_pool) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "user_%04lld", uniform(rng, 0, 9999));
    if (!seen_users.insert(buf).second) continue;
    users.push_back(buf);
    pool_buckets.insert(paramenc::user_bucket(paramenc::encode_user(buf), buckets));
  }
  std::size_t outlier_counter = 0;
  auto outlier_user = [&] {
    for (;;) {
      auto name = "intruder_" + std::to_string(outlier_counter++);
      if (!pool_buckets.count(paramenc::user_bucket(paramenc::encode_user(name), buckets))) return name;
    }
  };

  std::vector<std::vector<SlotState>> states(n);
  for (std::size_t i = 0; i < n; ++i) states[i].resize(tmpls[i].pieces.size() + 4);

  Corpus c;
  c.manifest = m;
  std::int64_t clock = start;
  std::size_t s = 0;
  std::deque<std::string> pending;
  std::size_t anomaly_counter = 0;

  auto pick = [&](const std::vector<double>& w) {
    return std::discrete_distribution<std::size_t>(w.begin(), w.end())(rng);
  };

  for (std::size_t line = 0; line < m.lines; ++line) {
    clock += uniform(rng, 1, 3);
    std::optional<std::string> kind;
    std::size_t t;
    auto sched = schedule.find(line);
    bool burst_line = false;
    if (sched != schedule.end() && sched->second == "Sequence") {
      std::vector<std::size_t> illegal;
      for (std::size_t j = 0; j < n; ++j) {
        if (std::find(succ[s].begin(), succ[s].end(), j) != succ[s].end()) continue;
        bool bursting = false;
        for (const auto& st : states[j]) bursting |= st.burst_left > 0;
        if (!bursting) illegal.push_back(j);
      }
      if (illegal.empty()) {
        pending.push_back("Sequence");
        t = succ[s][pick(weight[s])];
        s = t;
      } else {
        t = illegal[static_cast<std::size_t>(uniform(rng, 0, static_cast<long long>(illegal.size()) - 1))];
        kind = "Sequence";
      }
    } else {
      if (sched != schedule.end()) pending.push_back(sched->second);
      t = succ[s][pick(weight[s])];
      s = t;
    }

    const bool use_variant = !tmpls[t].variant.empty() && line >= tmpls[t].onset_line;
    const auto& pieces = use_variant ? tmpls[t].variant : tmpls[t].pieces;

    // Which slot, if any, carries a parameter anomaly on this line.
    std::optional<std::size_t> target;
    std::string target_kind;
    for (std::size_t i = 0; i < pieces.size(); ++i)
      if (pieces[i].slot && pieces[i].spec.type == SlotType::State && states[t][i].burst_left > 0) {
        burst_line = true;
        target = i;
        target_kind = "StateFlapping";
      }
    if (!kind && !burst_line) {
      for (auto it = pending.begin(); it != pending.end() && !target; ++it) {
        if (*it == "Sequence") continue;
        auto need = kind_slot(*it);
        for (std::size_t i = 0; i < pieces.size(); ++i) {
          if (!pieces[i].slot || pieces[i].spec.type != *need) continue;
          if (*it == "StateFlapping" && pieces[i].spec.states.size() < 2) continue;
          target = i;
          target_kind = *it;
          pending.erase(it);
          break;
        }
      }
    }

    std::string text;
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      const auto& p = pieces[i];
      std::string tok;
      if (!p.slot) {
        tok = p.word;
      } else {
        const auto& sp = p.spec;
        auto& st = states[t][i];
        const bool hit = target && *target == i;
        switch (sp.type) {
          case SlotType::Time:
            if (hit && target_kind == "TimeFormat") tok = "ts_invalid";
            else if (hit && target_kind == "TimeRange")
              tok = anomaly_counter % 2 ? format_time(clock - 3600) : format_time(clock).replace(5, 2, "13");
            else tok = format_time(clock);
            break;
          case SlotType::User:
            if (hit && target_kind == "UserEmpty") tok = anomaly_counter % 2 ? "null" : "-";
            else if (hit && target_kind == "UserOutlier") tok = outlier_user();
            else tok = users[static_cast<std::size_t>(uniform(rng, 0, static_cast<long long>(users.size()) - 1))];
            break;
          case SlotType::Numeric:
            if (hit && target_kind == "NumericInvalid") tok = std::to_string(uniform(rng, 1, 99)) + "x" + std::to_string(uniform(rng, 1, 9));
            else if (hit && target_kind == "NumericRange")
              tok = std::to_string(sp.hi + (sp.hi - sp.lo) * uniform(rng, 5, 9) + 1);
            else tok = std::to_string(uniform(rng, sp.lo, sp.hi));
            break;
          case SlotType::State: {
            const auto k = sp.states.size();
            if (hit && target_kind == "StateUnseen") {
              tok = "FAULTED";
            } else if (hit && target_kind == "StateFlapping") {
              if (st.burst_left == 0) {
                st.burst_left = m.flapping_burst;
                st.burst_base = st.current;
                st.burst_other = (st.current + 1 + static_cast<std::size_t>(uniform(rng, 0, static_cast<long long>(k) - 2))) % k;
                st.burst_pos = 0;
              }
              st.current = st.burst_pos % 2 == 0 ? st.burst_other : st.burst_base;
              ++st.burst_pos;
              --st.burst_left;
              tok = sp.states[st.current];
            } else {
              if (k > 1 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) > m.state_stickiness)
                st.current = (st.current + 1 + static_cast<std::size_t>(uniform(rng, 0, static_cast<long long>(k) - 2))) % k;
              tok = sp.states[st.current];
            }
            break;
          }
          case SlotType::Resource:
            if (hit && target_kind == "ResourcePath") tok = "corrupt#" + std::to_string(uniform(rng, 0, 999));
            else if (hit && target_kind == "ResourceAssociation")
              tok = "/etc/shadow/key" + std::to_string(uniform(rng, 0, 99)) + ".pem";
            else {
              char buf[64];
              std::snprintf(buf, sizeof buf, "/data/%s/part-%04lld.dat", sp.app.c_str(), uniform(rng, 0, 9999));
              tok = buf;
            }
            break;
        }
      }
      if (!text.empty()) text += ' ';
      text += tok;
    }
    if (target) {
      kind = target_kind;
      ++anomaly_counter;
    }
    c.lines.push_back(std::move(text));
    c.truth.push_back({line + 1, kind.has_value(), kind, t, use_variant});
  }
  for (const auto& t : tmpls) {
    std::string s2;
    for (const auto& p : t.pieces) {
      if (!s2.empty()) s2 += ' ';
      s2 += p.slot ? "{" + slot_type_name(p.spec.type) + "}" : p.word;
    }
    c.template_texts.push_back(s2);
  }
  return c;
}

void write_corpus(const Corpus& c, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create " + dir.string());
  std::string logs;
  for (const auto& l : c.lines) logs += l + '\n';
  std::string truth;
  for (const auto& t : c.truth) {
    json j = {{"line_no", t.line_no},
              {"label", t.anomalous ? "Anomalous" : "Normal"},
              {"template", t.template_index},
              {"variant", t.variant}};
    if (t.kind) j["kind"] = *t.kind;
    truth += j.dump() + '\n';
  }
  pipeline::write_file_atomic(dir / "logs.txt", logs);
  pipeline::write_file_atomic(dir / "truth.jsonl", truth);
  pipeline::write_file_atomic(dir / "manifest.json", c.manifest.to_json().dump(2) + '\n');
}

}  // namespace tplad::synth
