#include "tplad/detector.hpp"

#include <algorithm>
#include <cmath>

#include "tplad/error.hpp"

namespace tplad::detector {

namespace {

using paramenc::ParamType;

constexpr std::uint8_t kFlapReported = 1;
constexpr std::uint8_t kTimeExcluded = 2;

constexpr std::string_view kSubkindNames[kSubkindCount] = {
    "TimeFormat",   "TimeRange",   "UserEmpty",     "UserOutlier",  "NumericInvalid",
    "NumericRange", "StateUnseen", "StateFlapping", "ResourcePath", "ResourceAssociation"};

AnomalyReport param_report(const BufferedEntry& e, int template_id, ParamSubkind sub, int position,
                           const std::string& value) {
  AnomalyReport r;
  r.line_no = e.line_no;
  r.kind = AnomalyKind::Parameter;
  r.subkind = sub;
  r.template_id = template_id;
  r.matched = e.matched;
  r.evidence = {{"position", position}, {"value", value}};
  return r;
}

const std::string& value_at(const BufferedEntry& e, int position) {
  static const std::string empty;
  auto p = static_cast<std::size_t>(position);
  return p < e.params.size() ? e.params[p] : empty;
}

std::uint8_t& mark(BufferedEntry& e, int position) {
  auto p = static_cast<std::size_t>(position);
  if (e.marks.size() <= p) e.marks.resize(p + 1, 0);
  return e.marks[p];
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) s += a[i] * b[i];
  return s;
}

// Stateless checks on one value; nullopt when it passes.
std::optional<AnomalyReport> check_value(const BufferedEntry& e, int template_id,
                                         const paramenc::PositionModel& pm,
                                         const paramenc::ParamModels& models,
                                         const DetectorConfig& cfg) {
  const auto& raw = value_at(e, pm.position);
  switch (pm.type) {
    case ParamType::Time: {
      auto f = paramenc::parse_timestamp(raw);
      if (!f) return param_report(e, template_id, ParamSubkind::TimeFormat, pm.position, raw);
      if (!paramenc::time_in_range(*f)) {
        auto r = param_report(e, template_id, ParamSubkind::TimeRange, pm.position, raw);
        r.evidence["reason"] = "field_out_of_range";
        return r;
      }
      return std::nullopt;
    }
    case ParamType::UserId: {
      if (paramenc::is_empty_value(raw))
        return param_report(e, template_id, ParamSubkind::UserEmpty, pm.position, raw);
      if (pm.features.distinct_ratio > cfg.user_distinct_max || pm.user_total == 0) return std::nullopt;
      auto bucket = paramenc::user_bucket(paramenc::encode_user(raw), models.config().user_buckets);
      auto it = pm.user_buckets.find(bucket);
      const double freq = it == pm.user_buckets.end()
                              ? 0.0
                              : static_cast<double>(it->second) / static_cast<double>(pm.user_total);
      if (freq < cfg.rare_q) {
        auto r = param_report(e, template_id, ParamSubkind::UserOutlier, pm.position, raw);
        r.evidence["bucket"] = bucket;
        r.evidence["training_share"] = freq;
        return r;
      }
      return std::nullopt;
    }
    case ParamType::Numeric: {
      auto x = paramenc::parse_number(raw);
      if (!x) return param_report(e, template_id, ParamSubkind::NumericInvalid, pm.position, raw);
      const double z = paramenc::encode_numeric(*x, pm.numeric, models.config().z_cap);
      if (std::abs(z) > cfg.z_threshold) {
        auto r = param_report(e, template_id, ParamSubkind::NumericRange, pm.position, raw);
        r.evidence["z"] = z;
        r.evidence["mean"] = pm.numeric.mean;
        r.evidence["stddev"] = pm.numeric.stddev;
        return r;
      }
      return std::nullopt;
    }
    case ParamType::State:
      if (!pm.states.index_of(raw)) {
        auto r = param_report(e, template_id, ParamSubkind::StateUnseen, pm.position, raw);
        r.evidence["known"] = pm.states.states;
        return r;
      }
      return std::nullopt;
    case ParamType::ResourceId: {
      if (!paramenc::is_resource(raw))
        return param_report(e, template_id, ParamSubkind::ResourcePath, pm.position, raw);
      const double cn = std::sqrt(dot(pm.resource_centroid, pm.resource_centroid));
      if (cn <= 0.0) return std::nullopt;
      auto enc = paramenc::encode_resource(raw, models.tfidf());
      const double sim = enc.all_oov ? 0.0 : dot(enc.values, pm.resource_centroid) / cn;
      if (sim < cfg.tau_r) {
        auto r = param_report(e, template_id, ParamSubkind::ResourceAssociation, pm.position, raw);
        r.evidence["similarity"] = sim;
        return r;
      }
      return std::nullopt;
    }
    case ParamType::Unknown: break;
  }
  return std::nullopt;
}

}  // namespace

void DetectorConfig::validate() const {
  if (w < 2) throw Error(ErrorKind::ConfigError, "detector w must be >= 2");
  if (w_prime < 2) throw Error(ErrorKind::ConfigError, "detector w_prime must be >= 2");
  if (g < 1) throw Error(ErrorKind::ConfigError, "detector g must be >= 1");
  if (stride < 1) throw Error(ErrorKind::ConfigError, "detector stride must be >= 1");
  if (!(z_threshold > 0) || !(freq_ratio > 0) || !(tau_r > 0) || !(sim_floor > 0) || !(rare_q > 0))
    throw Error(ErrorKind::ConfigError, "detector thresholds must be positive");
  if (min_prob < 0 || min_prob >= 1) throw Error(ErrorKind::ConfigError, "min_prob must be in [0,1)");
}

std::string_view to_string(AnomalyKind k) noexcept {
  return k == AnomalyKind::Sequence ? "Sequence" : "Parameter";
}

std::string_view to_string(ParamSubkind s) noexcept {
  return kSubkindNames[static_cast<std::size_t>(s)];
}

ParamSubkind subkind_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kSubkindCount; ++i)
    if (kSubkindNames[i] == s) return static_cast<ParamSubkind>(i);
  throw Error(ErrorKind::FormatError, "unknown anomaly subkind '" + std::string(s) + "'");
}

nlohmann::json AnomalyReport::to_json() const {
  nlohmann::json j;
  j["line_no"] = line_no;
  j["kind"] = std::string(to_string(kind));
  if (subkind) j["subkind"] = std::string(to_string(*subkind));
  j["template_id"] = template_id;
  j["matched"] = matched;
  j["evidence"] = evidence;
  return j;
}

AnomalyReport AnomalyReport::from_json(const nlohmann::json& j) {
  AnomalyReport r;
  try {
    r.line_no = j.at("line_no").get<std::uint64_t>();
    auto kind = j.at("kind").get<std::string>();
    if (kind == "Sequence") r.kind = AnomalyKind::Sequence;
    else if (kind == "Parameter") r.kind = AnomalyKind::Parameter;
    else throw Error(ErrorKind::FormatError, "unknown anomaly kind '" + kind + "'");
    if (j.contains("subkind")) r.subkind = subkind_from_string(j.at("subkind").get<std::string>());
    r.template_id = j.at("template_id").get<int>();
    r.matched = j.at("matched").get<bool>();
    r.evidence = j.value("evidence", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::FormatError, std::string("malformed report: ") + e.what());
  }
  return r;
}

nlohmann::json DetectorStats::to_json() const {
  return {{"lines", lines},
          {"errors", errors},
          {"matched", matched},
          {"unmatched", unmatched},
          {"adopted", adopted},
          {"novel", novel},
          {"sequence_checks", sequence_checks},
          {"sequence_anomalies", sequence_anomalies},
          {"parameter_anomalies", parameter_anomalies}};
}

seqmodel::Vector entry_input(const ModelView& model, int template_id,
                             const std::vector<std::string>* params) {
  const auto& tv = model.library->at(static_cast<std::size_t>(template_id)).values;
  const std::size_t pw = model.params ? model.params->max_width() : 0;
  seqmodel::Vector x = seqmodel::Vector::Zero(static_cast<Eigen::Index>(tv.size() + pw));
  for (std::size_t i = 0; i < tv.size(); ++i) x(static_cast<Eigen::Index>(i)) = tv[i];
  const auto tid = static_cast<std::size_t>(template_id);
  if (model.param_means && tid < model.param_means->size()) {
    const auto& mean = (*model.param_means)[tid];
    for (std::size_t i = 0; i < std::min(pw, mean.size()); ++i)
      x(static_cast<Eigen::Index>(tv.size() + i)) = mean[i];
  }
  const auto* tm = model.params ? model.params->find(template_id) : nullptr;
  if (params && tm) {
    auto pv = model.params->encode(template_id, *params);
    auto mi = model.params->model_input(template_id, pv);
    for (std::size_t s = 0; s < tm->layout.slots.size(); ++s) {
      if (!pv.mask[s]) continue;
      const auto& slot = tm->layout.slots[s];
      for (std::size_t i = slot.offset; i < slot.offset + slot.width; ++i)
        x(static_cast<Eigen::Index>(tv.size() + i)) = mi[i];
    }
  }
  return x;
}

std::vector<std::vector<double>> param_lane_means(
    const ModelView& model, const std::vector<std::pair<int, const std::vector<std::string>*>>& entries) {
  const std::size_t pw = model.params ? model.params->max_width() : 0;
  std::vector<std::vector<double>> sum(model.classes(), std::vector<double>(pw, 0.0));
  std::vector<std::vector<double>> count(model.classes(), std::vector<double>(pw, 0.0));
  for (const auto& [id, params] : entries) {
    const auto* tm = model.params ? model.params->find(id) : nullptr;
    if (!tm || !params || static_cast<std::size_t>(id) >= sum.size()) continue;
    auto pv = model.params->encode(id, *params);
    auto mi = model.params->model_input(id, pv);
    for (std::size_t s = 0; s < tm->layout.slots.size(); ++s) {
      if (!pv.mask[s]) continue;
      const auto& slot = tm->layout.slots[s];
      for (std::size_t i = slot.offset; i < slot.offset + slot.width; ++i) {
        sum[static_cast<std::size_t>(id)][i] += mi[i];
        count[static_cast<std::size_t>(id)][i] += 1.0;
      }
    }
  }
  for (std::size_t t = 0; t < sum.size(); ++t)
    for (std::size_t i = 0; i < pw; ++i)
      if (count[t][i] > 0) sum[t][i] /= count[t][i];
  return sum;
}

std::optional<AnomalyReport> detect_sequence(const seqmodel::Matrix& window_inputs, int actual,
                                             const seqmodel::ModelWeights* weights,
                                             const DetectorConfig& cfg) {
  if (!weights) throw Error(ErrorKind::ModelMissing, "no sequence model loaded");
  auto probs = seqmodel::forward(window_inputs, *weights);
  auto cands = seqmodel::top_g(probs, cfg.g);
  const bool in_range = actual >= 0 && actual < probs.size();
  const double p = in_range ? probs(actual) : 0.0;
  const bool member = in_range && std::find(cands.begin(), cands.end(), actual) != cands.end();
  if (member && p >= cfg.min_prob) return std::nullopt;
  AnomalyReport r;
  r.kind = AnomalyKind::Sequence;
  r.template_id = actual;
  r.evidence = {{"candidates", cands}, {"probability", p}};
  if (!member) r.evidence["reason"] = "not_in_top_g";
  else r.evidence["reason"] = "below_min_prob";
  return r;
}

std::vector<AnomalyReport> detect_parameters(std::vector<BufferedEntry>& history,
                                             std::vector<BufferedEntry>& window,
                                             const paramenc::TemplateParamModel& tm,
                                             const paramenc::ParamModels& models,
                                             const DetectorConfig& cfg) {
  std::vector<AnomalyReport> out;
  const std::size_t h = history.size();
  const std::size_t n = h + window.size();
  auto at = [&](std::size_t i) -> BufferedEntry& { return i < h ? history[i] : window[i - h]; };
  const std::size_t span = cfg.w_prime;

  for (int p : tm.key_positions) {
    const auto& pm = tm.positions.at(static_cast<std::size_t>(p));
    for (auto& e : window) {
      if (auto r = check_value(e, tm.template_id, pm, models, cfg)) {
        if (pm.type == ParamType::Time) mark(e, p) |= kTimeExcluded;
        out.push_back(std::move(*r));
      }
    }

    if (pm.type == ParamType::State) {
      std::vector<char> flip(n, 0);
      for (std::size_t j = 1; j < n; ++j) flip[j] = value_at(at(j), p) != value_at(at(j - 1), p);
      const double thr = cfg.freq_threshold();
      for (std::size_t i = h; i < n; ++i) {
        const std::size_t start = i + 1 >= span ? i + 1 - span : 0;
        std::size_t flips = 0;
        for (std::size_t j = start + 1; j <= i; ++j) flips += flip[j];
        if (static_cast<double>(flips) <= thr) continue;
        for (std::size_t j = start + 1; j <= i; ++j) {
          if (!flip[j] || (mark(at(j), p) & kFlapReported)) continue;
          mark(at(j), p) |= kFlapReported;
          auto r = param_report(at(j), tm.template_id, ParamSubkind::StateFlapping, p, value_at(at(j), p));
          r.evidence["flips"] = flips;
          r.evidence["threshold"] = thr;
          r.evidence["window"] = span;
          out.push_back(std::move(r));
        }
      }
    }

    if (pm.type == ParamType::Time) {
      std::vector<std::optional<std::int64_t>> keys(n);
      for (std::size_t j = 0; j < n; ++j) {
        if (mark(at(j), p) & kTimeExcluded) continue;
        if (auto f = paramenc::parse_timestamp(value_at(at(j), p)); f && paramenc::time_in_range(*f))
          keys[j] = f->order_key();
      }
      for (std::size_t i = h; i < n; ++i) {
        if (!keys[i] || (mark(at(i), p) & kTimeExcluded)) continue;
        const std::size_t start = i + 1 >= span ? i + 1 - span : 0;
        std::optional<std::int64_t> latest;
        std::uint64_t latest_line = 0;
        for (std::size_t j = start; j < i; ++j) {
          if (!keys[j] || (mark(at(j), p) & kTimeExcluded)) continue;
          if (!latest || *keys[j] > *latest) {
            latest = keys[j];
            latest_line = at(j).line_no;
          }
        }
        if (latest && *keys[i] < *latest) {
          mark(at(i), p) |= kTimeExcluded;
          auto r = param_report(at(i), tm.template_id, ParamSubkind::TimeRange, p, value_at(at(i), p));
          r.evidence["reason"] = "out_of_order";
          r.evidence["after_line"] = latest_line;
          out.push_back(std::move(r));
        }
      }
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const AnomalyReport& a, const AnomalyReport& b) { return a.line_no < b.line_no; });
  return out;
}

Detector::Detector(ModelView model, DetectorConfig cfg) : model_(model), cfg_(cfg) {
  cfg_.validate();
  if (!model_.parser || !model_.provider || !model_.library || !model_.params || !model_.weights)
    throw Error(ErrorKind::ModelMissing, "incomplete model");
  if (model_.library->empty()) throw Error(ErrorKind::EmptyLibrary, "no trained templates");
  if (model_.weights->classes() != model_.library->size())
    throw Error(ErrorKind::ShapeMismatch, "model classes differ from the template library");
  parser_ = *model_.parser;
  frozen_ = model_.library->size();
}

Detector::Resolved Detector::resolve(const parser::ParsedLog& pl) {
  Resolved r;
  if (pl.template_id >= 0 && static_cast<std::size_t>(pl.template_id) < frozen_) {
    r.template_id = pl.template_id;
    r.with_params = model_.params->find(pl.template_id) != nullptr;
    ++stats_.matched;
    return r;
  }
  ++stats_.unmatched;
  const auto& tmpl = parser_.at(pl.template_id);
  auto text = tmpl.render();
  auto& cached = nearest_cache_[pl.template_id];
  if (cached.first != text || cached.second.first < 0) {
    std::pair<int, double> best{0, 0.0};
    try {
      auto tv = embedding::template_vector(tmpl, *model_.provider);
      best = embedding::nearest_template(tv.values, *model_.library);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::EmptyLibrary) throw;
      best = {0, 0.0};
    }
    cached = {text, best};
  }
  const auto [nearest, sim] = cached.second;
  r.matched = false;
  UnmatchedOutcome outcome{pl.line_no, Resolution::Adopted, nearest, sim};
  if (sim >= cfg_.sim_floor) {
    r.template_id = nearest;
    r.resolution = Resolution::Adopted;
    r.with_params = model_.params->find(nearest) &&
                    tmpl.placeholder_count() == model_.parser->at(nearest).placeholder_count();
    ++stats_.adopted;
  } else {
    outcome.resolution = Resolution::Novel;
    r.template_id = nearest;
    r.resolution = Resolution::Novel;
    AnomalyReport rep;
    rep.line_no = pl.line_no;
    rep.kind = AnomalyKind::Sequence;
    rep.template_id = pl.template_id;
    rep.matched = false;
    rep.evidence = {{"reason", "novel_template"},
                    {"template", text},
                    {"nearest", nearest},
                    {"similarity", sim}};
    r.novel = std::move(rep);
    ++stats_.novel;
  }
  stats_.unmatched_lines.push_back(outcome);
  return r;
}

std::vector<AnomalyReport> Detector::judge(int template_id, TemplateBuffer& buf) {
  const auto* tm = model_.params->find(template_id);
  std::vector<AnomalyReport> out;
  if (tm) out = detect_parameters(buf.history, buf.pending, *tm, *model_.params, cfg_);
  for (auto& e : buf.pending) buf.history.push_back(std::move(e));
  buf.pending.clear();
  if (buf.history.size() > cfg_.w_prime)
    buf.history.erase(buf.history.begin(),
                      buf.history.end() - static_cast<std::ptrdiff_t>(cfg_.w_prime));
  stats_.parameter_anomalies += out.size();
  return out;
}

std::vector<AnomalyReport> Detector::process(const parser::RawLog& raw) {
  ++stats_.lines;
  parser::ParsedLog pl;
  Resolved r;
  try {
    pl = parser_.parse_line(raw, frozen_);
    r = resolve(pl);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::EmptyLibrary) throw;
    ++stats_.errors;
    return {};
  }

  std::vector<AnomalyReport> out;
  auto push = [&](std::deque<Entry>& win, Entry e) {
    win.push_back(std::move(e));
    if (win.size() > cfg_.w) win.pop_front();
  };

  if (r.novel) {
    out.push_back(std::move(*r.novel));
    ++stats_.sequence_anomalies;
    Entry e{r.template_id, entry_input(model_, r.template_id, nullptr)};
    if (cfg_.repair_window) {
      if (held_) push(window_, std::move(*held_));
      held_ = std::move(e);
    } else {
      push(window_, std::move(e));
    }
    return out;
  }

  seqmodel::Vector x;
  try {
    x = entry_input(model_, r.template_id, r.with_params ? &pl.params : nullptr);
  } catch (const Error&) {
    x = entry_input(model_, r.template_id, nullptr);
    r.with_params = false;
  }

  auto verdict = [&](const std::deque<Entry>& win) {
    seqmodel::Matrix in(x.size(), static_cast<Eigen::Index>(cfg_.w));
    for (std::size_t t = 0; t < cfg_.w; ++t) in.col(static_cast<Eigen::Index>(t)) = win[t].second;
    return detect_sequence(in, r.template_id, model_.weights, cfg_);
  };

  std::optional<AnomalyReport> rep;
  if (window_.size() == cfg_.w && since_verdict_++ % cfg_.stride == 0) {
    ++stats_.sequence_checks;
    rep = verdict(window_);
    if (rep && held_) {
      // The withheld entry may have been a legitimate rare step; if this
      // entry follows from it, take it back into the window.
      auto alt = window_;
      push(alt, *held_);
      if (!verdict(alt)) {
        window_ = std::move(alt);
        held_.reset();
        rep.reset();
      }
    }
  }
  Entry current{r.template_id, std::move(x)};
  if (rep) {
    rep->line_no = pl.line_no;
    rep->matched = r.matched;
    if (!r.matched) rep->evidence["adopted_from"] = pl.template_id;
    out.push_back(std::move(*rep));
    ++stats_.sequence_anomalies;
    if (cfg_.repair_window) {
      if (held_) push(window_, std::move(*held_));
      held_ = std::move(current);
    } else {
      push(window_, std::move(current));
    }
  } else {
    // A withheld entry that this one does not need stays out for good;
    // during warm-up there is nothing to compare against, so keep it.
    if (held_ && window_.size() < cfg_.w) push(window_, std::move(*held_));
    held_.reset();
    push(window_, std::move(current));
  }

  if (r.with_params) {
    auto& buf = buffers_[r.template_id];
    buf.pending.push_back({pl.line_no, pl.params, r.matched, {}});
    if (buf.pending.size() >= cfg_.w_prime) {
      auto reps = judge(r.template_id, buf);
      out.insert(out.end(), reps.begin(), reps.end());
    }
  }
  return out;
}

std::vector<AnomalyReport> Detector::finish() {
  std::vector<AnomalyReport> out;
  if (!cfg_.flush_partial) return out;
  for (auto& [id, buf] : buffers_) {
    if (buf.pending.empty()) continue;
    auto reps = judge(id, buf);
    out.insert(out.end(), reps.begin(), reps.end());
  }
  return out;
}

std::vector<AnomalyReport> stream_detect(const std::vector<parser::RawLog>& stream,
                                         const ModelView& model, const DetectorConfig& cfg,
                                         DetectorStats* stats) {
  Detector det(model, cfg);
  std::vector<AnomalyReport> out;
  for (const auto& raw : stream) {
    auto reps = det.process(raw);
    out.insert(out.end(), std::make_move_iterator(reps.begin()), std::make_move_iterator(reps.end()));
  }
  auto tail = det.finish();
  out.insert(out.end(), std::make_move_iterator(tail.begin()), std::make_move_iterator(tail.end()));
  std::stable_sort(out.begin(), out.end(),
                   [](const AnomalyReport& a, const AnomalyReport& b) { return a.line_no < b.line_no; });
  if (stats) *stats = det.stats();
  return out;
}

}  // namespace tplad::detector
