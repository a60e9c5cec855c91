#include "tplad/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include "tplad/binio.hpp"
#include "tplad/error.hpp"
#include "tplad/hash.hpp"

namespace tplad::pipeline {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'T', 'P', 'L', 'A', 'D', 'M', 'D', 'L'};

void check_type(const json& def, const json& v, const std::string& key) {
  bool ok = false;
  if (def.is_boolean()) ok = v.is_boolean();
  else if (def.is_string()) ok = v.is_string();
  else if (def.is_number_unsigned()) ok = v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
  else if (def.is_number_integer()) ok = v.is_number_integer();
  else if (def.is_number_float()) ok = v.is_number();
  if (!ok) throw Error(ErrorKind::ConfigError, "config key '" + key + "' has the wrong type");
}

std::string weighting_name(embedding::Weighting w) {
  return w == embedding::Weighting::Lambda ? "lambda" : "uniform";
}

json seq_to_json(const seqmodel::SeqModelConfig& c) {
  return {{"input_dim", c.input_dim},   {"hidden_units", c.hidden_units},
          {"attention_units", c.attention_units}, {"window_w", c.window_w},
          {"classes", c.classes},       {"candidate_g", c.candidate_g},
          {"lr", c.lr},                 {"beta1", c.beta1},
          {"beta2", c.beta2},           {"adam_eps", c.adam_eps},
          {"clip_norm", c.clip_norm},   {"epochs", c.epochs},
          {"batch", c.batch},           {"seed", c.seed}};
}

seqmodel::SeqModelConfig seq_from_json(const json& j) {
  seqmodel::SeqModelConfig c;
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.hidden_units = j.at("hidden_units").get<std::size_t>();
  c.attention_units = j.at("attention_units").get<std::size_t>();
  c.window_w = j.at("window_w").get<std::size_t>();
  c.classes = j.at("classes").get<std::size_t>();
  c.candidate_g = j.at("candidate_g").get<std::size_t>();
  c.lr = j.at("lr").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.adam_eps = j.at("adam_eps").get<double>();
  c.clip_norm = j.at("clip_norm").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.batch = j.at("batch").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

PipelineConfig decode(const json& j) {
  PipelineConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  const auto& p = j.at("parser");
  c.parser.sim_threshold = p.at("sim_threshold").get<double>();
  c.parser.depth = p.at("depth").get<int>();
  c.parser.max_children = p.at("max_children").get<int>();
  c.parser.strip_syslog_header = p.at("strip_syslog_header").get<bool>();
  const auto& e = j.at("embedding");
  c.embedding_provider = e.at("provider").get<std::string>();
  c.embedding_command = e.at("command").get<std::string>();
  c.skipgram.dim = e.at("dim").get<std::size_t>();
  c.skipgram.window = e.at("window").get<int>();
  c.skipgram.negatives = e.at("negatives").get<int>();
  c.skipgram.epochs = e.at("epochs").get<int>();
  c.skipgram.lr = e.at("lr").get<double>();
  auto w = e.at("weighting").get<std::string>();
  if (w == "lambda") c.weighting = embedding::Weighting::Lambda;
  else if (w == "uniform") c.weighting = embedding::Weighting::Uniform;
  else throw Error(ErrorKind::ConfigError, "embedding.weighting must be 'lambda' or 'uniform'");
  const auto& a = j.at("paramenc");
  c.paramenc.state_card_max = a.at("state_card_max").get<std::size_t>();
  c.paramenc.year_period = a.at("year_period").get<int>();
  c.paramenc.year_enabled = a.at("year_enabled").get<bool>();
  c.paramenc.z_cap = a.at("z_cap").get<double>();
  c.paramenc.tfidf_max_vocab = a.at("tfidf_max_vocab").get<std::size_t>();
  c.paramenc.user_buckets = a.at("user_buckets").get<std::size_t>();
  c.paramenc.keys.k_min = a.at("k_min").get<int>();
  c.paramenc.keys.k_max = a.at("k_max").get<int>();
  c.paramenc.keys.coverage_q = a.at("coverage_q").get<double>();
  c.paramenc.keys.min_samples = a.at("min_samples").get<std::size_t>();
  const auto& s = j.at("seqmodel");
  c.seqmodel.hidden_units = s.at("hidden_units").get<std::size_t>();
  c.seqmodel.attention_units = s.at("attention_units").get<std::size_t>();
  c.seqmodel.window_w = s.at("window_w").get<std::size_t>();
  c.seqmodel.candidate_g = s.at("candidate_g").get<std::size_t>();
  c.seqmodel.lr = s.at("lr").get<double>();
  c.seqmodel.beta1 = s.at("beta1").get<double>();
  c.seqmodel.beta2 = s.at("beta2").get<double>();
  c.seqmodel.adam_eps = s.at("adam_eps").get<double>();
  c.seqmodel.clip_norm = s.at("clip_norm").get<double>();
  c.seqmodel.epochs = s.at("epochs").get<int>();
  c.seqmodel.batch = s.at("batch").get<std::size_t>();
  const auto& d = j.at("detector");
  c.detector.w_prime = d.at("w_prime").get<std::size_t>();
  c.detector.z_threshold = d.at("z_threshold").get<double>();
  c.detector.freq_ratio = d.at("freq_ratio").get<double>();
  c.detector.tau_r = d.at("tau_r").get<double>();
  c.detector.sim_floor = d.at("sim_floor").get<double>();
  c.detector.rare_q = d.at("rare_q").get<double>();
  c.detector.user_distinct_max = d.at("user_distinct_max").get<double>();
  c.detector.min_prob = d.at("min_prob").get<double>();
  c.detector.stride = d.at("stride").get<std::size_t>();
  c.detector.repair_window = d.at("repair_window").get<bool>();
  c.detector.flush_partial = d.at("flush_partial").get<bool>();
  const auto& v = j.at("eval");
  c.eval.train_on_normal_only = v.at("train_on_normal_only").get<bool>();
  c.eval.granularity = v.at("granularity").get<std::string>();
  c.normalize();
  return c;
}

template <class F>
void run_stage(const char* name, TrainReport* report, F&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  try {
    fn();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string("[") + name + "] " + e.detail());
  } catch (const std::exception& e) {
    throw Error(ErrorKind::FormatError, std::string("[") + name + "] " + e.what());
  }
  if (report) {
    std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    report->stages.push_back({name, dt.count()});
  }
}

}  // namespace

json PipelineConfig::to_json() const {
  return {
      {"seed", seed},
      {"parser",
       {{"sim_threshold", parser.sim_threshold},
        {"depth", parser.depth},
        {"max_children", parser.max_children},
        {"strip_syslog_header", parser.strip_syslog_header}}},
      {"embedding",
       {{"provider", embedding_provider},
        {"command", embedding_command},
        {"dim", skipgram.dim},
        {"window", skipgram.window},
        {"negatives", skipgram.negatives},
        {"epochs", skipgram.epochs},
        {"lr", skipgram.lr},
        {"weighting", weighting_name(weighting)}}},
      {"paramenc",
       {{"state_card_max", paramenc.state_card_max},
        {"year_period", paramenc.year_period},
        {"year_enabled", paramenc.year_enabled},
        {"z_cap", paramenc.z_cap},
        {"tfidf_max_vocab", paramenc.tfidf_max_vocab},
        {"user_buckets", paramenc.user_buckets},
        {"k_min", paramenc.keys.k_min},
        {"k_max", paramenc.keys.k_max},
        {"coverage_q", paramenc.keys.coverage_q},
        {"min_samples", paramenc.keys.min_samples}}},
      {"seqmodel",
       {{"hidden_units", seqmodel.hidden_units},
        {"attention_units", seqmodel.attention_units},
        {"window_w", seqmodel.window_w},
        {"candidate_g", seqmodel.candidate_g},
        {"lr", seqmodel.lr},
        {"beta1", seqmodel.beta1},
        {"beta2", seqmodel.beta2},
        {"adam_eps", seqmodel.adam_eps},
        {"clip_norm", seqmodel.clip_norm},
        {"epochs", seqmodel.epochs},
        {"batch", seqmodel.batch}}},
      {"detector",
       {{"w_prime", detector.w_prime},
        {"z_threshold", detector.z_threshold},
        {"freq_ratio", detector.freq_ratio},
        {"tau_r", detector.tau_r},
        {"sim_floor", detector.sim_floor},
        {"rare_q", detector.rare_q},
        {"user_distinct_max", detector.user_distinct_max},
        {"min_prob", detector.min_prob},
        {"stride", detector.stride},
        {"repair_window", detector.repair_window},
        {"flush_partial", detector.flush_partial}}},
      {"eval",
       {{"train_on_normal_only", eval.train_on_normal_only}, {"granularity", eval.granularity}}},
  };
}

void PipelineConfig::merge(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::ConfigError, "config must be a JSON object");
  json base = to_json();
  for (const auto& [k, v] : j.items()) {
    if (!base.contains(k)) throw Error(ErrorKind::ConfigError, "unknown config key '" + k + "'");
    auto& slot = base[k];
    if (slot.is_object()) {
      if (!v.is_object()) throw Error(ErrorKind::ConfigError, "config section '" + k + "' must be an object");
      for (const auto& [k2, v2] : v.items()) {
        if (!slot.contains(k2))
          throw Error(ErrorKind::ConfigError, "unknown config key '" + k + "." + k2 + "'");
        check_type(slot[k2], v2, k + "." + k2);
        slot[k2] = v2;
      }
    } else {
      check_type(slot, v, k);
      slot = v;
    }
  }
  *this = decode(base);
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  PipelineConfig c;
  c.merge(j);
  return c;
}

std::uint64_t PipelineConfig::hash() const { return fnv1a64(to_json().dump()); }

void PipelineConfig::normalize() {
  skipgram.seed = seed;
  paramenc.keys.seed = seed;
  seqmodel.seed = seed;
  detector.w = seqmodel.window_w;
  detector.g = seqmodel.candidate_g;
}

void PipelineConfig::validate() const {
  if (parser.depth < 3) throw Error(ErrorKind::ConfigError, "parser.depth must be >= 3");
  if (parser.max_children < 1) throw Error(ErrorKind::ConfigError, "parser.max_children must be >= 1");
  if (!(parser.sim_threshold > 0.0 && parser.sim_threshold <= 1.0))
    throw Error(ErrorKind::ConfigError, "parser.sim_threshold must be in (0,1]");
  if (embedding_provider != "builtin" && embedding_provider != "subprocess")
    throw Error(ErrorKind::ConfigError, "embedding.provider must be 'builtin' or 'subprocess'");
  if (embedding_provider == "subprocess" && embedding_command.empty())
    throw Error(ErrorKind::ConfigError, "embedding.command is required for the subprocess provider");
  if (skipgram.dim < 1) throw Error(ErrorKind::ConfigError, "embedding.dim must be >= 1");
  if (paramenc.state_card_max < 1 || paramenc.state_card_max > paramenc::kMaxStateCardinality)
    throw Error(ErrorKind::ConfigError, "paramenc.state_card_max must be in [1,30]");
  if (paramenc.user_buckets < 1) throw Error(ErrorKind::ConfigError, "paramenc.user_buckets must be >= 1");
  if (seqmodel.hidden_units < 1) throw Error(ErrorKind::ConfigError, "seqmodel.hidden_units must be >= 1");
  if (seqmodel.window_w < 2) throw Error(ErrorKind::ConfigError, "seqmodel.window_w must be >= 2");
  if (seqmodel.candidate_g < 1) throw Error(ErrorKind::ConfigError, "seqmodel.candidate_g must be >= 1");
  if (seqmodel.epochs < 0) throw Error(ErrorKind::ConfigError, "seqmodel.epochs must be >= 0");
  if (seqmodel.batch < 1) throw Error(ErrorKind::ConfigError, "seqmodel.batch must be >= 1");
  if (eval.granularity != "line" && eval.granularity != "group")
    throw Error(ErrorKind::ConfigError, "eval.granularity must be 'line' or 'group'");
  detector.validate();
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, path.string() + ": " + e.what());
  }
  return PipelineConfig::from_json(j);
}

detector::ModelView ModelState::view() const {
  return {&parser, &embeddings, &library, &params, &weights, &param_means};
}

detector::DetectorConfig ModelState::detector_config() const {
  auto d = config.detector;
  d.w = seq_cfg.window_w;
  d.g = seq_cfg.candidate_g;
  return d;
}

void ModelState::write(std::ostream& os) const {
  std::ostringstream body;
  body.write(kMagic, sizeof kMagic);
  binio::put_u32(body, version);
  json header = {{"config", config.to_json()},
                 {"config_hash", config_hash},
                 {"parser", parser.to_json()},
                 {"embeddings", embeddings.to_json()},
                 {"params", params.to_json()},
                 {"seqmodel", seq_to_json(seq_cfg)},
                 {"summary", summary}};
  auto text = header.dump();
  binio::put_u64(body, text.size());
  body.write(text.data(), static_cast<std::streamsize>(text.size()));
  binio::put_u32(body, static_cast<std::uint32_t>(library.size()));
  binio::put_u32(body, static_cast<std::uint32_t>(library.empty() ? 0 : library.front().values.size()));
  for (const auto& tv : library) {
    binio::put_u32(body, static_cast<std::uint32_t>(tv.template_id));
    for (double v : tv.values) binio::put_f64(body, v);
  }
  binio::put_u32(body, static_cast<std::uint32_t>(param_means.size()));
  binio::put_u32(body, static_cast<std::uint32_t>(param_means.empty() ? 0 : param_means.front().size()));
  for (const auto& row : param_means)
    for (double v : row) binio::put_f64(body, v);
  weights.write(body);
  auto bytes = body.str();
  binio::put_u64(body, fnv1a64(bytes));
  auto all = body.str();
  os.write(all.data(), static_cast<std::streamsize>(all.size()));
}

ModelState ModelState::read(std::istream& is) {
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof kMagic + 4 + 8 + 8 || bytes.compare(0, sizeof kMagic, kMagic, sizeof kMagic) != 0)
    throw Error(ErrorKind::VersionError, "not a model state file");
  {
    std::istringstream tail(bytes.substr(bytes.size() - 8));
    if (binio::get_u64(tail) != fnv1a64(std::string_view(bytes).substr(0, bytes.size() - 8)))
      throw Error(ErrorKind::VersionError, "model state checksum mismatch (corrupted file)");
  }
  std::istringstream in(bytes.substr(sizeof kMagic, bytes.size() - sizeof kMagic - 8));
  ModelState st;
  st.version = binio::get_u32(in);
  if (st.version == 0 || st.version > kModelVersion)
    throw Error(ErrorKind::VersionError, "model state version " + std::to_string(st.version) +
                                             " is not supported (this build reads up to " +
                                             std::to_string(kModelVersion) + ")");
  const auto len = binio::get_u64(in);
  if (len > bytes.size()) throw Error(ErrorKind::FormatError, "header length out of range");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len)))
    throw Error(ErrorKind::FormatError, "truncated header");
  try {
    auto header = json::parse(text);
    st.config = PipelineConfig::from_json(header.at("config"));
    st.config_hash = header.at("config_hash").get<std::uint64_t>();
    st.parser = parser::Parser::from_json(header.at("parser"));
    st.embeddings = embedding::TableProvider::from_json(header.at("embeddings"));
    st.params = paramenc::ParamModels::from_json(header.at("params"));
    st.seq_cfg = seq_from_json(header.at("seqmodel"));
    st.summary = header.at("summary");
  } catch (const json::exception& e) {
    throw Error(ErrorKind::FormatError, std::string("model header: ") + e.what());
  }
  const auto count = binio::get_u32(in);
  const auto dim = binio::get_u32(in);
  if (static_cast<std::uint64_t>(count) * dim * 8 > bytes.size())
    throw Error(ErrorKind::FormatError, "template library size out of range");
  st.library.resize(count);
  for (auto& tv : st.library) {
    tv.template_id = static_cast<int>(binio::get_u32(in));
    tv.values.resize(dim);
    for (auto& v : tv.values) v = binio::get_f64(in);
  }
  const auto mean_rows = binio::get_u32(in);
  const auto mean_width = binio::get_u32(in);
  if (mean_rows != st.library.size() || mean_width != st.params.max_width())
    throw Error(ErrorKind::FormatError, "parameter mean section disagrees with the model");
  st.param_means.assign(mean_rows, std::vector<double>(mean_width));
  for (auto& row : st.param_means)
    for (auto& v : row) v = binio::get_f64(in);
  st.weights = seqmodel::ModelWeights::read(in);
  if (st.weights.classes() != st.library.size() || st.weights.input_dim() != st.seq_cfg.input_dim)
    throw Error(ErrorKind::ShapeMismatch, "weights disagree with the stored configuration");
  if (in.peek() != std::char_traits<char>::eof())
    throw Error(ErrorKind::FormatError, "trailing bytes after model sections");
  return st;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error(ErrorKind::IoError, "short write to " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorKind::IoError, "cannot rename into " + path.string());
  }
}

void ModelState::save(const std::filesystem::path& path) const {
  std::ostringstream os;
  write(os);
  write_file_atomic(path, os.str());
}

ModelState ModelState::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open model " + path.string());
  return read(in);
}

std::vector<parser::RawLog> read_logs(std::istream& in, bool strip_syslog_header) {
  std::vector<parser::RawLog> out;
  std::string line;
  std::uint64_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(parser::make_raw(no, line, strip_syslog_header));
  }
  return out;
}

std::vector<parser::RawLog> read_logs(const std::filesystem::path& path, bool strip_syslog_header) {
  if (path == "-") return read_logs(std::cin, strip_syslog_header);
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  return read_logs(in, strip_syslog_header);
}

ModelState train_offline(const std::vector<parser::RawLog>& logs, const PipelineConfig& cfg_in,
                         TrainReport* report) {
  PipelineConfig cfg = cfg_in;
  cfg.normalize();
  cfg.validate();
  ModelState st;
  st.config = cfg;
  st.config_hash = cfg.hash();
  std::vector<parser::ParsedLog> parsed;

  run_stage("parse", report, [&] {
    if (logs.empty()) throw Error(ErrorKind::FormatError, "no log lines to train on");
    parser::Parser p(cfg.parser);
    parsed.reserve(logs.size());
    for (const auto& raw : logs) parsed.push_back(p.parse_line(raw));
    // Templates generalize as lines arrive; re-cut every line against its final template.
    for (std::size_t i = 0; i < logs.size(); ++i)
      parsed[i].params = parser::extract_params(p.at(parsed[i].template_id), parser::tokenize(logs[i].body));
    st.parser = std::move(p);
  });

  run_stage("embed", report, [&] {
    const auto& templates = st.parser.templates();
    if (cfg.embedding_provider == "subprocess") {
      embedding::SubprocessProvider sp(cfg.embedding_command, cfg.skipgram.dim);
      auto table = embedding::build_word_table(templates);
      auto vecs = sp.vectors(table.words);
      st.embeddings = embedding::TableProvider(std::move(table), std::move(vecs), "subprocess");
    } else {
      std::vector<std::vector<std::string>> corpus;
      corpus.reserve(parsed.size());
      for (const auto& pl : parsed) corpus.push_back(embedding::template_words(st.parser.at(pl.template_id)));
      st.embeddings = embedding::train_builtin_embeddings(corpus, cfg.skipgram);
    }
    st.library.clear();
    for (const auto& t : templates) st.library.push_back(embedding::template_vector(t, st.embeddings, cfg.weighting));
  });

  run_stage("paramenc", report, [&] {
    std::vector<std::vector<std::vector<std::string>>> values(st.parser.size());
    for (std::size_t t = 0; t < st.parser.size(); ++t)
      values[t].resize(st.parser.at(static_cast<int>(t)).placeholder_count());
    for (const auto& pl : parsed) {
      auto& slots = values[static_cast<std::size_t>(pl.template_id)];
      for (std::size_t p = 0; p < pl.params.size(); ++p) slots[p].push_back(pl.params[p]);
    }
    st.params = paramenc::ParamModels::fit(values, cfg.paramenc);
  });

  run_stage("seqmodel", report, [&] {
    const std::size_t w = cfg.seqmodel.window_w;
    if (parsed.size() <= w)
      throw Error(ErrorKind::InsufficientCorpus, "need more than window_w=" + std::to_string(w) +
                                                     " lines, got " + std::to_string(parsed.size()));
    const std::size_t n = parsed.size();
    st.param_means.clear();
    {
      std::vector<std::pair<int, const std::vector<std::string>*>> entries;
      for (const auto& pl : parsed) entries.emplace_back(pl.template_id, &pl.params);
      auto view = st.view();
      view.param_means = nullptr;
      st.param_means = detector::param_lane_means(view, entries);
    }
    auto view = st.view();
    seqmodel::WindowSet ws;
    ws.window = w;
    for (std::size_t i = 0; i < n; ++i) {
      auto x = detector::entry_input(view, parsed[i].template_id, &parsed[i].params);
      if (i == 0) ws.entries.resize(x.size(), static_cast<Eigen::Index>(n));
      ws.entries.col(static_cast<Eigen::Index>(i)) = x;
    }
    for (std::size_t i = 0; i + w < n; ++i) {
      ws.starts.push_back(i);
      ws.targets.push_back(parsed[i + w].template_id);
    }
    st.seq_cfg = cfg.seqmodel;
    st.seq_cfg.input_dim = static_cast<std::size_t>(ws.entries.rows());
    st.seq_cfg.classes = st.library.size();
    // The candidate set must leave at least one class out.
    st.seq_cfg.candidate_g = std::min(st.seq_cfg.candidate_g, std::max<std::size_t>(1, st.seq_cfg.classes - 1));
    seqmodel::TrainStats stats;
    st.weights = seqmodel::train(ws, st.seq_cfg, &stats);
    st.summary = {{"lines", n},
                  {"templates", st.library.size()},
                  {"windows", ws.size()},
                  {"initial_loss", stats.initial_loss},
                  {"epoch_loss", stats.epoch_loss}};
    if (report) {
      report->lines = n;
      report->templates = st.library.size();
      report->windows = ws.size();
      report->seq = stats;
    }
  });
  return st;
}

DetectResult detect_online(const std::vector<parser::RawLog>& logs, const ModelState& model,
                           const detector::DetectorConfig& cfg) {
  DetectResult r;
  r.reports = detector::stream_detect(logs, model.view(), cfg, &r.stats);
  return r;
}

void write_reports(std::ostream& os, const std::vector<detector::AnomalyReport>& reports) {
  for (const auto& r : reports) os << r.to_json().dump() << '\n';
}

}  // namespace tplad::pipeline
