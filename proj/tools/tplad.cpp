// tplad: command-line front end (parse, train, detect, eval, synth, inspect).

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tplad/error.hpp"
#include "tplad/eval.hpp"
#include "tplad/pipeline.hpp"
#include "tplad/synth.hpp"

using namespace tplad;
using nlohmann::json;

namespace {

constexpr int kExitError = 2;

pipeline::PipelineConfig config_from(const std::string& path) {
  pipeline::PipelineConfig cfg;
  if (!path.empty()) cfg = pipeline::load_config(path);
  if (const char* env = std::getenv("TPLAD_SEED"); env && *env) {
    char* end = nullptr;
    auto v = std::strtoull(env, &end, 10);
    if (*end != '\0') throw Error(ErrorKind::ConfigError, "TPLAD_SEED must be an unsigned integer");
    cfg.seed = v;
  }
  cfg.normalize();
  cfg.validate();
  return cfg;
}

std::vector<double> parse_fractions(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, ',');) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw Error(ErrorKind::ConfigError, "bad fraction '" + tok + "'");
    }
  }
  if (out.empty()) throw Error(ErrorKind::ConfigError, "no fractions given");
  return out;
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") std::cout << text;
  else pipeline::write_file_atomic(path, text);
}

int cmd_parse(const std::string& input, const std::string& config, const std::string& out,
              const std::string& assignments) {
  auto cfg = config_from(config);
  auto logs = pipeline::read_logs(input, cfg.parser.strip_syslog_header);
  if (logs.empty()) throw Error(ErrorKind::FormatError, "no log lines in " + input);
  parser::Parser p(cfg.parser);
  std::vector<parser::ParsedLog> parsed;
  for (const auto& r : logs) parsed.push_back(p.parse_line(r));
  emit(out, p.to_json().dump(2) + "\n");
  if (!assignments.empty()) {
    std::string text;
    for (std::size_t i = 0; i < logs.size(); ++i) {
      const auto& t = p.at(parsed[i].template_id);
      json j = {{"line_no", logs[i].line_no},
                {"template_id", t.id},
                {"template", t.render()},
                {"params", parser::extract_params(t, parser::tokenize(logs[i].body))}};
      text += j.dump() + "\n";
    }
    emit(assignments, text);
  }
  std::cerr << "parsed " << logs.size() << " lines into " << p.size() << " templates\n";
  return 0;
}

int cmd_train(const std::string& input, const std::string& config, const std::string& out) {
  auto cfg = config_from(config);
  auto logs = pipeline::read_logs(input, cfg.parser.strip_syslog_header);
  pipeline::TrainReport report;
  auto model = pipeline::train_offline(logs, cfg, &report);
  model.save(out);
  std::cerr << "trained on " << report.lines << " lines: " << report.templates << " templates, "
            << report.windows << " windows\n";
  if (!report.seq.epoch_loss.empty())
    std::cerr << "loss " << report.seq.initial_loss << " -> " << report.seq.epoch_loss.back() << "\n";
  for (const auto& s : report.stages) std::cerr << "  stage " << s.stage << ": " << s.seconds << " s\n";
  return 0;
}

int cmd_detect(const std::string& model_path, const std::string& input, const std::string& report,
               const std::string& config) {
  auto model = pipeline::ModelState::load(model_path);
  auto dcfg = model.detector_config();
  if (!config.empty()) {
    std::ifstream in(config);
    if (!in) throw Error(ErrorKind::IoError, "cannot open config " + config);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::ConfigError, e.what());
    }
    for (const auto& [k, v] : j.items())
      if (k != "detector") throw Error(ErrorKind::ConfigError, "detect accepts only 'detector' overrides, got '" + k + "'");
    auto cfg = model.config;
    cfg.merge(j);
    dcfg = cfg.detector;
    dcfg.w = model.seq_cfg.window_w;
    dcfg.g = model.seq_cfg.candidate_g;
    dcfg.validate();
  }
  auto logs = pipeline::read_logs(input, model.config.parser.strip_syslog_header);
  auto result = pipeline::detect_online(logs, model, dcfg);
  std::ostringstream os;
  pipeline::write_reports(os, result.reports);
  emit(report, os.str());
  std::cerr << result.stats.to_json().dump() << "\n";
  return result.reports.empty() ? 0 : 1;
}

int cmd_eval(const std::string& dataset, const std::string& format, const std::string& fractions,
             const std::string& config, const std::string& json_out, const std::string& granularity) {
  auto cfg = config_from(config);
  if (!granularity.empty()) {
    eval::granularity_from_string(granularity);
    cfg.eval.granularity = granularity;
  }
  auto records = eval::load_dataset(dataset, eval::format_from_string(format), cfg.parser.strip_syslog_header);
  auto name = std::filesystem::path(dataset).filename().string();
  if (name.empty()) name = std::filesystem::path(dataset).parent_path().filename().string();
  auto results = eval::run_split_experiment(records, parse_fractions(fractions), cfg, name);
  std::cout << eval::format_table(results);
  json j = json::array();
  for (const auto& r : results) j.push_back(r.to_json());
  if (!json_out.empty()) emit(json_out, j.dump(2) + "\n");
  return 0;
}

int cmd_synth(const std::string& manifest_path, const std::string& seed, const std::string& out) {
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open manifest " + manifest_path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ManifestError, e.what());
  }
  auto m = synth::Manifest::from_json(j);
  if (!seed.empty()) m.seed = std::stoull(seed);
  else if (const char* env = std::getenv("TPLAD_SEED"); env && *env) m.seed = std::stoull(env);
  auto corpus = synth::generate(m);
  synth::write_corpus(corpus, out);
  std::size_t anomalous = 0;
  for (const auto& t : corpus.truth) anomalous += t.anomalous;
  std::cerr << "wrote " << corpus.lines.size() << " lines (" << anomalous << " anomalous) to " << out << "\n";
  return 0;
}

int cmd_inspect(const std::string& model_path, const std::string& what) {
  auto model = pipeline::ModelState::load(model_path);
  json j;
  auto want = [&](const char* k) { return what == "all" || what == k; };
  if (want("config")) {
    j["config"] = model.config.to_json();
    char hash[20];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(model.config_hash));
    j["config_hash"] = hash;
    j["summary"] = model.summary;
  }
  if (want("templates")) {
    json ts = json::array();
    for (const auto& t : model.parser.templates())
      ts.push_back({{"id", t.id}, {"template", t.render()}, {"support", t.support}});
    j["templates"] = ts;
  }
  if (want("vectors")) {
    json vs = json::array();
    for (const auto& tv : model.library) vs.push_back({{"template_id", tv.template_id}, {"vector", tv.values}});
    j["vectors"] = vs;
  }
  if (want("baselines")) j["baselines"] = model.params.to_json();
  if (j.is_null()) throw Error(ErrorKind::ConfigError, "unknown inspect section '" + what + "'");
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tplad: unsupervised log anomaly detection over templates and parameters"};
  app.require_subcommand(1);

  std::string input, config, out, model, report, dataset, format = "synthetic", fractions = "0.8",
      json_out, manifest, seed, what = "all", assignments, granularity;

  auto* parse = app.add_subcommand("parse", "Mine templates from a log file");
  parse->add_option("--input", input, "Log file, or - for stdin")->required();
  parse->add_option("--config", config, "Pipeline config JSON");
  parse->add_option("--out", out, "Template library JSON (default stdout)");
  parse->add_option("--assignments", assignments, "Per-line template assignments as JSON Lines");

  auto* train = app.add_subcommand("train", "Offline training");
  train->add_option("--input", input, "Training log file")->required();
  train->add_option("--config", config, "Pipeline config JSON");
  train->add_option("--out", out, "Model state file")->required();

  auto* detect = app.add_subcommand("detect", "Online detection");
  detect->add_option("--model", model, "Model state file")->required();
  detect->add_option("--input", input, "Log file, or - for stdin")->default_val("-");
  detect->add_option("--report", report, "JSON Lines report file (default stdout)");
  detect->add_option("--config", config, "JSON with 'detector' overrides");

  auto* ev = app.add_subcommand("eval", "Chronological split experiments on a labeled dataset");
  ev->add_option("--dataset", dataset, "Dataset path")->required();
  ev->add_option("--format", format, "line_labeled | group_labeled | synthetic");
  ev->add_option("--fractions", fractions, "Comma-separated training fractions");
  ev->add_option("--config", config, "Pipeline config JSON");
  ev->add_option("--json", json_out, "Write machine-readable results here");
  ev->add_option("--granularity", granularity, "line | group (overrides config)");

  auto* syn = app.add_subcommand("synth", "Generate a labeled synthetic corpus");
  syn->add_option("--manifest", manifest, "Generator manifest JSON")->required();
  syn->add_option("--seed", seed, "Seed (overrides the manifest)");
  syn->add_option("--out", out, "Output directory")->required();

  auto* insp = app.add_subcommand("inspect", "Dump parts of a model state");
  insp->add_option("--model", model, "Model state file")->required();
  insp->add_option("--what", what, "all | config | templates | vectors | baselines");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitError;
  }

  try {
    if (*parse) return cmd_parse(input, config, out, assignments);
    if (*train) return cmd_train(input, config, out);
    if (*detect) return cmd_detect(model, input, report, config);
    if (*ev) return cmd_eval(dataset, format, fractions, config, json_out, granularity);
    if (*syn) return cmd_synth(manifest, seed, out);
    if (*insp) return cmd_inspect(model, what);
  } catch (const Error& e) {
    std::cerr << "tplad: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "tplad: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
