// tokendrive command-line front end: data collection, training, tuning,
// evaluation and replay. Exit codes: 0 success, 2 bad config or usage,
// 3 missing file or I/O failure, 4 numeric failure.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "tokendrive/config.hpp"
#include "tokendrive/eval/replay.hpp"
#include "tokendrive/eval/runner.hpp"
#include "tokendrive/nn/checkpoint.hpp"

namespace fs = std::filesystem;
using namespace tokendrive;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitBadConfig = 2;
constexpr int kExitMissingFile = 3;
constexpr int kExitNumeric = 4;

struct MissingFile : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  long seed = -1;  // -1: keep the config value
};

RunConfig resolve_config(const CommonArgs& args) {
  RunConfig cfg;
  if (!args.config_path.empty()) {
    if (!fs::exists(args.config_path)) throw MissingFile("config file not found: " + args.config_path);
    cfg = load_config(args.config_path);
  }
  for (const auto& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got: " + kv);
    std::string key = kv.substr(0, eq);
    std::string value = kv.substr(eq + 1);
    auto trim = [](std::string& s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
    };
    trim(key);
    trim(value);
    apply_override(cfg, key, value);
  }
  if (args.seed >= 0) cfg.seed = args.seed;
  return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Configuration file (key = value lines)");
  cmd->add_option("--set", args.overrides, "Override one config key, e.g. --set rl.steps=500")
      ->take_all();
  cmd->add_option("--seed", args.seed, "Override the global seed");
}

std::vector<expert::RouteScenario> resolve_routes(const std::string& spec, const RunConfig& cfg) {
  if (spec == "builtin-set") return eval::builtin_collect_routes(static_cast<uint64_t>(cfg.seed));
  if (spec == "builtin-eval") return eval::builtin_eval_routes(static_cast<uint64_t>(cfg.seed));
  if (!fs::exists(spec)) throw MissingFile("route path not found: " + spec);

  const sim::WorldConfig world = cfg.world_config();
  std::vector<expert::RouteScenario> out;
  auto add_file = [&](const fs::path& p) {
    expert::RouteScenario rs;
    rs.route = sim::load_route_file(p.string());
    rs.scenario = world.scenario;
    rs.hazard_free = world.scenario.lead_vehicles == 0 && world.scenario.pedestrians == 0 &&
                     world.scenario.lights == 0 && world.scenario.statics == 0;
    rs.id = p.stem().string();
    out.push_back(std::move(rs));
  };
  if (fs::is_directory(spec)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(spec))
      if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) add_file(f);
    if (out.empty()) throw MissingFile("no .txt route files in: " + spec);
  } else {
    add_file(spec);
  }
  return out;
}

struct LoadedModel {
  lang::Vocab vocab;
  policy::Model model;
};

LoadedModel build_model(const RunConfig& cfg) {
  lang::Vocab vocab(cfg.grammar_config());
  policy::Model model = policy::make_model(cfg.model_config(), vocab);
  return {std::move(vocab), std::move(model)};
}

LoadedModel load_model_checked(const RunConfig& cfg, const std::string& ckpt) {
  if (!fs::exists(ckpt)) throw MissingFile("checkpoint not found: " + ckpt);
  LoadedModel lm = build_model(cfg);
  policy::load_model(ckpt, lm.model);
  return lm;
}

std::vector<policy::PreparedRecord> prepare_from_corpus(const RunConfig& cfg,
                                                        const LoadedModel& lm,
                                                        const std::string& corpus_path,
                                                        bool keep_tensors) {
  if (!fs::exists(corpus_path)) throw MissingFile("corpus not found: " + corpus_path);
  const expert::Corpus corpus = expert::load_corpus(corpus_path, lm.vocab);
  train::PrepareOptions opts;
  opts.keep_tensors = keep_tensors;
  opts.threads = static_cast<int>(cfg.eval_threads);
  return train::prepare_records(corpus, lm.model.encoder, lm.vocab, opts);
}

int cmd_collect(const CommonArgs& common, const std::string& routes_spec, const std::string& out,
                int threads) {
  const RunConfig cfg = resolve_config(common);
  const auto routes = resolve_routes(routes_spec, cfg);
  const lang::Vocab vocab(cfg.grammar_config());
  const auto summary =
      expert::collect_corpus(routes, cfg.world_config(), cfg.expert_config(), cfg.collect_config(),
                             vocab, static_cast<uint64_t>(cfg.seed), out, threads);
  std::cout << "collected " << summary.records << " records from " << routes.size() << " routes\n"
            << "task modes: drive " << summary.mode1 << ", re-query " << summary.mode2
            << ", correct " << summary.mode3 << "\n"
            << "uncertainty labels positive: " << summary.labels_positive << "\n"
            << "expert infractions: " << summary.expert_infractions << "\n"
            << "corpus: " << out << " (+ .bin blob)\n";
  return kExitOk;
}

int cmd_train_mle(const CommonArgs& common, const std::string& corpus_path,
                  const std::string& out, const std::string& init_ckpt) {
  const RunConfig cfg = resolve_config(common);
  LoadedModel lm = init_ckpt.empty() ? build_model(cfg) : load_model_checked(cfg, init_ckpt);
  const auto records =
      prepare_from_corpus(cfg, lm, corpus_path, cfg.mle_train_perception);
  std::vector<const policy::PreparedRecord*> train_set, heldout;
  train::split_records(records, train_set, heldout);
  const double nll = train::train_mle(lm.model, lm.vocab, train_set, cfg.mle_options(), &std::cout);
  const double l1 = train::heldout_waypoint_l1(lm.model, lm.vocab, heldout, cfg.rl_r_fail);
  std::cout << "final nll/token " << nll << "\n";
  std::cout << "heldout waypoint L1 " << l1 << " m (" << heldout.size() << " records)\n";
  policy::save_model(out, lm.model);
  std::cout << "checkpoint: " << out << "\n";
  return kExitOk;
}

int cmd_tune_rl(const CommonArgs& common, const std::string& corpus_path, const std::string& in,
                const std::string& out) {
  const RunConfig cfg = resolve_config(common);
  LoadedModel lm = load_model_checked(cfg, in);
  const auto records = prepare_from_corpus(cfg, lm, corpus_path, false);
  std::vector<const policy::PreparedRecord*> train_set, heldout;
  train::split_records(records, train_set, heldout);
  const double before = train::heldout_waypoint_l1(lm.model, lm.vocab, heldout, cfg.rl_r_fail);
  train::tune_rl(lm.model, lm.vocab, train_set, cfg.rl_options(), &std::cout);
  const double after = train::heldout_waypoint_l1(lm.model, lm.vocab, heldout, cfg.rl_r_fail);
  std::cout << "heldout waypoint L1: " << before << " -> " << after << " m\n";
  policy::save_model(out, lm.model);
  std::cout << "checkpoint: " << out << "\n";
  return kExitOk;
}

int cmd_train_uncertainty(const CommonArgs& common, const std::string& corpus_path,
                          const std::string& in, const std::string& out) {
  const RunConfig cfg = resolve_config(common);
  LoadedModel lm = load_model_checked(cfg, in);
  const auto records = prepare_from_corpus(cfg, lm, corpus_path, false);
  std::vector<const policy::PreparedRecord*> all;
  for (const auto& r : records) all.push_back(&r);
  const double bce = train::train_uncertainty(lm.model, all, cfg.uncertainty_options(), &std::cout);
  std::cout << "final bce " << bce << "\n";
  policy::save_model(out, lm.model);
  std::cout << "checkpoint: " << out << "\n";
  return kExitOk;
}

int cmd_evaluate(const CommonArgs& common, const std::string& ckpt, const std::string& mode_name,
                 const std::string& routes_spec, int runs, const std::string& out,
                 const std::string& traces_dir) {
  const RunConfig cfg = resolve_config(common);
  const auto mode = eval::mode_from_name(mode_name);
  if (!mode) throw ConfigError("unknown mode: " + mode_name +
                               " (expected drive, drive-no-requery or drive-correct)");
  LoadedModel lm = load_model_checked(cfg, ckpt);
  const auto routes = resolve_routes(routes_spec, cfg);
  std::vector<sim::Trace> traces;
  const auto report =
      eval::evaluate(lm.model, lm.vocab, routes, *mode, runs, cfg.eval_config(),
                     static_cast<uint64_t>(cfg.seed), traces_dir.empty() ? nullptr : &traces);
  metrics::save_report(report, out);
  if (!traces_dir.empty()) {
    fs::create_directories(traces_dir);
    for (size_t i = 0; i < traces.size(); ++i) {
      const auto& t = traces[i];
      sim::save_trace(t, (fs::path(traces_dir) /
                          ("run" + std::to_string(i / routes.size()) + "_" + t.route_id + ".trace"))
                             .string());
    }
  }
  const auto rc = report.rc(), is = report.is(), ds = report.ds();
  std::cout << "mode " << report.mode << " runs " << runs << "\n";
  std::cout << "RC " << rc.mean << " +/- " << rc.std << "\n";
  std::cout << "IS " << is.mean << " +/- " << is.std << "\n";
  std::cout << "DS " << ds.mean << " +/- " << ds.std << "\n";
  std::cout << "report: " << out << "\n";
  return kExitOk;
}

int cmd_replay(const std::string& trace_path, const std::string& out) {
  if (!fs::exists(trace_path)) throw MissingFile("trace not found: " + trace_path);
  const sim::Trace trace = sim::load_trace(trace_path);
  const std::string ext = fs::path(out).extension().string();
  std::string payload;
  if (ext == ".svg") payload = eval::trace_to_svg(trace);
  else if (ext == ".csv") payload = eval::trace_to_csv(trace);
  else throw ConfigError("replay output must end in .svg or .csv, got: " + out);
  std::ofstream f(out, std::ios::binary);
  if (!f) throw MissingFile("cannot write: " + out);
  f << payload;
  std::cout << "wrote " << out << " (" << payload.size() << " bytes)\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tokendrive: a desk-scale hybrid token-policy driving stack"};
  app.require_subcommand(1);
  app.footer("Configuration keys and defaults (settable via --config file or --set key=value):\n" +
             describe_config(RunConfig{}));

  CommonArgs collect_args, mle_args, rl_args, unc_args, eval_args;
  std::string routes_spec = "builtin-set", out_path, corpus_path, ckpt_in, ckpt_out, init_ckpt;
  std::string mode_name = "drive", traces_dir, trace_path;
  int threads = 2, runs = 3;

  auto* collect = app.add_subcommand("collect", "Run the expert over routes and write a corpus");
  add_common(collect, collect_args);
  collect->add_option("--routes", routes_spec, "builtin-set, a route file, or a directory");
  collect->add_option("--out", out_path, "corpus output path")->required();
  collect->add_option("--threads", threads, "worker threads");

  auto* train_mle = app.add_subcommand("train-mle", "Imitation training on a corpus");
  add_common(train_mle, mle_args);
  train_mle->add_option("--corpus", corpus_path, "corpus path")->required();
  train_mle->add_option("--out", ckpt_out, "checkpoint output")->required();
  train_mle->add_option("--init", init_ckpt, "optional starting checkpoint");

  auto* tune = app.add_subcommand("tune-rl", "Masked reward-guided policy-gradient tuning");
  add_common(tune, rl_args);
  tune->add_option("--corpus", corpus_path, "corpus path")->required();
  tune->add_option("--ckpt", ckpt_in, "starting checkpoint")->required();
  tune->add_option("--out", ckpt_out, "checkpoint output")->required();

  auto* unc = app.add_subcommand("train-uncertainty", "Train the uncertainty head");
  add_common(unc, unc_args);
  unc->add_option("--corpus", corpus_path, "corpus path")->required();
  unc->add_option("--ckpt", ckpt_in, "starting checkpoint")->required();
  unc->add_option("--out", ckpt_out, "checkpoint output")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Drive routes and write an evaluation report");
  add_common(evaluate, eval_args);
  evaluate->add_option("--ckpt", ckpt_in, "checkpoint")->required();
  evaluate->add_option("--mode", mode_name, "drive | drive-no-requery | drive-correct");
  evaluate->add_option("--routes", routes_spec, "builtin-eval, a route file, or a directory");
  evaluate->add_option("--runs", runs, "repeated runs per route");
  evaluate->add_option("--out", out_path, "report output path")->required();
  evaluate->add_option("--traces", traces_dir, "directory for per-run trace files");

  auto* replay = app.add_subcommand("replay", "Render a trace file to SVG or CSV");
  replay->add_option("--trace", trace_path, "trace file")->required();
  replay->add_option("--out", out_path, "output path ending in .svg or .csv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      app.exit(e);
      return kExitOk;
    }
    std::cerr << e.what() << "\n";
    return kExitBadConfig;
  }

  try {
    if (collect->parsed()) {
      if (routes_spec.empty()) routes_spec = "builtin-set";
      return cmd_collect(collect_args, routes_spec, out_path, threads);
    }
    if (train_mle->parsed()) return cmd_train_mle(mle_args, corpus_path, ckpt_out, init_ckpt);
    if (tune->parsed()) return cmd_tune_rl(rl_args, corpus_path, ckpt_in, ckpt_out);
    if (unc->parsed()) return cmd_train_uncertainty(unc_args, corpus_path, ckpt_in, ckpt_out);
    if (evaluate->parsed()) {
      if (routes_spec == "builtin-set") routes_spec = "builtin-eval";
      return cmd_evaluate(eval_args, ckpt_in, mode_name, routes_spec, runs, out_path, traces_dir);
    }
    if (replay->parsed()) return cmd_replay(trace_path, out_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitBadConfig;
  } catch (const MissingFile& e) {
    std::cerr << "missing file: " << e.what() << "\n";
    return kExitMissingFile;
  } catch (const NonFinite& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const expert::CorpusWriteError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitMissingFile;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMissingFile;
  }
  return kExitOk;
}
