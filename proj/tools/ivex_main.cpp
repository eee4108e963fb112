// Copyright 2026 The Ivex Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ivex/audio_pipeline.hpp"
#include "ivex/simharness.hpp"
#include "ivex/wav.hpp"

namespace {

constexpr const char* kVersion = "ivex 0.1.0";
constexpr const char* kFeatures =
    "features: weighted-covariance-constraint, distortionless-reprojection, "
    "joint-mixture-newton-update, smoothed-norm-score, monte-carlo-harness, "
    "stft-pipeline";

using nlohmann::json;

// Exit codes: 0 success, 1 usage/input error, 2 runtime or numerical error.
enum ExitCode { kOk = 0, kUsage = 1, kRuntime = 2 };

bool g_json_errors = false;

int report_error(const char* kind, const std::string& message, int code) {
  if (g_json_errors) {
    json j;
    j["error"] = kind;
    j["message"] = message;
    std::cerr << j.dump() << '\n';
  } else {
    std::cerr << "error (" << kind << "): " << message << '\n';
  }
  return code;
}

// ---------------------------------------------------------------------------
// Config file merging: JSON file supplies defaults, explicit flags win.
// ---------------------------------------------------------------------------

class ConfigMerger {
 public:
  explicit ConfigMerger(CLI::App* cmd) : cmd_(cmd) {
    cmd->add_option("--config", config_path_, "JSON config file; explicit flags override it");
  }

  void bind(const std::string& key, std::function<void(const json&)> apply) {
    appliers_[key] = std::move(apply);
  }

  // Applies file values to every bound key whose flag was not given.
  void merge() {
    if (config_path_.empty()) return;
    std::ifstream is(config_path_);
    if (!is) throw ivex::invalid_input_error("cannot open config file: " + config_path_);
    json file;
    try {
      file = json::parse(is);
    } catch (const json::parse_error& e) {
      throw ivex::invalid_input_error(std::string("malformed config file: ") + e.what());
    }
    if (!file.is_object()) throw ivex::invalid_input_error("config file must hold a JSON object");
    for (const auto& [key, value] : file.items()) {
      auto it = appliers_.find(key);
      if (it == appliers_.end()) {
        throw ivex::invalid_input_error("unknown config key: " + key);
      }
      const CLI::Option* opt = cmd_->get_option_no_throw("--" + key);
      if (opt != nullptr && opt->count() > 0) continue;  // flag wins
      it->second(value);
    }
  }

 private:
  CLI::App* cmd_;
  std::string config_path_;
  std::map<std::string, std::function<void(const json&)>> appliers_;
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ivex::invalid_input_error("cannot write output file: " + path);
  os << text;
}

// Every artifact is accompanied by the resolved configuration that made it.
void echo_config(const json& resolved, const std::vector<std::string>& artifacts) {
  std::cout << resolved.dump(2) << '\n';
  for (const auto& a : artifacts) {
    write_text(a + ".config.json", resolved.dump(2) + "\n");
  }
}

std::vector<double> parse_grid(const std::string& csv, const char* what) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ivex::invalid_input_error(std::string("malformed ") + what + " entry: " + item);
    }
  }
  if (out.empty()) throw ivex::invalid_input_error(std::string("empty grid: ") + what);
  return out;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
  int d = 5;
  int K = 1;
  int N = 200;
  double sir_ini = 0.0;
  std::string n_grid, sir_grid;
  int trials = 100;
  double eps2 = 0.5;
  double init_radius = 0.5;
  std::string methods = "fastica,ifastica";
  std::uint64_t seed = 0;
  std::string out = "curves.csv";
  std::string json_out;
  int threads = 0;
  std::string score = "norm-smooth";
  int max_iters = 100;
  double conv_tol = 1e-6;
};

int run_simulate(const SimulateArgs& a, bool eps2_given, bool n_grid_given, bool sir_grid_given) {
  if (n_grid_given == sir_grid_given) {
    throw ivex::invalid_input_error("choose exactly one sweep axis: --N-grid or --sir-ini-grid");
  }
  ivex::MonteCarloSpec mc;
  mc.axis = n_grid_given ? ivex::SweepAxis::N : ivex::SweepAxis::sir_ini;
  mc.values = parse_grid(n_grid_given ? a.n_grid : a.sir_grid, "sweep grid");
  mc.methods.clear();
  {
    std::stringstream ss(a.methods);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) mc.methods.push_back(ivex::method_from_string(item));
    }
  }
  if (mc.methods.empty()) throw ivex::invalid_input_error("no methods selected");
  bool any_informed = false;
  for (auto m : mc.methods) any_informed = any_informed || ivex::method_informed(m);
  if (!any_informed && eps2_given) {
    std::cerr << "warning: side-information flags (--eps2) are ignored in blind mode\n";
  }
  mc.trials = a.trials;
  mc.base.d = a.d;
  mc.base.K = a.K;
  mc.base.N = a.N;
  mc.base.sir_ini_db = a.sir_ini;
  mc.base.eps2 = a.eps2;
  mc.base.init_radius = a.init_radius;
  mc.master_seed = a.seed;
  mc.threads = a.threads;
  mc.extraction.score = a.score;
  mc.extraction.max_iters = a.max_iters;
  mc.extraction.conv_tol = a.conv_tol;

  const ivex::CurveTable table = ivex::run_monte_carlo(mc);
  write_text(a.out, ivex::to_csv(table));
  std::vector<std::string> artifacts{a.out};
  if (!a.json_out.empty()) {
    write_text(a.json_out, ivex::to_json(table).dump(2) + "\n");
    artifacts.push_back(a.json_out);
  }

  json resolved;
  resolved["subcommand"] = "simulate";
  resolved["d"] = a.d;
  resolved["K"] = a.K;
  resolved["N"] = a.N;
  resolved["sir-ini"] = a.sir_ini;
  resolved["axis"] = ivex::to_string(mc.axis);
  resolved["grid"] = mc.values;
  resolved["trials"] = a.trials;
  resolved["eps2"] = a.eps2;
  resolved["init-radius"] = a.init_radius;
  resolved["methods"] = a.methods;
  resolved["seed"] = a.seed;
  resolved["score"] = a.score;
  resolved["max-iters"] = a.max_iters;
  resolved["conv-tol"] = a.conv_tol;
  resolved["threads"] = a.threads;
  resolved["out"] = a.out;
  if (!a.json_out.empty()) resolved["json-out"] = a.json_out;
  echo_config(resolved, artifacts);
  return kOk;
}

// ---------------------------------------------------------------------------
// extract
// ---------------------------------------------------------------------------

struct ExtractArgs {
  std::string in;
  std::string pilot;
  std::string oracle_refs;
  int target_index = 0;
  int mics = 4;
  int ref_channel = 0;
  int win = 1000;
  int shift = 200;
  std::string out = "est.wav";
  std::string out_image;
  std::string trace;
  std::string cov_cache;
  std::string score = "norm-smooth";
  std::string weight_fn = "reciprocal";
  int max_iters = 100;
  double conv_tol = 1e-6;
};

int run_extract(const ExtractArgs& a) {
  if (a.in.empty()) throw ivex::invalid_input_error("--in is required");
  if (a.pilot.empty() == a.oracle_refs.empty()) {
    throw ivex::invalid_input_error("provide exactly one pilot source: --pilot or --oracle-refs");
  }
  const ivex::WavData mix = ivex::read_wav(a.in);

  ivex::ExtractOptions opts;
  opts.mics = a.mics;
  opts.ref_channel = a.ref_channel;
  opts.stft.sample_rate = mix.sample_rate;
  opts.stft.window_length = a.win;
  opts.stft.shift = a.shift;
  opts.weight_fn = ivex::weight_fn_from_string(a.weight_fn);
  opts.extraction.score = a.score;
  opts.extraction.max_iters = a.max_iters;
  opts.extraction.conv_tol = a.conv_tol;

  ivex::PilotSignal pilot;
  if (!a.pilot.empty()) {
    pilot = ivex::read_pilot_csv(a.pilot);
  } else {
    std::vector<std::string> paths;
    for (const auto& entry : std::filesystem::directory_iterator(a.oracle_refs)) {
      if (entry.path().extension() == ".wav") paths.push_back(entry.path().string());
    }
    std::sort(paths.begin(), paths.end());
    if (paths.size() < 2) {
      throw ivex::invalid_input_error("--oracle-refs needs a directory with >= 2 reference WAVs");
    }
    std::vector<Eigen::VectorXd> refs;
    for (const auto& p : paths) {
      const ivex::WavData w = ivex::read_wav(p);
      refs.push_back(w.samples.row(std::min<Eigen::Index>(a.ref_channel, w.samples.rows() - 1)));
    }
    const auto dominance = ivex::oracle_dominance(refs, a.target_index, opts.stft);
    if (mix.samples.rows() <= a.ref_channel) {
      throw ivex::invalid_input_error("mix has fewer channels than the reference channel index");
    }
    const Eigen::VectorXd mix_energy =
        ivex::frame_energies(mix.samples.row(a.ref_channel), opts.stft);
    pilot = ivex::pilot_from_dominance(dominance, mix_energy);
  }

  std::optional<ivex::CovarianceSet> cache;
  if (!a.cov_cache.empty() && std::filesystem::exists(a.cov_cache)) {
    std::ifstream is(a.cov_cache);
    try {
      cache = ivex::covariance_set_from_json(json::parse(is));
    } catch (const json::parse_error& e) {
      throw ivex::invalid_input_error(std::string("malformed covariance cache: ") + e.what());
    }
  }

  const ivex::ExtractResult res =
      ivex::extract_speaker(mix.samples, pilot, opts, cache ? &*cache : nullptr);

  ivex::WavData est;
  est.sample_rate = mix.sample_rate;
  est.samples = res.mono.transpose();
  ivex::write_wav(a.out, est);
  std::vector<std::string> artifacts{a.out};

  if (!a.out_image.empty()) {
    ivex::WavData img;
    img.sample_rate = mix.sample_rate;
    img.samples = res.image;
    ivex::write_wav(a.out_image, img);
    artifacts.push_back(a.out_image);
  }
  if (!a.trace.empty()) {
    std::ofstream os(a.trace);
    if (!os) throw ivex::invalid_input_error("cannot write trace file: " + a.trace);
    res.trace.to_jsonl(os);
    artifacts.push_back(a.trace);
  }
  if (!a.cov_cache.empty() && !cache) {
    write_text(a.cov_cache, ivex::to_json(res.covariances).dump() + "\n");
  }

  json resolved;
  resolved["subcommand"] = "extract";
  resolved["in"] = a.in;
  if (!a.pilot.empty()) resolved["pilot"] = a.pilot;
  if (!a.oracle_refs.empty()) resolved["oracle-refs"] = a.oracle_refs;
  resolved["target-index"] = a.target_index;
  resolved["mics"] = a.mics;
  resolved["ref-channel"] = a.ref_channel;
  resolved["win"] = a.win;
  resolved["shift"] = a.shift;
  resolved["score"] = a.score;
  resolved["weight-fn"] = a.weight_fn;
  resolved["max-iters"] = a.max_iters;
  resolved["conv-tol"] = a.conv_tol;
  resolved["out"] = a.out;
  resolved["bins-processed"] = res.processed_bins.size();
  resolved["iterations"] = res.trace.iterations;
  resolved["converged"] = res.trace.converged;
  echo_config(resolved, artifacts);
  return kOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::vector<std::string> refs;
  std::string est;
  int target_index = 0;
  int filter_taps = 512;
  std::string out;
};

int run_eval(const EvalArgs& a) {
  if (a.refs.empty() || a.est.empty()) {
    throw ivex::invalid_input_error("--refs and --est are required");
  }
  const ivex::WavData est = ivex::read_wav(a.est);
  std::vector<Eigen::VectorXd> refs;
  for (const auto& p : a.refs) {
    const ivex::WavData w = ivex::read_wav(p);
    if (w.samples.cols() != est.samples.cols()) {
      throw ivex::invalid_input_error("length mismatch between reference and estimate: " + p);
    }
    refs.push_back(w.samples.row(0));
  }
  const ivex::EvalScores scores =
      ivex::evaluate_bss(refs, est.samples.row(0), a.target_index, a.filter_taps);

  json out;
  out["sir_db"] = scores.sir_db;
  out["sdr_db"] = scores.sdr_db;
  std::cout << out.dump(2) << '\n';
  std::vector<std::string> artifacts;
  if (!a.out.empty()) {
    write_text(a.out, out.dump(2) + "\n");
    artifacts.push_back(a.out);
  }

  json resolved;
  resolved["subcommand"] = "eval";
  resolved["refs"] = a.refs;
  resolved["est"] = a.est;
  resolved["target-index"] = a.target_index;
  resolved["filter-taps"] = a.filter_taps;
  if (!a.out.empty()) resolved["out"] = a.out;
  echo_config(resolved, artifacts);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ivex: blind and informed one-unit vector extraction"};
  app.require_subcommand(0, 1);
  bool show_version = false;
  app.add_flag("--version", show_version, "print version and implemented feature tags");
  app.add_flag("--json-errors", g_json_errors, "machine-readable errors on stderr");

  SimulateArgs sim;
  CLI::App* simulate = app.add_subcommand("simulate", "Monte-Carlo success-rate/SIR curves");
  simulate->add_option("--d", sim.d, "channels / sources per mixture");
  simulate->add_option("--K", sim.K, "mixtures per trial");
  simulate->add_option("--N", sim.N, "samples (fixed when sweeping SIR)");
  simulate->add_option("--sir-ini", sim.sir_ini, "initial SIR in dB (fixed when sweeping N)");
  auto* n_grid_opt = simulate->add_option("--N-grid", sim.n_grid, "comma list of N values to sweep");
  auto* sir_grid_opt =
      simulate->add_option("--sir-ini-grid", sim.sir_grid, "comma list of SIR_ini values to sweep");
  simulate->add_option("--trials", sim.trials, "trials per grid point");
  auto* eps2_opt = simulate->add_option("--eps2", sim.eps2, "side-information noise power");
  simulate->add_option("--init-radius", sim.init_radius, "initialization vicinity radius");
  simulate->add_option("--methods", sim.methods, "comma list: fastica,ifastica,fastiva,ifastiva");
  simulate->add_option("--seed", sim.seed, "master seed");
  simulate->add_option("--out", sim.out, "output CSV path");
  simulate->add_option("--json-out", sim.json_out, "optional JSON output path");
  simulate->add_option("--threads", sim.threads, "worker cap (0 = hardware)");
  simulate->add_option("--score", sim.score, "score function: norm-smooth|gauss|custom-table");
  simulate->add_option("--max-iters", sim.max_iters, "iteration cap");
  simulate->add_option("--conv-tol", sim.conv_tol, "convergence tolerance");
  ConfigMerger sim_cfg(simulate);
  sim_cfg.bind("d", [&](const json& v) { sim.d = v.get<int>(); });
  sim_cfg.bind("K", [&](const json& v) { sim.K = v.get<int>(); });
  sim_cfg.bind("N", [&](const json& v) { sim.N = v.get<int>(); });
  sim_cfg.bind("sir-ini", [&](const json& v) { sim.sir_ini = v.get<double>(); });
  sim_cfg.bind("N-grid", [&](const json& v) { sim.n_grid = v.get<std::string>(); });
  sim_cfg.bind("sir-ini-grid", [&](const json& v) { sim.sir_grid = v.get<std::string>(); });
  sim_cfg.bind("trials", [&](const json& v) { sim.trials = v.get<int>(); });
  sim_cfg.bind("eps2", [&](const json& v) { sim.eps2 = v.get<double>(); });
  sim_cfg.bind("init-radius", [&](const json& v) { sim.init_radius = v.get<double>(); });
  sim_cfg.bind("methods", [&](const json& v) { sim.methods = v.get<std::string>(); });
  sim_cfg.bind("seed", [&](const json& v) { sim.seed = v.get<std::uint64_t>(); });
  sim_cfg.bind("out", [&](const json& v) { sim.out = v.get<std::string>(); });
  sim_cfg.bind("json-out", [&](const json& v) { sim.json_out = v.get<std::string>(); });
  sim_cfg.bind("threads", [&](const json& v) { sim.threads = v.get<int>(); });
  sim_cfg.bind("score", [&](const json& v) { sim.score = v.get<std::string>(); });
  sim_cfg.bind("max-iters", [&](const json& v) { sim.max_iters = v.get<int>(); });
  sim_cfg.bind("conv-tol", [&](const json& v) { sim.conv_tol = v.get<double>(); });

  ExtractArgs ext;
  CLI::App* extract = app.add_subcommand("extract", "frequency-domain target-speaker extraction");
  extract->add_option("--in", ext.in, "multichannel mixture WAV");
  auto* pilot_opt = extract->add_option("--pilot", ext.pilot, "pilot CSV (frame_index,r_value)");
  auto* refs_opt = extract->add_option("--oracle-refs", ext.oracle_refs,
                                       "directory of reference WAVs for the dominance oracle");
  pilot_opt->excludes(refs_opt);
  extract->add_option("--target-index", ext.target_index, "target reference index");
  extract->add_option("--mics", ext.mics, "microphones to use (first channels)");
  extract->add_option("--ref-channel", ext.ref_channel, "reference channel for the mono output");
  extract->add_option("--win", ext.win, "STFT window length in samples");
  extract->add_option("--shift", ext.shift, "STFT shift in samples");
  extract->add_option("--out", ext.out, "estimated target WAV (mono)");
  extract->add_option("--out-image", ext.out_image, "optional multichannel image WAV");
  extract->add_option("--trace", ext.trace, "iteration trace JSONL path");
  extract->add_option("--cov-cache", ext.cov_cache, "covariance JSON cache (read if present, else written)");
  extract->add_option("--score", ext.score, "score function");
  extract->add_option("--weight-fn", ext.weight_fn, "weighting: reciprocal|binary-mask|identity");
  extract->add_option("--max-iters", ext.max_iters, "iteration cap");
  extract->add_option("--conv-tol", ext.conv_tol, "convergence tolerance");
  ConfigMerger ext_cfg(extract);
  ext_cfg.bind("in", [&](const json& v) { ext.in = v.get<std::string>(); });
  ext_cfg.bind("pilot", [&](const json& v) { ext.pilot = v.get<std::string>(); });
  ext_cfg.bind("oracle-refs", [&](const json& v) { ext.oracle_refs = v.get<std::string>(); });
  ext_cfg.bind("target-index", [&](const json& v) { ext.target_index = v.get<int>(); });
  ext_cfg.bind("mics", [&](const json& v) { ext.mics = v.get<int>(); });
  ext_cfg.bind("ref-channel", [&](const json& v) { ext.ref_channel = v.get<int>(); });
  ext_cfg.bind("win", [&](const json& v) { ext.win = v.get<int>(); });
  ext_cfg.bind("shift", [&](const json& v) { ext.shift = v.get<int>(); });
  ext_cfg.bind("out", [&](const json& v) { ext.out = v.get<std::string>(); });
  ext_cfg.bind("out-image", [&](const json& v) { ext.out_image = v.get<std::string>(); });
  ext_cfg.bind("trace", [&](const json& v) { ext.trace = v.get<std::string>(); });
  ext_cfg.bind("cov-cache", [&](const json& v) { ext.cov_cache = v.get<std::string>(); });
  ext_cfg.bind("score", [&](const json& v) { ext.score = v.get<std::string>(); });
  ext_cfg.bind("weight-fn", [&](const json& v) { ext.weight_fn = v.get<std::string>(); });
  ext_cfg.bind("max-iters", [&](const json& v) { ext.max_iters = v.get<int>(); });
  ext_cfg.bind("conv-tol", [&](const json& v) { ext.conv_tol = v.get<double>(); });

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "SIR/SDR of an estimate against references");
  eval_cmd->add_option("--refs", ev.refs, "reference WAVs (target first unless --target-index)");
  eval_cmd->add_option("--est", ev.est, "estimated WAV");
  eval_cmd->add_option("--target-index", ev.target_index, "which reference is the target");
  eval_cmd->add_option("--filter-taps", ev.filter_taps, "allowed distortion filter length");
  eval_cmd->add_option("--out", ev.out, "optional JSON scores path");
  ConfigMerger eval_cfg(eval_cmd);
  eval_cfg.bind("refs", [&](const json& v) { ev.refs = v.get<std::vector<std::string>>(); });
  eval_cfg.bind("est", [&](const json& v) { ev.est = v.get<std::string>(); });
  eval_cfg.bind("target-index", [&](const json& v) { ev.target_index = v.get<int>(); });
  eval_cfg.bind("filter-taps", [&](const json& v) { ev.filter_taps = v.get<int>(); });
  eval_cfg.bind("out", [&](const json& v) { ev.out = v.get<std::string>(); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kUsage;
  }

  if (show_version) {
    std::cout << kVersion << '\n' << kFeatures << '\n';
    return kOk;
  }

  try {
    if (simulate->parsed()) {
      sim_cfg.merge();
      return run_simulate(sim, eps2_opt->count() > 0, n_grid_opt->count() > 0,
                          sir_grid_opt->count() > 0);
    }
    if (extract->parsed()) {
      ext_cfg.merge();
      return run_extract(ext);
    }
    if (eval_cmd->parsed()) {
      eval_cfg.merge();
      return run_eval(ev);
    }
    std::cout << app.help() << '\n';
    return kUsage;
  } catch (const ivex::invalid_input_error& e) {
    return report_error("invalid-input", e.what(), kUsage);
  } catch (const ivex::degenerate_weights_error& e) {
    return report_error("degenerate-weights", e.what(), kRuntime);
  } catch (const ivex::singular_covariance_error& e) {
    return report_error("singular-covariance", e.what(), kRuntime);
  } catch (const ivex::degenerate_step_error& e) {
    return report_error("degenerate-step", e.what(), kRuntime);
  } catch (const ivex::degenerate_filter_error& e) {
    return report_error("degenerate-filter", e.what(), kRuntime);
  } catch (const ivex::numerical_failure_error& e) {
    return report_error("numerical-failure", e.what(), kRuntime);
  } catch (const ivex::error& e) {
    return report_error("runtime", e.what(), kRuntime);
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), kRuntime);
  }
}
