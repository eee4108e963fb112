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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <catch2/catch_amalgamated.hpp>
#include <json.hpp>

#include "ivex/rng.hpp"
#include "ivex/wav.hpp"
#include "support/room_sim.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int exit_code;
  std::string out;
  std::string err;
};

CliResult run_cli(const std::string& args) {
  const fs::path dir = fs::temp_directory_path() / "ivex_cli_io";
  fs::create_directories(dir);
  const std::string out_path = (dir / "stdout.txt").string();
  const std::string err_path = (dir / "stderr.txt").string();
  const std::string cmd =
      std::string(IVEX_CLI_PATH) + " " + args + " >" + out_path + " 2>" + err_path;
  const int status = std::system(cmd.c_str());
  auto slurp = [](const std::string& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
  };
  return {WEXITSTATUS(status), slurp(out_path), slurp(err_path)};
}

std::string slurp_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const char* name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("simulate is byte-deterministic in the master seed") {
  const fs::path dir = fresh_dir("ivex_cli_sim");
  const std::string out1 = (dir / "a.csv").string();
  const std::string out2 = (dir / "b.csv").string();
  const std::string base =
      "simulate --N-grid 50,200 --trials 10 --seed 7 --threads 3 --out ";
  REQUIRE(run_cli(base + out1).exit_code == 0);
  REQUIRE(run_cli(base + out2).exit_code == 0);
  const std::string csv1 = slurp_file(out1);
  CHECK(!csv1.empty());
  CHECK(csv1 == slurp_file(out2));
  CHECK(fs::exists(out1 + ".config.json"));
}

TEST_CASE("simulate warns when side-info flags are set for blind-only methods") {
  const fs::path dir = fresh_dir("ivex_cli_warn");
  const auto res = run_cli("simulate --N-grid 50 --trials 2 --methods fastica --eps2 0.3 --out " +
                           (dir / "c.csv").string());
  CHECK(res.exit_code == 0);
  CHECK(res.err.find("ignored in blind mode") != std::string::npos);
}

TEST_CASE("simulate requires exactly one sweep axis") {
  const fs::path dir = fresh_dir("ivex_cli_axis");
  const auto both = run_cli("simulate --N-grid 50 --sir-ini-grid 0 --trials 2 --out " +
                            (dir / "d.csv").string());
  CHECK(both.exit_code == 1);
  const auto neither = run_cli("simulate --trials 2 --out " + (dir / "e.csv").string());
  CHECK(neither.exit_code == 1);
}

TEST_CASE("config file values are overridden by flags and unknown keys fail") {
  const fs::path dir = fresh_dir("ivex_cli_cfg");
  {
    std::ofstream os(dir / "cfg.json");
    os << R"({"trials": 100, "N-grid": "50", "seed": 3})";
  }
  const auto res = run_cli("simulate --config " + (dir / "cfg.json").string() +
                           " --trials 5 --out " + (dir / "f.csv").string());
  REQUIRE(res.exit_code == 0);
  const auto echoed = nlohmann::json::parse(res.out);
  CHECK(echoed["trials"] == 5);
  CHECK(echoed["seed"] == 3);
  const std::string csv = slurp_file(dir / "f.csv");
  CHECK(csv.find(",5\n") != std::string::npos);

  {
    std::ofstream os(dir / "bad.json");
    os << R"({"trails": 2})";
  }
  const auto bad = run_cli("simulate --config " + (dir / "bad.json").string() + " --out " +
                           (dir / "g.csv").string());
  CHECK(bad.exit_code == 1);
  CHECK(bad.err.find("trails") != std::string::npos);

  {
    std::ofstream os(dir / "broken.json");
    os << "{ not json";
  }
  const auto broken = run_cli("simulate --N-grid 50 --config " + (dir / "broken.json").string() +
                              " --out " + (dir / "h.csv").string());
  CHECK(broken.exit_code == 1);
}

TEST_CASE("empty config object keeps defaults") {
  const fs::path dir = fresh_dir("ivex_cli_empty");
  {
    std::ofstream os(dir / "empty.json");
    os << "{}";
  }
  const auto res = run_cli("simulate --N-grid 50 --trials 2 --config " +
                           (dir / "empty.json").string() + " --out " + (dir / "i.csv").string());
  REQUIRE(res.exit_code == 0);
  const auto echoed = nlohmann::json::parse(res.out);
  CHECK(echoed["eps2"] == 0.5);
  CHECK(echoed["init-radius"] == 0.5);
}

TEST_CASE("version prints feature tags") {
  const auto res = run_cli("--version");
  CHECK(res.exit_code == 0);
  CHECK(res.out.find("ivex") != std::string::npos);
  CHECK(res.out.find("features:") != std::string::npos);
}

TEST_CASE("eval rejects mismatched-length inputs with exit 1") {
  const fs::path dir = fresh_dir("ivex_cli_eval");
  ivex::Rng rng(1);
  ivex::WavData a, b;
  a.sample_rate = b.sample_rate = 16000;
  a.samples = Eigen::MatrixXd::Random(1, 2000);
  b.samples = Eigen::MatrixXd::Random(1, 1500);
  ivex::write_wav((dir / "ref.wav").string(), a);
  ivex::write_wav((dir / "est.wav").string(), b);
  const auto res = run_cli("eval --refs " + (dir / "ref.wav").string() + " --est " +
                           (dir / "est.wav").string());
  CHECK(res.exit_code == 1);
  CHECK(res.err.find("length mismatch") != std::string::npos);
}

TEST_CASE("extract and eval run end to end on a synthetic scene") {
  const fs::path dir = fresh_dir("ivex_cli_extract");
  ivex::Rng rng(2);
  auto scene = ivex_tests::make_scene(rng, 0.15, 16000, 2.0);
  const double peak = scene.mix.cwiseAbs().maxCoeff();
  scene.mix /= 2 * peak;
  scene.img1 /= 2 * peak;
  scene.img2 /= 2 * peak;

  ivex::WavData mix{scene.mix, 16000};
  ivex::WavData r1{scene.img1.row(0), 16000};
  ivex::WavData r2{scene.img2.row(0), 16000};
  ivex::write_wav((dir / "mix.wav").string(), mix);
  const fs::path refs = dir / "refs";
  fs::create_directories(refs);
  ivex::write_wav((refs / "ref0.wav").string(), r1);
  ivex::write_wav((refs / "ref1.wav").string(), r2);

  const std::string est = (dir / "est.wav").string();
  const std::string trace = (dir / "trace.jsonl").string();
  const std::string cache = (dir / "cov.json").string();
  const auto res = run_cli("extract --in " + (dir / "mix.wav").string() + " --oracle-refs " +
                           refs.string() + " --mics 4 --win 1000 --shift 200 --out " + est +
                           " --trace " + trace + " --cov-cache " + cache);
  REQUIRE(res.exit_code == 0);
  CHECK(fs::exists(est));
  CHECK(fs::exists(est + ".config.json"));
  CHECK(fs::exists(trace));
  CHECK(fs::exists(cache));

  // pilot and oracle refs are mutually exclusive
  ivex::write_pilot_csv((dir / "pilot.csv").string(), [&] {
    ivex::PilotSignal p;
    p.r = Eigen::VectorXd::Ones(10);
    return p;
  }());
  const auto conflict = run_cli("extract --in " + (dir / "mix.wav").string() + " --pilot " +
                                (dir / "pilot.csv").string() + " --oracle-refs " + refs.string() +
                                " --out " + est);
  CHECK(conflict.exit_code == 1);

  const std::string scores_path = (dir / "scores.json").string();
  const auto ev = run_cli("eval --refs " + (refs / "ref0.wav").string() + " " +
                          (refs / "ref1.wav").string() + " --est " + est +
                          " --filter-taps 256 --out " + scores_path);
  REQUIRE(ev.exit_code == 0);
  const auto scores = nlohmann::json::parse(slurp_file(scores_path));
  CHECK(scores.contains("sir_db"));
  CHECK(scores.contains("sdr_db"));
}

TEST_CASE("extract via a pilot csv") {
  const fs::path dir = fresh_dir("ivex_cli_pilot");
  ivex::Rng rng(3);
  auto scene = ivex_tests::make_scene(rng, 0.15, 16000, 1.5);
  const double peak = scene.mix.cwiseAbs().maxCoeff();
  scene.mix /= 2 * peak;
  ivex::WavData mix{scene.mix, 16000};
  ivex::write_wav((dir / "mix.wav").string(), mix);

  ivex::StftConfig cfg;
  const auto dom = ivex::oracle_dominance({scene.img1.row(0), scene.img2.row(0)}, 0, cfg);
  const auto pilot =
      ivex::pilot_from_dominance(dom, ivex::frame_energies(scene.mix.row(0), cfg));
  ivex::write_pilot_csv((dir / "pilot.csv").string(), pilot);

  const auto res = run_cli("extract --in " + (dir / "mix.wav").string() + " --pilot " +
                           (dir / "pilot.csv").string() + " --out " + (dir / "est.wav").string());
  REQUIRE(res.exit_code == 0);
  const auto est = ivex::read_wav((dir / "est.wav").string());
  CHECK(est.samples.cols() == scene.mix.cols());
}
