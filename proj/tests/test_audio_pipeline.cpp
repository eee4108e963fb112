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

#include "ivex/audio_pipeline.hpp"

#include <catch2/catch_amalgamated.hpp>

#include "ivex/rng.hpp"
#include "support/oracles.hpp"
#include "support/room_sim.hpp"

using ivex::cd;
using ivex::MatC;
using ivex::VecC;

namespace {

constexpr int kFs = 16000;

// SIR before/after at the reference channel via the known images: the
// pipeline is linear, so applying its final per-bin filters to each image
// separately decomposes the output exactly.
struct SceneSir {
  double in_db;
  double out_db;
};

double filtered_image_power(const ivex::ExtractResult& res, const Eigen::MatrixXd& image,
                            const ivex::ExtractOptions& opts) {
  const auto blocks = ivex::stft_blocks(image.topRows(opts.mics), opts.stft);
  double power = 0.0;
  for (std::size_t j = 0; j < res.processed_bins.size(); ++j) {
    const auto& block = blocks[static_cast<std::size_t>(res.processed_bins[j])];
    power += std::norm(res.a[j](opts.ref_channel)) * (res.w[j].adjoint() * block).squaredNorm();
  }
  return power;
}

SceneSir scene_sir(const ivex_tests::Scene& scene, const ivex::PilotSignal& pilot,
                   const ivex::ExtractOptions& opts, const Eigen::MatrixXd& target_img,
                   const Eigen::MatrixXd& interf_img) {
  const ivex::ExtractResult res = ivex::extract_speaker(scene.mix, pilot, opts);
  const double out_t = filtered_image_power(res, target_img, opts);
  const double out_i = filtered_image_power(res, interf_img, opts);
  const double in_t = target_img.row(opts.ref_channel).squaredNorm();
  const double in_i = interf_img.row(opts.ref_channel).squaredNorm();
  return {ivex::power_ratio_db(in_t, in_i), ivex::power_ratio_db(out_t, out_i)};
}

}  // namespace

TEST_CASE("pilot construction from dominance") {
  Eigen::VectorXd energy(4);
  energy << 1.0, 2.0, 3.0, 4.0;

  SECTION("all dominant copies the energy") {
    const auto pilot = ivex::pilot_from_dominance({1, 1, 1, 1}, energy);
    CHECK(pilot.r == energy);
  }

  SECTION("none dominant gives a zero pilot that the extractor rejects") {
    const auto pilot = ivex::pilot_from_dominance({0, 0, 0, 0}, energy);
    CHECK(pilot.r.maxCoeff() == 0.0);
    ivex::Rng rng(100);
    Eigen::MatrixXd wave(4, 4000);
    for (int c = 0; c < 4; ++c) {
      for (int t = 0; t < 4000; ++t) wave(c, t) = rng.gaussian();
    }
    ivex::ExtractOptions opts;
    ivex::PilotSignal zero;
    zero.r = Eigen::VectorXd::Zero(ivex::stft_frames(4000, opts.stft));
    CHECK_THROWS_AS(ivex::extract_speaker(wave, zero, opts), ivex::degenerate_weights_error);
  }

  SECTION("length mismatch is rejected") {
    CHECK_THROWS_AS(ivex::pilot_from_dominance({1, 0}, energy), ivex::invalid_input_error);
  }
}

TEST_CASE("oracle dominance pilot tracks target activity") {
  ivex::Rng rng(101);
  auto scene = ivex_tests::make_scene(rng, 0.2, kFs, 2.5);
  ivex::StftConfig cfg;
  const auto dom = ivex::oracle_dominance({scene.img1.row(0), scene.img2.row(0)}, 0, cfg);
  const Eigen::VectorXd mix_energy = ivex::frame_energies(scene.mix.row(0), cfg);
  const auto pilot = ivex::pilot_from_dominance(dom, mix_energy);
  const Eigen::VectorXd target_energy = ivex::frame_energies(scene.img1.row(0), cfg);
  CHECK(ivex_tests::corr_abs_real(pilot.r, target_energy) > 0.5);
}

TEST_CASE("pilot csv round trip") {
  ivex::PilotSignal p;
  p.r = Eigen::VectorXd::LinSpaced(5, 0.0, 2.0);
  const std::string path = "/tmp/ivex_pilot_test.csv";
  ivex::write_pilot_csv(path, p);
  const auto back = ivex::read_pilot_csv(path);
  CHECK((back.r - p.r).cwiseAbs().maxCoeff() < 1e-12);
  std::remove(path.c_str());
}

TEST_CASE("single strong source with a point interferer improves by more than 15 dB") {
  ivex::Rng rng(102);
  // mild reverb, interferer 20 dB below the target
  auto scene = ivex_tests::make_scene(rng, 0.12, kFs, 2.5);
  scene.img2 *= 0.1;
  scene.mix = scene.img1 + scene.img2;
  ivex::StftConfig cfg;
  const auto dom = ivex::oracle_dominance({scene.img1.row(0), scene.img2.row(0)}, 0, cfg);
  const auto pilot =
      ivex::pilot_from_dominance(dom, ivex::frame_energies(scene.mix.row(0), cfg));
  ivex::ExtractOptions opts;
  const auto sir = scene_sir(scene, pilot, opts, scene.img1, scene.img2);
  CHECK(sir.out_db - sir.in_db > 15.0);
}

TEST_CASE("two-speaker reverberant scenes improve and steer correctly") {
  int improved = 0, steered = 0;
  const int scenes = 3;
  for (int s = 0; s < scenes; ++s) {
    ivex::Rng rng(ivex::hash_seed(103, static_cast<std::uint64_t>(s)));
    auto scene = ivex_tests::make_scene(rng, 0.2, kFs, 2.5);
    ivex::StftConfig cfg;
    const Eigen::VectorXd mix_energy = ivex::frame_energies(scene.mix.row(0), cfg);
    const auto dom1 = ivex::oracle_dominance({scene.img1.row(0), scene.img2.row(0)}, 0, cfg);
    const auto pilot1 = ivex::pilot_from_dominance(dom1, mix_energy);
    ivex::ExtractOptions opts;
    const auto sir = scene_sir(scene, pilot1, opts, scene.img1, scene.img2);
    if (sir.out_db - sir.in_db > 5.0) improved++;

    // steering: pilot for speaker 2 must extract speaker 2
    const auto dom2 = ivex::oracle_dominance({scene.img1.row(0), scene.img2.row(0)}, 1, cfg);
    const auto pilot2 = ivex::pilot_from_dominance(dom2, mix_energy);
    const auto sir2 = scene_sir(scene, pilot2, opts, scene.img2, scene.img1);
    if (sir2.out_db > 0.0) steered++;
  }
  CHECK(improved == scenes);
  CHECK(steered == scenes);
}

TEST_CASE("joint processing keeps bins coherent compared to per-bin blind runs") {
  ivex::Rng rng(104);
  auto scene = ivex_tests::make_scene(rng, 0.15, kFs, 2.0);
  ivex::StftConfig cfg;
  const auto dom = ivex::oracle_dominance({scene.img1.row(0), scene.img2.row(0)}, 0, cfg);
  const auto pilot = ivex::pilot_from_dominance(dom, ivex::frame_energies(scene.mix.row(0), cfg));
  ivex::ExtractOptions opts;
  const auto joint = ivex::extract_speaker(scene.mix, pilot, opts);

  // independent blind per-bin runs on the same data
  auto blocks = ivex::stft_blocks(scene.mix.topRows(opts.mics), cfg);
  Eigen::VectorXd emphasis = pilot.r.array().square();
  std::vector<int> bins;
  for (int k = 60; k < 220; k += 10) bins.push_back(k);
  MatC joint_env(static_cast<Eigen::Index>(bins.size()), blocks[0].cols());
  MatC blind_env(static_cast<Eigen::Index>(bins.size()), blocks[0].cols());
  ivex::ExtractionConfig bcfg;
  bcfg.mode = ivex::ExtractionMode::blind;
  for (std::size_t i = 0; i < bins.size(); ++i) {
    const int k = bins[i];
    auto single = ivex::MixtureTensor::from_single(blocks[static_cast<std::size_t>(k)]);
    const VecC a0 = [&] {
      Eigen::SelfAdjointEigenSolver<MatC> eig(
          ivex::weighted_covariance(blocks[static_cast<std::size_t>(k)], emphasis));
      return VecC(eig.eigenvectors().col(opts.mics - 1));
    }();
    const auto res = ivex::run_extraction(single, nullptr, bcfg, {a0});
    blind_env.row(static_cast<Eigen::Index>(i)) = res.shat.row(0).cwiseAbs();
  }
  // joint envelopes from the pipeline's own processed bins
  const auto spectra = ivex::stft_blocks(joint.image.topRows(opts.mics), cfg);
  for (std::size_t i = 0; i < bins.size(); ++i) {
    joint_env.row(static_cast<Eigen::Index>(i)) =
        spectra[static_cast<std::size_t>(bins[i])].row(0).cwiseAbs();
  }
  auto median_pairwise = [](const MatC& env) {
    std::vector<double> cors;
    for (Eigen::Index i = 0; i < env.rows(); ++i) {
      for (Eigen::Index j = i + 1; j < env.rows(); ++j) {
        Eigen::VectorXd a = env.row(i).real();
        Eigen::VectorXd b = env.row(j).real();
        a.array() -= a.mean();
        b.array() -= b.mean();
        cors.push_back(a.dot(b) / (a.norm() * b.norm()));
      }
    }
    std::sort(cors.begin(), cors.end());
    return cors[cors.size() / 2];
  };
  CHECK(median_pairwise(joint_env) > median_pairwise(blind_env));
}

TEST_CASE("bss evaluation limits") {
  ivex::Rng rng(105);
  const int t = 16000;
  Eigen::VectorXd ref1(t), ref2(t);
  for (int i = 0; i < t; ++i) {
    ref1(i) = rng.gaussian();
    ref2(i) = rng.gaussian();
  }

  SECTION("estimate equal to the reference caps both scores") {
    const auto scores = ivex::evaluate_bss({ref1, ref2}, ref1, 0, 64);
    CHECK(scores.sir_db == ivex::kSirCapDb);
    CHECK(scores.sdr_db > 100.0);
  }

  SECTION("estimate equal to the interferer is strongly negative") {
    const auto scores = ivex::evaluate_bss({ref1, ref2}, ref2, 0, 64);
    CHECK(scores.sir_db <= -20.0);
  }

  SECTION("equal-power additive noise lands near 0 dB SDR") {
    Eigen::VectorXd noise(t);
    for (int i = 0; i < t; ++i) noise(i) = rng.gaussian();
    noise *= ref1.norm() / noise.norm();
    const auto scores = ivex::evaluate_bss({ref1, ref2}, (ref1 + noise).eval(), 0, 64);
    CHECK(std::abs(scores.sdr_db) < 1.0);
  }

  SECTION("zero-energy reference is rejected") {
    CHECK_THROWS_AS(ivex::evaluate_bss({Eigen::VectorXd::Zero(t), ref2}, ref1, 0, 64),
                    ivex::invalid_input_error);
  }

  SECTION("length mismatch is rejected") {
    CHECK_THROWS_AS(ivex::evaluate_bss({ref1.head(100).eval(), ref2}, ref1, 0, 64),
                    ivex::invalid_input_error);
  }
}

TEST_CASE("bss evaluation allows a short distortion filter") {
  ivex::Rng rng(106);
  const int t = 16000;
  Eigen::VectorXd ref1(t), ref2(t);
  for (int i = 0; i < t; ++i) {
    ref1(i) = rng.gaussian();
    ref2(i) = rng.gaussian();
  }
  // a delayed, scaled copy of the target is still "target"
  Eigen::VectorXd est = Eigen::VectorXd::Zero(t);
  for (int i = 7; i < t; ++i) est(i) = 0.8 * ref1(i - 7);
  const auto scores = ivex::evaluate_bss({ref1, ref2}, est, 0, 64);
  CHECK(scores.sir_db > 60.0);
  CHECK(scores.sdr_db > 60.0);
}

TEST_CASE("extract rejects pilots with the wrong frame count") {
  ivex::Rng rng(107);
  Eigen::MatrixXd wave(4, 4000);
  for (int c = 0; c < 4; ++c) {
    for (int t = 0; t < 4000; ++t) wave(c, t) = rng.gaussian();
  }
  ivex::ExtractOptions opts;
  ivex::PilotSignal bad;
  bad.r = Eigen::VectorXd::Ones(3);
  CHECK_THROWS_AS(ivex::extract_speaker(wave, bad, opts), ivex::invalid_input_error);
}
