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

#include "ivex/signal_model.hpp"

#include <catch2/catch_amalgamated.hpp>

#include "ivex/rng.hpp"
#include "support/oracles.hpp"

using ivex::cd;
using ivex::MatC;
using ivex::VecC;

namespace {

MatC random_block(ivex::Rng& rng, Eigen::Index d, Eigen::Index n) {
  MatC x(d, n);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) x(i, j) = rng.cgaussian();
  }
  return x;
}

}  // namespace

TEST_CASE("sample covariance of a single sample is the outer product") {
  MatC x(2, 1);
  x << cd(1, 0), cd(0, 0);
  const MatC c = ivex::sample_covariance(x);
  CHECK(c(0, 0) == cd(1, 0));
  CHECK(c(0, 1) == cd(0, 0));
  CHECK(c(1, 0) == cd(0, 0));
  CHECK(c(1, 1) == cd(0, 0));
}

TEST_CASE("sample covariance of [1;1] and [1;-1] is the identity") {
  MatC x(2, 2);
  x << cd(1, 0), cd(1, 0), cd(1, 0), cd(-1, 0);
  const MatC c = ivex::sample_covariance(x);
  CHECK((c - MatC::Identity(2, 2)).norm() == 0.0);
}

TEST_CASE("sample covariance approaches identity for large white blocks") {
  ivex::Rng rng(42);
  const MatC x = random_block(rng, 4, 10000);
  const MatC c = ivex::sample_covariance(x);
  CHECK((c - MatC::Identity(4, 4)).norm() < 0.2);
}

TEST_CASE("sample covariance rejects empty blocks") {
  CHECK_THROWS_AS(ivex::sample_covariance(MatC(2, 0)), ivex::invalid_input_error);
}

TEST_CASE("covariances are exactly Hermitian and PSD") {
  ivex::Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const MatC x = random_block(rng, 5, 64);
    Eigen::VectorXd w(64);
    for (int i = 0; i < 64; ++i) w(i) = rng.uniform() * 3.0;
    const MatC c = ivex::weighted_covariance(x, w);
    CHECK((c - c.adjoint()).cwiseAbs().maxCoeff() == 0.0);
    Eigen::SelfAdjointEigenSolver<MatC> eig(c, Eigen::EigenvaluesOnly);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10 * std::real(c.trace()));
  }
}

TEST_CASE("weight_signal implements the reciprocal power law") {
  MatC r(1, 3);
  r << cd(0, 0), cd(3, 0), cd(1, 0);
  auto side = ivex::SideInfo::make(r, false, ivex::WeightFn::reciprocal, 1e-3);
  CHECK(ivex::weight_signal(side, 0, 0) == Catch::Approx(1000.0));
  auto side2 = ivex::SideInfo::make(r, false, ivex::WeightFn::reciprocal, 1.0);
  CHECK(ivex::weight_signal(side2, 0, 1) == Catch::Approx(0.1));
}

TEST_CASE("side info rejects a zero epsilon") {
  MatC r(1, 2);
  r << cd(1, 0), cd(2, 0);
  CHECK_THROWS_AS(ivex::SideInfo::make(r, false, ivex::WeightFn::reciprocal, 0.0),
                  ivex::invalid_input_error);
}

TEST_CASE("default epsilon is relative with an absolute floor") {
  MatC r(1, 2);
  r << cd(2, 0), cd(2, 0);
  auto side = ivex::SideInfo::make(r);
  CHECK(side.epsilon() == Catch::Approx(1e-3 * 4.0));
  auto zero = ivex::SideInfo::make(MatC::Zero(1, 4));
  CHECK(zero.epsilon() == ivex::SideInfo::kEpsFloor);
  CHECK(zero.degenerate());
}

TEST_CASE("unit weights reproduce the sample covariance bitwise") {
  ivex::Rng rng(3);
  const MatC x = random_block(rng, 4, 77);
  const MatC c0 = ivex::sample_covariance(x);
  const MatC c1 = ivex::weighted_covariance(x, Eigen::VectorXd::Ones(77));
  REQUIRE(c0.rows() == c1.rows());
  for (Eigen::Index i = 0; i < c0.rows(); ++i) {
    for (Eigen::Index j = 0; j < c0.cols(); ++j) {
      CHECK(c0(i, j) == c1(i, j));
    }
  }
}

TEST_CASE("weighted covariance of one sample scales with the weight") {
  MatC x(2, 1);
  x << cd(1, 0), cd(0, 0);
  Eigen::VectorXd w(1);
  w << 2.0;
  const MatC c = ivex::weighted_covariance(x, w);
  CHECK(c(0, 0) == cd(2, 0));
  CHECK(c(1, 1) == cd(0, 0));
}

TEST_CASE("weighted covariance rejects bad weights") {
  ivex::Rng rng(4);
  const MatC x = random_block(rng, 3, 8);
  CHECK_THROWS_AS(ivex::weighted_covariance(x, Eigen::VectorXd::Zero(8)),
                  ivex::degenerate_weights_error);
  Eigen::VectorXd neg = Eigen::VectorXd::Ones(8);
  neg(2) = -0.5;
  CHECK_THROWS_AS(ivex::weighted_covariance(x, neg), ivex::invalid_input_error);
  CHECK_THROWS_AS(ivex::weighted_covariance(x, Eigen::VectorXd::Ones(5)),
                  ivex::invalid_input_error);
}

TEST_CASE("weights act linearly") {
  ivex::Rng rng(5);
  const MatC x = random_block(rng, 3, 50);
  Eigen::VectorXd w(50);
  for (int i = 0; i < 50; ++i) w(i) = 0.1 + rng.uniform();
  const MatC c1 = ivex::weighted_covariance(x, w);
  const MatC c3 = ivex::weighted_covariance(x, (3.0 * w).eval());
  CHECK((c3 - 3.0 * c1).norm() < 1e-14 * c1.norm());
}

TEST_CASE("SOI-aware weighting pulls the covariance toward the noise covariance") {
  // Strong bursty target plus unit background; weighting by the guide signal
  // should leave the weighted covariance closer (Frobenius) to the oracle
  // noise covariance than the raw observation covariance is.
  ivex::Rng rng(12);
  const int d = 4, n = 4000;
  const MatC y = random_block(rng, d, n);
  VecC a = rng.cgaussian_vector(d);
  MatC r(1, n);
  Eigen::RowVectorXcd s(n);
  for (int t = 0; t < n; ++t) {
    const bool active = rng.uniform() < 0.5;
    s(t) = active ? std::sqrt(1000.0) * rng.cgaussian() : cd(0, 0);
    r(0, t) = s(t);
  }
  MatC x = y;
  x += a * s;
  const MatC cx = ivex::sample_covariance(x);
  const MatC cy = ivex::sample_covariance(y);
  auto side = ivex::SideInfo::make(r);
  const MatC calpha = ivex::weighted_covariance(x, side.weights(0));
  CHECK((calpha - cy).norm() < (cx - cy).norm());
}

TEST_CASE("binary mask weighting keeps only quiet frames") {
  MatC r(1, 4);
  r << cd(0, 0), cd(5, 0), cd(0, 0), cd(2, 0);
  auto side = ivex::SideInfo::make(r, false, ivex::WeightFn::binary_mask);
  CHECK(side.weight(0, 0) == 1.0);
  CHECK(side.weight(0, 1) == 0.0);
  CHECK(side.weight(0, 2) == 1.0);
  CHECK(side.weight(0, 3) == 0.0);
}

TEST_CASE("mixture tensor validates shape and finiteness") {
  ivex::Rng rng(9);
  std::vector<MatC> blocks{random_block(rng, 3, 10), random_block(rng, 3, 10)};
  CHECK_NOTHROW(ivex::MixtureTensor(blocks));
  blocks[1] = random_block(rng, 3, 9);
  CHECK_THROWS_AS(ivex::MixtureTensor(blocks), ivex::invalid_input_error);
  blocks[1] = random_block(rng, 3, 10);
  blocks[0](1, 1) = cd(std::numeric_limits<double>::quiet_NaN(), 0);
  CHECK_THROWS_AS(ivex::MixtureTensor(blocks), ivex::invalid_input_error);
  CHECK_THROWS_AS(ivex::MixtureTensor(std::vector<MatC>{}), ivex::invalid_input_error);
}

TEST_CASE("mixing vector partition is exact") {
  ivex::Rng rng(10);
  const VecC a = rng.cgaussian_vector(5);
  ivex::MixingVector mv(a);
  CHECK(mv.gamma() == a(0));
  CHECK(mv.g() == a.tail(4));
  VecC recombined(5);
  recombined << mv.gamma(), mv.g();
  CHECK(recombined == a);
  CHECK_THROWS_AS(ivex::MixingVector(VecC::Zero(4)), ivex::invalid_input_error);
}

TEST_CASE("blocking matrix annihilates its mixing vector exactly") {
  ivex::Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const VecC a = rng.cgaussian_vector(2 + trial % 5);
    const MatC b = ivex::blocking_matrix(a);
    CHECK((b * a).cwiseAbs().maxCoeff() == 0.0);
    CHECK(b.rows() == a.size() - 1);
    CHECK(b.cols() == a.size());
  }
}

TEST_CASE("covariance set JSON round-trips exactly") {
  ivex::Rng rng(13);
  ivex::CovarianceSet set;
  for (int k = 0; k < 3; ++k) {
    const MatC x = random_block(rng, 4, 32);
    set.Cx.push_back(ivex::sample_covariance(x));
    Eigen::VectorXd w(32);
    for (int i = 0; i < 32; ++i) w(i) = rng.uniform() + 0.01;
    set.Calpha.push_back(ivex::weighted_covariance(x, w));
  }
  const auto j = ivex::to_json(set);
  const auto back = ivex::covariance_set_from_json(j);
  REQUIRE(back.Cx.size() == set.Cx.size());
  for (std::size_t k = 0; k < set.Cx.size(); ++k) {
    CHECK(back.Cx[k] == set.Cx[k]);
    CHECK(back.Calpha[k] == set.Calpha[k]);
  }
}

TEST_CASE("shared side info requires identical rows") {
  MatC r(2, 3);
  r << cd(1, 0), cd(2, 0), cd(3, 0), cd(1, 0), cd(2, 0), cd(3, 0);
  CHECK_NOTHROW(ivex::SideInfo::make(r, true));
  r(1, 2) = cd(4, 0);
  CHECK_THROWS_AS(ivex::SideInfo::make(r, true), ivex::invalid_input_error);
}
