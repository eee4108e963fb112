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

#ifndef IVEX_SIGNAL_MODEL_HPP
#define IVEX_SIGNAL_MODEL_HPP

#include <algorithm>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ivex/errors.hpp"
#include "ivex/linalg.hpp"

namespace ivex {

// ---------------------------------------------------------------------------
// Observation model containers
// ---------------------------------------------------------------------------

/// K mixtures of d-channel complex observations, N samples each.
/// Mixture k is a d x N block; in the frequency-domain pipeline k indexes the
/// STFT bin and n the frame.
class MixtureTensor {
 public:
  MixtureTensor() = default;

  explicit MixtureTensor(std::vector<MatC> blocks) : blocks_(std::move(blocks)) {
    validate();
  }

  static MixtureTensor from_single(MatC block) {
    std::vector<MatC> b;
    b.push_back(std::move(block));
    return MixtureTensor(std::move(b));
  }

  int K() const { return static_cast<int>(blocks_.size()); }
  Eigen::Index channels() const { return blocks_.empty() ? 0 : blocks_[0].rows(); }
  Eigen::Index samples() const { return blocks_.empty() ? 0 : blocks_[0].cols(); }

  const MatC& block(int k) const { return blocks_[static_cast<std::size_t>(k)]; }
  const std::vector<MatC>& blocks() const { return blocks_; }

  MixtureTensor single(int k) const { return MixtureTensor::from_single(block(k)); }

 private:
  void validate() const {
    if (blocks_.empty()) throw invalid_input_error("MixtureTensor: no mixtures");
    const Eigen::Index d = blocks_[0].rows();
    const Eigen::Index n = blocks_[0].cols();
    if (d < 2) throw invalid_input_error("MixtureTensor: needs at least 2 channels");
    if (n < 1) throw invalid_input_error("MixtureTensor: empty sample block");
    for (const auto& b : blocks_) {
      if (b.rows() != d || b.cols() != n) {
        throw invalid_input_error("MixtureTensor: mixtures disagree on shape");
      }
      if (!b.allFinite()) throw invalid_input_error("MixtureTensor: non-finite sample");
    }
  }

  std::vector<MatC> blocks_;
};

/// Mixing vector with its [gamma; g] partition.
struct MixingVector {
  VecC a;

  MixingVector() = default;
  explicit MixingVector(VecC v) : a(std::move(v)) {
    if (a.size() < 2 || a.norm() == 0.0) {
      throw invalid_input_error("MixingVector: need a nonzero vector of dimension >= 2");
    }
  }

  cd gamma() const { return a(0); }
  VecC g() const { return a.tail(a.size() - 1); }
};

struct SeparatingVector {
  VecC w;

  SeparatingVector() = default;
  explicit SeparatingVector(VecC v) : w(std::move(v)) {
    if (w.size() < 1 || w.norm() == 0.0) {
      throw invalid_input_error("SeparatingVector: need a nonzero vector");
    }
  }
};

/// (d-1) x d matrix B = [g  -gamma*I] annihilating a: B a == 0 exactly.
inline MatC blocking_matrix(const VecC& a) {
  const Eigen::Index d = a.size();
  if (d < 2) throw invalid_input_error("blocking_matrix: dimension must be >= 2");
  MatC b = MatC::Zero(d - 1, d);
  b.col(0) = a.tail(d - 1);
  b.rightCols(d - 1).diagonal().setConstant(-a(0));
  return b;
}

// ---------------------------------------------------------------------------
// Side information and weighting
// ---------------------------------------------------------------------------

enum class WeightFn {
  reciprocal,   // 1 / (eps + |r|^2); default
  binary_mask,  // 1 where |r|^2 <= eps, else 0
  identity,     // 1 everywhere (disables the weighting)
};

inline const char* to_string(WeightFn f) {
  switch (f) {
    case WeightFn::reciprocal: return "reciprocal";
    case WeightFn::binary_mask: return "binary-mask";
    case WeightFn::identity: return "identity";
  }
  return "?";
}

inline WeightFn weight_fn_from_string(const std::string& s) {
  if (s == "reciprocal") return WeightFn::reciprocal;
  if (s == "binary-mask") return WeightFn::binary_mask;
  if (s == "identity") return WeightFn::identity;
  throw invalid_input_error("unknown weight function: " + s);
}

/// Scalar guide signals r_k(n) plus the weighting function turning them into
/// per-sample covariance weights.
///
/// epsilon defaults to 1e-3 * mean|r|^2 with an absolute floor of 1e-9; the
/// relative choice keeps the reciprocal weighting scale-free. An explicit
/// epsilon must be positive.
class SideInfo {
 public:
  static constexpr double kEpsRel = 1e-3;
  static constexpr double kEpsFloor = 1e-9;

  static SideInfo make(MatC r, bool shared = false, WeightFn fn = WeightFn::reciprocal,
                       std::optional<double> epsilon = std::nullopt) {
    SideInfo s;
    if (r.rows() < 1 || r.cols() < 1) throw invalid_input_error("SideInfo: empty guide signal");
    if (!r.allFinite()) throw invalid_input_error("SideInfo: non-finite guide signal");
    if (shared) {
      for (Eigen::Index k = 1; k < r.rows(); ++k) {
        if (r.row(k) != r.row(0)) {
          throw invalid_input_error("SideInfo: shared mode requires identical rows");
        }
      }
    }
    if (epsilon) {
      if (!(*epsilon > 0.0)) throw invalid_input_error("SideInfo: epsilon must be > 0");
      s.epsilon_ = *epsilon;
    } else {
      const double mean_pow = r.cwiseAbs2().mean();
      s.epsilon_ = std::max(kEpsRel * mean_pow, kEpsFloor);
    }
    s.r_ = std::move(r);
    s.shared_ = shared;
    s.fn_ = fn;
    return s;
  }

  /// Broadcasts one scalar signal to all K mixtures (shared mode).
  static SideInfo make_shared(const Eigen::VectorXd& r, int K, WeightFn fn = WeightFn::reciprocal,
                              std::optional<double> epsilon = std::nullopt) {
    MatC m(K, r.size());
    for (int k = 0; k < K; ++k) m.row(k) = r.transpose().cast<cd>();
    return make(std::move(m), true, fn, epsilon);
  }

  int K() const { return static_cast<int>(r_.rows()); }
  Eigen::Index samples() const { return r_.cols(); }
  bool shared() const { return shared_; }
  double epsilon() const { return epsilon_; }
  WeightFn weight_fn() const { return fn_; }
  const MatC& r() const { return r_; }

  double weight(int k, Eigen::Index n) const {
    return apply(std::norm(r_(k, n)));
  }

  Eigen::VectorXd weights(int k) const {
    Eigen::VectorXd w(r_.cols());
    for (Eigen::Index n = 0; n < r_.cols(); ++n) w(n) = weight(k, n);
    return w;
  }

  /// True when the guide signal is identically zero, i.e. carries nothing.
  bool degenerate() const { return r_.cwiseAbs().maxCoeff() == 0.0; }

 private:
  double apply(double r_pow) const {
    switch (fn_) {
      case WeightFn::reciprocal: return 1.0 / (epsilon_ + r_pow);
      case WeightFn::binary_mask: return r_pow <= epsilon_ ? 1.0 : 0.0;
      case WeightFn::identity: return 1.0;
    }
    return 1.0;
  }

  MatC r_;
  bool shared_ = false;
  double epsilon_ = kEpsFloor;
  WeightFn fn_ = WeightFn::reciprocal;
};

/// alpha(r_k(n)) for the side info's configured weighting function.
inline double weight_signal(const SideInfo& side, int k, Eigen::Index n) {
  return side.weight(k, n);
}

// ---------------------------------------------------------------------------
// Covariance estimation
// ---------------------------------------------------------------------------

namespace detail {

// Single accumulation path for both estimators. With weights == nullptr the
// multiplications are by exactly 1.0, so the unweighted result is bitwise
// identical to weighted_covariance with unit weights.
inline MatC cov_accumulate(const MatC& x, const double* weights) {
  const Eigen::Index d = x.rows();
  const Eigen::Index n = x.cols();
  MatC acc = MatC::Zero(d, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = weights ? weights[i] : 1.0;
    acc.selfadjointView<Eigen::Lower>().rankUpdate(x.col(i), w);
  }
  acc /= static_cast<double>(n);
  acc.triangularView<Eigen::StrictlyUpper>() = acc.adjoint();
  hermitize(acc);
  return acc;
}

}  // namespace detail

/// (1/N) sum_n x(n) x(n)^H, exactly Hermitian on output.
inline MatC sample_covariance(const MatC& x_block) {
  if (x_block.cols() < 1 || x_block.rows() < 1) {
    throw invalid_input_error("sample_covariance: empty block");
  }
  return detail::cov_accumulate(x_block, nullptr);
}

/// (1/N) sum_n alpha_n x(n) x(n)^H. The 1/N normalization (not 1/sum alpha)
/// makes alpha == 1 reproduce sample_covariance exactly; the beamformer
/// constraints are scale-invariant in the covariance, so the choice does not
/// affect downstream filters.
inline MatC weighted_covariance(const MatC& x_block, const Eigen::VectorXd& weights) {
  if (x_block.cols() < 1 || x_block.rows() < 1) {
    throw invalid_input_error("weighted_covariance: empty block");
  }
  if (weights.size() != x_block.cols()) {
    throw invalid_input_error("weighted_covariance: weight count mismatch");
  }
  if ((weights.array() < 0.0).any()) {
    throw invalid_input_error("weighted_covariance: negative weight");
  }
  if (weights.maxCoeff() == 0.0) {
    throw degenerate_weights_error("weighted_covariance: all weights are zero");
  }
  return detail::cov_accumulate(x_block, weights.data());
}

// ---------------------------------------------------------------------------
// Covariance sets and their JSON container (used by the CLI cache)
// ---------------------------------------------------------------------------

struct CovarianceSet {
  std::vector<MatC> Cx;
  std::vector<MatC> Calpha;
  double loading = kLoadingRel;
};

namespace detail {

inline nlohmann::json matrix_to_json(const MatC& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      row.push_back({m(i, j).real(), m(i, j).imag()});
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline MatC matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw invalid_input_error("covariance JSON: bad matrix");
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = static_cast<Eigen::Index>(j[0].size());
  MatC m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index jj = 0; jj < cols; ++jj) {
      const auto& c = j[static_cast<std::size_t>(i)][static_cast<std::size_t>(jj)];
      m(i, jj) = cd(c.at(0).get<double>(), c.at(1).get<double>());
    }
  }
  return m;
}

}  // namespace detail

inline nlohmann::json to_json(const CovarianceSet& set) {
  nlohmann::json j;
  j["K"] = set.Cx.size();
  j["d"] = set.Cx.empty() ? 0 : set.Cx[0].rows();
  j["loading"] = set.loading;
  j["Cx"] = nlohmann::json::array();
  j["Calpha"] = nlohmann::json::array();
  for (const auto& m : set.Cx) j["Cx"].push_back(detail::matrix_to_json(m));
  for (const auto& m : set.Calpha) j["Calpha"].push_back(detail::matrix_to_json(m));
  return j;
}

inline CovarianceSet covariance_set_from_json(const nlohmann::json& j) {
  CovarianceSet set;
  set.loading = j.value("loading", kLoadingRel);
  for (const auto& m : j.at("Cx")) set.Cx.push_back(detail::matrix_from_json(m));
  for (const auto& m : j.at("Calpha")) set.Calpha.push_back(detail::matrix_from_json(m));
  if (set.Cx.size() != set.Calpha.size()) {
    throw invalid_input_error("covariance JSON: Cx/Calpha count mismatch");
  }
  return set;
}

}  // namespace ivex

#endif  // IVEX_SIGNAL_MODEL_HPP
