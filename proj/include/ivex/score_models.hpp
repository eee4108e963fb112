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

#ifndef IVEX_SCORE_MODELS_HPP
#define IVEX_SCORE_MODELS_HPP

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ivex/linalg.hpp"
#include "ivex/signal_model.hpp"

namespace ivex {

// ---------------------------------------------------------------------------
// Score functions
//
// Wirtinger convention used throughout: for a real log-density log f(s, s*),
//
//   phi_k(s)      = -d log f / d s_k*          (conjugate cogradient)
//   dphi(s)       =  d phi_k / d s_k
//   dphi_conj(s)  =  d phi_k / d s_k*
//
// With this convention the Gaussian model log f = -sum |s_k|^2 has
// phi_k(s) = s_k, so on unit-variance data nu = E[s_k* phi_k] = 1 and
// rho = E[dphi_conj] = 0 exactly, which is the calibration the tests pin.
// The Newton denominator uses the other derivative: rho_step = E[dphi]*,
// the classical FastICA scalar E[g + |s|^2 g'] for radial scores.
// ---------------------------------------------------------------------------

/// Vector nonlinearity evaluated columnwise over a K x N normalized source
/// block, plus the model log-density for the contrast diagnostic.
struct ScoreFunction {
  std::string name;
  std::function<MatC(const MatC&)> phi;
  std::function<MatC(const MatC&)> dphi;
  std::function<MatC(const MatC&)> dphi_conj;
  std::function<Eigen::VectorXd(const MatC&)> log_f;
};

/// Radial family f = exp(-h(||s||^2)) with g == h'. phi_k = g(u) s_k where
/// u = ||s(n)||^2 across the K coupled components.
struct RadialProfile {
  std::function<double(double)> g;   // h'(u), must be >= 0
  std::function<double(double)> gp;  // g'(u)
  std::function<double(double)> h;   // integral of g, for log f
};

inline ScoreFunction make_radial_score(std::string name, RadialProfile p) {
  auto g = p.g;
  auto gp = p.gp;
  auto h = p.h;
  ScoreFunction s;
  s.name = std::move(name);
  s.phi = [g](const MatC& sb) {
    MatC out(sb.rows(), sb.cols());
    for (Eigen::Index n = 0; n < sb.cols(); ++n) {
      const double u = sb.col(n).squaredNorm();
      out.col(n) = sb.col(n) * g(u);
    }
    return out;
  };
  s.dphi = [g, gp](const MatC& sb) {
    MatC out(sb.rows(), sb.cols());
    for (Eigen::Index n = 0; n < sb.cols(); ++n) {
      const double u = sb.col(n).squaredNorm();
      const double gv = g(u), gpv = gp(u);
      for (Eigen::Index k = 0; k < sb.rows(); ++k) {
        out(k, n) = gv + std::norm(sb(k, n)) * gpv;
      }
    }
    return out;
  };
  s.dphi_conj = [g, gp](const MatC& sb) {
    MatC out(sb.rows(), sb.cols());
    for (Eigen::Index n = 0; n < sb.cols(); ++n) {
      const double u = sb.col(n).squaredNorm();
      const double gpv = gp(u);
      for (Eigen::Index k = 0; k < sb.rows(); ++k) {
        out(k, n) = sb(k, n) * sb(k, n) * gpv;
      }
    }
    return out;
  };
  s.log_f = [h](const MatC& sb) {
    Eigen::VectorXd out(sb.cols());
    for (Eigen::Index n = 0; n < sb.cols(); ++n) {
      out(n) = -h(sb.col(n).squaredNorm());
    }
    return out;
  };
  return s;
}

/// Default smoothed-norm model: log f = -2 sqrt(eps + ||s||^2), i.e.
/// phi_k = s_k / sqrt(eps + ||s||^2). For K = 1 this is the classic
/// s / sqrt(eps + |s|^2) nonlinearity; bounded, with well-defined step stats.
inline ScoreFunction make_norm_smooth_score(double eps_phi = 1e-6) {
  RadialProfile p;
  p.g = [eps_phi](double u) { return 1.0 / std::sqrt(eps_phi + u); };
  p.gp = [eps_phi](double u) { return -0.5 * std::pow(eps_phi + u, -1.5); };
  p.h = [eps_phi](double u) { return 2.0 * std::sqrt(eps_phi + u); };
  return make_radial_score("norm-smooth", std::move(p));
}

/// Gaussian model, phi_k(s) = s_k. Carries no higher-order information: the
/// step statistics degenerate (nu == rho_step), so extraction with it trips
/// the step guard. Kept for calibration and testing.
inline ScoreFunction make_gauss_score() {
  RadialProfile p;
  p.g = [](double) { return 1.0; };
  p.gp = [](double) { return 0.0; };
  p.h = [](double u) { return u; };
  return make_radial_score("gauss", std::move(p));
}

/// Radial profile tabulated on u-knots with linear interpolation; h is the
/// running trapezoid integral of g. Knots must be strictly increasing.
inline ScoreFunction make_table_score(std::vector<double> u_knots, std::vector<double> g_vals) {
  if (u_knots.size() != g_vals.size() || u_knots.size() < 2) {
    throw invalid_input_error("table score: need >= 2 matching knots");
  }
  for (std::size_t i = 0; i + 1 < u_knots.size(); ++i) {
    if (!(u_knots[i] < u_knots[i + 1])) {
      throw invalid_input_error("table score: knots must be strictly increasing");
    }
  }
  for (double g : g_vals) {
    if (!(g >= 0.0)) throw invalid_input_error("table score: g must be nonnegative");
  }
  std::vector<double> h_vals(u_knots.size(), 0.0);
  for (std::size_t i = 1; i < u_knots.size(); ++i) {
    h_vals[i] = h_vals[i - 1] + 0.5 * (g_vals[i] + g_vals[i - 1]) * (u_knots[i] - u_knots[i - 1]);
  }
  auto locate = [u_knots](double u) -> std::size_t {
    if (u <= u_knots.front()) return 0;
    if (u >= u_knots[u_knots.size() - 2]) return u_knots.size() - 2;
    return static_cast<std::size_t>(
               std::upper_bound(u_knots.begin(), u_knots.end(), u) - u_knots.begin()) - 1;
  };
  RadialProfile p;
  p.g = [u_knots, g_vals, locate](double u) {
    const std::size_t i = locate(u);
    const double uc = std::clamp(u, u_knots.front(), u_knots.back());
    const double t = (uc - u_knots[i]) / (u_knots[i + 1] - u_knots[i]);
    return g_vals[i] + t * (g_vals[i + 1] - g_vals[i]);
  };
  p.gp = [u_knots, g_vals, locate](double u) {
    if (u < u_knots.front() || u > u_knots.back()) return 0.0;
    const std::size_t i = locate(u);
    return (g_vals[i + 1] - g_vals[i]) / (u_knots[i + 1] - u_knots[i]);
  };
  p.h = [u_knots, g_vals, h_vals, locate](double u) {
    if (u <= u_knots.front()) return h_vals.front() + g_vals.front() * (u - u_knots.front());
    if (u >= u_knots.back()) return h_vals.back() + g_vals.back() * (u - u_knots.back());
    const std::size_t i = locate(u);
    const double du = u - u_knots[i];
    const double gu = g_vals[i] + (g_vals[i + 1] - g_vals[i]) / (u_knots[i + 1] - u_knots[i]) * du;
    return h_vals[i] + 0.5 * (g_vals[i] + gu) * du;
  };
  return make_radial_score("custom-table", std::move(p));
}

/// Registry behind the CLI --score flag.
inline ScoreFunction make_score(const std::string& name, double eps_phi = 1e-6,
                                const std::vector<double>& table_u = {},
                                const std::vector<double>& table_g = {}) {
  if (name == "norm-smooth") return make_norm_smooth_score(eps_phi);
  if (name == "gauss") return make_gauss_score();
  if (name == "custom-table") return make_table_score(table_u, table_g);
  throw invalid_input_error("unknown score function: " + name);
}

// ---------------------------------------------------------------------------
// Normalized source block and per-mixture scalar statistics
// ---------------------------------------------------------------------------

/// sbar(k, n) = s_k(n) / sigma_k with sigma_k = sqrt(w^H Cx w). Rows have unit
/// sample second moment when built from a consistent (w, Cx) pair.
struct NormalizedSourceVector {
  MatC sbar;             // K x N
  Eigen::VectorXd sigma; // K

  static NormalizedSourceVector build(const MixtureTensor& x, const std::vector<VecC>& w,
                                      const std::vector<MatC>& c_x) {
    const int K = x.K();
    if (static_cast<int>(w.size()) != K || static_cast<int>(c_x.size()) != K) {
      throw invalid_input_error("NormalizedSourceVector: per-mixture inputs disagree on K");
    }
    NormalizedSourceVector out;
    out.sbar.resize(K, x.samples());
    out.sigma.resize(K);
    for (int k = 0; k < K; ++k) {
      const double s2 = quad_form_real(c_x[static_cast<std::size_t>(k)], w[static_cast<std::size_t>(k)]);
      if (!(s2 > 0.0) || !std::isfinite(s2)) {
        throw degenerate_filter_error("NormalizedSourceVector: zero output power");
      }
      out.sigma(k) = std::sqrt(s2);
      out.sbar.row(k) = (w[static_cast<std::size_t>(k)].adjoint() * x.block(k)) / out.sigma(k);
    }
    return out;
  }
};

/// Per-mixture scalars of one iteration.
///
/// nu       = E[sbar_k* phi_k(sbar)]      (== 1 for the Gaussian score)
/// rho      = E[dphi_conj_k(sbar)]        (== 0 for the Gaussian score)
/// rho_step = E[dphi_k(sbar)]*            (Newton denominator statistic)
///
/// The update rule divides by Re(nu) - Re(rho_step); both are real for
/// radial scores up to sampling noise. rho is the Wirtinger-conjugate
/// derivative mean the score certification pins; it is reported alongside.
struct ScalarStats {
  VecC nu;
  VecC rho;
  VecC rho_step;
  Eigen::VectorXd sigma2;
  Eigen::VectorXd sigma2_alpha;

  double nu_r(int k) const { return nu(k).real(); }
  double rho_step_r(int k) const { return rho_step(k).real(); }
};

namespace detail {

struct ScoreMoments {
  VecC nu, rho, rho_step;
  MatC phi;  // K x N, kept for the data moment
};

inline ScoreMoments score_moments(const MatC& sbar, const ScoreFunction& score) {
  ScoreMoments m;
  m.phi = score.phi(sbar);
  const MatC dphi = score.dphi(sbar);
  const MatC dphic = score.dphi_conj(sbar);
  const auto N = static_cast<double>(sbar.cols());
  const int K = static_cast<int>(sbar.rows());
  m.nu.resize(K);
  m.rho.resize(K);
  m.rho_step.resize(K);
  for (int k = 0; k < K; ++k) {
    m.nu(k) = (sbar.row(k).conjugate().cwiseProduct(m.phi.row(k))).sum() / N;
    m.rho(k) = dphic.row(k).sum() / N;
    m.rho_step(k) = std::conj(dphi.row(k).sum() / N);
    if (!std::isfinite(m.nu(k).real()) || !std::isfinite(m.nu(k).imag()) ||
        !std::isfinite(m.rho(k).real()) || !std::isfinite(m.rho_step(k).real())) {
      throw numerical_failure_error("score statistics non-finite", k);
    }
  }
  return m;
}

}  // namespace detail

/// Assembles the full scalar-statistics record from a normalized block and
/// the per-mixture filters/covariances of the current iteration.
inline ScalarStats scalar_stats(const NormalizedSourceVector& nsv, const ScoreFunction& score,
                                const std::vector<VecC>& w_alpha, const std::vector<MatC>& c_x,
                                const std::vector<MatC>& c_alpha) {
  const int K = static_cast<int>(nsv.sbar.rows());
  auto m = detail::score_moments(nsv.sbar, score);
  ScalarStats st;
  st.nu = std::move(m.nu);
  st.rho = std::move(m.rho);
  st.rho_step = std::move(m.rho_step);
  st.sigma2.resize(K);
  st.sigma2_alpha.resize(K);
  for (int k = 0; k < K; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    st.sigma2(k) = nsv.sigma(k) * nsv.sigma(k);
    st.sigma2_alpha(k) = quad_form_real(c_alpha[ku], w_alpha[ku]);
    if (!(st.sigma2(k) > 0.0) || !(st.sigma2_alpha(k) > 0.0)) {
      throw numerical_failure_error("nonpositive output power", k);
    }
  }
  return st;
}

// ---------------------------------------------------------------------------
// Contrast diagnostic
// ---------------------------------------------------------------------------

/// Quasi-likelihood contrast, additive constant dropped:
///
///   mean log f(sbar) - sum_k log sigma_k^2
///   - sum_k mean z^H Cz^-1 z + (d-2) sum_k log |gamma_k|^2
///
/// Cz is supplied by the caller; with Cz re-estimated from the current
/// blocked background the third term collapses to -(K)(d-1). Diagnostic only;
/// the extractor never steps on it.
inline double contrast(const MixtureTensor& x, const std::vector<VecC>& a,
                       const std::vector<VecC>& w, const ScoreFunction& score,
                       const std::vector<MatC>& c_x, const std::vector<MatC>& c_z) {
  const int K = x.K();
  const auto d = static_cast<double>(x.channels());
  if (static_cast<int>(a.size()) != K || static_cast<int>(w.size()) != K ||
      static_cast<int>(c_x.size()) != K || static_cast<int>(c_z.size()) != K) {
    throw invalid_input_error("contrast: per-mixture inputs disagree on K");
  }
  auto nsv = NormalizedSourceVector::build(x, w, c_x);
  double value = score.log_f(nsv.sbar).mean();
  for (int k = 0; k < K; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    value -= 2.0 * std::log(nsv.sigma(k));
    const MatC b = blocking_matrix(a[ku]);
    const MatC z = b * x.block(k);
    HermitianSolver sz(c_z[ku], "background covariance");
    value -= (z.conjugate().cwiseProduct(sz.solve(z))).sum().real() / static_cast<double>(z.cols());
    value += (d - 2.0) * std::log(std::norm(a[ku](0)));
  }
  return value;
}

/// Sample covariance of the blocked background for the current mixing vector;
/// the usual Cz argument for contrast().
inline MatC background_covariance(const MatC& x_block, const VecC& a) {
  return sample_covariance(blocking_matrix(a) * x_block);
}

}  // namespace ivex

#endif  // IVEX_SCORE_MODELS_HPP
