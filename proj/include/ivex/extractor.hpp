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

#ifndef IVEX_EXTRACTOR_HPP
#define IVEX_EXTRACTOR_HPP

#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ivex/beamformers.hpp"
#include "ivex/rng.hpp"
#include "ivex/score_models.hpp"
#include "ivex/signal_model.hpp"

namespace ivex {

enum class ExtractionMode { blind, informed };

inline const char* to_string(ExtractionMode m) {
  return m == ExtractionMode::blind ? "blind" : "informed";
}

struct ExtractionConfig {
  int max_iters = 100;
  double conv_tol = 1e-6;    // on phase-invariant direction change of a
  double step_guard = 1e-8;  // minimum |nu - rho_step| (and |nu|)
  ExtractionMode mode = ExtractionMode::informed;
  std::string score = "norm-smooth";
  double eps_phi = 1e-6;
  std::uint64_t seed = 0;  // only used when no a_init is supplied
  // Multiplies the step by sigma2_alpha/sigma2 (the collapsed-Hessian scale
  // correction). Off switch exists for ablation only.
  bool power_ratio_factor = true;
  // One bounded retry with half the step when the update residual grows 10x.
  bool damping = true;
  bool trace_contrast = false;

  void validate() const {
    if (max_iters < 1) throw invalid_input_error("ExtractionConfig: max_iters must be >= 1");
    if (!(conv_tol > 0.0)) throw invalid_input_error("ExtractionConfig: conv_tol must be > 0");
    if (!(step_guard > 0.0)) throw invalid_input_error("ExtractionConfig: step_guard must be > 0");
  }
};

/// Wrapper pinning the blocking-matrix invariant B a == 0.
struct BlockingMatrix {
  MatC B;

  static BlockingMatrix from(const VecC& a) { return BlockingMatrix{blocking_matrix(a)}; }
};

struct IterationRecord {
  int iter = 0;
  VecC nu;
  VecC rho;
  VecC rho_step;
  Eigen::VectorXd sigma2;
  Eigen::VectorXd sigma2_alpha;
  Eigen::VectorXd q_norm;
  double max_direction_change = 0.0;
  bool damped = false;
  std::optional<double> contrast_value;
};

struct IterationTrace {
  std::vector<IterationRecord> records;
  int iterations = 0;
  bool converged = false;

  void to_jsonl(std::ostream& os) const {
    for (const auto& r : records) {
      nlohmann::json j;
      j["iter"] = r.iter;
      auto cvec = [](const VecC& v) {
        nlohmann::json a = nlohmann::json::array();
        for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back({v(i).real(), v(i).imag()});
        return a;
      };
      auto rvec = [](const Eigen::VectorXd& v) {
        return std::vector<double>(v.data(), v.data() + v.size());
      };
      j["nu"] = cvec(r.nu);
      j["rho"] = cvec(r.rho);
      j["rho_step"] = cvec(r.rho_step);
      j["sigma2"] = rvec(r.sigma2);
      j["sigma2_alpha"] = rvec(r.sigma2_alpha);
      j["q_norm"] = rvec(r.q_norm);
      j["direction_change"] = r.max_direction_change;
      j["damped"] = r.damped;
      if (r.contrast_value) j["contrast"] = *r.contrast_value;
      os << j.dump() << '\n';
    }
  }
};

struct ExtractionResult {
  std::vector<MixingVector> a;
  std::vector<SeparatingVector> w;
  MatC shat;  // K x N, s_k = w_k^H x_k
  IterationTrace trace;
};

// ---------------------------------------------------------------------------
// Newton machinery
// ---------------------------------------------------------------------------

namespace detail {

/// Data moment of the update rule: E[phi_k(sbar)^* x_k] / sigma_k.
/// The score is the conjugate cogradient (see score_models.hpp), so the
/// moment conjugates phi; for radial scores this is the familiar
/// E[x g(|s|^2) s^*] correlation.
inline VecC data_moment(const MatC& x_block, const Eigen::RowVectorXcd& phi_row, double sigma) {
  return (x_block * phi_row.adjoint()) / (static_cast<double>(x_block.cols()) * sigma);
}

inline void check_step_guard(const ScalarStats& st, double guard, int iteration) {
  for (int k = 0; k < st.nu.size(); ++k) {
    const double denom = st.nu_r(k) - st.rho_step_r(k);
    if (!(std::abs(denom) >= guard) || !(std::abs(st.nu_r(k)) >= guard)) {
      throw degenerate_step_error(
          "newton step degenerate: |nu - rho_step| or |nu| below guard for mixture " +
              std::to_string(k),
          k, iteration);
    }
  }
}

}  // namespace detail

/// The update rule proper: a <- a - (nu/(nu-rho_step)) (s2a/s2) (a - m/nu)
/// with realified scalars, given bracket = a - m/Re(nu). A zero bracket is a
/// fixed point: the input is returned unchanged.
inline VecC newton_update(const VecC& a, const VecC& bracket, double nu_r, double rho_step_r,
                          double sigma2_alpha, double sigma2, bool power_ratio_factor,
                          double scale = 1.0) {
  double coeff = nu_r / (nu_r - rho_step_r);
  if (power_ratio_factor) coeff *= sigma2_alpha / sigma2;
  return a - (scale * coeff) * bracket;
}

/// One approximate Newton update of all mixing vectors from a consistent
/// (a, w) pairing: a re-projected, w the constraint output that produced it.
/// All K mixtures step from the same pre-step normalized block.
struct NewtonStepResult {
  std::vector<VecC> a_next;
  ScalarStats stats;
  std::vector<VecC> brackets;  // a - moment/Re(nu), the update residual
};

inline NewtonStepResult newton_step(const std::vector<VecC>& a, const std::vector<VecC>& w,
                                    const MixtureTensor& x, const std::vector<MatC>& c_x,
                                    const std::vector<MatC>& c_alpha, const ScoreFunction& score,
                                    const ExtractionConfig& cfg, int iteration = -1) {
  const int K = x.K();
  auto nsv = NormalizedSourceVector::build(x, w, c_x);
  auto moments = detail::score_moments(nsv.sbar, score);
  ScalarStats st;
  st.nu = moments.nu;
  st.rho = moments.rho;
  st.rho_step = moments.rho_step;
  st.sigma2 = nsv.sigma.array().square();
  st.sigma2_alpha.resize(K);
  for (int k = 0; k < K; ++k) {
    st.sigma2_alpha(k) = quad_form_real(c_alpha[static_cast<std::size_t>(k)],
                                        w[static_cast<std::size_t>(k)]);
  }
  detail::check_step_guard(st, cfg.step_guard, iteration);

  NewtonStepResult out;
  out.brackets.resize(static_cast<std::size_t>(K));
  out.a_next.resize(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const VecC m = detail::data_moment(x.block(k), moments.phi.row(k), nsv.sigma(k));
    VecC bracket = a[ku] - m / st.nu_r(k);
    if (!bracket.allFinite()) throw numerical_failure_error("non-finite update", k);
    out.a_next[ku] = newton_update(a[ku], bracket, st.nu_r(k), st.rho_step_r(k),
                                   st.sigma2_alpha(k), st.sigma2(k), cfg.power_ratio_factor);
    out.brackets[ku] = std::move(bracket);
  }
  out.stats = std::move(st);
  return out;
}

// ---------------------------------------------------------------------------
// Gradient and Hessian (exposed for verification)
// ---------------------------------------------------------------------------

/// Gradient of the contrast with respect to a^* under the weighted-covariance
/// constraint, per mixture:
///
///   pre_division == false (default): the normalized-score form used by the
///   Newton derivation,
///       sigma2_alpha Calpha^-1 (a - moment/Re(nu)) + B^H Cz^-1 q,
///   with q = E[z s^*] = B Cx w. After re-projection q vanishes.
///
///   pre_division == true: the gradient of the contrast itself (score not
///   divided by nu), which carries the extra re-projection term
///       sigma2_alpha Calpha^-1 (... + (Re(nu) - 1) Cx w / sigma2).
///   This variant is what finite differences of contrast() reproduce, with
///   Cz held fixed at the evaluation point's background re-estimate.
///
/// When w_pair is omitted, w is recomputed from the constraint, matching the
/// functional the finite-difference oracle differentiates.
inline std::vector<VecC> raw_gradient(const std::vector<VecC>& a, const MixtureTensor& x,
                                      const std::vector<MatC>& c_x,
                                      const std::vector<MatC>& c_alpha,
                                      const std::vector<MatC>& c_z, const ScoreFunction& score,
                                      bool pre_division = false,
                                      const std::vector<VecC>* w_pair = nullptr) {
  const int K = x.K();
  std::vector<VecC> w(static_cast<std::size_t>(K));
  std::vector<std::unique_ptr<HermitianSolver>> sa(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    sa[ku] = std::make_unique<HermitianSolver>(c_alpha[ku], "weighted covariance");
    w[ku] = w_pair ? (*w_pair)[ku] : distortionless(*sa[ku], a[ku]).w.w;
  }
  auto nsv = NormalizedSourceVector::build(x, w, c_x);
  auto moments = detail::score_moments(nsv.sbar, score);

  std::vector<VecC> grad(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const double s2 = nsv.sigma(k) * nsv.sigma(k);
    const double s2a = quad_form_real(c_alpha[ku], w[ku]);
    const double nu_r = moments.nu(k).real();
    const VecC m = detail::data_moment(x.block(k), moments.phi.row(k), nsv.sigma(k));
    const VecC cw = c_x[ku] * w[ku];
    VecC inner;
    if (pre_division) {
      inner = a[ku] - m + (nu_r - 1.0) * cw / s2;
    } else {
      inner = a[ku] - m / nu_r;
    }
    const MatC b = blocking_matrix(a[ku]);
    const VecC q = b * cw;
    HermitianSolver sz(c_z[ku], "background covariance");
    grad[ku] = s2a * sa[ku]->solve(inner) + b.adjoint() * sz.solve(q);
  }
  return grad;
}

/// Rank-one-free curvature approximation for mixture k:
///
///   H = sigma2_alpha (I - (rho/nu)(sigma2_alpha/sigma2) conj(Calpha)^-1 conj(Cx))
///       * conj(Calpha)^-1
///
/// using the realified step statistics. With collapsed == true the further
/// production approximations are applied ((sigma2_alpha/sigma2) Calpha^-1 Cx
/// ~ I, then the sigma2/sigma2_alpha scale factor), which turn (H^*)^-1 Delta
/// into exactly the scalar coefficient of the update rule.
inline MatC approx_hessian(const ScalarStats& stats, int k, const MatC& c_x, const MatC& c_alpha,
                           bool collapsed = false, bool power_ratio_factor = true) {
  const double nu_r = stats.nu_r(k);
  const double rho_r = stats.rho_step_r(k);
  const double s2 = stats.sigma2(k);
  const double s2a = stats.sigma2_alpha(k);
  HermitianSolver sa(c_alpha, "weighted covariance");
  const Eigen::Index d = c_alpha.rows();
  // conj(Calpha)^-1 M == conj(Calpha^-1 conj(M))
  const MatC identity = MatC::Identity(d, d);
  const MatC alpha_conj_inv = sa.solve(identity).conjugate();
  if (collapsed) {
    const double scale = (power_ratio_factor ? s2 : s2a) * (nu_r - rho_r) / nu_r;
    return scale * alpha_conj_inv;
  }
  const MatC inner = MatC::Identity(d, d) - (rho_r / nu_r) * (s2a / s2) *
                                                (alpha_conj_inv * c_x.conjugate());
  return s2a * inner * alpha_conj_inv;
}

// ---------------------------------------------------------------------------
// Full extraction loop
// ---------------------------------------------------------------------------

namespace detail {

struct PipelineState {
  std::vector<VecC> w;       // constraint output for the incoming a
  std::vector<VecC> a;       // re-projected mixing vectors
  std::vector<VecC> moment;  // E[phi^* x]/sigma per mixture
  std::vector<VecC> bracket;
  Eigen::VectorXd bracket_norm;
  ScalarStats stats;
  Eigen::VectorXd q_norm;
  MatC sbar;
};

class ExtractionEngine {
 public:
  ExtractionEngine(const MixtureTensor& x, std::vector<MatC> c_x, std::vector<MatC> c_alpha,
                   const ScoreFunction& score, const ExtractionConfig& cfg)
      : x_(x), c_x_(std::move(c_x)), c_alpha_(std::move(c_alpha)), score_(score), cfg_(cfg) {
    for (const auto& c : c_alpha_) {
      solvers_.push_back(std::make_unique<HermitianSolver>(c, "weighted covariance"));
    }
  }

  // constraint -> re-projection -> barrier -> statistics -> update residual
  PipelineState eval(const std::vector<VecC>& a_in) const {
    const int K = x_.K();
    const auto N = static_cast<double>(x_.samples());
    PipelineState s;
    s.w.resize(static_cast<std::size_t>(K));
    s.a.resize(static_cast<std::size_t>(K));
    s.moment.resize(static_cast<std::size_t>(K));
    s.bracket.resize(static_cast<std::size_t>(K));
    s.bracket_norm.resize(K);
    s.q_norm.resize(K);
    s.sbar.resize(K, x_.samples());
    Eigen::VectorXd sigma(K);
    s.stats.sigma2.resize(K);
    s.stats.sigma2_alpha.resize(K);
    for (int k = 0; k < K; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      const VecC w = distortionless(*solvers_[ku], a_in[ku]).w.w;
      const VecC cw = c_x_[ku] * w;
      const double s2 = std::real(cd(w.adjoint() * cw));
      if (!(s2 > 0.0) || !std::isfinite(s2)) {
        throw degenerate_filter_error("extraction filter has zero output power");
      }
      s.w[ku] = w;
      s.a[ku] = cw / s2;
      s.q_norm(k) = (blocking_matrix(s.a[ku]) * cw).norm();
      s.stats.sigma2(k) = s2;
      s.stats.sigma2_alpha(k) = quad_form_real(c_alpha_[ku], w);
      sigma(k) = std::sqrt(s2);
      s.sbar.row(k) = (w.adjoint() * x_.block(k)) / sigma(k);
    }
    auto moments = score_moments(s.sbar, score_);
    s.stats.nu = std::move(moments.nu);
    s.stats.rho = std::move(moments.rho);
    s.stats.rho_step = std::move(moments.rho_step);
    for (int k = 0; k < K; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      s.moment[ku] = data_moment(x_.block(k), moments.phi.row(k), sigma(k));
      s.bracket[ku] = s.a[ku] - s.moment[ku] / s.stats.nu_r(k);
      if (!s.bracket[ku].allFinite()) throw numerical_failure_error("non-finite update", k);
      s.bracket_norm(k) = s.bracket[ku].norm();
    }
    return s;
  }

  std::vector<VecC> step(const PipelineState& s, double scale) const {
    const int K = x_.K();
    std::vector<VecC> out(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      out[ku] = newton_update(s.a[ku], s.bracket[ku], s.stats.nu_r(k), s.stats.rho_step_r(k),
                              s.stats.sigma2_alpha(k), s.stats.sigma2(k), cfg_.power_ratio_factor,
                              scale);
    }
    return out;
  }

  double contrast_at(const PipelineState& s) const {
    std::vector<MatC> cz;
    cz.reserve(s.a.size());
    for (int k = 0; k < x_.K(); ++k) {
      cz.push_back(background_covariance(x_.block(k), s.a[static_cast<std::size_t>(k)]));
    }
    return contrast(x_, s.a, s.w, score_, c_x_, cz);
  }

 private:
  const MixtureTensor& x_;
  std::vector<MatC> c_x_;
  std::vector<MatC> c_alpha_;
  const ScoreFunction& score_;
  const ExtractionConfig& cfg_;
  std::vector<std::unique_ptr<HermitianSolver>> solvers_;

 public:
  const std::vector<MatC>& c_x() const { return c_x_; }
  const std::vector<MatC>& c_alpha() const { return c_alpha_; }
};

}  // namespace detail

/// Computes the per-mixture covariances an extraction run works on. Blind
/// mode reuses the sample covariance object, so a blind run and an informed
/// run with identity weights produce bitwise-identical iterates.
inline CovarianceSet build_covariances(const MixtureTensor& x, const SideInfo* side,
                                       const ExtractionConfig& cfg) {
  CovarianceSet set;
  const int K = x.K();
  set.Cx.reserve(static_cast<std::size_t>(K));
  set.Calpha.reserve(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) set.Cx.push_back(sample_covariance(x.block(k)));
  if (cfg.mode == ExtractionMode::informed) {
    if (side == nullptr) throw invalid_input_error("informed mode requires side information");
    if (side->degenerate()) {
      throw degenerate_weights_error("side information is identically zero");
    }
    if (side->K() != K && side->K() != 1) {
      throw invalid_input_error("side information mixture count mismatch");
    }
    for (int k = 0; k < K; ++k) {
      const int sk = side->K() == 1 ? 0 : k;
      set.Calpha.push_back(weighted_covariance(x.block(k), side->weights(sk)));
    }
  } else {
    set.Calpha = set.Cx;
  }
  return set;
}

/// Runs the full fixed-point loop. Each iteration applies the constraint,
/// re-projects the mixing vector, rebuilds the normalized block for all K
/// mixtures (barrier), then takes the Newton step; it stops when the largest
/// phase-invariant direction change of a drops below conv_tol. Non-convergence
/// within max_iters is reported in the trace, not as an error.
inline ExtractionResult run_extraction(const MixtureTensor& x, const SideInfo* side,
                                       const ExtractionConfig& cfg,
                                       std::vector<VecC> a_init = {},
                                       const CovarianceSet* precomputed = nullptr) {
  cfg.validate();
  const int K = x.K();
  const Eigen::Index d = x.channels();
  if (a_init.empty()) {
    Rng rng(cfg.seed);
    a_init.reserve(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) a_init.push_back(rng.unit_sphere(d));
  }
  if (static_cast<int>(a_init.size()) != K) {
    throw invalid_input_error("run_extraction: need one initial mixing vector per mixture");
  }
  for (const auto& a : a_init) {
    if (a.size() != d || a.norm() == 0.0) {
      throw invalid_input_error("run_extraction: initial mixing vector empty or zero");
    }
  }

  CovarianceSet cov = precomputed ? *precomputed : build_covariances(x, side, cfg);
  if (static_cast<int>(cov.Cx.size()) != K || static_cast<int>(cov.Calpha.size()) != K) {
    throw invalid_input_error("run_extraction: covariance set mixture count mismatch");
  }
  const ScoreFunction score = make_score(cfg.score, cfg.eps_phi);
  detail::ExtractionEngine engine(x, cov.Cx, cov.Calpha, score, cfg);

  ExtractionResult result;
  auto state = engine.eval(a_init);
  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    detail::check_step_guard(state.stats, cfg.step_guard, iter);
    auto candidate_a = engine.step(state, 1.0);
    detail::PipelineState candidate;
    bool damped = false;
    try {
      candidate = engine.eval(candidate_a);
      if (cfg.damping &&
          (candidate.bracket_norm.array() > 10.0 * state.bracket_norm.array().max(1e-300)).any()) {
        candidate = engine.eval(engine.step(state, 0.5));
        damped = true;
      }
    } catch (const degenerate_filter_error&) {
      if (!cfg.damping) throw;
      candidate = engine.eval(engine.step(state, 0.5));
      damped = true;
    }
    double dc = 0.0;
    for (int k = 0; k < K; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      dc = std::max(dc, 1.0 - cosine_abs(candidate.a[ku], state.a[ku]));
    }

    IterationRecord rec;
    rec.iter = iter;
    rec.nu = state.stats.nu;
    rec.rho = state.stats.rho;
    rec.rho_step = state.stats.rho_step;
    rec.sigma2 = state.stats.sigma2;
    rec.sigma2_alpha = state.stats.sigma2_alpha;
    rec.q_norm = state.q_norm;
    rec.max_direction_change = dc;
    rec.damped = damped;
    if (cfg.trace_contrast) rec.contrast_value = engine.contrast_at(state);
    result.trace.records.push_back(std::move(rec));

    state = std::move(candidate);
    result.trace.iterations = iter;
    if (dc < cfg.conv_tol) {
      result.trace.converged = true;
      break;
    }
  }

  result.a.reserve(static_cast<std::size_t>(K));
  result.w.reserve(static_cast<std::size_t>(K));
  result.shat.resize(K, x.samples());
  for (int k = 0; k < K; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    result.a.emplace_back(state.a[ku]);
    result.w.emplace_back(state.w[ku]);
    result.shat.row(k) = state.w[ku].adjoint() * x.block(k);
  }
  return result;
}

}  // namespace ivex

#endif  // IVEX_EXTRACTOR_HPP
