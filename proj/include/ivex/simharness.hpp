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

#ifndef IVEX_SIMHARNESS_HPP
#define IVEX_SIMHARNESS_HPP

#include <charconv>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ivex/extractor.hpp"
#include "ivex/rng.hpp"
#include "ivex/threading.hpp"

namespace ivex {

// ---------------------------------------------------------------------------
// Trial specification and ground truth
// ---------------------------------------------------------------------------

struct TrialSpec {
  int d = 5;
  int K = 1;
  int N = 200;
  double sir_ini_db = 0.0;
  double eps2 = 0.5;          // side-information noise power
  double init_radius = 0.5;   // relative radius of the initialization vicinity
  std::uint64_t seed = 0;

  void validate() const {
    if (d < 2) throw invalid_input_error("TrialSpec: d must be >= 2");
    if (K < 1) throw invalid_input_error("TrialSpec: K must be >= 1");
    if (N < d) throw invalid_input_error("TrialSpec: N must be >= d");
    if (!(eps2 >= 0.0 && eps2 <= 1.0)) throw invalid_input_error("TrialSpec: eps2 in [0,1]");
    if (!(init_radius > 0.0)) throw invalid_input_error("TrialSpec: init_radius must be > 0");
  }
};

/// Everything the evaluator needs: the target mixing vectors, the scaled and
/// unit-variance target signals, and the interference image per mixture.
struct GroundTruth {
  std::vector<VecC> a_true;  // per k
  MatC s_true;               // K x N, SIR-scaled target signal
  MatC s_unit;               // K x N, unit-variance target pre-scaling
  std::vector<MatC> y;       // per k, d x N interference image
};

namespace detail {

// Unit-variance markedly super-Gaussian samples: circular Gaussian carrier
// times an exponential amplitude modulator, i.i.d. in time.
inline cd super_gaussian_sample(Rng& rng, double envelope) {
  return rng.cgaussian() * (envelope * M_SQRT1_2);
}

}  // namespace detail

/// Generates K mixtures of d super-Gaussian sources through random complex
/// mixing matrices; column 0 is the target's mixing vector. The target is
/// rescaled so its power over the mean power of the others matches
/// sir_ini_db. For K > 1 the target rows share one amplitude envelope across
/// mixtures, which creates the cross-mixture dependence joint extraction
/// exploits; the backgrounds stay independent.
inline std::pair<MixtureTensor, GroundTruth> generate_mixture(const TrialSpec& spec, Rng& rng) {
  spec.validate();
  const int d = spec.d, K = spec.K, N = spec.N;
  const double c = std::pow(10.0, spec.sir_ini_db / 20.0);

  Eigen::VectorXd shared_env;
  if (K > 1) {
    shared_env.resize(N);
    for (int n = 0; n < N; ++n) shared_env(n) = rng.exponential();
  }

  GroundTruth gt;
  gt.s_true.resize(K, N);
  gt.s_unit.resize(K, N);
  std::vector<MatC> blocks;
  blocks.reserve(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    MatC u(d, N);
    for (int j = 0; j < d; ++j) {
      for (int n = 0; n < N; ++n) {
        const double env = (j == 0 && K > 1) ? shared_env(n) : rng.exponential();
        u(j, n) = detail::super_gaussian_sample(rng, env);
      }
    }
    MatC mixing(d, d);
    constexpr int kMaxRetries = 64;
    int attempt = 0;
    for (;; ++attempt) {
      for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) mixing(i, j) = rng.cgaussian();
      }
      Eigen::JacobiSVD<MatC> svd(mixing);
      const double cond = svd.singularValues()(0) / svd.singularValues()(d - 1);
      if (std::isfinite(cond) && cond < 1e10) break;
      if (attempt >= kMaxRetries) {
        throw numerical_failure_error("generate_mixture: could not draw a well-conditioned mixing matrix");
      }
    }
    gt.s_unit.row(k) = u.row(0);
    u.row(0) *= c;
    gt.s_true.row(k) = u.row(0);
    gt.a_true.push_back(mixing.col(0));
    MatC x = mixing * u;
    gt.y.push_back(x - mixing.col(0) * u.row(0));
    blocks.push_back(std::move(x));
  }
  return {MixtureTensor(std::move(blocks)), std::move(gt)};
}

/// r_k(n) = sqrt(1 - eps2) s_k(n) + eps v_k(n) with v standard circular
/// Gaussian. Built from the unit-variance target so the guide quality is
/// governed by eps2 alone, independent of the SIR rescaling.
inline SideInfo make_side_info(const MatC& s_unit, const TrialSpec& spec, Rng& rng,
                               WeightFn fn = WeightFn::reciprocal) {
  const double amp_s = std::sqrt(1.0 - spec.eps2);
  const double amp_v = std::sqrt(spec.eps2);
  MatC r(s_unit.rows(), s_unit.cols());
  for (Eigen::Index k = 0; k < s_unit.rows(); ++k) {
    for (Eigen::Index n = 0; n < s_unit.cols(); ++n) {
      r(k, n) = amp_s * s_unit(k, n) + amp_v * rng.cgaussian();
    }
  }
  return SideInfo::make(std::move(r), false, fn);
}

/// a_init = a_true + init_radius * |a_true| * u, u uniform on the unit sphere.
inline std::vector<VecC> init_near_soi(const std::vector<VecC>& a_true, double init_radius,
                                       Rng& rng) {
  if (!(init_radius > 0.0)) throw invalid_input_error("init_near_soi: radius must be > 0");
  std::vector<VecC> out;
  out.reserve(a_true.size());
  for (const auto& a : a_true) {
    out.push_back(a + init_radius * a.norm() * rng.unit_sphere(a.size()));
  }
  return out;
}

/// Vicinity initialization in filter space for the blind baseline: perturbs
/// the target's MPDR filter and maps the result back to a mixing vector by
/// re-projection. The blind fixed-point iteration is the classical one-unit
/// update in w, so its "vicinity of the target" lives in filter coordinates;
/// perturbing a directly and passing it through Cx^-1 would tilt the start
/// toward the weakest source and invert the difficulty of the low-SIR regime.
inline std::vector<VecC> init_near_filter(const MixtureTensor& x, const std::vector<VecC>& a_true,
                                          double init_radius, Rng& rng) {
  if (!(init_radius > 0.0)) throw invalid_input_error("init_near_filter: radius must be > 0");
  std::vector<VecC> out;
  out.reserve(a_true.size());
  for (int k = 0; k < x.K(); ++k) {
    const MatC cx = sample_covariance(x.block(k));
    HermitianSolver solver(cx, "observation covariance");
    const VecC w_t = distortionless(solver, a_true[static_cast<std::size_t>(k)]).w.w;
    const VecC w0 = w_t + init_radius * w_t.norm() * rng.unit_sphere(w_t.size());
    out.push_back(reproject_mixing(cx, w0).a);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct SirResult {
  Eigen::VectorXd per_k_db;
  double total_db = 0.0;
};

/// Output SIR from the known decomposition: the filter is applied separately
/// to the target image a_true s_true and to the interference image y.
/// Invariant to rescaling of w.
inline SirResult evaluate_sir(const std::vector<VecC>& w, const GroundTruth& gt) {
  const int K = static_cast<int>(w.size());
  SirResult res;
  res.per_k_db.resize(K);
  double ps_sum = 0.0, py_sum = 0.0;
  for (int k = 0; k < K; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const double gain = std::norm(cd(w[ku].adjoint() * gt.a_true[ku]));
    const double ps = gain * gt.s_true.row(k).squaredNorm() / static_cast<double>(gt.s_true.cols());
    const double py = (w[ku].adjoint() * gt.y[ku]).squaredNorm() / static_cast<double>(gt.y[ku].cols());
    res.per_k_db(k) = power_ratio_db(ps, py);
    ps_sum += ps;
    py_sum += py;
  }
  res.total_db = power_ratio_db(ps_sum, py_sum);
  return res;
}

inline constexpr double kSuccessSirDb = 3.0;

// ---------------------------------------------------------------------------
// Methods and Monte-Carlo driver
// ---------------------------------------------------------------------------

enum class Method { fastica, ifastica, fastiva, ifastiva };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::fastica: return "fastica";
    case Method::ifastica: return "ifastica";
    case Method::fastiva: return "fastiva";
    case Method::ifastiva: return "ifastiva";
  }
  return "?";
}

inline Method method_from_string(const std::string& s) {
  if (s == "fastica") return Method::fastica;
  if (s == "ifastica") return Method::ifastica;
  if (s == "fastiva") return Method::fastiva;
  if (s == "ifastiva") return Method::ifastiva;
  throw invalid_input_error("unknown method: " + s);
}

inline bool method_informed(Method m) { return m == Method::ifastica || m == Method::ifastiva; }
inline bool method_joint(Method m) { return m == Method::fastiva || m == Method::ifastiva; }

struct MethodOutcome {
  double sir_db = -kSirCapDb;
  bool success = false;
  int iterations = 0;
  bool failed = false;  // the run threw; counted as unsuccessful
};

struct TrialReport {
  std::uint64_t seed = 0;
  std::map<Method, MethodOutcome> outcomes;
};

/// Runs all requested methods on one generated trial. All random draws
/// (sources, mixing, side info, both initializations) happen up front in a
/// fixed order, so a trial seed defines the data regardless of which methods
/// are requested.
inline TrialReport run_trial(const TrialSpec& spec, const std::vector<Method>& methods,
                             const ExtractionConfig& base_cfg) {
  spec.validate();
  Rng rng(spec.seed);
  auto [x, gt] = generate_mixture(spec, rng);
  SideInfo side = make_side_info(gt.s_unit, spec, rng, WeightFn::reciprocal);
  const std::vector<VecC> init_soi = init_near_soi(gt.a_true, spec.init_radius, rng);
  const std::vector<VecC> init_filter = init_near_filter(x, gt.a_true, spec.init_radius, rng);

  TrialReport report;
  report.seed = spec.seed;
  for (Method m : methods) {
    ExtractionConfig cfg = base_cfg;
    cfg.mode = method_informed(m) ? ExtractionMode::informed : ExtractionMode::blind;
    const auto& init = method_informed(m) ? init_soi : init_filter;
    MethodOutcome out;
    try {
      std::vector<VecC> w(static_cast<std::size_t>(x.K()));
      if (method_joint(m)) {
        auto res = run_extraction(x, method_informed(m) ? &side : nullptr, cfg, init);
        for (int k = 0; k < x.K(); ++k) w[static_cast<std::size_t>(k)] = res.w[static_cast<std::size_t>(k)].w;
        out.iterations = res.trace.iterations;
      } else {
        for (int k = 0; k < x.K(); ++k) {
          const auto ku = static_cast<std::size_t>(k);
          SideInfo sub = SideInfo::make(side.r().row(k), false, side.weight_fn(), side.epsilon());
          auto res = run_extraction(x.single(k), method_informed(m) ? &sub : nullptr, cfg,
                                    {init[ku]});
          w[ku] = res.w[0].w;
          out.iterations = std::max(out.iterations, res.trace.iterations);
        }
      }
      out.sir_db = evaluate_sir(w, gt).total_db;
      out.success = out.sir_db > kSuccessSirDb;
    } catch (const error&) {
      out.failed = true;
    }
    report.outcomes[m] = out;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Curve aggregation
// ---------------------------------------------------------------------------

enum class SweepAxis { N, sir_ini };

inline const char* to_string(SweepAxis a) { return a == SweepAxis::N ? "N" : "sir_ini_db"; }

struct MonteCarloSpec {
  SweepAxis axis = SweepAxis::N;
  std::vector<double> values;
  std::vector<Method> methods{Method::fastica, Method::ifastica};
  int trials = 100;
  TrialSpec base;
  ExtractionConfig extraction;
  std::uint64_t master_seed = 0;
  int threads = 0;

  void validate() const {
    if (values.empty()) throw invalid_input_error("MonteCarloSpec: empty sweep");
    if (trials < 1) throw invalid_input_error("MonteCarloSpec: trials must be >= 1");
    if (methods.empty()) throw invalid_input_error("MonteCarloSpec: no methods");
  }
};

struct CurveRow {
  double axis_value = 0.0;
  Method method = Method::fastica;
  double success_rate_pct = 0.0;
  double mean_sir_db_successful = std::numeric_limits<double>::quiet_NaN();
  int trials = 0;
};

struct CurveTable {
  SweepAxis axis = SweepAxis::N;
  std::vector<CurveRow> rows;  // ordered by (grid point, method)
};

/// Repeats seeded trials over the grid and aggregates success rate and SIR
/// over successful trials per method. Trials run concurrently; the reduction
/// is ordered by (grid point, trial index), so a master seed fixes the table
/// byte for byte regardless of thread count.
inline CurveTable run_monte_carlo(const MonteCarloSpec& mc) {
  mc.validate();
  const std::size_t points = mc.values.size();
  const auto trials = static_cast<std::size_t>(mc.trials);
  std::vector<TrialReport> reports(points * trials);
  parallel_for(points * trials, mc.threads, [&](std::size_t idx) {
    const std::size_t gi = idx / trials;
    const std::size_t ti = idx % trials;
    TrialSpec spec = mc.base;
    if (mc.axis == SweepAxis::N) {
      spec.N = static_cast<int>(std::lround(mc.values[gi]));
    } else {
      spec.sir_ini_db = mc.values[gi];
    }
    spec.seed = hash_seed(mc.master_seed, gi, ti);
    reports[idx] = run_trial(spec, mc.methods, mc.extraction);
  });

  CurveTable table;
  table.axis = mc.axis;
  for (std::size_t gi = 0; gi < points; ++gi) {
    for (Method m : mc.methods) {
      CurveRow row;
      row.axis_value = mc.values[gi];
      row.method = m;
      row.trials = mc.trials;
      int successes = 0;
      double sir_sum = 0.0;
      for (std::size_t ti = 0; ti < trials; ++ti) {
        const auto& out = reports[gi * trials + ti].outcomes.at(m);
        if (out.success) {
          ++successes;
          sir_sum += out.sir_db;
        }
      }
      row.success_rate_pct = 100.0 * successes / static_cast<double>(mc.trials);
      if (successes > 0) row.mean_sir_db_successful = sir_sum / successes;
      table.rows.push_back(row);
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Serialization (locale-free, shortest round-trip doubles)
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::string to_csv(const CurveTable& table) {
  std::string out = "axis,axis_value,method,success_rate_pct,mean_sir_db_successful,trials\n";
  for (const auto& r : table.rows) {
    out += to_string(table.axis);
    out += ',';
    out += format_double(r.axis_value);
    out += ',';
    out += to_string(r.method);
    out += ',';
    out += format_double(r.success_rate_pct);
    out += ',';
    out += format_double(r.mean_sir_db_successful);
    out += ',';
    out += std::to_string(r.trials);
    out += '\n';
  }
  return out;
}

inline nlohmann::json to_json(const CurveTable& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : table.rows) {
    nlohmann::json j;
    j["axis"] = to_string(table.axis);
    j["axis_value"] = r.axis_value;
    j["method"] = to_string(r.method);
    j["success_rate_pct"] = r.success_rate_pct;
    if (std::isnan(r.mean_sir_db_successful)) {
      j["mean_sir_db_successful"] = nullptr;
    } else {
      j["mean_sir_db_successful"] = r.mean_sir_db_successful;
    }
    j["trials"] = r.trials;
    rows.push_back(std::move(j));
  }
  return rows;
}

}  // namespace ivex

#endif  // IVEX_SIMHARNESS_HPP
