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

#ifndef IVEX_AUDIO_PIPELINE_HPP
#define IVEX_AUDIO_PIPELINE_HPP

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ivex/extractor.hpp"
#include "ivex/stft.hpp"

namespace ivex {

// ---------------------------------------------------------------------------
// Pilot signal
// ---------------------------------------------------------------------------

/// One nonnegative scalar per frame, shared across every frequency bin.
struct PilotSignal {
  Eigen::VectorXd r;
};

/// r(m) = mixture frame energy where the target is dominant, zero otherwise.
inline PilotSignal pilot_from_dominance(const std::vector<std::uint8_t>& dominant,
                                        const Eigen::VectorXd& mixture_energy) {
  if (static_cast<Eigen::Index>(dominant.size()) != mixture_energy.size()) {
    throw invalid_input_error("pilot_from_dominance: length mismatch");
  }
  PilotSignal p;
  p.r = Eigen::VectorXd::Zero(mixture_energy.size());
  for (Eigen::Index m = 0; m < mixture_energy.size(); ++m) {
    if (dominant[static_cast<std::size_t>(m)]) p.r(m) = mixture_energy(m);
  }
  return p;
}

/// Ground-truth dominance: the target is dominant in a frame iff its windowed
/// frame energy exceeds every competitor's. Stands in for the speaker-ID
/// classifier that produced the pilot in the original experiment.
inline std::vector<std::uint8_t> oracle_dominance(const std::vector<Eigen::VectorXd>& ref_waves,
                                                  int target_index, const StftConfig& cfg) {
  if (ref_waves.size() < 2) throw invalid_input_error("oracle_dominance: need >= 2 references");
  if (target_index < 0 || target_index >= static_cast<int>(ref_waves.size())) {
    throw invalid_input_error("oracle_dominance: target index out of range");
  }
  std::vector<Eigen::VectorXd> energies;
  energies.reserve(ref_waves.size());
  for (const auto& w : ref_waves) energies.push_back(frame_energies(w, cfg));
  const Eigen::Index m_count = energies[0].size();
  for (const auto& e : energies) {
    if (e.size() != m_count) throw invalid_input_error("oracle_dominance: reference length mismatch");
  }
  std::vector<std::uint8_t> dom(static_cast<std::size_t>(m_count), 0);
  for (Eigen::Index m = 0; m < m_count; ++m) {
    double best_other = 0.0;
    for (int j = 0; j < static_cast<int>(energies.size()); ++j) {
      if (j == target_index) continue;
      best_other = std::max(best_other, energies[static_cast<std::size_t>(j)](m));
    }
    dom[static_cast<std::size_t>(m)] = energies[static_cast<std::size_t>(target_index)](m) > best_other ? 1 : 0;
  }
  return dom;
}

/// Pilot CSV: one row per frame, columns frame_index,r_value.
inline void write_pilot_csv(const std::string& path, const PilotSignal& pilot) {
  std::ofstream os(path);
  if (!os) throw invalid_input_error("cannot write pilot CSV: " + path);
  os << "frame_index,r_value\n";
  for (Eigen::Index m = 0; m < pilot.r.size(); ++m) os << m << ',' << pilot.r(m) << '\n';
}

inline PilotSignal read_pilot_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw invalid_input_error("cannot open pilot CSV: " + path);
  std::vector<double> values;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string idx, val;
    if (!std::getline(ls, idx, ',') || !std::getline(ls, val)) {
      throw invalid_input_error("malformed pilot CSV row: " + line);
    }
    if (!idx.empty() && !std::isdigit(static_cast<unsigned char>(idx[0]))) continue;  // header
    try {
      values.push_back(std::stod(val));
    } catch (const std::exception&) {
      throw invalid_input_error("malformed pilot CSV value: " + val);
    }
  }
  if (values.empty()) throw invalid_input_error("empty pilot CSV: " + path);
  PilotSignal p;
  p.r = Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  return p;
}

// ---------------------------------------------------------------------------
// Frequency-domain target extraction
// ---------------------------------------------------------------------------

struct ExtractOptions {
  int mics = 4;
  int ref_channel = 0;
  // bins below this fraction of the mean bin energy pass through unprocessed
  double bin_energy_floor_rel = 1e-10;
  WeightFn weight_fn = WeightFn::reciprocal;
  StftConfig stft;
  ExtractionConfig extraction;
};

struct ExtractResult {
  Eigen::MatrixXd image;  // mics x T, per-channel target image
  Eigen::VectorXd mono;   // reference-channel image
  std::vector<int> processed_bins;
  std::vector<VecC> a;  // final mixing vectors, parallel to processed_bins
  std::vector<VecC> w;  // final separating vectors, parallel to processed_bins
  IterationTrace trace;
  CovarianceSet covariances;  // of the processed bins, reusable as a cache
};

namespace detail {

inline VecC principal_eigenvector(const MatC& m) {
  Eigen::SelfAdjointEigenSolver<MatC> eig(hermitized(m));
  return eig.eigenvectors().col(m.rows() - 1);
}

}  // namespace detail

/// Joint informed extraction over all frequency bins with one shared pilot.
/// Bins with negligible energy pass through untouched. The per-bin output is
/// the distortionless image a_k shat_k, reconstructed per channel; mono is
/// the reference channel of that image.
inline ExtractResult extract_speaker(const Eigen::MatrixXd& wave, const PilotSignal& pilot,
                                     const ExtractOptions& opts,
                                     const CovarianceSet* cov_cache = nullptr) {
  if (opts.mics < 2) throw invalid_input_error("extract_speaker: need at least 2 microphones");
  if (wave.rows() < opts.mics) {
    throw invalid_input_error("extract_speaker: input has fewer channels than requested mics");
  }
  if (opts.ref_channel < 0 || opts.ref_channel >= opts.mics) {
    throw invalid_input_error("extract_speaker: reference channel out of range");
  }
  const Eigen::MatrixXd mics_wave = wave.topRows(opts.mics);
  std::vector<MatC> blocks = stft_blocks(mics_wave, opts.stft);
  const int K = static_cast<int>(blocks.size());
  const int M = static_cast<int>(blocks[0].cols());
  if (pilot.r.size() != M) {
    std::ostringstream os;
    os << "pilot frame count " << pilot.r.size() << " does not match STFT frames " << M;
    throw invalid_input_error(os.str());
  }
  if ((pilot.r.array() < 0.0).any()) {
    throw invalid_input_error("pilot values must be nonnegative");
  }
  if (pilot.r.maxCoeff() == 0.0) {
    throw degenerate_weights_error("pilot is identically zero: target never dominant");
  }

  Eigen::VectorXd bin_energy(K);
  for (int k = 0; k < K; ++k) bin_energy(k) = blocks[static_cast<std::size_t>(k)].squaredNorm();
  const double floor = opts.bin_energy_floor_rel * bin_energy.mean();
  std::vector<int> processed;
  for (int k = 0; k < K; ++k) {
    if (bin_energy(k) > floor) processed.push_back(k);
  }
  if (processed.empty()) throw invalid_input_error("extract_speaker: all bins below energy floor");

  std::vector<MatC> sub;
  sub.reserve(processed.size());
  for (int k : processed) sub.push_back(blocks[static_cast<std::size_t>(k)]);
  MixtureTensor x(std::move(sub));

  SideInfo side = SideInfo::make_shared(pilot.r, x.K(), opts.weight_fn);

  // Initialize each bin's mixing vector from the target-emphasized covariance:
  // frames with large pilot values carry the target, so the principal
  // direction of the |r|^2-weighted covariance points near its steering.
  Eigen::VectorXd emphasis = pilot.r.array().square();
  std::vector<VecC> a_init;
  a_init.reserve(static_cast<std::size_t>(x.K()));
  for (int j = 0; j < x.K(); ++j) {
    a_init.push_back(detail::principal_eigenvector(weighted_covariance(x.block(j), emphasis)));
  }

  ExtractionConfig cfg = opts.extraction;
  cfg.mode = ExtractionMode::informed;
  ExtractResult result;
  result.covariances = cov_cache ? *cov_cache : build_covariances(x, &side, cfg);

  ExtractionResult ext;
  try {
    ext = run_extraction(x, &side, cfg, a_init, &result.covariances);
  } catch (const degenerate_step_error& e) {
    const int bin = e.mixture() >= 0 && e.mixture() < static_cast<int>(processed.size())
                        ? processed[static_cast<std::size_t>(e.mixture())]
                        : -1;
    throw degenerate_step_error(std::string(e.what()) + " (frequency bin " + std::to_string(bin) + ")",
                                bin, e.iteration());
  } catch (const numerical_failure_error& e) {
    const int bin = e.mixture() >= 0 && e.mixture() < static_cast<int>(processed.size())
                        ? processed[static_cast<std::size_t>(e.mixture())]
                        : -1;
    throw numerical_failure_error(std::string(e.what()) + " (frequency bin " + std::to_string(bin) + ")", bin);
  }

  // Rebuild the full spectrum: processed bins carry the extracted image,
  // low-energy bins pass through.
  result.a.reserve(processed.size());
  result.w.reserve(processed.size());
  for (std::size_t j = 0; j < processed.size(); ++j) {
    const int k = processed[j];
    blocks[static_cast<std::size_t>(k)] = ext.a[j].a * ext.shat.row(static_cast<Eigen::Index>(j));
    result.a.push_back(ext.a[j].a);
    result.w.push_back(ext.w[j].w);
  }
  Eigen::MatrixXd image = istft_blocks(blocks, opts.stft);
  result.image.setZero(opts.mics, wave.cols());
  const Eigen::Index copy = std::min(image.cols(), wave.cols());
  result.image.leftCols(copy) = image.leftCols(copy);
  result.mono = result.image.row(opts.ref_channel);
  result.processed_bins = std::move(processed);
  result.trace = std::move(ext.trace);
  return result;
}

// ---------------------------------------------------------------------------
// BSS-style evaluation
// ---------------------------------------------------------------------------

struct EvalScores {
  double sir_db = 0.0;
  double sdr_db = 0.0;
};

namespace detail {

// Least-squares projection of est onto {refs delayed by 0..taps-1} via
// FFT cross-correlations and a block-Toeplitz normal system.
class ProjectionBasis {
 public:
  ProjectionBasis(const std::vector<Eigen::VectorXd>& refs, const Eigen::VectorXd& est, int taps)
      : refs_(refs), taps_(taps) {
    const auto J = static_cast<int>(refs.size());
    const Eigen::Index T = est.size();
    Eigen::Index nfft = 1;
    while (nfft < T + taps) nfft *= 2;
    RealFft fft(static_cast<int>(nfft));
    auto load = [&](const Eigen::VectorXd& v) {
      auto& buf = fft.real_buf();
      std::fill(buf.begin(), buf.end(), 0.0);
      for (Eigen::Index t = 0; t < v.size(); ++t) buf[static_cast<std::size_t>(t)] = v(t);
      return fft.forward();
    };
    std::vector<std::vector<cd>> ref_spec;
    ref_spec.reserve(static_cast<std::size_t>(J));
    for (const auto& r : refs) ref_spec.push_back(load(r));
    const std::vector<cd> est_spec = load(est);

    auto corr = [&](const std::vector<cd>& a, const std::vector<cd>& b) {
      // c(delta) = sum_t a(t) b(t+delta), delta in [-(taps-1), taps-1]
      auto& spec = fft.cplx_buf();
      for (std::size_t i = 0; i < spec.size(); ++i) spec[i] = std::conj(a[i]) * b[i];
      const auto& full = fft.inverse();
      Eigen::VectorXd c(2 * taps_ - 1);
      for (int delta = -(taps_ - 1); delta <= taps_ - 1; ++delta) {
        const auto idx = static_cast<std::size_t>((delta + static_cast<int>(nfft)) % nfft);
        c(delta + taps_ - 1) = full[idx];
      }
      return c;
    };

    gram_.resize(J * taps_, J * taps_);
    rhs_.resize(J * taps_);
    for (int i = 0; i < J; ++i) {
      for (int j = 0; j < J; ++j) {
        const Eigen::VectorXd c = corr(ref_spec[static_cast<std::size_t>(i)], ref_spec[static_cast<std::size_t>(j)]);
        for (int a = 0; a < taps_; ++a) {
          for (int b = 0; b < taps_; ++b) {
            gram_(i * taps_ + a, j * taps_ + b) = c((a - b) + taps_ - 1);
          }
        }
      }
      const Eigen::VectorXd d = corr(ref_spec[static_cast<std::size_t>(i)], est_spec);
      for (int a = 0; a < taps_; ++a) rhs_(i * taps_ + a) = d(a + taps_ - 1);
    }
  }

  /// Projection using only the listed reference indices.
  Eigen::VectorXd project(const std::vector<int>& use, Eigen::Index T) const {
    const int n = static_cast<int>(use.size()) * taps_;
    Eigen::MatrixXd g(n, n);
    Eigen::VectorXd r(n);
    for (int bi = 0; bi < static_cast<int>(use.size()); ++bi) {
      r.segment(bi * taps_, taps_) = rhs_.segment(use[static_cast<std::size_t>(bi)] * taps_, taps_);
      for (int bj = 0; bj < static_cast<int>(use.size()); ++bj) {
        g.block(bi * taps_, bj * taps_, taps_, taps_) =
            gram_.block(use[static_cast<std::size_t>(bi)] * taps_, use[static_cast<std::size_t>(bj)] * taps_, taps_, taps_);
      }
    }
    g.diagonal().array() += 1e-9 * g.trace() / n;
    const Eigen::VectorXd h = g.ldlt().solve(r);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(T);
    for (int bi = 0; bi < static_cast<int>(use.size()); ++bi) {
      const auto& ref = refs_[static_cast<std::size_t>(use[static_cast<std::size_t>(bi)])];
      for (int tau = 0; tau < taps_; ++tau) {
        const double coef = h(bi * taps_ + tau);
        if (coef == 0.0) continue;
        for (Eigen::Index t = tau; t < T; ++t) out(t) += coef * ref(t - tau);
      }
    }
    return out;
  }

 private:
  const std::vector<Eigen::VectorXd>& refs_;
  int taps_;
  Eigen::MatrixXd gram_;
  Eigen::VectorXd rhs_;
};

}  // namespace detail

/// BSS-style decomposition with a time-invariant distortion filter:
/// s_target is the projection of the estimate onto the target's delayed
/// copies, e_interf the additional span of all references, e_artif the rest.
/// SIR = target/interference power, SDR = target over everything else.
inline EvalScores evaluate_bss(const std::vector<Eigen::VectorXd>& refs, const Eigen::VectorXd& est,
                               int target_index = 0, int filter_taps = 512) {
  if (refs.empty()) throw invalid_input_error("evaluate_bss: no references");
  if (target_index < 0 || target_index >= static_cast<int>(refs.size())) {
    throw invalid_input_error("evaluate_bss: target index out of range");
  }
  if (filter_taps < 1) throw invalid_input_error("evaluate_bss: filter_taps must be >= 1");
  const Eigen::Index T = est.size();
  if (T < filter_taps) throw invalid_input_error("evaluate_bss: signal shorter than the filter");
  for (const auto& r : refs) {
    if (r.size() != T) throw invalid_input_error("evaluate_bss: reference/estimate length mismatch");
    if (r.squaredNorm() == 0.0) throw invalid_input_error("evaluate_bss: zero-energy reference");
  }

  detail::ProjectionBasis basis(refs, est, filter_taps);
  std::vector<int> all(refs.size());
  for (int i = 0; i < static_cast<int>(refs.size()); ++i) all[static_cast<std::size_t>(i)] = i;
  const Eigen::VectorXd p_all = basis.project(all, T);
  const Eigen::VectorXd s_target = basis.project({target_index}, T);
  const Eigen::VectorXd e_interf = p_all - s_target;
  const Eigen::VectorXd e_rest = est - s_target;  // interference + artifacts

  EvalScores scores;
  scores.sir_db = power_ratio_db(s_target.squaredNorm(), e_interf.squaredNorm());
  scores.sdr_db = power_ratio_db(s_target.squaredNorm(), e_rest.squaredNorm());
  return scores;
}

}  // namespace ivex

#endif  // IVEX_AUDIO_PIPELINE_HPP
