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

#ifndef IVEX_STFT_HPP
#define IVEX_STFT_HPP

#include <mutex>
#include <vector>

#include <fftw3.h>

#include "ivex/signal_model.hpp"

namespace ivex {

enum class Window { sqrt_hann, hann };

struct StftConfig {
  int sample_rate = 16000;
  int window_length = 1000;
  int shift = 200;
  Window window = Window::sqrt_hann;

  int bins() const { return window_length / 2 + 1; }

  void validate() const {
    if (window_length < 2) throw invalid_input_error("StftConfig: window too short");
    if (shift < 1 || shift > window_length) {
      throw invalid_input_error("StftConfig: shift must be in [1, window_length]");
    }
  }
};

inline Eigen::VectorXd analysis_window(const StftConfig& cfg) {
  const int L = cfg.window_length;
  Eigen::VectorXd w(L);
  for (int t = 0; t < L; ++t) {
    const double hann = 0.5 - 0.5 * std::cos(2.0 * M_PI * t / L);
    w(t) = cfg.window == Window::sqrt_hann ? std::sqrt(hann) : hann;
  }
  return w;
}

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

/// One forward/inverse real FFT pair with owned buffers. Plan creation is
/// serialized (the FFTW planner is not thread-safe); execution touches only
/// this object's buffers.
class RealFft {
 public:
  explicit RealFft(int n) : n_(n), real_(static_cast<std::size_t>(n)), cplx_(static_cast<std::size_t>(n / 2 + 1)) {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fwd_ = fftw_plan_dft_r2c_1d(n_, real_.data(), reinterpret_cast<fftw_complex*>(cplx_.data()),
                                FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r_1d(n_, reinterpret_cast<fftw_complex*>(cplx_.data()), real_.data(),
                                FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  int bins() const { return n_ / 2 + 1; }

  // real_ must be filled by the caller; result valid until the next call
  const std::vector<cd>& forward() {
    fftw_execute(fwd_);
    return cplx_;
  }
  // cplx_ must be filled by the caller (contents are destroyed); output is
  // divided by n so inverse(forward(x)) == x
  const std::vector<double>& inverse() {
    fftw_execute(inv_);
    for (auto& v : real_) v /= static_cast<double>(n_);
    return real_;
  }

  std::vector<double>& real_buf() { return real_; }
  std::vector<cd>& cplx_buf() { return cplx_; }

 private:
  int n_;
  std::vector<double> real_;
  std::vector<cd> cplx_;
  fftw_plan fwd_;
  fftw_plan inv_;
};

}  // namespace detail

inline int stft_frames(Eigen::Index samples, const StftConfig& cfg) {
  if (samples < cfg.window_length) return 0;
  return 1 + static_cast<int>((samples - cfg.window_length) / cfg.shift);
}

/// Frame-wise analysis of a (channels x T) signal into bins() blocks of
/// (channels x frames) spectra. Layout matches the extraction model: bin k is
/// one mixture, frames are samples.
inline std::vector<MatC> stft_blocks(const Eigen::MatrixXd& wave, const StftConfig& cfg) {
  cfg.validate();
  const Eigen::Index d = wave.rows();
  const int L = cfg.window_length;
  const int M = stft_frames(wave.cols(), cfg);
  if (d < 1) throw invalid_input_error("stft: no channels");
  if (M < 1) throw invalid_input_error("stft: input shorter than the analysis window");
  const Eigen::VectorXd win = analysis_window(cfg);
  const int K = cfg.bins();
  std::vector<MatC> blocks(static_cast<std::size_t>(K), MatC(d, M));
  detail::RealFft fft(L);
  for (Eigen::Index c = 0; c < d; ++c) {
    for (int m = 0; m < M; ++m) {
      for (int t = 0; t < L; ++t) {
        fft.real_buf()[static_cast<std::size_t>(t)] = wave(c, m * cfg.shift + t) * win(t);
      }
      const auto& spec = fft.forward();
      for (int k = 0; k < K; ++k) blocks[static_cast<std::size_t>(k)](c, m) = spec[static_cast<std::size_t>(k)];
    }
  }
  return blocks;
}

inline MixtureTensor stft(const Eigen::MatrixXd& wave, const StftConfig& cfg) {
  return MixtureTensor(stft_blocks(wave, cfg));
}

/// Weighted overlap-add synthesis, the inverse of stft_blocks. Per-sample
/// normalization by the accumulated window product makes the round trip exact
/// wherever frames fully cover the signal; the first and last window-length
/// edges are best-effort and should be trimmed before comparisons.
inline Eigen::MatrixXd istft_blocks(const std::vector<MatC>& blocks, const StftConfig& cfg) {
  cfg.validate();
  if (blocks.empty()) throw invalid_input_error("istft: empty spectra");
  const int K = cfg.bins();
  if (static_cast<int>(blocks.size()) != K) {
    throw invalid_input_error("istft: bin count does not match the configuration");
  }
  const Eigen::Index d = blocks[0].rows();
  const int M = static_cast<int>(blocks[0].cols());
  const int L = cfg.window_length;
  const Eigen::Index T = static_cast<Eigen::Index>(M - 1) * cfg.shift + L;
  const Eigen::VectorXd win = analysis_window(cfg);

  Eigen::VectorXd cola = Eigen::VectorXd::Zero(T);
  for (int m = 0; m < M; ++m) {
    for (int t = 0; t < L; ++t) cola(m * cfg.shift + t) += win(t) * win(t);
  }
  const double clamp = 1e-8 * cola.maxCoeff();

  Eigen::MatrixXd wave = Eigen::MatrixXd::Zero(d, T);
  detail::RealFft fft(L);
  for (Eigen::Index c = 0; c < d; ++c) {
    for (int m = 0; m < M; ++m) {
      for (int k = 0; k < K; ++k) fft.cplx_buf()[static_cast<std::size_t>(k)] = blocks[static_cast<std::size_t>(k)](c, m);
      const auto& frame = fft.inverse();
      for (int t = 0; t < L; ++t) {
        wave(c, m * cfg.shift + t) += frame[static_cast<std::size_t>(t)] * win(t);
      }
    }
    for (Eigen::Index t = 0; t < T; ++t) wave(c, t) /= std::max(cola(t), clamp);
  }
  return wave;
}

inline Eigen::MatrixXd istft(const MixtureTensor& spectra, const StftConfig& cfg) {
  return istft_blocks(spectra.blocks(), cfg);
}

/// Windowed per-frame signal energy, the time-domain counterpart of summing
/// |X(k, m)|^2 over bins.
inline Eigen::VectorXd frame_energies(const Eigen::VectorXd& wave, const StftConfig& cfg) {
  cfg.validate();
  const int M = stft_frames(wave.size(), cfg);
  if (M < 1) throw invalid_input_error("frame_energies: input shorter than the analysis window");
  const Eigen::VectorXd win = analysis_window(cfg);
  Eigen::VectorXd e(M);
  for (int m = 0; m < M; ++m) {
    double acc = 0.0;
    for (int t = 0; t < cfg.window_length; ++t) {
      const double v = wave(m * cfg.shift + t) * win(t);
      acc += v * v;
    }
    e(m) = acc;
  }
  return e;
}

}  // namespace ivex

#endif  // IVEX_STFT_HPP
