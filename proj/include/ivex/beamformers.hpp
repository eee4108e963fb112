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

#ifndef IVEX_BEAMFORMERS_HPP
#define IVEX_BEAMFORMERS_HPP

#include "ivex/linalg.hpp"
#include "ivex/signal_model.hpp"

namespace ivex {

/// Distortionless beamformer plus the quadratic form a^H M^-1 a kept for
/// diagnostics. w^H a == 1 holds exactly by construction.
struct BeamformerOutput {
  SeparatingVector w;
  cd denom;
};

/// w = M^-1 a / (a^H M^-1 a) on a prefactored solver. Shared by every
/// constraint below; oc_constraint == mpdr is therefore bitwise.
inline BeamformerOutput distortionless(const HermitianSolver& solver, const VecC& a) {
  if (a.size() < 1 || a.norm() == 0.0) {
    throw invalid_input_error("beamformer: steering vector is zero");
  }
  const VecC u = solver.solve(a);
  const cd denom = cd(a.adjoint() * u);
  if (!std::isfinite(denom.real()) || !std::isfinite(denom.imag()) || denom == cd(0.0, 0.0)) {
    throw numerical_failure_error("beamformer: degenerate quadratic form");
  }
  return {SeparatingVector(u / denom), denom};
}

/// MVDR: minimizes residual noise power w^H C_y w subject to w^H a = 1.
inline BeamformerOutput mvdr(const MatC& c_y, const VecC& a) {
  return distortionless(HermitianSolver(c_y, "noise covariance"), a);
}

/// MPDR: same formula on the observation covariance C_x.
inline BeamformerOutput mpdr(const MatC& c_x, const VecC& a) {
  return distortionless(HermitianSolver(c_x, "observation covariance"), a);
}

/// Orthogonal constraint: couples w to a through the sample covariance so the
/// extracted source and the blocked background are sample-uncorrelated.
/// Algebraically identical to mpdr on estimates.
inline BeamformerOutput oc_constraint(const MatC& c_x_hat, const VecC& a_hat) {
  return mpdr(c_x_hat, a_hat);
}

/// The weighted-covariance constraint: w_alpha = C_alpha^-1 a / (a^H C_alpha^-1 a).
/// With alpha == 1 this reduces to oc_constraint; with C_alpha approximating
/// the noise covariance it approximates MVDR.
inline BeamformerOutput mvdr_constraint(const MatC& c_alpha_hat, const VecC& a_hat) {
  return distortionless(HermitianSolver(c_alpha_hat, "weighted covariance"), a_hat);
}

/// a = C_x w / (w^H C_x w). Re-coupling the mixing vector to the current
/// filter zeroes the sample correlation between the extracted source and the
/// blocked background, which the Newton step assumes.
inline MixingVector reproject_mixing(const MatC& c_x_hat, const VecC& w_hat) {
  const VecC cw = c_x_hat * w_hat;
  const double sigma2 = std::real(cd(w_hat.adjoint() * cw));
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) {
    throw degenerate_filter_error("reproject_mixing: filter has zero output power");
  }
  return MixingVector(cw / sigma2);
}

}  // namespace ivex

#endif  // IVEX_BEAMFORMERS_HPP
