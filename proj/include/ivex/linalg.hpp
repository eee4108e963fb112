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

#ifndef IVEX_LINALG_HPP
#define IVEX_LINALG_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <sstream>

#include <Eigen/Dense>

#include "ivex/errors.hpp"

namespace ivex {

using cd = std::complex<double>;
using MatC = Eigen::MatrixXcd;
using VecC = Eigen::VectorXcd;

/// Relative diagonal loading applied before every Hermitian solve.
inline constexpr double kLoadingRel = 1e-9;
/// Condition-number estimate above which a covariance counts as singular.
inline constexpr double kCondLimit = 1e12;

/// Forces exact Hermitian symmetry in place: M(i,j) == conj(M(j,i)) bitwise.
inline void hermitize(MatC& m) {
  const Eigen::Index d = m.rows();
  for (Eigen::Index j = 0; j < d; ++j) {
    m(j, j) = cd(m(j, j).real(), 0.0);
    for (Eigen::Index i = j + 1; i < d; ++i) {
      const cd v = 0.5 * (m(i, j) + std::conj(m(j, i)));
      m(i, j) = v;
      m(j, i) = std::conj(v);
    }
  }
}

inline MatC hermitized(MatC m) {
  hermitize(m);
  return m;
}

inline double quad_form_real(const MatC& m, const VecC& w) {
  return std::real(cd(w.adjoint() * m * w));
}

/// |<u,v>| / (|u||v|); phase-invariant direction agreement.
inline double cosine_abs(const VecC& u, const VecC& v) {
  const double nu = u.norm(), nv = v.norm();
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return std::abs(cd(u.adjoint() * v)) / (nu * nv);
}

/// Reporting cap for power ratios in dB.
inline constexpr double kSirCapDb = 150.0;

inline double power_ratio_db(double p_num, double p_den) {
  if (p_num <= 0.0) return -kSirCapDb;
  if (p_den <= 0.0) return kSirCapDb;
  return std::clamp(10.0 * std::log10(p_num / p_den), -kSirCapDb, kSirCapDb);
}

/// Loaded Cholesky factorization of a Hermitian PSD matrix.
///
/// Adds kLoadingRel * trace/d to the diagonal, rejects matrices whose loaded
/// condition estimate exceeds kCondLimit, and serves repeated solves. No
/// explicit inverse is ever formed.
class HermitianSolver {
 public:
  explicit HermitianSolver(const MatC& m, const char* what = "covariance") {
    loaded_ = hermitized(m);
    const Eigen::Index d = loaded_.rows();
    lambda_ = kLoadingRel * std::real(loaded_.trace()) / static_cast<double>(d);
    loaded_.diagonal().array() += lambda_;
    Eigen::SelfAdjointEigenSolver<MatC> eig(loaded_, Eigen::EigenvaluesOnly);
    const double emin = eig.eigenvalues().minCoeff();
    const double emax = eig.eigenvalues().maxCoeff();
    if (!(emin > 0.0) || !std::isfinite(emax) || emax / emin > kCondLimit) {
      std::ostringstream os;
      os << "singular " << what << ": condition estimate "
         << (emin > 0.0 ? emax / emin : std::numeric_limits<double>::infinity())
         << " exceeds " << kCondLimit;
      throw singular_covariance_error(os.str());
    }
    cond_ = emax / emin;
    llt_.compute(loaded_);
    if (llt_.info() != Eigen::Success) {
      throw singular_covariance_error("Cholesky factorization failed");
    }
  }

  VecC solve(const VecC& b) const { return llt_.solve(b); }
  MatC solve(const MatC& b) const { return llt_.solve(b); }

  const MatC& loaded() const { return loaded_; }
  double loading() const { return lambda_; }
  double condition() const { return cond_; }

 private:
  MatC loaded_;
  Eigen::LLT<MatC> llt_;
  double lambda_ = 0.0;
  double cond_ = 0.0;
};

}  // namespace ivex

#endif  // IVEX_LINALG_HPP
