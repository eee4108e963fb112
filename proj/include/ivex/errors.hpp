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

#ifndef IVEX_ERRORS_HPP
#define IVEX_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace ivex {

/// Base class for all ivex errors.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or out-of-contract input (empty blocks, length mismatches, bad files).
class invalid_input_error : public error {
 public:
  using error::error;
};

/// Weight vector carries no usable information (all zero).
class degenerate_weights_error : public error {
 public:
  using error::error;
};

/// Covariance matrix is numerically singular (condition estimate above the limit).
class singular_covariance_error : public error {
 public:
  using error::error;
};

/// Extraction filter has zero output power.
class degenerate_filter_error : public error {
 public:
  using error::error;
};

/// Newton step denominator fell below the step guard.
class degenerate_step_error : public error {
 public:
  degenerate_step_error(const std::string& msg, int mixture, int iteration = -1)
      : error(msg), mixture_(mixture), iteration_(iteration) {}
  int mixture() const { return mixture_; }
  int iteration() const { return iteration_; }

 private:
  int mixture_;
  int iteration_;
};

/// A statistic became non-finite.
class numerical_failure_error : public error {
 public:
  explicit numerical_failure_error(const std::string& msg, int mixture = -1)
      : error(msg), mixture_(mixture) {}
  int mixture() const { return mixture_; }

 private:
  int mixture_;
};

}  // namespace ivex

#endif  // IVEX_ERRORS_HPP
