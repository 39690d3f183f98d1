// Copyright 2026 The FRMD Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FRMD_ERRORS_H_
#define FRMD_ERRORS_H_

#include <cstdint>
#include <stdexcept>
#include <string>

namespace frmd {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration values or argument combinations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Tensor/trajectory shapes that do not match a declared layout.
class LayoutError : public Error {
 public:
  using Error::Error;
};

// Query outside a tabulated or admissible range.
class RangeError : public Error {
 public:
  using Error::Error;
};

// Singular systems, non-finite intermediates.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Divergence or non-finite values during optimization.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, int64_t step = -1)
      : Error(step >= 0 ? what + " (step " + std::to_string(step) + ")"
                        : what),
        step_(step) {}
  int64_t step() const { return step_; }

 private:
  int64_t step_;
};

// API misuse such as replaying a consumed tape.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input files, checkpoints, reports.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Filesystem failures.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace frmd

#endif  // FRMD_ERRORS_H_
