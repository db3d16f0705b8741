// Copyright 2026 The Keymask Authors.
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

#pragma once

#include <stdexcept>
#include <string>

namespace keymask {

// Base for all recoverable errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or length mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Malformed serialized data (bad RLE, bad JSON, unknown schema version).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Invalid input or configuration supplied by a caller.
class InputError : public Error {
 public:
  using Error::Error;
};

// A file could not be read or written. The message names the path.
class IoError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(int step, const std::string& what)
      : Error("diverged at step " + std::to_string(step) + ": " + what),
        step_(step) {}

  int step() const { return step_; }

 private:
  int step_;
};

}  // namespace keymask
