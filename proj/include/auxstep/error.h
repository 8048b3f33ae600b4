// Copyright 2026 The auxstep Authors.
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

#ifndef AUXSTEP_ERROR_H_
#define AUXSTEP_ERROR_H_

#include <stdexcept>
#include <string>

namespace auxstep {

// Base class for every error raised by the library. The CLI maps
// ValidationError to exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Bad user input: configs, flags, out-of-range arguments, unmet preconditions.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Operand shapes incompatible with a primitive.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated files, bad magic, version mismatch.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Filesystem failures (missing files, unwritable directories).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace auxstep

#endif  // AUXSTEP_ERROR_H_
