// Copyright 2026 The microreg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace microreg {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes do not conform for the requested operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A NaN or Inf reached an operation boundary.
class NonFiniteError : public Error {
public:
    using Error::Error;
};

/// Misuse of the tape: non-scalar output, consumed tape, foreign variable.
class TapeError : public Error {
public:
    using Error::Error;
};

/// Finite-difference step vanished in floating point.
class DegenerateStepError : public Error {
public:
    using Error::Error;
};

/// Invalid user input: configuration values, contracts on arguments.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Configuration text could not be parsed. Carries the 1-based line number.
class ConfigError : public ValidationError {
public:
    ConfigError(std::size_t line, const std::string& what)
        : ValidationError("line " + std::to_string(line) + ": " + what), line_(line)
    {
    }

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Malformed or truncated file on disk.
class FormatError : public Error {
public:
    using Error::Error;
};

} // namespace microreg
