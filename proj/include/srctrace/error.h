// Copyright 2026 The srctrace Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SRCTRACE_ERROR_H_
#define SRCTRACE_ERROR_H_

#include <stdexcept>
#include <string>

namespace srctrace {

// Process exit codes shared by the CLI and anything that maps errors to them.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitData = 3,
  kExitNumerical = 4,
};

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual ExitCode exit_code() const { return kExitData; }
};

// Bad or inconsistent input data: malformed files, schema violations,
// id mismatches.
class DataError : public Error {
 public:
  using Error::Error;
};

// Malformed binary payload. The message always names the byte offset.
class FormatError : public DataError {
 public:
  FormatError(std::size_t offset, const std::string& what)
      : DataError("offset " + std::to_string(offset) + ": " + what),
        offset_(offset),
        detail_(what) {}
  std::size_t offset() const { return offset_; }
  const std::string& detail() const { return detail_; }

 private:
  std::size_t offset_;
  std::string detail_;
};

class ValidationError : public DataError {
 public:
  using DataError::DataError;
};

class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

// Inputs that make a quantity undefined (empty batch, one-class EER, ...).
class DegenerateInputError : public DataError {
 public:
  using DataError::DataError;
};

class CheckpointError : public DataError {
 public:
  using DataError::DataError;
};

class UsageError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const override { return kExitUsage; }
};

class NumericalError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const override { return kExitNumerical; }
};

class NotPsdError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace srctrace

#endif  // SRCTRACE_ERROR_H_
