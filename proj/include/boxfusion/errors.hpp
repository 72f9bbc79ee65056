/* Copyright 2026 The boxfusion Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace boxfusion {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input value that cannot be represented (NaN/inf coordinates, bad score).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Caller broke a documented precondition.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Parameter outside its legal domain (sigma <= 0, unknown method, ...).
class InvalidParameter : public Error {
 public:
  using Error::Error;
};

// Inconsistent configuration: missing image dimensions, weight count
// mismatch.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed file content. `record()` is the 1-based line number for CSV
// and the 0-based array index for JSON.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t record,
             const std::string& what)
      : Error(source + ": record " + std::to_string(record) + ": " + what),
        record_(record) {}

  std::size_t record() const noexcept { return record_; }

 private:
  std::size_t record_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace boxfusion
