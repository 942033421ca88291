// Copyright 2026 The dermtriage Authors.
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

#ifndef DERMTRIAGE_ERROR_H_
#define DERMTRIAGE_ERROR_H_

#include <stdexcept>
#include <string>

namespace dermtriage {

// Base of every error raised by the library. The CLI maps these to non-zero
// exit codes and the service maps them to HTTP status codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input documents (manifests, schemas, configs, request bodies).
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Well-formed input that violates a data invariant.
class DataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DecodeError : public Error {
 public:
  using Error::Error;
};

// Model used outside its contract (wrong granularity, mismatched features).
class ModelError : public Error {
 public:
  using Error::Error;
};

// A metric that is not defined for the given input (e.g. AUC with one class).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace dermtriage

#endif  // DERMTRIAGE_ERROR_H_
