// Copyright 2026 The Partiscope Authors
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

namespace partiscope {

/// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration; detected before any training.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Missing, corrupt, or malformed input data or artifact files.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure during optimization (NaN loss, singular covariance).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace partiscope
