// Copyright (c) 2026 The convcurate Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace convcurate {

enum class ErrorCode {
  kInvalidArgument,
  kSilentInput,
  kLengthMismatch,
  kZeroNorm,
  kEmptyReference,
  kIo,
  kProtocol,
  kTimeout,
  kCapability,
  kBackend,
  kSchema,
  kConfig,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kSilentInput: return "silent_input";
    case ErrorCode::kLengthMismatch: return "length_mismatch";
    case ErrorCode::kZeroNorm: return "zero_norm";
    case ErrorCode::kEmptyReference: return "empty_reference";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kProtocol: return "protocol";
    case ErrorCode::kTimeout: return "timeout";
    case ErrorCode::kCapability: return "capability";
    case ErrorCode::kBackend: return "backend";
    case ErrorCode::kSchema: return "schema";
    case ErrorCode::kConfig: return "config";
  }
  return "unknown";
}

// Every contract violation in the library surfaces as this exception.
// Expected degradations (missing references, failed backends) are
// reported through flags instead.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace convcurate
