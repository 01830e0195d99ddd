/*
 * Copyright 2026 The FD-VAE Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FDVAE_ERROR_HPP_
#define FDVAE_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace fdvae {

// Broad failure category. The CLI maps each category onto an exit status.
enum class ErrorCategory {
  kConfig,    // exit 2
  kData,      // exit 3
  kTraining,  // exit 4
  kInternal,  // exit 1
};

// Every library failure is an Error carrying a machine-readable code such as
// "InsufficientRecords" or "UndefinedRate" plus a human-readable message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, std::string code, const std::string& message)
      : std::runtime_error(code + ": " + message),
        category_(category),
        code_(std::move(code)) {}

  ErrorCategory category() const { return category_; }
  const std::string& code() const { return code_; }

 private:
  ErrorCategory category_;
  std::string code_;
};

inline Error ConfigError(std::string code, const std::string& message) {
  return Error(ErrorCategory::kConfig, std::move(code), message);
}
inline Error DataError(std::string code, const std::string& message) {
  return Error(ErrorCategory::kData, std::move(code), message);
}
inline Error TrainingError(std::string code, const std::string& message) {
  return Error(ErrorCategory::kTraining, std::move(code), message);
}
inline Error InternalError(std::string code, const std::string& message) {
  return Error(ErrorCategory::kInternal, std::move(code), message);
}

inline int ExitStatusFor(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kConfig:
      return 2;
    case ErrorCategory::kData:
      return 3;
    case ErrorCategory::kTraining:
      return 4;
    case ErrorCategory::kInternal:
      return 1;
  }
  return 1;
}

inline const char* CategoryName(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kConfig:
      return "ConfigError";
    case ErrorCategory::kData:
      return "DataError";
    case ErrorCategory::kTraining:
      return "TrainingError";
    case ErrorCategory::kInternal:
      return "InternalError";
  }
  return "InternalError";
}

}  // namespace fdvae

#endif  // FDVAE_ERROR_HPP_
