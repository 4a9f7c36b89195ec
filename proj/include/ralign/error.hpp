#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ralign {

// Process exit codes used by the CLI.
enum class ExitCode : int { kOk = 0, kValidation = 1, kProvider = 2, kInternal = 3 };

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const noexcept { return ExitCode::kInternal; }
};

/// Bad input data or configuration. Carries every problem found, not just the first.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::string message);
  explicit ValidationError(std::vector<std::string> problems);

  const std::vector<std::string>& problems() const noexcept { return problems_; }
  ExitCode exit_code() const noexcept override { return ExitCode::kValidation; }

 private:
  std::vector<std::string> problems_;
};

enum class ProviderErrorKind {
  kTransport,       // connection refused, timeouts, 5xx, 429
  kAuthentication,  // 401 / 403
  kBadRequest,      // 4xx other than auth / rate limiting
  kMalformedResponse,
  kEmptyCompletion,
  kDimensionMismatch,
  kNotFound,  // mock provider has no canned answer
};

const char* to_string(ProviderErrorKind kind) noexcept;

class ProviderError : public Error {
 public:
  ProviderError(ProviderErrorKind kind, std::string message, int attempts = 1);

  ProviderErrorKind kind() const noexcept { return kind_; }
  int attempts() const noexcept { return attempts_; }
  bool transient() const noexcept { return kind_ == ProviderErrorKind::kTransport; }
  ExitCode exit_code() const noexcept override { return ExitCode::kProvider; }

 private:
  ProviderErrorKind kind_;
  int attempts_;
};

/// Raised when a training step produces a non-finite loss.
class TrainingError : public Error {
 public:
  TrainingError(std::string message, long step) : Error(std::move(message)), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

}  // namespace ralign
