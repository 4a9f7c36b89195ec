#include "ralign/error.hpp"

namespace ralign {

namespace {

std::string join_problems(const std::vector<std::string>& problems) {
  std::string out;
  for (const auto& p : problems) {
    if (!out.empty()) out += "; ";
    out += p;
  }
  return out;
}

}  // namespace

ValidationError::ValidationError(std::string message)
    : Error(message), problems_{std::move(message)} {}

ValidationError::ValidationError(std::vector<std::string> problems)
    : Error(join_problems(problems)), problems_(std::move(problems)) {}

const char* to_string(ProviderErrorKind kind) noexcept {
  switch (kind) {
    case ProviderErrorKind::kTransport: return "transport";
    case ProviderErrorKind::kAuthentication: return "authentication";
    case ProviderErrorKind::kBadRequest: return "bad_request";
    case ProviderErrorKind::kMalformedResponse: return "malformed_response";
    case ProviderErrorKind::kEmptyCompletion: return "empty_completion";
    case ProviderErrorKind::kDimensionMismatch: return "dimension_mismatch";
    case ProviderErrorKind::kNotFound: return "not_found";
  }
  return "unknown";
}

ProviderError::ProviderError(ProviderErrorKind kind, std::string message, int attempts)
    : Error(std::string(to_string(kind)) + ": " + message), kind_(kind), attempts_(attempts) {}

}  // namespace ralign
