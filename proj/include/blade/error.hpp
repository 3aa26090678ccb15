#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace blade {

enum class Errc {
  MissingField,
  DuplicateLabel,
  GoldenNotInOptions,
  InvalidLabel,
  InvalidDims,
  DimMismatch,
  NonFinite,
  SingularCovariance,
  EmptyState,
  InvalidConfig,
  ProtocolError,
  LengthMismatch,
  NonFiniteFitness,
  ObjectiveFailed,
  AuthError,
  Timeout,
  RateLimited,
  MalformedResponse,
  HttpError,
  TransportError,
  TemplateSlotMissing,
  EmptyInput,
  ParseError,
  ValidationError,
  IoError,
  InvalidState,
  EvaluationFailed,
};

std::string_view errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message, std::optional<std::size_t> line = std::nullopt);

  Errc code() const noexcept { return code_; }
  // 1-based line number for errors raised while reading line-oriented files.
  std::optional<std::size_t> line() const noexcept { return line_; }

 private:
  Errc code_;
  std::optional<std::size_t> line_;
};

// Raised by optimizers when a user objective throws; carries the point that failed.
class ObjectiveError : public Error {
 public:
  ObjectiveError(const std::string& message, std::vector<double> candidate);
  const std::vector<double>& candidate() const noexcept { return candidate_; }

 private:
  std::vector<double> candidate_;
};

}  // namespace blade
