#include "blade/error.hpp"

#include <utility>

namespace blade {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::MissingField: return "MissingField";
    case Errc::DuplicateLabel: return "DuplicateLabel";
    case Errc::GoldenNotInOptions: return "GoldenNotInOptions";
    case Errc::InvalidLabel: return "InvalidLabel";
    case Errc::InvalidDims: return "InvalidDims";
    case Errc::DimMismatch: return "DimMismatch";
    case Errc::NonFinite: return "NonFinite";
    case Errc::SingularCovariance: return "SingularCovariance";
    case Errc::EmptyState: return "EmptyState";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::ProtocolError: return "ProtocolError";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::NonFiniteFitness: return "NonFiniteFitness";
    case Errc::ObjectiveFailed: return "ObjectiveFailed";
    case Errc::AuthError: return "AuthError";
    case Errc::Timeout: return "Timeout";
    case Errc::RateLimited: return "RateLimited";
    case Errc::MalformedResponse: return "MalformedResponse";
    case Errc::HttpError: return "HttpError";
    case Errc::TransportError: return "TransportError";
    case Errc::TemplateSlotMissing: return "TemplateSlotMissing";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::ParseError: return "ParseError";
    case Errc::ValidationError: return "ValidationError";
    case Errc::IoError: return "IoError";
    case Errc::InvalidState: return "InvalidState";
    case Errc::EvaluationFailed: return "EvaluationFailed";
  }
  return "Unknown";
}

namespace {

std::string format_message(Errc code, const std::string& message, std::optional<std::size_t> line) {
  std::string out(errc_name(code));
  if (line) {
    out += " (line " + std::to_string(*line) + ")";
  }
  out += ": ";
  out += message;
  return out;
}

}  // namespace

Error::Error(Errc code, const std::string& message, std::optional<std::size_t> line)
    : std::runtime_error(format_message(code, message, line)), code_(code), line_(line) {}

ObjectiveError::ObjectiveError(const std::string& message, std::vector<double> candidate)
    : Error(Errc::ObjectiveFailed, message), candidate_(std::move(candidate)) {}

}  // namespace blade
