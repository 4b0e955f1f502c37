#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace losscost {

enum class ErrorCode {
  MissingColumn,
  TypeMismatch,
  NegativeResponse,
  NonPositiveExposure,
  KTooLarge,
  InvalidConfig,
  PowerOutOfRange,
  NotConverged,
  ColumnMismatch,
  DegenerateResponse,
  NonPositiveDenominator,
  OverlappingBlocks,
  IdMismatch,
  ConstantFeature,
  ParseError,
  Io,
};

std::string_view to_string(ErrorCode code);

// Every library failure surfaces as one of these; the code drives CLI exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class NotConverged : public Error {
 public:
  NotConverged(const std::string& what, double gap, std::size_t iterations)
      : Error(ErrorCode::NotConverged, what), gap_(gap), iterations_(iterations) {}

  /// Largest violated optimality residual at the last iterate.
  double gap() const noexcept { return gap_; }
  std::size_t iterations() const noexcept { return iterations_; }

 private:
  double gap_;
  std::size_t iterations_;
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::TypeMismatch: return "TypeMismatch";
    case ErrorCode::NegativeResponse: return "NegativeResponse";
    case ErrorCode::NonPositiveExposure: return "NonPositiveExposure";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::PowerOutOfRange: return "PowerOutOfRange";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::ColumnMismatch: return "ColumnMismatch";
    case ErrorCode::DegenerateResponse: return "DegenerateResponse";
    case ErrorCode::NonPositiveDenominator: return "NonPositiveDenominator";
    case ErrorCode::OverlappingBlocks: return "OverlappingBlocks";
    case ErrorCode::IdMismatch: return "IdMismatch";
    case ErrorCode::ConstantFeature: return "ConstantFeature";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace losscost
