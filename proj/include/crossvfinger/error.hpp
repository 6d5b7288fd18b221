#ifndef CROSSVFINGER_ERROR_HPP
#define CROSSVFINGER_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace cvf {

enum class ErrorCode {
  FileNotFound,
  UnsupportedFormat,
  ImageTooSmall,
  ZeroVariance,
  EmptyForeground,
  NoValidPixels,
  OffsetTooLarge,
  DegenerateDescriptor,
  InvalidConfig,
  TooFewSamples,
  NumericalFailure,
  DimensionMismatch,
  CorruptModel,
  VersionMismatch,
  CorruptFile,
  ModelMismatch,
  UnknownSubject,
  DBWriteFailure,
  EmptyDataset,
  EmptyScores,
  IOFailure,
  InvalidProfile,
  ParseError,
  ValidationError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::FileNotFound: return "FileNotFound";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::EmptyForeground: return "EmptyForeground";
    case ErrorCode::NoValidPixels: return "NoValidPixels";
    case ErrorCode::OffsetTooLarge: return "OffsetTooLarge";
    case ErrorCode::DegenerateDescriptor: return "DegenerateDescriptor";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::CorruptModel: return "CorruptModel";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::ModelMismatch: return "ModelMismatch";
    case ErrorCode::UnknownSubject: return "UnknownSubject";
    case ErrorCode::DBWriteFailure: return "DBWriteFailure";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::EmptyScores: return "EmptyScores";
    case ErrorCode::IOFailure: return "IOFailure";
    case ErrorCode::InvalidProfile: return "InvalidProfile";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI) can branch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cvf

#endif  // CROSSVFINGER_ERROR_HPP
