#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace fnegraph {

enum class ErrorCode {
  MissingFile,
  SchemaError,
  LayerMismatch,
  LengthMismatch,
  NonFiniteValue,
  ShapeMismatch,
  MissingLayer,
  TooFewImages,
  DegenerateLayer,
  EmptyGraph,
  TooManyCommunities,
  UnknownImage,
  InvalidConfig,
  IoError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::LayerMismatch: return "LayerMismatch";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::MissingLayer: return "MissingLayer";
    case ErrorCode::TooFewImages: return "TooFewImages";
    case ErrorCode::DegenerateLayer: return "DegenerateLayer";
    case ErrorCode::EmptyGraph: return "EmptyGraph";
    case ErrorCode::TooManyCommunities: return "TooManyCommunities";
    case ErrorCode::UnknownImage: return "UnknownImage";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 protected:
  struct Raw {};
  Error(Raw, ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

 private:
  ErrorCode code_;
};

/// Pipeline failures keep the original code and name the stage that raised them.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& cause)
      : Error(Raw{}, cause.code(), "[" + stage + "] " + cause.what()),
        stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace fnegraph
