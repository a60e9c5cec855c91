#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tplad {

enum class ErrorKind {
  EmptyLine,
  LengthMismatch,
  NoLiterals,
  InsufficientCorpus,
  ZeroVector,
  AllZeroWeights,
  EmptyLibrary,
  UnknownUnit,
  EmptyUser,
  NotANumber,
  UnseenState,
  LayoutMismatch,
  TooFewSamples,
  ShapeMismatch,
  DivergedLoss,
  ModelMissing,
  UnfittedTemplate,
  FormatError,
  AlignmentError,
  ProtocolError,
  ManifestError,
  VersionError,
  ConfigError,
  ProviderError,
  IoError,
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), detail_(what) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

}  // namespace tplad
