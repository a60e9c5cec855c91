#include "tplad/error.hpp"

namespace tplad {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::EmptyLine: return "EmptyLine";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::NoLiterals: return "NoLiterals";
    case ErrorKind::InsufficientCorpus: return "InsufficientCorpus";
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::AllZeroWeights: return "AllZeroWeights";
    case ErrorKind::EmptyLibrary: return "EmptyLibrary";
    case ErrorKind::UnknownUnit: return "UnknownUnit";
    case ErrorKind::EmptyUser: return "EmptyUser";
    case ErrorKind::NotANumber: return "NotANumber";
    case ErrorKind::UnseenState: return "UnseenState";
    case ErrorKind::LayoutMismatch: return "LayoutMismatch";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::DivergedLoss: return "DivergedLoss";
    case ErrorKind::ModelMissing: return "ModelMissing";
    case ErrorKind::UnfittedTemplate: return "UnfittedTemplate";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::AlignmentError: return "AlignmentError";
    case ErrorKind::ProtocolError: return "ProtocolError";
    case ErrorKind::ManifestError: return "ManifestError";
    case ErrorKind::VersionError: return "VersionError";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::ProviderError: return "ProviderError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace tplad
