#include "sai/error.hpp"

namespace sai {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::DegenerateScale: return "DegenerateScale";
    case ErrorCode::EmptySession: return "EmptySession";
    case ErrorCode::ChannelMismatch: return "ChannelMismatch";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::BadGeometry: return "BadGeometry";
    case ErrorCode::SourceUnavailable: return "SourceUnavailable";
    case ErrorCode::InsufficientCoverage: return "InsufficientCoverage";
    case ErrorCode::NoContrast: return "NoContrast";
    case ErrorCode::DensityUnreachable: return "DensityUnreachable";
    case ErrorCode::LimitExceeded: return "LimitExceeded";
    case ErrorCode::NoValidPixels: return "NoValidPixels";
    case ErrorCode::ManifestMissing: return "ManifestMissing";
    case ErrorCode::ImageMissing: return "ImageMissing";
    case ErrorCode::PoseInvalid: return "PoseInvalid";
    case ErrorCode::MixedChannels: return "MixedChannels";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::MalformedMessage: return "MalformedMessage";
    case ErrorCode::NoSession: return "NoSession";
    case ErrorCode::EncodingFailure: return "EncodingFailure";
  }
  return "Unknown";
}

bool is_data_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::ManifestMissing:
    case ErrorCode::ImageMissing:
    case ErrorCode::PoseInvalid:
    case ErrorCode::MixedChannels:
    case ErrorCode::ChannelMismatch:
    case ErrorCode::SourceUnavailable:
    case ErrorCode::EmptySession:
    case ErrorCode::IoFailure:
      return true;
    default:
      return false;
  }
}

}  // namespace sai
