#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sai {

enum class ErrorCode {
  InvalidArgument,
  BehindCamera,
  DegenerateScale,
  EmptySession,
  ChannelMismatch,
  IndexOutOfRange,
  BadGeometry,
  SourceUnavailable,
  InsufficientCoverage,
  NoContrast,
  DensityUnreachable,
  LimitExceeded,
  NoValidPixels,
  ManifestMissing,
  ImageMissing,
  PoseInvalid,
  MixedChannels,
  IoFailure,
  MalformedMessage,
  NoSession,
  EncodingFailure,
};

std::string_view to_string(ErrorCode code);

// True for errors caused by the input data (missing files, bad manifests,
// incompatible channels) as opposed to failures during computation.
bool is_data_error(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace sai
