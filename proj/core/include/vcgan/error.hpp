#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vcgan {

enum class ErrorCode {
  kFileNotFound,
  kUnsupportedFormat,
  kAllSilent,
  kEmptyCollection,
  kDimensionMismatch,
  kEmptyDataset,
  kDuplicateSpeakerId,
  kInsufficientSpeakers,
  kWindowTooShort,
  kUnknownSpeaker,
  kInconsistentArch,
  kShapeMismatch,
  kUnknownWidth,
  kNonFiniteLoss,
  kNoValidWindows,
  kCheckpointMismatch,
  kInsufficientData,
  kUnknownTarget,
  kEmptyGroup,
  kInvalidArgument,
  kIoError,
};

std::string_view to_string(ErrorCode code);

// Every failure surfaced by the library carries one of the codes above so
// callers (and the CLI) can branch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace vcgan
