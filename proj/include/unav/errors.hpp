#pragma once

#include <stdexcept>
#include <string>

namespace unav {

enum class ErrorCode {
  InvalidDepth,
  OutOfBounds,
  FrameMismatch,
  BehindCamera,
  InvalidPose,
  EpisodeTerminated,
  GenerationFailed,
  SourceBlocked,
  Unreachable,
  NoNearbyTraversable,
  BlockedAhead,
  EmptyPlan,
  UnparseableDecision,
  GroundingFailed,
  GroundingDepthFailure,
  UnknownWaypoint,
  EmptyFailure,
  BackendError,
  MissingReference,
  NoData,
  SchemaMismatch,
  BadConfig,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace unav
