#include "unav/errors.hpp"

namespace unav {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidDepth: return "InvalidDepth";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::FrameMismatch: return "FrameMismatch";
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::InvalidPose: return "InvalidPose";
    case ErrorCode::EpisodeTerminated: return "EpisodeTerminated";
    case ErrorCode::GenerationFailed: return "GenerationFailed";
    case ErrorCode::SourceBlocked: return "SourceBlocked";
    case ErrorCode::Unreachable: return "Unreachable";
    case ErrorCode::NoNearbyTraversable: return "NoNearbyTraversable";
    case ErrorCode::BlockedAhead: return "BlockedAhead";
    case ErrorCode::EmptyPlan: return "EmptyPlan";
    case ErrorCode::UnparseableDecision: return "UnparseableDecision";
    case ErrorCode::GroundingFailed: return "GroundingFailed";
    case ErrorCode::GroundingDepthFailure: return "GroundingDepthFailure";
    case ErrorCode::UnknownWaypoint: return "UnknownWaypoint";
    case ErrorCode::EmptyFailure: return "EmptyFailure";
    case ErrorCode::BackendError: return "BackendError";
    case ErrorCode::MissingReference: return "MissingReference";
    case ErrorCode::NoData: return "NoData";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::BadConfig: return "BadConfig";
  }
  return "UnknownError";
}

}  // namespace unav
