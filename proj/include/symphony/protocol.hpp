#pragma once

// Values exchanged between the reflection agent and the orchestrator.

#include <optional>
#include <string>
#include <string_view>

#include "symphony/error.hpp"

namespace symphony {

enum class ReflectionState { OnTrack, Completed, Infeasible, OffTrack };
enum class OffTrackError { GUIError, LackOfTutorial, CodeError, OtherError };

inline std::string_view to_string(ReflectionState s) {
  switch (s) {
    case ReflectionState::OnTrack: return "OnTrack";
    case ReflectionState::Completed: return "Completed";
    case ReflectionState::Infeasible: return "Infeasible";
    case ReflectionState::OffTrack: return "OffTrack";
  }
  return "OnTrack";
}

inline std::string_view to_string(OffTrackError e) {
  switch (e) {
    case OffTrackError::GUIError: return "GUIError";
    case OffTrackError::LackOfTutorial: return "LackOfTutorial";
    case OffTrackError::CodeError: return "CodeError";
    case OffTrackError::OtherError: return "OtherError";
  }
  return "OtherError";
}

inline std::optional<ReflectionState> reflection_state_from_string(std::string_view s) {
  for (auto v : {ReflectionState::OnTrack, ReflectionState::Completed, ReflectionState::Infeasible,
                 ReflectionState::OffTrack})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

inline std::optional<OffTrackError> off_track_error_from_string(std::string_view s) {
  for (auto v : {OffTrackError::GUIError, OffTrackError::LackOfTutorial, OffTrackError::CodeError,
                 OffTrackError::OtherError})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

class ReflectionMessage {
 public:
  // Enforces error_type <=> OffTrack and a non-empty explanation.
  ReflectionMessage(ReflectionState state, std::optional<OffTrackError> error_type,
                    std::string explanation, std::optional<std::string> recalled_knowledge = {})
      : state_(state),
        error_type_(error_type),
        explanation_(std::move(explanation)),
        recalled_knowledge_(std::move(recalled_knowledge)) {
    if ((state == ReflectionState::OffTrack) != error_type.has_value())
      fail(ErrorCode::InconsistentVerdict,
           "error type must be present exactly when the state is OffTrack");
    if (explanation_.empty()) fail(ErrorCode::InconsistentVerdict, "reflection explanation is empty");
  }

  ReflectionState state() const { return state_; }
  const std::optional<OffTrackError>& error_type() const { return error_type_; }
  const std::string& explanation() const { return explanation_; }
  const std::optional<std::string>& recalled_knowledge() const { return recalled_knowledge_; }

  friend bool operator==(const ReflectionMessage&, const ReflectionMessage&) = default;

 private:
  ReflectionState state_;
  std::optional<OffTrackError> error_type_;
  std::string explanation_;
  std::optional<std::string> recalled_knowledge_;
};

// A historical window [historical_start, historical_start + length) that
// matches the current window [current_start, current_start + length).
struct LoopMatch {
  int historical_start = 0;
  int current_start = 0;
  int length = 0;
  friend bool operator==(const LoopMatch&, const LoopMatch&) = default;
};

struct AuxiliarySignals {
  std::optional<bool> gui_failure;
  std::optional<LoopMatch> loop;
  bool coder_pending_verification = false;
};

struct RmaVerdict {
  ReflectionMessage reflection;
  bool milestone = false;
  std::optional<std::string> knowledge;
};

}  // namespace symphony
