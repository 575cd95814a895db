#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace expweaver {

// Every failure the library reports deliberately carries one of these codes.
// Tests and the CLI dispatch on the code, not on message text.
enum class Errc {
  // context / trajectory
  missing_goal,
  index_mismatch,
  step_after_terminal,
  // policy backends
  no_script_match,
  transport_error,
  api_error,
  // embedder
  dimension_mismatch,
  // memory
  store_frozen,
  retrieval_disabled,
  judge_format_error,
  schema_version_mismatch,
  corrupt_snapshot,
  // strategy runner
  retrieval_budget_exceeded,
  non_positive_length,
  empty_log,
  log_not_interwoven,
  // environments
  unknown_env_kind,
  episode_finished,
  diverged_from_trace,
  recording_exhausted,
  // grpo
  group_too_small,
  non_positive_ratio,
  length_mismatch,
  // analytics
  no_logprobs,
  // cli / config
  config_error,
};

inline std::string_view errc_name(Errc c) {
  switch (c) {
    case Errc::missing_goal: return "MissingGoal";
    case Errc::index_mismatch: return "IndexMismatch";
    case Errc::step_after_terminal: return "StepAfterTerminal";
    case Errc::no_script_match: return "NoScriptMatch";
    case Errc::transport_error: return "TransportError";
    case Errc::api_error: return "ApiError";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::store_frozen: return "StoreFrozen";
    case Errc::retrieval_disabled: return "RetrievalDisabled";
    case Errc::judge_format_error: return "JudgeFormatError";
    case Errc::schema_version_mismatch: return "SchemaVersionMismatch";
    case Errc::corrupt_snapshot: return "CorruptSnapshot";
    case Errc::retrieval_budget_exceeded: return "RetrievalBudgetExceeded";
    case Errc::non_positive_length: return "NonPositiveLength";
    case Errc::empty_log: return "EmptyLog";
    case Errc::log_not_interwoven: return "LogNotInterwoven";
    case Errc::unknown_env_kind: return "UnknownEnvKind";
    case Errc::episode_finished: return "EpisodeFinished";
    case Errc::diverged_from_trace: return "DivergedFromTrace";
    case Errc::recording_exhausted: return "RecordingExhausted";
    case Errc::group_too_small: return "GroupTooSmall";
    case Errc::non_positive_ratio: return "NonPositiveRatio";
    case Errc::length_mismatch: return "LengthMismatch";
    case Errc::no_logprobs: return "NoLogprobs";
    case Errc::config_error: return "ConfigError";
  }
  return "UnknownError";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// Remote-backend failure with the HTTP status and response body attached.
class ApiError : public Error {
 public:
  ApiError(int status, std::string body)
      : Error(Errc::api_error, "status " + std::to_string(status)),
        status_(status),
        body_(std::move(body)) {}

  int status() const noexcept { return status_; }
  const std::string& body() const noexcept { return body_; }

 private:
  int status_;
  std::string body_;
};

// Replay mismatch carrying both sides of the divergence.
class DivergedFromTrace : public Error {
 public:
  DivergedFromTrace(std::size_t index, std::string expected, std::string actual)
      : Error(Errc::diverged_from_trace,
              "at step " + std::to_string(index) + ": expected \"" + expected +
                  "\", got \"" + actual + "\""),
        index_(index),
        expected_(std::move(expected)),
        actual_(std::move(actual)) {}

  std::size_t index() const noexcept { return index_; }
  const std::string& expected() const noexcept { return expected_; }
  const std::string& actual() const noexcept { return actual_; }

 private:
  std::size_t index_;
  std::string expected_;
  std::string actual_;
};

[[noreturn]] inline void throw_error(Errc code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace expweaver
