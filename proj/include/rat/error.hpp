#pragma once

#include <stdexcept>
#include <string>

namespace rat {

enum class ErrorCode {
  InvalidArgument,
  Transport,
  ScriptExhausted,
  MalformedReply,
  EmptyText,
  DimensionMismatch,
  ZeroVector,
  DuplicateId,
  EmptyIndex,
  EmptyDocument,
  MissingBinding,
  UnknownBinding,
  UnknownTemplate,
  NoThoughts,
  NoDecisiveMatches,
  UnknownItem,
  UnknownMatch,
  DuplicateVote,
  EmptyPool,
  Io,
  Config,
};

const char* to_string(ErrorCode code);

/// Base exception for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised after the retry budget is spent; carries how many attempts were made.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, int attempts, int status = 0)
      : Error(ErrorCode::Transport, what), attempts_(attempts), status_(status) {}

  int attempts() const noexcept { return attempts_; }
  int status() const noexcept { return status_; }

 private:
  int attempts_;
  int status_;
};

}  // namespace rat
