#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cef {

enum class ErrorKind {
  // score arithmetic
  EmptyAnswerSet,
  DegenerateSource,
  WiringError,
  // prompt registry
  MissingPlaceholder,
  UnknownPlaceholder,
  PromptAssetError,
  // model-output parsing
  NoJsonFound,
  MalformedItem,
  WrongCount,
  ProtocolViolation,
  UnparseableVerdict,
  // provider
  ExhaustedRetries,
  BadRequest,
  EmptyLedger,
  // reliability
  NoOwnQuestions,
  NoConsensusAnywhere,
  JudgeUnusable,
  // engine
  AllPairsFailed,
  BacktranslationFailed,
  // studies
  ConstantSeries,
  NoOverlap,
  DuplicateKey,
  // store
  ClosedRun,
  CorruptEntry,
  // generic
  InvalidArgument,
  IoError,
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Carries the observed/requested sizes so callers can decide whether a long
// generation is salvageable by truncation.
class WrongCountError : public Error {
 public:
  WrongCountError(std::size_t got, std::size_t expected)
      : Error(ErrorKind::WrongCount,
              "got " + std::to_string(got) + " questions, expected " +
                  std::to_string(expected)),
        got_(got),
        expected_(expected) {}

  std::size_t got() const noexcept { return got_; }
  std::size_t expected() const noexcept { return expected_; }

 private:
  std::size_t got_;
  std::size_t expected_;
};

}  // namespace cef
