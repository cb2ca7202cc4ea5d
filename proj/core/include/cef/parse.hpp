#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "cef/core.hpp"

namespace cef {

/// Which pipeline step produced a model output; carried through logs and the
/// cost ledger.
enum class PipelineStep : std::uint8_t {
  QgenSource,
  QgenCandidate,
  AnswerOnCandidate,
  AnswerOnSource,
  Generation,
};

const char* to_string(PipelineStep step);

/// Untrusted text straight from a model.
struct RawModelOutput {
  std::string text;
  PipelineStep origin = PipelineStep::Generation;
};

/// Who asked for the questions and which text they interrogate; stamped onto
/// every parsed Question.
struct QuestionOrigin {
  std::string model;
  std::string text_id;
};

enum class CountPolicy {
  Strict,        // any count mismatch is a WrongCount error
  TruncateLong,  // keep the first expected_n of an over-long generation
};

/// Extracts a question list from untrusted model output: finds the first
/// balanced JSON array of objects (code fences and surrounding prose are
/// ignored), normalizes the answer labels, and validates count and protocol.
///
/// Throws NoJsonFound, MalformedItem, WrongCount (see WrongCountError), or
/// ProtocolViolation (a non-YES expected answer under the YES-only protocol).
QuestionSet parse_question_list(const RawModelOutput& raw, std::size_t expected_n,
                                Protocol protocol, const QuestionOrigin& origin,
                                CountPolicy count_policy = CountPolicy::Strict);

/// Total verdict parser: strips surrounding whitespace/punctuation and accepts
/// exactly one alphabetic token spelling YES, NO or IDK (any case). Anything
/// else -- including sentences that merely contain a verdict -- is nullopt
/// (an unparseable verdict; the engine decides the fallback policy).
std::optional<Answer> parse_verdict(const RawModelOutput& raw);

/// Serializes a question set in the same JSON shape the generation prompt
/// requests, so parse_question_list round-trips on its own output.
std::string question_set_to_json(const QuestionSet& set);

}  // namespace cef
