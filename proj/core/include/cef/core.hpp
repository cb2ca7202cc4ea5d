#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cef/errors.hpp"

namespace cef {

/// Three-valued cross-examination verdict. No other state is representable.
enum class Answer : std::uint8_t { Yes, No, Idk };

const char* to_string(Answer a);

/// Strict normalization of an answer label ("yes"/"No"/"IDK"...). Leading and
/// trailing whitespace is ignored, the match is case-insensitive, and nothing
/// else is accepted.
std::optional<Answer> answer_from_label(std::string_view label);

enum class TextRole : std::uint8_t { Source, Candidate, Reference, Backtranslation };

const char* to_string(TextRole role);

/// One text participating in an evaluation. `word_count` is always recomputed
/// from `body` (maximal non-whitespace runs over Unicode whitespace), never
/// trusted from input.
struct TextUnit {
  std::string id;
  TextRole role = TextRole::Source;
  std::string language;  // BCP-47-style tag
  std::string body;      // UTF-8
  std::size_t word_count = 0;

  static TextUnit make(std::string id, TextRole role, std::string language,
                       std::string body);
};

/// Counts maximal runs of non-whitespace in UTF-8 text. Whitespace is the
/// Unicode White_Space set; malformed bytes count as word characters.
std::size_t count_words(std::string_view utf8_body);

/// Question-generation protocols: the default constrains every expected
/// answer to YES; the mixed variant allows YES/NO/IDK.
enum class Protocol : std::uint8_t { YesOnly, Mixed };

const char* to_string(Protocol p);

struct Question {
  std::string text;
  Answer expected = Answer::Yes;
  std::string origin_model;
  std::string origin_text_id;
  std::size_t index = 0;  // 0-based position within its set
};

struct QuestionSet {
  std::vector<Question> questions;
  std::string source_text_id;
  std::size_t requested_n = 0;
};

/// One cross-examination direction: questions from text A answered against
/// text B. `parse_fallbacks` marks answers recorded as IDK after the judge
/// twice failed to produce a parseable verdict.
struct ExamRecord {
  QuestionSet question_set;
  std::string answered_against_text_id;
  std::vector<Answer> answers;
  std::string judge_model;
  std::vector<bool> parse_fallbacks;
};

struct ScoreCounts {
  std::size_t n_d_questions = 0;
  std::size_t n_t_questions = 0;
  std::size_t idk_on_candidate = 0;
  std::size_t no_on_candidate = 0;
  std::size_t idk_on_source = 0;
  std::size_t yes_on_candidate = 0;
  std::size_t yes_on_source = 0;
};

/// The four scores for one (source, candidate) pair, on a 0-100 scale, plus
/// the raw counts backing them. `strict_yes_*` are the %YES diagnostics
/// (see strict_yes_rate); the canonical scores are the IDK/NO based ones.
struct ScoreSet {
  double coverage = 0.0;
  double consistency = 0.0;
  double conformity = 0.0;
  std::optional<double> conciseness;
  ScoreCounts counts;
  double strict_yes_on_candidate = 0.0;
  double strict_yes_on_source = 0.0;
};

/// Coverage: 100 minus the percentage of IDK answers when the source's
/// questions are posed against the candidate. Order-independent.
double score_coverage(std::span<const Answer> answers_on_candidate);

/// Conformity: 100 minus the percentage of NO answers on the candidate.
double score_conformity(std::span<const Answer> answers_on_candidate);

/// Consistency: 100 minus the percentage of IDK answers when the candidate's
/// questions are posed against the source.
double score_consistency(std::span<const Answer> answers_on_source);

/// Diagnostic %YES rate (the answers that exactly matched a YES expectation).
double strict_yes_rate(std::span<const Answer> answers);

/// Conciseness: percent word-count reduction from source to candidate,
/// clamped to [0,100]. Throws DegenerateSource when the source has no words.
double score_conciseness(const TextUnit& source, const TextUnit& candidate);

/// Composes the per-direction scores into a ScoreSet, validating that the two
/// exam records are wired across the given texts (questions from `source`
/// answered against `candidate` and vice versa).
ScoreSet assemble_scores(const ExamRecord& exam_d_on_t,
                         const ExamRecord& exam_t_on_d, const TextUnit& source,
                         const TextUnit& candidate, bool include_conciseness);

/// Round-half-even to `digits` decimal places. Scores are kept at full
/// precision internally and rounded only for presentation.
double round_half_even(double value, int digits);

/// Fixed-decimal formatting using round_half_even, e.g. 92.98245 -> "92.98".
std::string format_score(double value, int digits = 2);

}  // namespace cef
