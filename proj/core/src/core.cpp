#include "cef/core.hpp"

#include <algorithm>
#include <cctype>
#include <cfenv>
#include <cmath>
#include <cstdio>

namespace cef {

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptyAnswerSet: return "EmptyAnswerSet";
    case ErrorKind::DegenerateSource: return "DegenerateSource";
    case ErrorKind::WiringError: return "WiringError";
    case ErrorKind::MissingPlaceholder: return "MissingPlaceholder";
    case ErrorKind::UnknownPlaceholder: return "UnknownPlaceholder";
    case ErrorKind::PromptAssetError: return "PromptAssetError";
    case ErrorKind::NoJsonFound: return "NoJsonFound";
    case ErrorKind::MalformedItem: return "MalformedItem";
    case ErrorKind::WrongCount: return "WrongCount";
    case ErrorKind::ProtocolViolation: return "ProtocolViolation";
    case ErrorKind::UnparseableVerdict: return "UnparseableVerdict";
    case ErrorKind::ExhaustedRetries: return "ExhaustedRetries";
    case ErrorKind::BadRequest: return "BadRequest";
    case ErrorKind::EmptyLedger: return "EmptyLedger";
    case ErrorKind::NoOwnQuestions: return "NoOwnQuestions";
    case ErrorKind::NoConsensusAnywhere: return "NoConsensusAnywhere";
    case ErrorKind::JudgeUnusable: return "JudgeUnusable";
    case ErrorKind::AllPairsFailed: return "AllPairsFailed";
    case ErrorKind::BacktranslationFailed: return "BacktranslationFailed";
    case ErrorKind::ConstantSeries: return "ConstantSeries";
    case ErrorKind::NoOverlap: return "NoOverlap";
    case ErrorKind::DuplicateKey: return "DuplicateKey";
    case ErrorKind::ClosedRun: return "ClosedRun";
    case ErrorKind::CorruptEntry: return "CorruptEntry";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::IoError: return "IoError";
  }
  return "UnknownError";
}

const char* to_string(Answer a) {
  switch (a) {
    case Answer::Yes: return "YES";
    case Answer::No: return "NO";
    case Answer::Idk: return "IDK";
  }
  return "IDK";
}

std::optional<Answer> answer_from_label(std::string_view label) {
  std::size_t begin = 0;
  std::size_t end = label.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(label[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(label[end - 1]))) --end;
  std::string upper;
  upper.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    upper.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(label[i]))));
  }
  if (upper == "YES") return Answer::Yes;
  if (upper == "NO") return Answer::No;
  if (upper == "IDK") return Answer::Idk;
  return std::nullopt;
}

const char* to_string(TextRole role) {
  switch (role) {
    case TextRole::Source: return "source";
    case TextRole::Candidate: return "candidate";
    case TextRole::Reference: return "reference";
    case TextRole::Backtranslation: return "backtranslation";
  }
  return "source";
}

const char* to_string(Protocol p) {
  return p == Protocol::YesOnly ? "yes_only" : "mixed";
}

namespace {

bool is_unicode_space(char32_t cp) {
  switch (cp) {
    case 0x0009: case 0x000A: case 0x000B: case 0x000C: case 0x000D:
    case 0x0020: case 0x0085: case 0x00A0: case 0x1680:
    case 0x2028: case 0x2029: case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

// Decodes the next UTF-8 code point, advancing `i`. Malformed sequences are
// consumed one byte at a time and reported as U+FFFD.
char32_t next_code_point(std::string_view s, std::size_t& i) {
  const auto byte = [&](std::size_t k) {
    return static_cast<unsigned char>(s[k]);
  };
  unsigned char b0 = byte(i);
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  int len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) { len = 2; cp = b0 & 0x1F; }
  else if ((b0 & 0xF0) == 0xE0) { len = 3; cp = b0 & 0x0F; }
  else if ((b0 & 0xF8) == 0xF0) { len = 4; cp = b0 & 0x07; }
  else { ++i; return 0xFFFD; }
  if (i + static_cast<std::size_t>(len) > s.size()) { ++i; return 0xFFFD; }
  for (int k = 1; k < len; ++k) {
    unsigned char bk = byte(i + static_cast<std::size_t>(k));
    if ((bk & 0xC0) != 0x80) { ++i; return 0xFFFD; }
    cp = (cp << 6) | (bk & 0x3F);
  }
  i += static_cast<std::size_t>(len);
  return cp;
}

}  // namespace

std::size_t count_words(std::string_view utf8_body) {
  std::size_t words = 0;
  bool in_word = false;
  std::size_t i = 0;
  while (i < utf8_body.size()) {
    char32_t cp = next_code_point(utf8_body, i);
    if (is_unicode_space(cp)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++words;
    }
  }
  return words;
}

TextUnit TextUnit::make(std::string id, TextRole role, std::string language,
                        std::string body) {
  TextUnit unit;
  unit.id = std::move(id);
  unit.role = role;
  unit.language = std::move(language);
  unit.body = std::move(body);
  unit.word_count = count_words(unit.body);
  return unit;
}

namespace {

std::size_t count_answer(std::span<const Answer> answers, Answer which) {
  return static_cast<std::size_t>(std::count(answers.begin(), answers.end(), which));
}

double percent_complement(std::size_t bad, std::size_t total) {
  return 100.0 - (100.0 * static_cast<double>(bad)) / static_cast<double>(total);
}

}  // namespace

double score_coverage(std::span<const Answer> answers_on_candidate) {
  if (answers_on_candidate.empty()) {
    throw Error(ErrorKind::EmptyAnswerSet, "coverage over empty answer list");
  }
  return percent_complement(count_answer(answers_on_candidate, Answer::Idk),
                            answers_on_candidate.size());
}

double score_conformity(std::span<const Answer> answers_on_candidate) {
  if (answers_on_candidate.empty()) {
    throw Error(ErrorKind::EmptyAnswerSet, "conformity over empty answer list");
  }
  return percent_complement(count_answer(answers_on_candidate, Answer::No),
                            answers_on_candidate.size());
}

double score_consistency(std::span<const Answer> answers_on_source) {
  if (answers_on_source.empty()) {
    throw Error(ErrorKind::EmptyAnswerSet, "consistency over empty answer list");
  }
  return percent_complement(count_answer(answers_on_source, Answer::Idk),
                            answers_on_source.size());
}

double strict_yes_rate(std::span<const Answer> answers) {
  if (answers.empty()) {
    throw Error(ErrorKind::EmptyAnswerSet, "strict yes rate over empty answer list");
  }
  return (100.0 * static_cast<double>(count_answer(answers, Answer::Yes))) /
         static_cast<double>(answers.size());
}

double score_conciseness(const TextUnit& source, const TextUnit& candidate) {
  if (source.word_count == 0) {
    throw Error(ErrorKind::DegenerateSource,
                "source '" + source.id + "' has no words");
  }
  double ratio = static_cast<double>(candidate.word_count) /
                 static_cast<double>(source.word_count);
  return 100.0 * std::max(0.0, 1.0 - ratio);
}

ScoreSet assemble_scores(const ExamRecord& exam_d_on_t,
                         const ExamRecord& exam_t_on_d, const TextUnit& source,
                         const TextUnit& candidate, bool include_conciseness) {
  if (exam_d_on_t.question_set.source_text_id != source.id ||
      exam_d_on_t.answered_against_text_id != candidate.id) {
    throw Error(ErrorKind::WiringError,
                "source->candidate exam is wired to '" +
                    exam_d_on_t.question_set.source_text_id + "'->'" +
                    exam_d_on_t.answered_against_text_id + "', expected '" +
                    source.id + "'->'" + candidate.id + "'");
  }
  if (exam_t_on_d.question_set.source_text_id != candidate.id ||
      exam_t_on_d.answered_against_text_id != source.id) {
    throw Error(ErrorKind::WiringError,
                "candidate->source exam is wired to '" +
                    exam_t_on_d.question_set.source_text_id + "'->'" +
                    exam_t_on_d.answered_against_text_id + "', expected '" +
                    candidate.id + "'->'" + source.id + "'");
  }
  if (exam_d_on_t.answers.size() != exam_d_on_t.question_set.questions.size() ||
      exam_t_on_d.answers.size() != exam_t_on_d.question_set.questions.size()) {
    throw Error(ErrorKind::WiringError, "answer count differs from question count");
  }

  const auto& on_candidate = exam_d_on_t.answers;
  const auto& on_source = exam_t_on_d.answers;

  ScoreSet scores;
  scores.counts.n_d_questions = on_candidate.size();
  scores.counts.n_t_questions = on_source.size();
  scores.counts.idk_on_candidate = count_answer(on_candidate, Answer::Idk);
  scores.counts.no_on_candidate = count_answer(on_candidate, Answer::No);
  scores.counts.idk_on_source = count_answer(on_source, Answer::Idk);
  scores.counts.yes_on_candidate = count_answer(on_candidate, Answer::Yes);
  scores.counts.yes_on_source = count_answer(on_source, Answer::Yes);

  scores.coverage = score_coverage(on_candidate);
  scores.conformity = score_conformity(on_candidate);
  scores.consistency = score_consistency(on_source);
  scores.strict_yes_on_candidate = strict_yes_rate(on_candidate);
  scores.strict_yes_on_source = strict_yes_rate(on_source);
  if (include_conciseness) {
    scores.conciseness = score_conciseness(source, candidate);
  }
  return scores;
}

double round_half_even(double value, int digits) {
  double scale = std::pow(10.0, digits);
  int prev = std::fegetround();
  std::fesetround(FE_TONEAREST);
  double rounded = std::nearbyint(value * scale) / scale;
  std::fesetround(prev);
  return rounded;
}

std::string format_score(double value, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, round_half_even(value, digits));
  return buf;
}

}  // namespace cef
