#include "cef/parse.hpp"

#include <cctype>

#include "json.hpp"

namespace cef {

using nlohmann::json;

const char* to_string(PipelineStep step) {
  switch (step) {
    case PipelineStep::QgenSource: return "qgen_source";
    case PipelineStep::QgenCandidate: return "qgen_candidate";
    case PipelineStep::AnswerOnCandidate: return "answer_on_candidate";
    case PipelineStep::AnswerOnSource: return "answer_on_source";
    case PipelineStep::Generation: return "generation";
  }
  return "generation";
}

namespace {

// Blanks out ``` fence marker lines so a fenced JSON block scans as plain
// text. Content between fences is preserved.
std::string strip_fence_lines(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::size_t len = (eol == std::string::npos ? text.size() : eol) - pos;
    std::string_view line(text.data() + pos, len);
    std::size_t first = line.find_first_not_of(" \t\r");
    bool fence = first != std::string_view::npos && line.substr(first).starts_with("```");
    if (!fence) out.append(line);
    out.push_back('\n');
    if (eol == std::string::npos) break;
    pos = eol + 1;
  }
  return out;
}

constexpr int kMaxScanDepth = 512;

// Returns the position one past the bracket matching text[start], honoring
// JSON string literals, or npos when unbalanced or absurdly deep.
std::size_t find_balanced_end(const std::string& text, std::size_t start) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '[' || c == '{') {
      if (++depth > kMaxScanDepth) return std::string::npos;
    } else if (c == ']' || c == '}') {
      if (--depth == 0) return i + 1;
      if (depth < 0) return std::string::npos;
    }
  }
  return std::string::npos;
}

// First balanced [...] span that parses as a JSON array wins. The attempt cap
// keeps bracket-bomb inputs linear-ish instead of quadratic.
std::optional<json> extract_first_json_array(const std::string& text) {
  int attempts = 0;
  for (std::size_t start = text.find('['); start != std::string::npos;
       start = text.find('[', start + 1)) {
    if (++attempts > 4096) break;
    std::size_t end = find_balanced_end(text, start);
    if (end == std::string::npos) continue;
    json parsed = json::parse(text.substr(start, end - start), nullptr,
                              /*allow_exceptions=*/false);
    if (!parsed.is_discarded() && parsed.is_array()) return parsed;
  }
  return std::nullopt;
}

// Question text must be a single line: newline runs become one space, then
// the ends are trimmed.
std::string normalize_question_text(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (c == '\n' || c == '\r') {
      pending_space = true;
      continue;
    }
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  std::size_t begin = out.find_first_not_of(" \t");
  std::size_t end = out.find_last_not_of(" \t");
  if (begin == std::string::npos) return "";
  return out.substr(begin, end - begin + 1);
}

}  // namespace

QuestionSet parse_question_list(const RawModelOutput& raw, std::size_t expected_n,
                                Protocol protocol, const QuestionOrigin& origin,
                                CountPolicy count_policy) {
  if (expected_n == 0) {
    throw Error(ErrorKind::InvalidArgument, "expected_n must be positive");
  }
  auto array = extract_first_json_array(strip_fence_lines(raw.text));
  if (!array) {
    throw Error(ErrorKind::NoJsonFound, "no JSON array of questions in output");
  }

  std::size_t got = array->size();
  if (got != expected_n &&
      !(count_policy == CountPolicy::TruncateLong && got > expected_n)) {
    throw WrongCountError(got, expected_n);
  }

  QuestionSet set;
  set.source_text_id = origin.text_id;
  set.requested_n = expected_n;
  set.questions.reserve(expected_n);
  for (const auto& item : *array) {
    if (set.questions.size() == expected_n) break;  // TruncateLong
    if (!item.is_object() || !item.contains("question") || !item.contains("answer")) {
      throw Error(ErrorKind::MalformedItem,
                  "each item needs 'question' and 'answer' keys");
    }
    if (!item["question"].is_string() || !item["answer"].is_string()) {
      throw Error(ErrorKind::MalformedItem, "'question' and 'answer' must be strings");
    }
    std::string text = normalize_question_text(item["question"].get<std::string>());
    if (text.empty()) {
      throw Error(ErrorKind::MalformedItem, "empty question text");
    }
    auto expected = answer_from_label(item["answer"].get<std::string>());
    if (!expected) {
      throw Error(ErrorKind::MalformedItem,
                  "unrecognized answer label '" + item["answer"].get<std::string>() + "'");
    }
    if (protocol == Protocol::YesOnly && *expected != Answer::Yes) {
      throw Error(ErrorKind::ProtocolViolation,
                  "expected answer '" + std::string(to_string(*expected)) +
                      "' under the YES-only protocol");
    }
    Question q;
    q.text = std::move(text);
    q.expected = *expected;
    q.origin_model = origin.model;
    q.origin_text_id = origin.text_id;
    q.index = set.questions.size();
    set.questions.push_back(std::move(q));
  }
  return set;
}

std::optional<Answer> parse_verdict(const RawModelOutput& raw) {
  const std::string& text = raw.text;
  std::size_t begin = 0;
  std::size_t end = text.size();
  auto is_strippable = [](unsigned char c) {
    return !(std::isalnum(c)) && c < 0x80;  // ASCII whitespace/punctuation
  };
  while (begin < end && is_strippable(static_cast<unsigned char>(text[begin]))) ++begin;
  while (end > begin && is_strippable(static_cast<unsigned char>(text[end - 1]))) --end;
  if (begin == end || end - begin > 3) return std::nullopt;
  std::string token;
  for (std::size_t i = begin; i < end; ++i) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    if (!std::isalpha(c)) return std::nullopt;  // single-word contract
    token.push_back(static_cast<char>(std::toupper(c)));
  }
  if (token == "YES") return Answer::Yes;
  if (token == "NO") return Answer::No;
  if (token == "IDK") return Answer::Idk;
  return std::nullopt;
}

std::string question_set_to_json(const QuestionSet& set) {
  json array = json::array();
  for (const auto& q : set.questions) {
    array.push_back({{"question", q.text}, {"answer", to_string(q.expected)}});
  }
  return array.dump();
}

}  // namespace cef
