#include "cef/prompts.hpp"

#include <array>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cef/digest.hpp"

#ifndef CEF_SOURCE_PROMPT_DIR
#define CEF_SOURCE_PROMPT_DIR ""
#endif

namespace cef {

namespace {

constexpr std::array<TemplateId, 6> kAllTemplates = {
    TemplateId::QgenYesOnly,   TemplateId::QgenMixed, TemplateId::CrossExamAnswer,
    TemplateId::Translate,     TemplateId::Summarize, TemplateId::NoteGen,
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::PromptAssetError, "cannot read " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

bool is_placeholder_name_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
         (c >= '0' && c <= '9') || c == '_';
}

// Substitutes `{name}` occurrences with bound values, collecting the names it
// saw. Values go in verbatim and are not re-scanned.
std::string substitute(const std::string& text,
                       const std::map<std::string, std::string>& bindings,
                       std::set<std::string>& used) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (c != '{') {
      out.push_back(c);
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < text.size() && is_placeholder_name_char(text[j])) ++j;
    if (j < text.size() && text[j] == '}' && j > i + 1) {
      std::string name = text.substr(i + 1, j - i - 1);
      auto it = bindings.find(name);
      if (it == bindings.end()) {
        throw Error(ErrorKind::MissingPlaceholder, "no binding for {" + name + "}");
      }
      used.insert(name);
      out.append(it->second);
      i = j + 1;
    } else {
      out.push_back(c);
      ++i;
    }
  }
  return out;
}

}  // namespace

const char* to_string(TemplateId id) {
  switch (id) {
    case TemplateId::QgenYesOnly: return "qgen_yes_only";
    case TemplateId::QgenMixed: return "qgen_mixed";
    case TemplateId::CrossExamAnswer: return "cross_exam_answer";
    case TemplateId::Translate: return "translate";
    case TemplateId::Summarize: return "summarize";
    case TemplateId::NoteGen: return "note_gen";
  }
  return "qgen_yes_only";
}

TemplateId template_id_from_string(const std::string& name) {
  for (TemplateId id : kAllTemplates) {
    if (name == to_string(id)) return id;
  }
  throw Error(ErrorKind::InvalidArgument, "unknown template id '" + name + "'");
}

std::set<std::string> scan_placeholders(const std::string& text) {
  std::set<std::string> names;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '{') {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < text.size() && is_placeholder_name_char(text[j])) ++j;
    if (j < text.size() && text[j] == '}' && j > i + 1) {
      names.insert(text.substr(i + 1, j - i - 1));
      i = j + 1;
    } else {
      ++i;
    }
  }
  return names;
}

PromptRegistry PromptRegistry::load(const std::filesystem::path& asset_dir) {
  std::string manifest_text = read_file(asset_dir / "manifest");

  // manifest lines: "<algorithm> <filename> <hex digest>", '#' comments.
  std::map<std::string, std::string> expected_digests;
  std::istringstream lines(manifest_text);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string algorithm, filename, digest;
    if (!(fields >> algorithm >> filename >> digest)) {
      throw Error(ErrorKind::PromptAssetError, "malformed manifest line: " + line);
    }
    if (algorithm != kDigestAlgorithm) {
      throw Error(ErrorKind::PromptAssetError,
                  "manifest uses unsupported digest '" + algorithm + "'");
    }
    if (!expected_digests.emplace(filename, digest).second) {
      throw Error(ErrorKind::PromptAssetError, "duplicate manifest entry: " + filename);
    }
  }

  PromptRegistry registry;
  registry.manifest_digest_ = sha256_hex(manifest_text);
  registry.templates_.reserve(kAllTemplates.size());
  for (TemplateId id : kAllTemplates) {
    PromptTemplate tmpl;
    tmpl.id = id;
    for (const char* part : {"system", "user"}) {
      std::string filename = std::string(to_string(id)) + "." + part + ".txt";
      std::string content = read_file(asset_dir / filename);
      auto it = expected_digests.find(filename);
      if (it == expected_digests.end()) {
        throw Error(ErrorKind::PromptAssetError, filename + " missing from manifest");
      }
      if (sha256_hex(content) != it->second) {
        throw Error(ErrorKind::PromptAssetError,
                    filename + " does not match its manifest digest");
      }
      (part[0] == 's' ? tmpl.system_text : tmpl.user_text) = std::move(content);
    }
    auto system_names = scan_placeholders(tmpl.system_text);
    tmpl.placeholders = scan_placeholders(tmpl.user_text);
    tmpl.placeholders.insert(system_names.begin(), system_names.end());
    registry.templates_.push_back(std::move(tmpl));
  }
  return registry;
}

std::filesystem::path PromptRegistry::default_asset_dir(
    const std::filesystem::path& explicit_dir) {
  if (!explicit_dir.empty()) return explicit_dir;
  if (const char* env = std::getenv("CEF_PROMPT_DIR"); env && *env) {
    return env;
  }
  std::error_code ec;
  auto exe = std::filesystem::read_symlink("/proc/self/exe", ec);
  if (!ec) {
    auto installed = exe.parent_path().parent_path() / "share" / "cef" / "prompts";
    if (std::filesystem::exists(installed / "manifest", ec)) return installed;
  }
  return CEF_SOURCE_PROMPT_DIR;
}

const PromptTemplate& PromptRegistry::get(TemplateId id) const {
  return templates_.at(static_cast<std::size_t>(id));
}

RenderedPrompt PromptRegistry::render(
    TemplateId id, const std::map<std::string, std::string>& bindings) const {
  const PromptTemplate& tmpl = get(id);
  for (const auto& [name, value] : bindings) {
    if (!tmpl.placeholders.contains(name)) {
      throw Error(ErrorKind::UnknownPlaceholder,
                  "binding '" + name + "' is not a placeholder of " +
                      to_string(id));
    }
  }
  std::set<std::string> used;
  RenderedPrompt rendered;
  rendered.template_id = id;
  rendered.system = substitute(tmpl.system_text, bindings, used);
  rendered.user = substitute(tmpl.user_text, bindings, used);
  rendered.bindings = bindings;
  return rendered;
}

std::vector<std::pair<TemplateId, std::set<std::string>>>
PromptRegistry::list_templates() const {
  std::vector<std::pair<TemplateId, std::set<std::string>>> out;
  out.reserve(templates_.size());
  for (const auto& tmpl : templates_) {
    out.emplace_back(tmpl.id, tmpl.placeholders);
  }
  return out;
}

}  // namespace cef
