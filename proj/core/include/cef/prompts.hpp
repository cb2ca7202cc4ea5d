#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cef/errors.hpp"

namespace cef {

enum class TemplateId {
  QgenYesOnly,
  QgenMixed,
  CrossExamAnswer,
  Translate,
  Summarize,
  NoteGen,
};

const char* to_string(TemplateId id);
TemplateId template_id_from_string(const std::string& name);

/// A prompt template as loaded from the asset directory. Placeholders use
/// single-brace `{name}` syntax and may occur in the system or user text.
struct PromptTemplate {
  TemplateId id;
  std::string system_text;
  std::string user_text;
  std::set<std::string> placeholders;
};

struct RenderedPrompt {
  std::string system;
  std::string user;
  TemplateId template_id;
  std::map<std::string, std::string> bindings;
};

/// Immutable registry of the six prompt templates, loaded from an asset
/// directory (`<id>.system.txt`, `<id>.user.txt`, `manifest`). The manifest
/// pins a content digest per file; any mismatch fails the load so runs can
/// never silently use edited prompts.
class PromptRegistry {
 public:
  static PromptRegistry load(const std::filesystem::path& asset_dir);

  /// Asset directory resolution for tools: explicit path if non-empty, else
  /// $CEF_PROMPT_DIR, else `../share/cef/prompts` next to the executable,
  /// else the source-tree assets baked in at build time.
  static std::filesystem::path default_asset_dir(
      const std::filesystem::path& explicit_dir = {});

  const PromptTemplate& get(TemplateId id) const;

  /// Byte-level placeholder substitution. Bindings must cover the template's
  /// placeholder set exactly; bound values are inserted verbatim and never
  /// re-scanned for placeholders.
  RenderedPrompt render(TemplateId id,
                        const std::map<std::string, std::string>& bindings) const;

  /// Stable (enum-ordered) listing of template ids and their placeholders.
  std::vector<std::pair<TemplateId, std::set<std::string>>> list_templates() const;

  /// Digest of the manifest file contents; recorded in run manifests.
  const std::string& manifest_digest() const { return manifest_digest_; }

 private:
  PromptRegistry() = default;

  std::vector<PromptTemplate> templates_;  // indexed by TemplateId
  std::string manifest_digest_;
};

/// Extracts the `{name}` placeholders of a template body, in order of first
/// appearance. Exposed for tests.
std::set<std::string> scan_placeholders(const std::string& text);

}  // namespace cef
