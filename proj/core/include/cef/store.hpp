#pragma once

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "cef/errors.hpp"
#include "cef/prompts.hpp"

namespace cef {

/// Content address of a judged completion. Equal requests collide by design;
/// decoding settings (temperature, output budget) are part of the identity so
/// changing them can never alias entries.
struct CacheKey {
  std::string hex;  // sha256 of the canonical request encoding

  bool operator==(const CacheKey&) const = default;
};

CacheKey make_cache_key(TemplateId template_id,
                        const std::map<std::string, std::string>& bindings,
                        const std::string& model_name, double temperature,
                        int max_output_tokens);

/// What the cache stores: the completion text plus reported usage.
struct CachedCompletion {
  std::string text;
  std::optional<std::uint64_t> prompt_tokens;
  std::optional<std::uint64_t> completion_tokens;
};

/// One-file-per-entry response cache under `dir/<2-char shard>/<digest>.json`
/// with a sidecar integrity digest. First write sticks; writes are atomic
/// (write-temp + link), so concurrent readers never observe partial entries.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  /// MISS is nullopt. Entries failing the sidecar integrity check are treated
  /// as a MISS and reported through `corrupt_entries()`.
  std::optional<CachedCompletion> get(const CacheKey& key) const;

  /// Returns true when this call stored the entry, false when an entry for
  /// the key already existed (the existing entry is kept).
  bool put(const CacheKey& key, const CachedCompletion& value);

  const std::filesystem::path& dir() const { return dir_; }
  std::uint64_t corrupt_entries() const;

 private:
  std::filesystem::path entry_path(const CacheKey& key) const;

  std::filesystem::path dir_;
  mutable std::atomic<std::uint64_t> corrupt_entries_{0};
};

/// Append-only JSONL log for one run. Single writer; every append is flushed
/// before returning.
class RunLog {
 public:
  explicit RunLog(const std::filesystem::path& path);
  ~RunLog();

  RunLog(const RunLog&) = delete;
  RunLog& operator=(const RunLog&) = delete;

  void append(const std::string& json_object_line);
  void close();
  bool closed() const;

 private:
  mutable std::mutex mutex_;
  std::FILE* file_ = nullptr;
};

/// Reads a JSONL log, skipping a crash-truncated (or otherwise invalid) final
/// line. `truncated_tail` reports whether anything was skipped.
std::vector<std::string> read_jsonl_log(const std::filesystem::path& path,
                                        bool* truncated_tail = nullptr);

/// Everything needed to replay or audit a run. Secrets never enter the
/// manifest; judge configs are recorded with the key redacted.
struct RunManifest {
  std::string run_id;
  std::string artifact_version;
  std::string digest_algorithm;
  std::string prompt_manifest_digest;
  std::string input_batch_digest;
  std::string judge_config_json;     // redacted
  std::string job_parameters_json;   // mode, n_questions, protocol, seed_runs, ...
  std::string created_at;            // RFC 3339 UTC
};

/// Per-run directory management under `<root>/runs/`. The manifest is written
/// before any judged request and never modified afterwards; the outcome
/// summary is finalized separately as `outcome.json`.
class RunStore {
 public:
  explicit RunStore(std::filesystem::path root);

  /// Creates `runs/<run_id>/`, writes `manifest.json`, opens `log.jsonl`.
  /// If the directory already exists (same job replayed), a `.N` suffix is
  /// appended to the directory name; the manifest keeps the semantic run_id.
  struct OpenRun {
    std::filesystem::path dir;
    std::shared_ptr<RunLog> log;
  };
  OpenRun open_run(const RunManifest& manifest);

  /// Writes `outcome.json` (summary, timings, ledger snapshot) and closes the
  /// log. Idempotent per run directory.
  void finalize_run(const std::filesystem::path& run_dir,
                    const std::string& outcome_json);

  std::filesystem::path cache_dir() const { return root_ / "cache"; }
  std::filesystem::path runs_dir() const { return root_ / "runs"; }

  /// Locates an existing run directory by run id (exact directory name or
  /// semantic id recorded in its manifest).
  std::optional<std::filesystem::path> find_run(const std::string& run_id) const;

 private:
  std::filesystem::path root_;
};

std::string manifest_to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const std::string& text);

/// RFC 3339 UTC timestamp, second resolution.
std::string utc_timestamp_now();

}  // namespace cef
