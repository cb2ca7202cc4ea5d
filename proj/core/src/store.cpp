#include "cef/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "cef/digest.hpp"
#include "json.hpp"

namespace cef {

using nlohmann::json;

CacheKey make_cache_key(TemplateId template_id,
                        const std::map<std::string, std::string>& bindings,
                        const std::string& model_name, double temperature,
                        int max_output_tokens) {
  json canonical{
      {"template", to_string(template_id)},
      {"bindings", bindings},
      {"model", model_name},
      {"temperature", temperature},
      {"max_output_tokens", max_output_tokens},
  };
  return CacheKey{sha256_hex(canonical.dump())};
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path ResponseCache::entry_path(const CacheKey& key) const {
  return dir_ / key.hex.substr(0, 2) / (key.hex + ".json");
}

std::optional<CachedCompletion> ResponseCache::get(const CacheKey& key) const {
  auto path = entry_path(key);
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string body = std::move(buf).str();

  std::ifstream sum_in(path.string() + ".sum");
  std::string recorded_digest;
  sum_in >> recorded_digest;
  if (recorded_digest != sha256_hex(body)) {
    corrupt_entries_.fetch_add(1, std::memory_order_relaxed);
    return std::nullopt;
  }

  json parsed = json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (parsed.is_discarded() || !parsed.is_object() || !parsed.contains("text")) {
    corrupt_entries_.fetch_add(1, std::memory_order_relaxed);
    return std::nullopt;
  }
  CachedCompletion value;
  value.text = parsed["text"].get<std::string>();
  if (parsed.contains("prompt_tokens") && !parsed["prompt_tokens"].is_null()) {
    value.prompt_tokens = parsed["prompt_tokens"].get<std::uint64_t>();
  }
  if (parsed.contains("completion_tokens") && !parsed["completion_tokens"].is_null()) {
    value.completion_tokens = parsed["completion_tokens"].get<std::uint64_t>();
  }
  return value;
}

namespace {

void write_whole_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  out.flush();
  if (!out) {
    throw Error(ErrorKind::IoError, "failed writing " + path.string());
  }
}

std::atomic<std::uint64_t> g_temp_counter{0};

// Atomic first-write-sticks publish: write a private temp file, then link(2)
// it to the final name. EEXIST means another writer won.
bool publish_file(const std::filesystem::path& target, const std::string& body) {
  auto temp = target;
  temp += ".tmp." + std::to_string(::getpid()) + "." +
          std::to_string(g_temp_counter.fetch_add(1));
  write_whole_file(temp, body);
  int rc = ::link(temp.c_str(), target.c_str());
  ::unlink(temp.c_str());
  if (rc == 0) return true;
  if (errno == EEXIST) return false;
  throw Error(ErrorKind::IoError, "failed publishing " + target.string());
}

}  // namespace

bool ResponseCache::put(const CacheKey& key, const CachedCompletion& value) {
  auto path = entry_path(key);
  std::filesystem::create_directories(path.parent_path());
  if (std::filesystem::exists(path)) return false;

  json body{{"text", value.text}};
  body["prompt_tokens"] =
      value.prompt_tokens ? json(*value.prompt_tokens) : json(nullptr);
  body["completion_tokens"] =
      value.completion_tokens ? json(*value.completion_tokens) : json(nullptr);
  std::string serialized = body.dump();

  if (!publish_file(path, serialized)) return false;
  write_whole_file(path.string() + ".sum", sha256_hex(serialized) + "\n");
  return true;
}

std::uint64_t ResponseCache::corrupt_entries() const {
  return corrupt_entries_.load(std::memory_order_relaxed);
}

RunLog::RunLog(const std::filesystem::path& path) {
  file_ = std::fopen(path.c_str(), "ab");
  if (!file_) {
    throw Error(ErrorKind::IoError, "cannot open run log " + path.string());
  }
}

RunLog::~RunLog() {
  if (file_) std::fclose(file_);
}

void RunLog::append(const std::string& json_object_line) {
  std::lock_guard lock(mutex_);
  if (!file_) {
    throw Error(ErrorKind::ClosedRun, "append to a closed run log");
  }
  std::fwrite(json_object_line.data(), 1, json_object_line.size(), file_);
  std::fputc('\n', file_);
  if (std::fflush(file_) != 0) {
    throw Error(ErrorKind::IoError, "run log flush failed");
  }
}

void RunLog::close() {
  std::lock_guard lock(mutex_);
  if (file_) {
    std::fclose(file_);
    file_ = nullptr;
  }
}

bool RunLog::closed() const {
  std::lock_guard lock(mutex_);
  return file_ == nullptr;
}

std::vector<std::string> read_jsonl_log(const std::filesystem::path& path,
                                        bool* truncated_tail) {
  if (truncated_tail) *truncated_tail = false;
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::IoError, "cannot read log " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string content = std::move(buf).str();

  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < content.size()) {
    std::size_t eol = content.find('\n', pos);
    bool has_newline = eol != std::string::npos;
    std::string line = content.substr(pos, (has_newline ? eol : content.size()) - pos);
    pos = has_newline ? eol + 1 : content.size();
    if (line.empty()) continue;
    json parsed = json::parse(line, nullptr, /*allow_exceptions=*/false);
    bool valid = !parsed.is_discarded();
    if (valid && has_newline) {
      lines.push_back(std::move(line));
    } else {
      // A torn final line is expected after a crash; anything else invalid is
      // reported the same way and skipped.
      if (truncated_tail) *truncated_tail = true;
    }
  }
  return lines;
}

RunStore::RunStore(std::filesystem::path root) : root_(std::move(root)) {
  std::filesystem::create_directories(root_ / "runs");
  std::filesystem::create_directories(root_ / "cache");
}

RunStore::OpenRun RunStore::open_run(const RunManifest& manifest) {
  auto base = runs_dir() / manifest.run_id;
  auto dir = base;
  for (int suffix = 2; std::filesystem::exists(dir); ++suffix) {
    dir = base;
    dir += "." + std::to_string(suffix);
  }
  std::filesystem::create_directories(dir);

  auto manifest_path = dir / "manifest.json";
  if (std::filesystem::exists(manifest_path)) {
    throw Error(ErrorKind::IoError,
                "manifest already exists: " + manifest_path.string());
  }
  write_whole_file(manifest_path, manifest_to_json(manifest) + "\n");

  OpenRun run;
  run.dir = dir;
  run.log = std::make_shared<RunLog>(dir / "log.jsonl");
  return run;
}

void RunStore::finalize_run(const std::filesystem::path& run_dir,
                            const std::string& outcome_json) {
  write_whole_file(run_dir / "outcome.json", outcome_json + "\n");
}

std::optional<std::filesystem::path> RunStore::find_run(
    const std::string& run_id) const {
  auto direct = runs_dir() / run_id;
  if (std::filesystem::exists(direct / "manifest.json")) return direct;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(runs_dir(), ec)) {
    if (!entry.is_directory()) continue;
    auto manifest_path = entry.path() / "manifest.json";
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) continue;
    std::ostringstream buf;
    buf << in.rdbuf();
    json parsed = json::parse(std::move(buf).str(), nullptr, false);
    if (!parsed.is_discarded() && parsed.value("run_id", "") == run_id) {
      return entry.path();
    }
  }
  return std::nullopt;
}

std::string manifest_to_json(const RunManifest& m) {
  json j{
      {"run_id", m.run_id},
      {"artifact_version", m.artifact_version},
      {"digest_algorithm", m.digest_algorithm},
      {"prompt_manifest_digest", m.prompt_manifest_digest},
      {"input_batch_digest", m.input_batch_digest},
      {"judge_config", json::parse(m.judge_config_json, nullptr, false)},
      {"job_parameters", json::parse(m.job_parameters_json, nullptr, false)},
      {"created_at", m.created_at},
  };
  return j.dump(2);
}

RunManifest manifest_from_json(const std::string& text) {
  json j = json::parse(text);
  RunManifest m;
  m.run_id = j.value("run_id", "");
  m.artifact_version = j.value("artifact_version", "");
  m.digest_algorithm = j.value("digest_algorithm", "");
  m.prompt_manifest_digest = j.value("prompt_manifest_digest", "");
  m.input_batch_digest = j.value("input_batch_digest", "");
  m.judge_config_json = j.contains("judge_config") ? j["judge_config"].dump() : "{}";
  m.job_parameters_json =
      j.contains("job_parameters") ? j["job_parameters"].dump() : "{}";
  m.created_at = j.value("created_at", "");
  return m;
}

std::string utc_timestamp_now() {
  std::time_t now = std::time(nullptr);
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

}  // namespace cef
