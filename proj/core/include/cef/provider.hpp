#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "cef/parse.hpp"
#include "cef/prompts.hpp"
#include "cef/store.hpp"

namespace cef {

/// One judge backend configuration. `endpoint_url` is either an http(s) base
/// URL (the chat-completions path is appended) or a `mock:` specifier.
struct JudgeConfig {
  std::string model_name;
  std::string endpoint_url;
  double temperature = 0.0;
  int max_output_tokens = 2048;
  std::chrono::milliseconds request_timeout{30000};
  int max_retries = 5;
  double price_per_1m_input = 0.25;
  double price_per_1m_output = 2.00;
  std::string api_key;          // empty -> $CEF_API_KEY
  int requests_per_minute = 0;  // 0 = unthrottled
};

struct CompletionResult {
  std::string text;
  std::optional<std::uint64_t> prompt_tokens;      // absent when the backend
  std::optional<std::uint64_t> completion_tokens;  // omitted usage data
  std::chrono::milliseconds latency{0};
  int attempt_count = 1;
  bool from_cache = false;
};

/// Per-request context: which pipeline step is asking, and an optional
/// decoding seed. Seeded requests are intentionally non-deterministic across
/// seeds, so they bypass the response cache (whose key has no seed).
struct RequestContext {
  PipelineStep step = PipelineStep::Generation;
  std::optional<std::uint64_t> seed;
  bool bypass_cache = false;
};

struct BackendReply {
  std::string text;
  std::optional<std::uint64_t> prompt_tokens;
  std::optional<std::uint64_t> completion_tokens;
};

/// Retryable backend failure (network error, timeout, 429/5xx). Non-retryable
/// request rejections throw cef::Error{BadRequest} instead.
class TransientBackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual BackendReply send(const JudgeConfig& config, const RenderedPrompt& prompt,
                            const RequestContext& ctx) = 0;
  virtual std::string name() const = 0;
};

/// Step-keyed token/request accounting. Accumulation is atomic so any number
/// of workers can record concurrently; totals are exact sums of the per-step
/// cells.
class CostLedger {
 public:
  struct StepTotals {
    std::uint64_t input_tokens = 0;
    std::uint64_t output_tokens = 0;
    std::uint64_t request_count = 0;
    std::uint64_t usage_unknown_requests = 0;
  };

  void record(PipelineStep step, std::optional<std::uint64_t> prompt_tokens,
              std::optional<std::uint64_t> completion_tokens);
  void record_cache_hit();

  void set_sample_count(std::uint64_t n);
  std::uint64_t sample_count() const;

  StepTotals step_totals(PipelineStep step) const;
  StepTotals grand_totals() const;
  std::uint64_t cache_hits() const;

  std::string to_json() const;
  static CostLedger from_json(const std::string& text);

 private:
  struct Cell {
    std::atomic<std::uint64_t> input_tokens{0};
    std::atomic<std::uint64_t> output_tokens{0};
    std::atomic<std::uint64_t> request_count{0};
    std::atomic<std::uint64_t> usage_unknown{0};
  };
  std::array<Cell, 5> cells_;
  std::atomic<std::uint64_t> cache_hits_{0};
  std::atomic<std::uint64_t> sample_count_{0};
};

struct StepCost {
  PipelineStep step;
  CostLedger::StepTotals totals;
  double price = 0.0;
};

struct CostReport {
  double total_price = 0.0;
  double avg_price_per_sample = 0.0;
  std::uint64_t total_input_tokens = 0;
  std::uint64_t total_output_tokens = 0;
  double avg_input_tokens_per_sample = 0.0;
  double avg_output_tokens_per_sample = 0.0;
  std::vector<StepCost> per_step;
};

/// Prices a ledger with the config's per-million-token rates. Throws
/// EmptyLedger when no samples were recorded.
CostReport cost_report(const CostLedger& ledger, const JudgeConfig& config);

/// Token bucket, `requests_per_minute` sustained with an equal burst. Clock
/// and sleep are injectable for tests.
class RateLimiter {
 public:
  using Clock = std::chrono::steady_clock;
  using ClockFn = std::function<Clock::time_point()>;
  using SleepFn = std::function<void(std::chrono::milliseconds)>;

  RateLimiter(int requests_per_minute, ClockFn clock = nullptr,
              SleepFn sleep = nullptr);

  void acquire();

 private:
  double rate_per_ms_;
  double capacity_;
  double tokens_;
  Clock::time_point last_refill_;
  std::mutex mutex_;
  ClockFn clock_;
  SleepFn sleep_;
};

struct ProviderOptions {
  bool use_cache = true;
  std::chrono::milliseconds backoff_base{1000};
  std::chrono::milliseconds backoff_cap{60000};
  std::uint64_t jitter_seed = 0;  // 0 -> nondeterministic
  RateLimiter::SleepFn sleep;     // injectable for tests
};

/// Wraps a ChatBackend with retries (exponential backoff, full jitter), a
/// per-endpoint rate limiter, the response cache, the cost ledger, and
/// request/response logging.
class Provider {
 public:
  Provider(std::shared_ptr<ChatBackend> backend, ProviderOptions options = {},
           std::shared_ptr<ResponseCache> cache = nullptr);

  CompletionResult complete(const JudgeConfig& config, const RenderedPrompt& prompt,
                            const RequestContext& ctx = {});

  CostLedger& ledger() { return ledger_; }
  const CostLedger& ledger() const { return ledger_; }

  void set_run_log(std::shared_ptr<RunLog> log);
  std::shared_ptr<ChatBackend> backend() const { return backend_; }
  ResponseCache* cache() const { return cache_.get(); }

 private:
  std::chrono::milliseconds backoff_delay(int attempt);
  RateLimiter& limiter_for(const JudgeConfig& config);

  std::shared_ptr<ChatBackend> backend_;
  ProviderOptions options_;
  std::shared_ptr<ResponseCache> cache_;
  CostLedger ledger_;

  std::mutex limiters_mutex_;
  std::map<std::string, std::unique_ptr<RateLimiter>> limiters_;

  std::mutex rng_mutex_;
  std::uint64_t rng_state_;

  std::mutex log_mutex_;
  std::shared_ptr<RunLog> log_;
};

/// Deterministic in-process backend. Three behaviors:
///  - canned: exact responses keyed by request digest (see request_digest);
///  - grounded: synthesizes keyword questions from the bound text and answers
///    by checking whether the quoted keyword occurs in the context;
///  - noisy: grounded, plus seeded i.i.d. answer corruption for variance
///    studies (flips to IDK/NO with the configured rates).
/// Also scriptable to fail the first N sends, for retry tests.
class MockBackend : public ChatBackend {
 public:
  enum class Kind { Canned, Grounded, Noisy };

  struct Options {
    Kind kind = Kind::Grounded;
    std::uint64_t seed = 1;
    double idk_rate = 0.15;
    double no_rate = 0.05;
    int fail_first_n = 0;       // transient failures before the first success
    bool omit_usage = false;    // emulate a backend without usage reporting
  };

  explicit MockBackend(Options options = {});

  /// Loads a `mock:` fixture file: JSON with {"kind", "seed", "idk_rate",
  /// "no_rate", "canned": {digest: text}}.
  static std::shared_ptr<MockBackend> from_fixture_file(
      const std::filesystem::path& path);

  /// Builds a canned backend from a run log, replaying recorded completions.
  static std::shared_ptr<MockBackend> from_run_log(
      const std::filesystem::path& log_path);

  /// Digest a canned fixture keys on: (template id, bindings, model name).
  /// Insensitive to whitespace-preserving template refactors by construction.
  static std::string request_digest(TemplateId template_id,
                                    const std::map<std::string, std::string>& bindings,
                                    const std::string& model_name);

  void add_canned(const std::string& digest, std::string response);

  BackendReply send(const JudgeConfig& config, const RenderedPrompt& prompt,
                    const RequestContext& ctx) override;
  std::string name() const override { return "mock"; }

  std::uint64_t request_count() const { return requests_.load(); }

 private:
  BackendReply grounded_reply(const RenderedPrompt& prompt, const RequestContext& ctx,
                              const JudgeConfig& config);

  Options options_;
  std::map<std::string, std::string> canned_;
  std::atomic<std::uint64_t> requests_{0};
  std::atomic<int> remaining_failures_{0};
};

/// OpenAI-compatible chat-completions client over HTTP(S): POST
/// `{endpoint}/v1/chat/completions` with {model, messages, temperature,
/// max_tokens} and an optional decoding seed; reads
/// choices[0].message.content and usage token counts.
class HttpBackend : public ChatBackend {
 public:
  HttpBackend() = default;

  BackendReply send(const JudgeConfig& config, const RenderedPrompt& prompt,
                    const RequestContext& ctx) override;
  std::string name() const override { return "http"; }
};

/// Selects a backend from a CLI-style specifier: "mock" / "mock:<fixture>"
/// or anything http(s) for the remote client.
std::shared_ptr<ChatBackend> make_backend(const std::string& specifier);

}  // namespace cef
