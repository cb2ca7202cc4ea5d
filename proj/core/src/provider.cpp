#include "cef/provider.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

#include "cef/digest.hpp"
#include "json.hpp"

namespace cef {

using nlohmann::json;

// ---------------------------------------------------------------------------
// CostLedger

void CostLedger::record(PipelineStep step, std::optional<std::uint64_t> prompt_tokens,
                        std::optional<std::uint64_t> completion_tokens) {
  Cell& cell = cells_[static_cast<std::size_t>(step)];
  cell.request_count.fetch_add(1, std::memory_order_relaxed);
  if (prompt_tokens && completion_tokens) {
    cell.input_tokens.fetch_add(*prompt_tokens, std::memory_order_relaxed);
    cell.output_tokens.fetch_add(*completion_tokens, std::memory_order_relaxed);
  } else {
    // Never fabricate usage; absent counts land in a separate bucket.
    cell.usage_unknown.fetch_add(1, std::memory_order_relaxed);
  }
}

void CostLedger::record_cache_hit() {
  cache_hits_.fetch_add(1, std::memory_order_relaxed);
}

void CostLedger::set_sample_count(std::uint64_t n) { sample_count_.store(n); }

std::uint64_t CostLedger::sample_count() const { return sample_count_.load(); }

CostLedger::StepTotals CostLedger::step_totals(PipelineStep step) const {
  const Cell& cell = cells_[static_cast<std::size_t>(step)];
  return {cell.input_tokens.load(), cell.output_tokens.load(),
          cell.request_count.load(), cell.usage_unknown.load()};
}

CostLedger::StepTotals CostLedger::grand_totals() const {
  StepTotals totals;
  for (const Cell& cell : cells_) {
    totals.input_tokens += cell.input_tokens.load();
    totals.output_tokens += cell.output_tokens.load();
    totals.request_count += cell.request_count.load();
    totals.usage_unknown_requests += cell.usage_unknown.load();
  }
  return totals;
}

std::uint64_t CostLedger::cache_hits() const { return cache_hits_.load(); }

namespace {

constexpr std::array<PipelineStep, 5> kAllSteps = {
    PipelineStep::QgenSource, PipelineStep::QgenCandidate,
    PipelineStep::AnswerOnCandidate, PipelineStep::AnswerOnSource,
    PipelineStep::Generation};

}  // namespace

std::string CostLedger::to_json() const {
  json steps = json::object();
  for (PipelineStep step : kAllSteps) {
    StepTotals t = step_totals(step);
    steps[to_string(step)] = {{"input_tokens", t.input_tokens},
                              {"output_tokens", t.output_tokens},
                              {"request_count", t.request_count},
                              {"usage_unknown_requests", t.usage_unknown_requests}};
  }
  json j{{"steps", steps},
         {"sample_count", sample_count_.load()},
         {"cache_hits", cache_hits_.load()}};
  return j.dump();
}

CostLedger CostLedger::from_json(const std::string& text) {
  json j = json::parse(text);
  CostLedger ledger;
  for (PipelineStep step : kAllSteps) {
    const char* key = to_string(step);
    if (!j["steps"].contains(key)) continue;
    const json& cell = j["steps"][key];
    Cell& c = ledger.cells_[static_cast<std::size_t>(step)];
    c.input_tokens = cell.value("input_tokens", std::uint64_t{0});
    c.output_tokens = cell.value("output_tokens", std::uint64_t{0});
    c.request_count = cell.value("request_count", std::uint64_t{0});
    c.usage_unknown = cell.value("usage_unknown_requests", std::uint64_t{0});
  }
  ledger.sample_count_ = j.value("sample_count", std::uint64_t{0});
  ledger.cache_hits_ = j.value("cache_hits", std::uint64_t{0});
  return ledger;
}

CostReport cost_report(const CostLedger& ledger, const JudgeConfig& config) {
  if (ledger.sample_count() == 0) {
    throw Error(ErrorKind::EmptyLedger, "ledger has no samples");
  }
  CostReport report;
  for (PipelineStep step : kAllSteps) {
    StepCost sc;
    sc.step = step;
    sc.totals = ledger.step_totals(step);
    sc.price = config.price_per_1m_input *
                   static_cast<double>(sc.totals.input_tokens) / 1e6 +
               config.price_per_1m_output *
                   static_cast<double>(sc.totals.output_tokens) / 1e6;
    report.total_price += sc.price;
    report.total_input_tokens += sc.totals.input_tokens;
    report.total_output_tokens += sc.totals.output_tokens;
    report.per_step.push_back(sc);
  }
  double samples = static_cast<double>(ledger.sample_count());
  report.avg_price_per_sample = report.total_price / samples;
  report.avg_input_tokens_per_sample =
      static_cast<double>(report.total_input_tokens) / samples;
  report.avg_output_tokens_per_sample =
      static_cast<double>(report.total_output_tokens) / samples;
  return report;
}

// ---------------------------------------------------------------------------
// RateLimiter

RateLimiter::RateLimiter(int requests_per_minute, ClockFn clock, SleepFn sleep)
    : rate_per_ms_(requests_per_minute / 60000.0),
      capacity_(std::max(1.0, static_cast<double>(requests_per_minute))),
      tokens_(capacity_),
      clock_(clock ? std::move(clock) : [] { return Clock::now(); }),
      sleep_(sleep ? std::move(sleep) : [](std::chrono::milliseconds d) {
        std::this_thread::sleep_for(d);
      }) {
  last_refill_ = clock_();
  if (requests_per_minute <= 0) rate_per_ms_ = 0.0;  // unthrottled
}

void RateLimiter::acquire() {
  if (rate_per_ms_ <= 0.0) return;
  for (;;) {
    std::chrono::milliseconds wait{0};
    {
      std::lock_guard lock(mutex_);
      auto now = clock_();
      auto elapsed =
          std::chrono::duration_cast<std::chrono::milliseconds>(now - last_refill_);
      tokens_ = std::min(capacity_, tokens_ + elapsed.count() * rate_per_ms_);
      last_refill_ = now;
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      wait = std::chrono::milliseconds(
          static_cast<long>(std::ceil((1.0 - tokens_) / rate_per_ms_)));
    }
    sleep_(wait);
  }
}

// ---------------------------------------------------------------------------
// Provider

Provider::Provider(std::shared_ptr<ChatBackend> backend, ProviderOptions options,
                   std::shared_ptr<ResponseCache> cache)
    : backend_(std::move(backend)), options_(std::move(options)),
      cache_(std::move(cache)) {
  rng_state_ = options_.jitter_seed != 0 ? options_.jitter_seed
                                         : std::random_device{}();
}

void Provider::set_run_log(std::shared_ptr<RunLog> log) {
  std::lock_guard lock(log_mutex_);
  log_ = std::move(log);
}

RateLimiter& Provider::limiter_for(const JudgeConfig& config) {
  std::lock_guard lock(limiters_mutex_);
  auto it = limiters_.find(config.endpoint_url);
  if (it == limiters_.end()) {
    it = limiters_
             .emplace(config.endpoint_url,
                      std::make_unique<RateLimiter>(config.requests_per_minute,
                                                    nullptr, options_.sleep))
             .first;
  }
  return *it->second;
}

std::chrono::milliseconds Provider::backoff_delay(int attempt) {
  // Exponential with full jitter: uniform in [0, min(cap, base * 2^attempt)].
  double ceiling = static_cast<double>(options_.backoff_base.count()) *
                   std::pow(2.0, attempt);
  ceiling = std::min(ceiling, static_cast<double>(options_.backoff_cap.count()));
  std::uint64_t draw;
  {
    std::lock_guard lock(rng_mutex_);
    rng_state_ ^= rng_state_ << 13;
    rng_state_ ^= rng_state_ >> 7;
    rng_state_ ^= rng_state_ << 17;
    draw = rng_state_;
  }
  double fraction = static_cast<double>(draw % 1000000) / 1000000.0;
  return std::chrono::milliseconds(static_cast<long>(ceiling * fraction));
}

CompletionResult Provider::complete(const JudgeConfig& config,
                                    const RenderedPrompt& prompt,
                                    const RequestContext& ctx) {
  CacheKey key = make_cache_key(prompt.template_id, prompt.bindings,
                                config.model_name, config.temperature,
                                config.max_output_tokens);
  bool cacheable = options_.use_cache && cache_ && !ctx.seed && !ctx.bypass_cache;

  if (cacheable) {
    if (auto hit = cache_->get(key)) {
      ledger_.record_cache_hit();
      CompletionResult result;
      result.text = hit->text;
      result.prompt_tokens = hit->prompt_tokens;
      result.completion_tokens = hit->completion_tokens;
      result.from_cache = true;
      result.attempt_count = 0;
      return result;
    }
  }

  auto started = std::chrono::steady_clock::now();
  BackendReply reply;
  int attempt = 0;
  for (;;) {
    ++attempt;
    try {
      limiter_for(config).acquire();
      reply = backend_->send(config, prompt, ctx);
      break;
    } catch (const TransientBackendError& err) {
      if (attempt > config.max_retries) {
        throw Error(ErrorKind::ExhaustedRetries,
                    std::string("gave up after ") + std::to_string(attempt) +
                        " attempts: " + err.what());
      }
      auto delay = backoff_delay(attempt - 1);
      if (delay.count() > 0) {
        if (options_.sleep) {
          options_.sleep(delay);
        } else {
          std::this_thread::sleep_for(delay);
        }
      }
    }
  }
  auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - started);

  ledger_.record(ctx.step, reply.prompt_tokens, reply.completion_tokens);

  CompletionResult result;
  result.text = reply.text;
  result.prompt_tokens = reply.prompt_tokens;
  result.completion_tokens = reply.completion_tokens;
  result.latency = latency;
  result.attempt_count = attempt;
  result.from_cache = false;

  if (cacheable) {
    cache_->put(key, {result.text, result.prompt_tokens, result.completion_tokens});
  }

  {
    std::lock_guard lock(log_mutex_);
    if (log_) {
      json record{
          {"type", "completion"},
          {"step", to_string(ctx.step)},
          {"model", config.model_name},
          {"template", to_string(prompt.template_id)},
          {"cache_key", key.hex},
          {"request_digest",
           MockBackend::request_digest(prompt.template_id, prompt.bindings,
                                       config.model_name)},
          {"attempts", attempt},
          {"latency_ms", latency.count()},
          {"text", result.text},
      };
      record["prompt_tokens"] =
          result.prompt_tokens ? json(*result.prompt_tokens) : json(nullptr);
      record["completion_tokens"] =
          result.completion_tokens ? json(*result.completion_tokens) : json(nullptr);
      if (ctx.seed) record["seed"] = *ctx.seed;
      log_->append(record.dump());
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Backend selection

std::shared_ptr<ChatBackend> make_backend(const std::string& specifier) {
  if (specifier == "mock") {
    return std::make_shared<MockBackend>();
  }
  if (specifier.starts_with("mock:")) {
    return MockBackend::from_fixture_file(specifier.substr(5));
  }
  return std::make_shared<HttpBackend>();
}

}  // namespace cef
