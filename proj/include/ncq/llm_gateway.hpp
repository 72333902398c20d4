#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace ncq {

inline constexpr double kAnswerTemperature = 0.7;
inline constexpr double kNoAnswerRetryTemperature = 1.0;
inline constexpr double kAssessmentTemperature = 0.0;
inline constexpr int kFewShotMaxTokens = 100;
inline constexpr int kChainOfThoughtMaxTokens = 150;

struct CompletionRequest {
  std::string prompt;
  double temperature = kAnswerTemperature;
  int max_tokens = kChainOfThoughtMaxTokens;
  double presence_penalty = 0.0;
  double frequency_penalty = 0.0;
  int n = 1;

  // Throws std::invalid_argument on out-of-range fields.
  void validate() const;
};

struct CompletionResult {
  std::vector<std::string> texts;
  std::string backend_id;
  std::chrono::milliseconds latency{0};
  std::string raw_payload;
  int transport_retries = 0;
};

class GatewayError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
// Retryable: connection failures, 5xx, scripted transient faults.
class TransientError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};
class RateLimitedError : public TransientError {
 public:
  using TransientError::TransientError;
};
class AuthError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};
class RateLimitExhausted : public GatewayError {
 public:
  using GatewayError::GatewayError;
};
class MalformedPayload : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

struct RateLimit {
  int max_in_flight = 4;
  std::chrono::milliseconds min_gap{0};
};

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds base_delay{500};
  std::chrono::milliseconds max_delay{8000};
  double multiplier = 2.0;

  std::chrono::milliseconds delay_for(int retry) const;  // retry is 1-based
};

enum class BackendKind { RemoteHttp, ScriptedMock };

struct BackendSpec {
  BackendKind kind = BackendKind::ScriptedMock;
  std::string endpoint;     // RemoteHttp: full URL of the completion endpoint
  std::string model;        // RemoteHttp
  std::string api_key_env;  // RemoteHttp: name of the variable holding the key
  std::string script_path;  // ScriptedMock
  RateLimit rate_limit;
  RetryPolicy retry;
  std::chrono::seconds timeout{120};

  /// "mock:<script.jsonl>" or an http(s) URL with optional
  /// "?model=<name>&key_env=<VAR>" query.
  static BackendSpec parse(const std::string& spec);
  static BackendSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  std::string identity() const;
};

/// Single transport attempt. Implementations throw TransientError for
/// retryable failures; must be callable from several threads.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::vector<std::string> complete_once(const CompletionRequest& request, std::string& raw_payload) = 0;
  virtual std::string id() const = 0;
};

struct MockEntry {
  std::string prompt_hash;      // exact SHA-256 of the prompt
  std::string prompt_contains;  // substring match, used when no hash matches
  bool is_default = false;
  std::optional<double> temperature;
  std::vector<std::string> completions;
  int fail_first = 0;  // transient failures before the entry starts answering
  std::string error;   // "auth" | "transient" | "rate_limit" | "malformed": always fail
};

/// Canned completions keyed on prompt hash (then substring, then default),
/// optionally per temperature. A request for n texts gets the first n,
/// cycling through the list, so identical requests give identical results.
class ScriptedMockBackend final : public Backend {
 public:
  explicit ScriptedMockBackend(std::vector<MockEntry> entries, std::string id = "mock");
  static std::unique_ptr<ScriptedMockBackend> from_file(const std::string& path);
  static std::vector<MockEntry> parse_script(const std::string& content);

  std::vector<std::string> complete_once(const CompletionRequest& request, std::string& raw_payload) override;
  std::string id() const override { return id_; }

  std::uint64_t calls() const;

 private:
  std::vector<MockEntry> entries_;
  std::vector<int> failures_left_;
  std::string id_;
  mutable std::mutex mu_;
  std::uint64_t calls_ = 0;
};

/// Minimal completion wire contract: POST {model, prompt, temperature,
/// max_tokens, presence_penalty, frequency_penalty, n}, answer
/// {"choices": [{"text": ...}, ...]}. Bearer key from the named variable.
class HttpBackend final : public Backend {
 public:
  HttpBackend(std::string endpoint, std::string model, std::string api_key_env,
              std::chrono::seconds timeout = std::chrono::seconds(120));
  std::vector<std::string> complete_once(const CompletionRequest& request, std::string& raw_payload) override;
  std::string id() const override;

 private:
  std::string scheme_host_port_;
  std::string path_;
  std::string model_;
  std::string api_key_env_;
  std::chrono::seconds timeout_;
};

/// Bounds concurrent requests and spaces request starts by min_gap.
class RateLimiter {
 public:
  explicit RateLimiter(RateLimit limit);

  void acquire();
  void release();
  int max_observed_in_flight() const;

  class Slot {
   public:
    explicit Slot(RateLimiter& rl) : rl_(rl) { rl_.acquire(); }
    ~Slot() { rl_.release(); }
    Slot(const Slot&) = delete;
    Slot& operator=(const Slot&) = delete;

   private:
    RateLimiter& rl_;
  };

 private:
  RateLimit limit_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  int in_flight_ = 0;
  int max_observed_ = 0;
  std::chrono::steady_clock::time_point next_start_{};
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

/// Retry, backoff and rate limiting in front of a Backend. Thread-safe.
class Gateway {
 public:
  Gateway(std::unique_ptr<Backend> backend, RateLimit limit, RetryPolicy retry, Sleeper sleeper = {});

  CompletionResult complete(const CompletionRequest& request);

  Backend& backend() { return *backend_; }
  const RateLimiter& limiter() const { return limiter_; }
  std::string backend_id() const { return backend_->id(); }

 private:
  std::unique_ptr<Backend> backend_;
  RateLimiter limiter_;
  RetryPolicy retry_;
  Sleeper sleeper_;
};

std::unique_ptr<Gateway> make_gateway(const BackendSpec& spec, Sleeper sleeper = {});

struct SampledCompletion {
  int sample_index = 0;
  int attempt = 0;  // 0 first pass, 1 temperature retry
  double temperature = kAnswerTemperature;
  std::string text;
  bool flagged_no_answer = false;
};

struct SampleOutcome {
  std::vector<SampledCompletion> completions;  // first pass in sample order, then retries
  std::vector<CompletionResult> results;
  int retry_requests = 0;
};

/// One n-completion request at 0.7; every completion the detector flags is
/// re-requested once, alone, at 1.0. Both attempts are kept.
SampleOutcome sample_answers_with_retry(Gateway& gateway, const CompletionRequest& base, int n,
                                        const std::function<bool(const std::string&)>& no_answer_detector);

}  // namespace ncq
