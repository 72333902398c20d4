#include "ncq/llm_gateway.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "ncq/text.hpp"

namespace ncq {

using nlohmann::json;
using std::chrono::milliseconds;

void CompletionRequest::validate() const {
  if (temperature < 0.0 || temperature > 2.0) throw std::invalid_argument("temperature must be in [0, 2]");
  if (max_tokens <= 0) throw std::invalid_argument("max_tokens must be positive");
  if (n <= 0) throw std::invalid_argument("n must be positive");
}

milliseconds RetryPolicy::delay_for(int retry) const {
  const double scaled = static_cast<double>(base_delay.count()) * std::pow(multiplier, std::max(0, retry - 1));
  const double capped = std::min(scaled, static_cast<double>(max_delay.count()));
  return milliseconds(static_cast<milliseconds::rep>(capped));
}

// ---------------------------------------------------------------- BackendSpec

BackendSpec BackendSpec::parse(const std::string& spec) {
  BackendSpec out;
  if (spec.starts_with("mock:")) {
    out.kind = BackendKind::ScriptedMock;
    out.script_path = spec.substr(5);
    if (out.script_path.empty()) throw std::invalid_argument("mock backend needs a script path");
    return out;
  }
  if (spec.starts_with("http://") || spec.starts_with("https://")) {
    out.kind = BackendKind::RemoteHttp;
    const auto q = spec.find('?');
    out.endpoint = spec.substr(0, q);
    if (q != std::string::npos) {
      for (const auto& kv : text::split(spec.substr(q + 1), '&')) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) continue;
        const auto k = kv.substr(0, eq);
        const auto v = kv.substr(eq + 1);
        if (k == "model") out.model = v;
        if (k == "key_env") out.api_key_env = v;
      }
    }
    return out;
  }
  throw std::invalid_argument("backend must be 'mock:<script>' or an http(s) URL, got '" + spec + "'");
}

BackendSpec BackendSpec::from_json(const json& j) {
  BackendSpec out;
  const auto kind = j.value("kind", "mock");
  if (kind == "mock") {
    out.kind = BackendKind::ScriptedMock;
    out.script_path = j.value("script", "");
  } else if (kind == "http") {
    out.kind = BackendKind::RemoteHttp;
    out.endpoint = j.value("endpoint", "");
    out.model = j.value("model", "");
    out.api_key_env = j.value("api_key_env", "");
  } else {
    throw std::invalid_argument("unknown backend kind '" + kind + "'");
  }
  out.rate_limit.max_in_flight = j.value("max_in_flight", out.rate_limit.max_in_flight);
  out.rate_limit.min_gap = milliseconds(j.value("min_gap_ms", static_cast<std::int64_t>(0)));
  out.retry.max_retries = j.value("max_retries", out.retry.max_retries);
  out.retry.base_delay = milliseconds(j.value("base_delay_ms", static_cast<std::int64_t>(out.retry.base_delay.count())));
  out.retry.max_delay = milliseconds(j.value("max_delay_ms", static_cast<std::int64_t>(out.retry.max_delay.count())));
  out.timeout = std::chrono::seconds(j.value("timeout_s", static_cast<std::int64_t>(out.timeout.count())));
  if (out.rate_limit.max_in_flight < 1) throw std::invalid_argument("max_in_flight must be >= 1");
  return out;
}

json BackendSpec::to_json() const {
  json j;
  if (kind == BackendKind::ScriptedMock) {
    j["kind"] = "mock";
    j["script"] = script_path;
  } else {
    j["kind"] = "http";
    j["endpoint"] = endpoint;
    j["model"] = model;
    j["api_key_env"] = api_key_env;
  }
  j["max_in_flight"] = rate_limit.max_in_flight;
  j["min_gap_ms"] = rate_limit.min_gap.count();
  j["max_retries"] = retry.max_retries;
  j["base_delay_ms"] = retry.base_delay.count();
  j["max_delay_ms"] = retry.max_delay.count();
  j["timeout_s"] = timeout.count();
  return j;
}

std::string BackendSpec::identity() const {
  if (kind == BackendKind::ScriptedMock) return "mock:" + script_path;
  return endpoint + (model.empty() ? "" : "#" + model);
}

// ------------------------------------------------------------ ScriptedMock

ScriptedMockBackend::ScriptedMockBackend(std::vector<MockEntry> entries, std::string id)
    : entries_(std::move(entries)), id_(std::move(id)) {
  for (const auto& e : entries_) failures_left_.push_back(e.fail_first);
}

std::vector<MockEntry> ScriptedMockBackend::parse_script(const std::string& content) {
  std::vector<MockEntry> out;
  size_t lineno = 0;
  for (const auto& line : text::split_lines(content)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw GatewayError("mock script line " + std::to_string(lineno) + ": " + e.what());
    }
    MockEntry e;
    e.prompt_hash = j.value("prompt_hash", "");
    e.prompt_contains = j.value("prompt_contains", "");
    e.is_default = j.value("default", false);
    if (j.contains("temperature")) e.temperature = j["temperature"].get<double>();
    e.completions = j.value("completions", std::vector<std::string>{});
    e.fail_first = j.value("fail_first", 0);
    e.error = j.value("error", "");
    if (e.prompt_hash.empty() && e.prompt_contains.empty() && !e.is_default) {
      throw GatewayError("mock script line " + std::to_string(lineno) +
                         ": needs prompt_hash, prompt_contains or default");
    }
    if (e.completions.empty() && e.error.empty()) {
      throw GatewayError("mock script line " + std::to_string(lineno) + ": no completions");
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::unique_ptr<ScriptedMockBackend> ScriptedMockBackend::from_file(const std::string& path) {
  return std::make_unique<ScriptedMockBackend>(parse_script(text::read_file(path)), "mock:" + path);
}

std::vector<std::string> ScriptedMockBackend::complete_once(const CompletionRequest& request,
                                                            std::string& raw_payload) {
  const std::string hash = text::sha256_hex(request.prompt);
  std::lock_guard lock(mu_);
  ++calls_;
  // Priority: hash, substring, default; within each, a temperature-specific
  // entry beats a wildcard one.
  auto temp_ok = [&](const MockEntry& e, bool exact) {
    return exact ? (e.temperature && std::abs(*e.temperature - request.temperature) < 1e-9) : !e.temperature;
  };
  std::optional<size_t> hit;
  for (int tier = 0; tier < 3 && !hit; ++tier) {
    for (bool exact : {true, false}) {
      for (size_t i = 0; i < entries_.size() && !hit; ++i) {
        const auto& e = entries_[i];
        const bool key_match = tier == 0   ? (!e.prompt_hash.empty() && e.prompt_hash == hash)
                               : tier == 1 ? (!e.prompt_contains.empty() &&
                                              request.prompt.find(e.prompt_contains) != std::string::npos)
                                           : e.is_default;
        if (key_match && temp_ok(e, exact)) hit = i;
      }
      if (hit) break;
    }
  }
  if (!hit) throw GatewayError("mock script has no entry for prompt " + hash.substr(0, 16));
  const auto& e = entries_[*hit];
  if (failures_left_[*hit] > 0) {
    --failures_left_[*hit];
    throw TransientError("scripted transient failure");
  }
  if (e.error == "auth") throw AuthError("scripted authentication failure");
  if (e.error == "transient") throw TransientError("scripted transient failure");
  if (e.error == "rate_limit") throw RateLimitedError("scripted rate limit");
  if (e.error == "malformed") throw MalformedPayload("scripted malformed payload");
  if (!e.error.empty()) throw GatewayError("scripted failure: " + e.error);
  std::vector<std::string> texts;
  for (int i = 0; i < request.n; ++i) texts.push_back(e.completions[static_cast<size_t>(i) % e.completions.size()]);
  json choices = json::array();
  for (const auto& t : texts) choices.push_back({{"text", t}});
  raw_payload = json{{"choices", choices}}.dump();
  return texts;
}

std::uint64_t ScriptedMockBackend::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

// ------------------------------------------------------------------- HTTP

HttpBackend::HttpBackend(std::string endpoint, std::string model, std::string api_key_env,
                         std::chrono::seconds timeout)
    : model_(std::move(model)), api_key_env_(std::move(api_key_env)), timeout_(timeout) {
  const auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos) throw std::invalid_argument("endpoint needs a scheme: " + endpoint);
  const auto path_start = endpoint.find('/', scheme_end + 3);
  scheme_host_port_ = endpoint.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : endpoint.substr(path_start);
}

std::string HttpBackend::id() const {
  return scheme_host_port_ + path_ + (model_.empty() ? "" : "#" + model_);
}

std::vector<std::string> HttpBackend::complete_once(const CompletionRequest& request, std::string& raw_payload) {
  httplib::Headers headers;
  if (!api_key_env_.empty()) {
    const char* key = std::getenv(api_key_env_.c_str());
    if (key == nullptr || *key == '\0') throw AuthError("environment variable " + api_key_env_ + " is not set");
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  json body{{"prompt", request.prompt},
            {"temperature", request.temperature},
            {"max_tokens", request.max_tokens},
            {"presence_penalty", request.presence_penalty},
            {"frequency_penalty", request.frequency_penalty},
            {"n", request.n}};
  if (!model_.empty()) body["model"] = model_;

  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(std::chrono::seconds(10));
  client.set_read_timeout(timeout_);
  auto res = client.Post(path_, headers, body.dump(), "application/json");
  if (!res) throw TransientError("transport error: " + httplib::to_string(res.error()));
  raw_payload = res->body;
  if (res->status == 401 || res->status == 403) throw AuthError("authentication failed (" + std::to_string(res->status) + ")");
  if (res->status == 429) throw RateLimitedError("rate limited (429)");
  if (res->status >= 500) throw TransientError("server error " + std::to_string(res->status));
  if (res->status != 200) throw GatewayError("unexpected status " + std::to_string(res->status) + ": " + res->body);

  json payload;
  try {
    payload = json::parse(res->body);
  } catch (const json::exception& e) {
    throw MalformedPayload(std::string("completion payload is not JSON: ") + e.what());
  }
  if (!payload.contains("choices") || !payload["choices"].is_array()) {
    throw MalformedPayload("completion payload has no choices array");
  }
  std::vector<std::pair<int, std::string>> indexed;
  int pos = 0;
  for (const auto& c : payload["choices"]) {
    if (!c.is_object() || !c.contains("text") || !c["text"].is_string()) {
      throw MalformedPayload("choice without a text field");
    }
    indexed.emplace_back(c.value("index", pos), c["text"].get<std::string>());
    ++pos;
  }
  std::stable_sort(indexed.begin(), indexed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::string> texts;
  for (auto& [_, t] : indexed) texts.push_back(std::move(t));
  return texts;
}

// -------------------------------------------------------------- RateLimiter

RateLimiter::RateLimiter(RateLimit limit) : limit_(limit) {
  if (limit_.max_in_flight < 1) throw std::invalid_argument("max_in_flight must be >= 1");
}

void RateLimiter::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [this] { return in_flight_ < limit_.max_in_flight; });
  ++in_flight_;
  max_observed_ = std::max(max_observed_, in_flight_);
  if (limit_.min_gap.count() > 0) {
    const auto now = std::chrono::steady_clock::now();
    const auto start = std::max(now, next_start_);
    next_start_ = start + limit_.min_gap;
    lock.unlock();
    std::this_thread::sleep_until(start);
  }
}

void RateLimiter::release() {
  {
    std::lock_guard lock(mu_);
    --in_flight_;
  }
  cv_.notify_one();
}

int RateLimiter::max_observed_in_flight() const {
  std::lock_guard lock(mu_);
  return max_observed_;
}

// ------------------------------------------------------------------ Gateway

Gateway::Gateway(std::unique_ptr<Backend> backend, RateLimit limit, RetryPolicy retry, Sleeper sleeper)
    : backend_(std::move(backend)), limiter_(limit), retry_(retry), sleeper_(std::move(sleeper)) {
  if (!sleeper_) sleeper_ = [](milliseconds d) { std::this_thread::sleep_for(d); };
}

CompletionResult Gateway::complete(const CompletionRequest& request) {
  request.validate();
  CompletionResult result;
  result.backend_id = backend_->id();
  const auto started = std::chrono::steady_clock::now();
  for (int attempt = 0;; ++attempt) {
    try {
      std::vector<std::string> texts;
      {
        RateLimiter::Slot slot(limiter_);
        texts = backend_->complete_once(request, result.raw_payload);
      }
      if (texts.size() != static_cast<size_t>(request.n)) {
        throw MalformedPayload("backend returned " + std::to_string(texts.size()) + " completions, " +
                               std::to_string(request.n) + " requested");
      }
      result.texts = std::move(texts);
      result.transport_retries = attempt;
      result.latency = std::chrono::duration_cast<milliseconds>(std::chrono::steady_clock::now() - started);
      return result;
    } catch (const RateLimitedError& e) {
      if (attempt >= retry_.max_retries) {
        throw RateLimitExhausted(std::string(e.what()) + " after " + std::to_string(attempt) + " retries");
      }
    } catch (const TransientError& e) {
      if (attempt >= retry_.max_retries) {
        throw TransientError(std::string(e.what()) + " after " + std::to_string(attempt) + " retries");
      }
    }
    sleeper_(retry_.delay_for(attempt + 1));
  }
}

std::unique_ptr<Gateway> make_gateway(const BackendSpec& spec, Sleeper sleeper) {
  std::unique_ptr<Backend> backend;
  if (spec.kind == BackendKind::ScriptedMock) {
    backend = ScriptedMockBackend::from_file(spec.script_path);
  } else {
    backend = std::make_unique<HttpBackend>(spec.endpoint, spec.model, spec.api_key_env, spec.timeout);
  }
  return std::make_unique<Gateway>(std::move(backend), spec.rate_limit, spec.retry, std::move(sleeper));
}

// ------------------------------------------------------- no-answer retries

SampleOutcome sample_answers_with_retry(Gateway& gateway, const CompletionRequest& base, int n,
                                        const std::function<bool(const std::string&)>& no_answer_detector) {
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  SampleOutcome out;
  CompletionRequest first = base;
  first.n = n;
  first.temperature = kAnswerTemperature;
  out.results.push_back(gateway.complete(first));
  std::vector<int> flagged;
  for (int i = 0; i < n; ++i) {
    const auto& text = out.results.front().texts[static_cast<size_t>(i)];
    const bool no_answer = no_answer_detector(text);
    out.completions.push_back({i, 0, first.temperature, text, no_answer});
    if (no_answer) flagged.push_back(i);
  }
  for (int i : flagged) {
    CompletionRequest retry = base;
    retry.n = 1;
    retry.temperature = kNoAnswerRetryTemperature;
    out.results.push_back(gateway.complete(retry));
    ++out.retry_requests;
    const auto& text = out.results.back().texts.front();
    out.completions.push_back({i, 1, retry.temperature, text, no_answer_detector(text)});
  }
  return out;
}

}  // namespace ncq
