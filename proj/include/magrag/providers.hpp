#pragma once

// Chat-completion and text-embedding backends.
//
// Every agent in the pipeline talks to a ChatProvider and every keyword or
// query embedding comes from an EmbeddingProvider. Two families exist:
//   - remote providers speaking the OpenAI-compatible HTTP JSON shape
//   - deterministic local fakes (scripted chat, content-hash embeddings)
// The fakes make the whole system testable offline.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "magrag/error.hpp"
#include "magrag/text.hpp"

namespace magrag {

struct ChatRequest {
  std::string system_prompt;
  std::string user_content;
  double temperature = 0.0;
  int max_output = 4096;
  // Name of the calling agent ("extraction", "terminology", ...). Used for
  // tracing and by the scripted fake for routing.
  std::string agent;

  void validate() const {
    require(!text::trim(user_content).empty(), "chat request has empty user_content");
    require(temperature >= 0.0 && temperature <= 1.0, "chat temperature must lie in [0,1]");
    require(max_output > 0, "chat max_output must be positive");
  }
};

class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
    require(!values_.empty(), "embedding vector must have positive dimension");
    for (double v : values_) require(std::isfinite(v), "embedding vector contains a non-finite value");
  }

  std::size_t dimension() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

 private:
  std::vector<double> values_;
};

struct ProviderConfig {
  std::string endpoint;     // base URL, e.g. https://api.openai.com/v1
  std::string model_name;
  std::string api_key_ref;  // name of the environment variable holding the key
  std::chrono::milliseconds timeout{60000};
  int max_retries = 2;
  std::chrono::milliseconds min_interval{0};

  void validate() const {
    if (timeout.count() <= 0) throw Error(ErrorCode::config, "provider timeout must be positive");
    if (max_retries < 0) throw Error(ErrorCode::config, "provider max_retries must be >= 0");
    if (min_interval.count() < 0) throw Error(ErrorCode::config, "provider min_interval must be >= 0");
  }
};

// Enforces a minimum interval between dispatches. Only dispatch is
// serialized; callers proceed concurrently once admitted.
class RateGate {
 public:
  explicit RateGate(std::chrono::milliseconds min_interval = std::chrono::milliseconds{0})
      : min_interval_(min_interval) {}

  void wait() {
    if (min_interval_.count() <= 0) return;
    std::chrono::steady_clock::time_point slot;
    {
      std::lock_guard lock(mutex_);
      auto now = std::chrono::steady_clock::now();
      slot = std::max(now, next_);
      next_ = slot + min_interval_;
    }
    std::this_thread::sleep_until(slot);
  }

 private:
  std::chrono::milliseconds min_interval_;
  std::mutex mutex_;
  std::chrono::steady_clock::time_point next_{};
};

// Retries transport failures; the attempt count is at most 1 + max_retries.
template <class Fn>
auto with_transport_retries(int max_retries, RateGate& gate, Fn&& attempt) {
  for (int tries = 0;; ++tries) {
    gate.wait();
    try {
      return attempt();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::transport || tries >= max_retries) throw;
    }
  }
}

class ChatProvider {
 public:
  explicit ChatProvider(int max_retries = 0,
                        std::chrono::milliseconds min_interval = std::chrono::milliseconds{0})
      : max_retries_(max_retries), gate_(min_interval) {
    require(max_retries >= 0, "max_retries must be >= 0");
  }
  virtual ~ChatProvider() = default;
  ChatProvider(const ChatProvider&) = delete;
  ChatProvider& operator=(const ChatProvider&) = delete;

  std::string chat(const ChatRequest& request) {
    request.validate();
    auto completion = with_transport_retries(max_retries_, gate_, [&] { return complete(request); });
    if (text::trim(completion).empty())
      throw Error(ErrorCode::empty_completion, "backend returned an empty completion");
    return completion;
  }

  int max_retries() const noexcept { return max_retries_; }

 protected:
  // One backend attempt. Throw Error{transport} for retryable failures.
  virtual std::string complete(const ChatRequest& request) = 0;

 private:
  int max_retries_;
  RateGate gate_;
};

class EmbeddingProvider {
 public:
  explicit EmbeddingProvider(std::size_t dimension, int max_retries = 0,
                             std::chrono::milliseconds min_interval = std::chrono::milliseconds{0})
      : dimension_(dimension), max_retries_(max_retries), gate_(min_interval) {
    require(dimension > 0, "embedding dimension must be positive");
    require(max_retries >= 0, "max_retries must be >= 0");
  }
  virtual ~EmbeddingProvider() = default;
  EmbeddingProvider(const EmbeddingProvider&) = delete;
  EmbeddingProvider& operator=(const EmbeddingProvider&) = delete;

  EmbeddingVector embed(std::string_view input) {
    require(!text::trim(input).empty(), "cannot embed empty text");
    auto values = with_transport_retries(max_retries_, gate_, [&] { return compute(input); });
    if (values.size() != dimension_)
      throw Error(ErrorCode::dimension_mismatch,
                  "backend returned " + std::to_string(values.size()) +
                      " coordinates, expected " + std::to_string(dimension_));
    return EmbeddingVector(std::move(values));
  }

  std::size_t dimension() const noexcept { return dimension_; }

 protected:
  virtual std::vector<double> compute(std::string_view input) = 0;

 private:
  std::size_t dimension_;
  int max_retries_;
  RateGate gate_;
};

// ---------------------------------------------------------------------------
// Fakes

// Exact-match script table. Lookup order for a request:
//   1. key equal to the user content
//   2. key "agent:<name>" for the request's agent
//   3. wildcard key "*"
// A response may contain "{{user}}", replaced by the request's user content.
class ScriptedChatProvider final : public ChatProvider {
 public:
  using Script = std::map<std::string, std::string>;

  struct Call {
    ChatRequest request;
    bool failed = false;
  };

  explicit ScriptedChatProvider(std::map<std::string, std::string> script, int max_retries = 0)
      : ChatProvider(max_retries), script_(std::move(script)) {}

  static ScriptedChatProvider from_json(const nlohmann::json& j, int max_retries = 0) {
    if (!j.is_object()) throw Error(ErrorCode::config, "chat script must be a JSON object");
    std::map<std::string, std::string> script;
    for (const auto& [key, value] : j.items()) {
      if (!value.is_string())
        throw Error(ErrorCode::config, "chat script entry '" + key + "' is not a string");
      script.emplace(key, value.get<std::string>());
    }
    return ScriptedChatProvider(std::move(script), max_retries);
  }

  // The next n backend attempts fail with a transport error.
  void fail_next(int n) {
    std::lock_guard lock(mutex_);
    pending_failures_ = n;
  }

  void set(std::string key, std::string response) {
    std::lock_guard lock(mutex_);
    script_[std::move(key)] = std::move(response);
  }

  std::vector<Call> calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
  }

  std::size_t attempt_count() const {
    std::lock_guard lock(mutex_);
    return calls_.size();
  }

 protected:
  std::string complete(const ChatRequest& request) override {
    std::lock_guard lock(mutex_);
    calls_.push_back({request, false});
    if (pending_failures_ > 0) {
      --pending_failures_;
      calls_.back().failed = true;
      throw Error(ErrorCode::transport, "scripted transport failure");
    }
    auto response = lookup(request);
    if (!response)
      throw Error(ErrorCode::precondition,
                  "scripted chat provider has no entry for agent '" + request.agent + "'");
    return text::replace_all(*response, "{{user}}", request.user_content);
  }

 private:
  // Caller holds mutex_.
  std::optional<std::string> lookup(const ChatRequest& request) const {
    if (auto it = script_.find(request.user_content); it != script_.end()) return it->second;
    if (!request.agent.empty())
      if (auto it = script_.find("agent:" + request.agent); it != script_.end()) return it->second;
    if (auto it = script_.find("*"); it != script_.end()) return it->second;
    return std::nullopt;
  }

  mutable std::mutex mutex_;
  std::map<std::string, std::string> script_;
  std::vector<Call> calls_;
  int pending_failures_ = 0;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Unit vector with coordinates drawn uniformly from [-1,1) before
// normalization, seeded by a stable hash of the text.
inline std::vector<double> hash_unit_vector(std::string_view input, std::size_t dimension) {
  std::uint64_t state = text::fnv1a64(input);
  std::vector<double> values(dimension);
  for (;;) {
    double norm2 = 0.0;
    for (auto& v : values) {
      auto bits = splitmix64(state) >> 11;  // 53 random bits
      v = static_cast<double>(bits) * 0x1.0p-52 - 1.0;
      norm2 += v * v;
    }
    if (norm2 > 0.0) {
      double inv = 1.0 / std::sqrt(norm2);
      for (auto& v : values) v *= inv;
      return values;
    }
  }
}

}  // namespace detail

class HashEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HashEmbeddingProvider(std::size_t dimension) : EmbeddingProvider(dimension) {}

  std::size_t call_count() const noexcept { return calls_.load(); }

 protected:
  std::vector<double> compute(std::string_view input) override {
    ++calls_;
    return detail::hash_unit_vector(input, dimension());
  }

 private:
  std::atomic<std::size_t> calls_{0};
};

// Looks texts up in a fixed table; unknown texts fall back to the hash
// embedding. Used to pin similarities in tests.
class TableEmbeddingProvider final : public EmbeddingProvider {
 public:
  TableEmbeddingProvider(std::size_t dimension, std::map<std::string, std::vector<double>> table)
      : EmbeddingProvider(dimension), table_(std::move(table)) {}

  void set(std::string key, std::vector<double> values) {
    std::lock_guard lock(mutex_);
    table_[std::move(key)] = std::move(values);
  }

 protected:
  std::vector<double> compute(std::string_view input) override {
    std::lock_guard lock(mutex_);
    if (auto it = table_.find(std::string(input)); it != table_.end()) return it->second;
    return detail::hash_unit_vector(input, dimension());
  }

 private:
  std::mutex mutex_;
  std::map<std::string, std::vector<double>> table_;
};

// ---------------------------------------------------------------------------
// Remote providers (OpenAI-compatible JSON over HTTP)

inline std::atomic<std::size_t>& remote_request_counter() {
  static std::atomic<std::size_t> counter{0};
  return counter;
}

// Number of HTTP requests issued by remote providers in this process.
inline std::size_t remote_request_count() { return remote_request_counter().load(); }

namespace detail {

struct SplitUrl {
  std::string origin;     // scheme://host[:port]
  std::string base_path;  // without trailing slash
};

inline SplitUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw Error(ErrorCode::config, "endpoint '" + url + "' is not an absolute URL");
  auto path_start = url.find('/', scheme_end + 3);
  SplitUrl out;
  out.origin = url.substr(0, path_start);
  out.base_path = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!out.base_path.empty() && out.base_path.back() == '/') out.base_path.pop_back();
  return out;
}

inline nlohmann::json post_json(const ProviderConfig& config, const std::string& route,
                                const nlohmann::json& body) {
  auto url = split_url(config.endpoint);
  httplib::Client client(url.origin);
  auto secs = config.timeout.count() / 1000;
  auto usecs = (config.timeout.count() % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  httplib::Headers headers;
  if (!config.api_key_ref.empty()) {
    const char* key = std::getenv(config.api_key_ref.c_str());
    if (key == nullptr || *key == '\0')
      throw Error(ErrorCode::config, "environment variable " + config.api_key_ref + " is not set");
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  ++remote_request_counter();
  auto res = client.Post(url.base_path + route, headers, body.dump(), "application/json");
  if (!res)
    throw Error(ErrorCode::transport,
                "request to " + config.endpoint + route + " failed: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw Error(ErrorCode::transport,
                "request to " + config.endpoint + route + " returned HTTP " + std::to_string(res->status),
                res->body);
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::transport, std::string("unparseable response body: ") + e.what(), res->body);
  }
}

}  // namespace detail

class OpenAiChatProvider final : public ChatProvider {
 public:
  explicit OpenAiChatProvider(ProviderConfig config)
      : ChatProvider(config.max_retries, config.min_interval), config_(std::move(config)) {
    config_.validate();
  }

  static nlohmann::json request_body(const ProviderConfig& config, const ChatRequest& request) {
    nlohmann::json messages = nlohmann::json::array();
    if (!request.system_prompt.empty())
      messages.push_back({{"role", "system"}, {"content", request.system_prompt}});
    messages.push_back({{"role", "user"}, {"content", request.user_content}});
    return {{"model", config.model_name},
            {"messages", messages},
            {"temperature", request.temperature},
            {"max_tokens", request.max_output}};
  }

 protected:
  std::string complete(const ChatRequest& request) override {
    auto reply = detail::post_json(config_, "/chat/completions", request_body(config_, request));
    try {
      const auto& content = reply.at("choices").at(0).at("message").at("content");
      return content.is_null() ? std::string{} : content.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::transport, std::string("unexpected chat response shape: ") + e.what(),
                  reply.dump());
    }
  }

 private:
  ProviderConfig config_;
};

class OpenAiEmbeddingProvider final : public EmbeddingProvider {
 public:
  OpenAiEmbeddingProvider(ProviderConfig config, std::size_t dimension)
      : EmbeddingProvider(dimension, config.max_retries, config.min_interval),
        config_(std::move(config)) {
    config_.validate();
  }

 protected:
  std::vector<double> compute(std::string_view input) override {
    nlohmann::json body = {{"model", config_.model_name}, {"input", std::string(input)}};
    auto reply = detail::post_json(config_, "/embeddings", body);
    try {
      return reply.at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::transport, std::string("unexpected embedding response shape: ") + e.what(),
                  reply.dump());
    }
  }

 private:
  ProviderConfig config_;
};

}  // namespace magrag
