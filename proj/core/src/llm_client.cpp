#include "wfopt/llm_client.hpp"

#include <cstdlib>
#include <mutex>
#include <condition_variable>

#include "httplib.h"
#include "json.hpp"
#include "wfopt/errors.hpp"

namespace wfopt {

namespace {

// Caps concurrent requests at the configured limit.
class InFlightGate {
 public:
  explicit InFlightGate(int limit) : limit_(limit) {}

  void acquire() {
    std::unique_lock<std::mutex> lock(mu_);
    cv_.wait(lock, [&] { return active_ < limit_; });
    ++active_;
  }
  void release() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      --active_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int limit_;
  int active_ = 0;
};

class HttpLlmClient final : public LlmClient {
 public:
  explicit HttpLlmClient(const HttpLlmClientConfig& cfg)
      : cfg_(cfg), gate_(cfg.max_in_flight > 0 ? cfg.max_in_flight : 1) {
    if (cfg_.base_url.empty()) {
      fail(ErrorCode::BackendUnavailable, "remote base_url not configured");
    }
    if (!cfg_.auth_env.empty()) {
      const char* token = std::getenv(cfg_.auth_env.c_str());
      if (token == nullptr || *token == '\0') {
        fail(ErrorCode::BackendUnavailable,
             "auth token variable '" + cfg_.auth_env + "' is unset");
      }
      token_ = token;
    }
  }

  ChatResult chat(const std::vector<ChatMessage>& messages) override {
    nlohmann::ordered_json body;
    body["model"] = cfg_.model;
    body["messages"] = nlohmann::ordered_json::array();
    for (const ChatMessage& m : messages) {
      body["messages"].push_back({{"role", m.role}, {"content", m.content}});
    }
    body["temperature"] = cfg_.temperature;

    httplib::Client client(cfg_.base_url);
    client.set_connection_timeout(0, cfg_.timeout_ms * 1000);
    client.set_read_timeout(0, cfg_.timeout_ms * 1000);
    client.set_write_timeout(0, cfg_.timeout_ms * 1000);
    httplib::Headers headers;
    if (!token_.empty()) {
      headers.emplace("Authorization", "Bearer " + token_);
    }

    gate_.acquire();
    auto res = client.Post(cfg_.path, headers, body.dump(), "application/json");
    gate_.release();

    ChatResult out;
    if (!res) {
      out.error = "transport: " + httplib::to_string(res.error());
      return out;
    }
    if (res->status != 200) {
      out.error = "http " + std::to_string(res->status);
      return out;
    }
    try {
      nlohmann::json doc = nlohmann::json::parse(res->body);
      out.content = doc.at("choices").at(0).at("message").at("content")
                        .get<std::string>();
      if (doc.contains("usage") && doc["usage"].contains("total_tokens")) {
        out.tokens = doc["usage"]["total_tokens"].get<uint64_t>();
      }
      out.ok = true;
    } catch (const nlohmann::json::exception&) {
      out.error = "malformed response body";
    }
    return out;
  }

 private:
  HttpLlmClientConfig cfg_;
  std::string token_;
  InFlightGate gate_;
};

}  // namespace

std::unique_ptr<LlmClient> make_http_llm_client(
    const HttpLlmClientConfig& cfg) {
  return std::make_unique<HttpLlmClient>(cfg);
}

}  // namespace wfopt
