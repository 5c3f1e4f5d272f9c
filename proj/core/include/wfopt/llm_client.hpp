#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace wfopt {

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatResult {
  bool ok = false;
  std::string content;   // choices[0].message.content when ok
  std::string error;     // short reason when !ok ("timeout", "http 500", ...)
  uint64_t tokens = 0;   // usage.total_tokens when the reply reports it
};

// Chat-completion transport shared by the remote executor, the remote
// diagnoser, and the remote proposer. Implementations must be safe to call
// from multiple threads.
class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual ChatResult chat(const std::vector<ChatMessage>& messages) = 0;
};

struct HttpLlmClientConfig {
  std::string base_url;  // e.g. "http://127.0.0.1:8089"
  std::string path = "/v1/chat/completions";
  std::string model = "default";
  double temperature = 0.0;
  // Name of the environment variable holding the bearer token; empty means
  // no Authorization header.
  std::string auth_env;
  int timeout_ms = 30000;
  int max_in_flight = 4;
};

// HTTP JSON client. POSTs {"model", "messages", "temperature"} and reads
// choices[0].message.content from the reply. Transport failures, non-200
// statuses, and malformed replies come back as ChatResult{ok=false}; only
// configuration problems (bad URL, missing token variable) throw
// BackendUnavailable, at construction time.
std::unique_ptr<LlmClient> make_http_llm_client(const HttpLlmClientConfig& cfg);

}  // namespace wfopt
