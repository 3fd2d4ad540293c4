// Chat-completion HTTP client for the live backend. Kept out of
// gateway.cpp so the heavy HTTP header is compiled once, here.

#ifdef ATARS_WITH_TLS
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include <chrono>
#include <thread>

#include "atars/errors.hpp"
#include "atars/gateway.hpp"
#include "atars/jsonl.hpp"

namespace atars::gateway {

using jsonl::json;

std::string LiveTextBackend::generate(const GenerationRequest& req) {
  if (req.prompt.empty()) throw EmptyText("empty prompt");

  json body{{"model", config_.model},
            {"messages", json::array({json{{"role", "user"}, {"content", req.prompt}}})},
            {"temperature", req.temperature},
            {"max_tokens", req.max_tokens}};
  httplib::Headers headers{{"Authorization", "Bearer " + api_key_}};

  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    httplib::Client client(config_.endpoint);
    client.set_connection_timeout(config_.timeout_seconds, 0);
    client.set_read_timeout(config_.timeout_seconds, 0);

    auto res = client.Post(config_.path, headers, body.dump(), "application/json");
    if (!res) throw BackendUnavailable("no response from " + config_.endpoint);

    if (res->status == 429) {
      if (attempt < config_.max_retries) {
        std::this_thread::sleep_for(std::chrono::seconds(1 << attempt));
        continue;
      }
      throw RateLimited("rate limited by " + config_.endpoint + " after " +
                        std::to_string(config_.max_retries + 1) + " attempts");
    }
    if (res->status != 200)
      throw BackendUnavailable("HTTP " + std::to_string(res->status) + " from " +
                               config_.endpoint);

    try {
      json parsed = json::parse(res->body);
      return parsed.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      throw MalformedResponse(std::string("chat completion body: ") + e.what());
    }
  }
  throw BackendUnavailable("unreachable");
}

}  // namespace atars::gateway
