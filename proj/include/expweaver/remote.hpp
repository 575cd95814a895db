#pragma once

#include <chrono>
#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "expweaver/core.hpp"
#include "expweaver/embedder.hpp"
#include "expweaver/errors.hpp"
#include "expweaver/policy.hpp"

// OpenAI-compatible HTTP clients for chat completions and embeddings. The
// request builders and response parsers are pure functions so everything
// except the socket hop is testable offline.

namespace expweaver {

struct RemoteConfig {
  std::string endpoint;  // e.g. "http://localhost:8000"
  std::string api_key;   // EXPWEAVER_API_KEY overrides when set
  std::string model;
  int max_retries = 3;            // attempts on transport errors / 5xx
  int retry_backoff_ms = 250;     // doubled per retry
  int timeout_seconds = 120;
};

// The configured key, unless the environment supplies the secret instead.
inline std::string resolve_api_key(const RemoteConfig& cfg) {
  if (const char* env = std::getenv("EXPWEAVER_API_KEY"); env && *env) return env;
  return cfg.api_key;
}

// ---------------------------------------------------------------------------
// Chat completions

inline json build_chat_request(const std::string& model, const std::string& context_text,
                               const GenConfig& cfg) {
  json req{{"model", model},
           {"messages", json::array({json{{"role", "user"}, {"content", context_text}}})},
           {"temperature", cfg.temperature},
           {"max_tokens", cfg.max_tokens}};
  if (cfg.request_logprobs) {
    req["logprobs"] = true;
    if (cfg.top_logprobs_k > 0) req["top_logprobs"] = cfg.top_logprobs_k;
  }
  return req;
}

inline Generation parse_chat_response(const json& body) {
  try {
    const json& choice = body.at("choices").at(0);
    Generation gen;
    gen.text = choice.at("message").at("content").get<std::string>();
    gen.model_id = body.value("model", "");
    if (choice.contains("logprobs") && !choice.at("logprobs").is_null()) {
      std::vector<TokenLogprob> logprobs;
      for (const auto& entry : choice.at("logprobs").at("content")) {
        TokenLogprob t;
        t.token = entry.at("token").get<std::string>();
        t.logprob = entry.at("logprob").get<double>();
        if (entry.contains("top_logprobs")) {
          for (const auto& alt : entry.at("top_logprobs")) {
            std::string token = alt.at("token").get<std::string>();
            if (token == t.token) continue;  // providers repeat the chosen token
            t.top_alternatives.emplace_back(token, alt.at("logprob").get<double>());
          }
        }
        logprobs.push_back(std::move(t));
      }
      gen.token_logprobs = std::move(logprobs);
    }
    return gen;
  } catch (const json::exception& e) {
    throw_error(Errc::api_error, std::string("malformed chat response: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Embeddings

inline json build_embeddings_request(const std::string& model, const std::string& text) {
  return json{{"model", model}, {"input", json::array({text})}};
}

inline EmbeddingVector parse_embeddings_response(const json& body) {
  try {
    EmbeddingVector v;
    v.values = body.at("data").at(0).at("embedding").get<std::vector<double>>();
    double norm_sq = 0.0;
    for (double x : v.values) norm_sq += x * x;
    if (norm_sq > 0.0) {
      double norm = std::sqrt(norm_sq);
      for (double& x : v.values) x /= norm;
    }
    return v;
  } catch (const json::exception& e) {
    throw_error(Errc::api_error, std::string("malformed embeddings response: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Transport

namespace detail {

struct HttpResponse {
  int status = 0;
  std::string body;
};

// POSTs JSON and retries transport failures and 5xx responses with
// exponential backoff; 4xx responses fail immediately (retrying a bad
// request cannot help).
inline json post_json_with_retry(
    const std::function<HttpResponse(const std::string& path, const std::string& body)>& post,
    const std::string& path, const json& request, int max_retries, int backoff_ms) {
  std::string payload = request.dump();
  int backoff = backoff_ms;
  for (int attempt = 1;; ++attempt) {
    HttpResponse res;
    std::string transport_error;
    try {
      res = post(path, payload);
    } catch (const std::exception& e) {
      transport_error = e.what();
    }
    if (transport_error.empty() && res.status >= 200 && res.status < 300) {
      try {
        return json::parse(res.body);
      } catch (const std::exception& e) {
        throw_error(Errc::api_error, std::string("response is not JSON: ") + e.what());
      }
    }
    if (transport_error.empty() && res.status >= 400 && res.status < 500)
      throw ApiError(res.status, res.body);
    if (attempt >= max_retries) {
      if (!transport_error.empty())
        throw_error(Errc::transport_error,
                    transport_error + " (after " + std::to_string(attempt) + " attempts)");
      throw ApiError(res.status, res.body);
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
    backoff *= 2;
  }
}

}  // namespace detail

}  // namespace expweaver

// The HTTP client implementation is only pulled in when a translation unit
// actually instantiates a remote backend; tests of the pure helpers above
// stay free of it.
#if !defined(EXPWEAVER_NO_HTTPLIB)

#include "httplib.h"

namespace expweaver {

namespace detail {

inline std::function<HttpResponse(const std::string&, const std::string&)> make_http_post(
    const RemoteConfig& cfg) {
  return [cfg](const std::string& path, const std::string& body) -> HttpResponse {
    httplib::Client client(cfg.endpoint);
    client.set_connection_timeout(cfg.timeout_seconds);
    client.set_read_timeout(cfg.timeout_seconds);
    httplib::Headers headers;
    std::string key = resolve_api_key(cfg);
    if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) throw std::runtime_error("transport failure: " + httplib::to_string(res.error()));
    return HttpResponse{res->status, res->body};
  };
}

}  // namespace detail

class RemoteBackend final : public PolicyBackend {
 public:
  explicit RemoteBackend(RemoteConfig cfg)
      : cfg_(std::move(cfg)), post_(detail::make_http_post(cfg_)) {
    if (cfg_.endpoint.empty() || cfg_.model.empty())
      throw_error(Errc::config_error, "remote backend needs endpoint and model");
  }

  Generation generate(const std::string& context_text, const GenConfig& cfg) override {
    json request = build_chat_request(cfg_.model, context_text, cfg);
    json response = detail::post_json_with_retry(post_, "/v1/chat/completions", request,
                                                 cfg_.max_retries, cfg_.retry_backoff_ms);
    Generation gen = parse_chat_response(response);
    if (gen.model_id.empty()) gen.model_id = cfg_.model;
    return gen;
  }

  std::string model_id() const override { return cfg_.model; }

 private:
  RemoteConfig cfg_;
  std::function<detail::HttpResponse(const std::string&, const std::string&)> post_;
};

class RemoteEmbedder final : public Embedder {
 public:
  explicit RemoteEmbedder(RemoteConfig cfg, std::size_t dimension)
      : cfg_(std::move(cfg)), dimension_(dimension), post_(detail::make_http_post(cfg_)) {
    if (cfg_.endpoint.empty() || cfg_.model.empty())
      throw_error(Errc::config_error, "remote embedder needs endpoint and model");
  }

  EmbeddingVector embed(const std::string& text) const override {
    json request = build_embeddings_request(cfg_.model, text);
    json response = detail::post_json_with_retry(post_, "/v1/embeddings", request,
                                                 cfg_.max_retries, cfg_.retry_backoff_ms);
    EmbeddingVector v = parse_embeddings_response(response);
    if (v.dimension() != dimension_)
      throw_error(Errc::dimension_mismatch,
                  "provider returned dimension " + std::to_string(v.dimension()) +
                      ", expected " + std::to_string(dimension_));
    return v;
  }

  std::size_t dimension() const override { return dimension_; }

 private:
  RemoteConfig cfg_;
  std::size_t dimension_;
  std::function<detail::HttpResponse(const std::string&, const std::string&)> post_;
};

}  // namespace expweaver

#endif  // EXPWEAVER_NO_HTTPLIB
