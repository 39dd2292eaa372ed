#pragma once

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <httplib.h>

#include "inversor/core.hpp"
#include "inversor/init.hpp"
#include "inversor/metrics.hpp"
#include "inversor/wire.hpp"

namespace inversor::http {

inline constexpr const char* kBackendUrlEnvVar = "INVERSOR_BACKEND_URL";

inline std::optional<std::string> backend_url_from_env() {
  const char* v = std::getenv(kBackendUrlEnvVar);
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

struct ClientConfig {
  std::string base_url;      // e.g. http://127.0.0.1:8080
  std::string model_id;      // model name requested from the server
  int max_retries = 3;       // retries after the first attempt
  int backoff_base_ms = 50;  // doubled per retry; 0 disables sleeping
  double timeout_seconds = 30.0;
};

/// Thin JSON-over-HTTP transport with idempotent retries on transient
/// failures (connection errors, 429 and 5xx). Shareable across threads.
class Transport {
public:
  explicit Transport(ClientConfig config) : config_(std::move(config)) {
    if (config_.base_url.empty()) throw ConfigError("backend url is empty");
    client_ = std::make_unique<httplib::Client>(config_.base_url);
    client_->set_connection_timeout(std::chrono::duration<double>(config_.timeout_seconds));
    client_->set_read_timeout(std::chrono::duration<double>(config_.timeout_seconds));
  }

  const ClientConfig& config() const { return config_; }

  nlohmann::json post(const std::string& path, const nlohmann::json& body) const {
    return roundtrip(path, body.dump(), /*get=*/false);
  }

  nlohmann::json get(const std::string& path) const { return roundtrip(path, "", /*get=*/true); }

private:
  nlohmann::json roundtrip(const std::string& path, const std::string& body, bool get) const {
    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
      if (attempt > 0 && config_.backoff_base_ms > 0) {
        std::this_thread::sleep_for(
            std::chrono::milliseconds(config_.backoff_base_ms << (attempt - 1)));
      }
      httplib::Result res = [&] {
        std::lock_guard<std::mutex> lock(mutex_);
        return get ? client_->Get(path) : client_->Post(path, body, "application/json");
      }();
      if (!res) {
        last_error = "connection failure: " + httplib::to_string(res.error());
        continue;  // transient
      }
      if (res->status >= 200 && res->status < 300) {
        try {
          return wire::parse_body(res->body);
        } catch (const ProtocolError& e) {
          std::cerr << "inversor: protocol error from " << path << ": " << e.what() << "\n";
          throw;
        }
      }
      last_error = "HTTP " + std::to_string(res->status) + " from " + path;
      bool transient = res->status == 429 || res->status >= 500;
      if (!transient) throw BackendError(last_error + ": " + res->body, /*retryable=*/false);
    }
    throw BackendError(last_error + " after " + std::to_string(config_.max_retries + 1) +
                           " attempts",
                       /*retryable=*/true);
  }

  ClientConfig config_;
  mutable std::mutex mutex_;
  std::unique_ptr<httplib::Client> client_;
};

/// Remote language model speaking the /v1 wire protocol. The tokenizer
/// definition is fetched once at construction so scoring stays id-based.
class RemoteBackend final : public LanguageModelBackend {
public:
  explicit RemoteBackend(ClientConfig config)
      : transport_(std::move(config)), vocab_(2) {
    wire::VocabResponse res = wire::vocab_response_from_json(transport_.get("/v1/vocab"));
    vocab_ = Vocabulary(res.tokens, res.control_ids);
    model_id_ = transport_.config().model_id.empty() ? res.model : transport_.config().model_id;
  }

  const std::string& model_id() const override { return model_id_; }
  const Vocabulary& vocabulary() const override { return vocab_; }

  ScoreResult score_continuation(const TokenSequence& prompt, const TokenSequence& continuation,
                                 bool early_stop) const override {
    wire::LogprobsRequest req{model_id_, prompt, continuation, early_stop};
    wire::LogprobsResponse res =
        wire::logprobs_response_from_json(transport_.post("/v1/logprobs", wire::to_json(req)));
    if (!res.stopped_at && res.logprobs.size() != continuation.size())
      throw ProtocolError("logprobs length does not match continuation length");
    ScoreResult out;
    out.stopped_at = res.stopped_at;
    out.logprobs.reserve(res.logprobs.size());
    for (std::size_t i = 0; i < res.logprobs.size(); ++i) {
      double lp = res.logprobs[i];
      // Wire probabilities below the floor count as exactly zero.
      if (is_zero_logprob(lp)) {
        if (early_stop) {
          out.stopped_at = static_cast<int>(i) + 1;
          out.logprobs.resize(i);
          return out;
        }
        out.logprobs.push_back(kNegInf);
      } else {
        out.logprobs.push_back(lp);
      }
    }
    return out;
  }

  bool supports_generation() const override { return true; }

  TokenSequence generate(const TokenSequence& prompt, int max_new,
                         const SamplingParams& sampling) const override {
    if (max_new < 1) throw ContractError("generate: max_new must be >= 1");
    wire::GenerateRequest req{model_id_, prompt,         max_new, sampling.temperature,
                              sampling.top_p, sampling.top_k, sampling.seed};
    wire::GenerateResponse res =
        wire::generate_response_from_json(transport_.post("/v1/generate", wire::to_json(req)));
    if (!vocab_.valid(res.tokens)) throw ProtocolError("generated token id out of range");
    return res.tokens;
  }

private:
  Transport transport_;
  Vocabulary vocab_;
  std::string model_id_;
};

/// Remote embedding endpoint as a metrics provider.
class RemoteEmbedder final : public EmbeddingProvider {
public:
  explicit RemoteEmbedder(ClientConfig config) : transport_(std::move(config)) {}

  std::vector<double> embed(const std::string& text) const override {
    wire::EmbedResponse res =
        wire::embed_response_from_json(transport_.post("/v1/embed", wire::to_json(wire::EmbedRequest{text})));
    if (res.vector.empty()) throw ProtocolError("empty embedding vector");
    double norm = 0.0;
    for (double v : res.vector) norm += v * v;
    if (std::abs(std::sqrt(norm) - 1.0) > 1e-6)
      throw ProtocolError("embedding vector is not unit-norm");
    return res.vector;
  }

private:
  Transport transport_;
};

/// Remote inverted-model / paraphraser endpoint as a CandidateGenerator.
class RemoteGenerator final : public init::CandidateGenerator {
public:
  explicit RemoteGenerator(ClientConfig config) : transport_(std::move(config)) {}

  std::string generate(const std::string& target_output_text,
                       const SamplingParams& sampling) const override {
    wire::InvertRequest req{target_output_text, sampling.temperature, sampling.top_p,
                            sampling.top_k, sampling.seed};
    wire::InvertResponse res =
        wire::invert_response_from_json(transport_.post("/v1/invert", wire::to_json(req)));
    if (res.input_text.empty()) throw ProtocolError("generator returned empty text");
    return res.input_text;
  }

private:
  Transport transport_;
};

}  // namespace inversor::http
