#pragma once

#include <atomic>
#include <memory>
#include <string>
#include <thread>

#include <httplib.h>

#include "inversor/core.hpp"
#include "inversor/init.hpp"
#include "inversor/metrics.hpp"
#include "inversor/wire.hpp"

namespace inversor::http {

/// Reference loopback server exposing an in-process backend (and optional
/// embedding / inversion providers) over the /v1 wire protocol. Per-endpoint
/// request counters support cache and retry assertions in integration tests.
class LoopbackServer {
public:
  explicit LoopbackServer(const LanguageModelBackend& model,
                          const EmbeddingProvider* embedder = nullptr,
                          const init::CandidateGenerator* inverter = nullptr,
                          std::string host = "127.0.0.1")
      : model_(&model), embedder_(embedder), inverter_(inverter), host_(std::move(host)) {
    install_routes();
  }

  ~LoopbackServer() { stop(); }

  /// Binds to an ephemeral port (or `port` when nonzero) and serves on a
  /// background thread until stop().
  void start(int port = 0) {
    if (running_) return;
    if (port == 0) {
      port_ = server_.bind_to_any_port(host_);
      if (port_ < 0) throw ConfigError("loopback server failed to bind to " + host_);
    } else {
      if (!server_.bind_to_port(host_, port))
        throw ConfigError("loopback server failed to bind to " + host_ + ":" +
                          std::to_string(port));
      port_ = port;
    }
    running_ = true;
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  void stop() {
    if (!running_) return;
    server_.stop();
    if (thread_.joinable()) thread_.join();
    running_ = false;
  }

  int port() const { return port_; }
  std::string url() const { return "http://" + host_ + ":" + std::to_string(port_); }

  std::uint64_t logprobs_requests() const { return logprobs_count_.load(); }
  std::uint64_t generate_requests() const { return generate_count_.load(); }
  std::uint64_t embed_requests() const { return embed_count_.load(); }
  std::uint64_t invert_requests() const { return invert_count_.load(); }

  /// Makes the next n requests fail with HTTP 503 (for retry tests).
  void fail_next(int n) { fail_next_.store(n); }

private:
  void install_routes() {
    server_.Get("/v1/vocab", [this](const httplib::Request&, httplib::Response& res) {
      const Vocabulary& vocab = model_->vocabulary();
      wire::VocabResponse out;
      out.model = model_->model_id();
      for (std::size_t i = 0; i < vocab.size(); ++i)
        out.tokens.push_back(vocab.text(static_cast<TokenId>(i)));
      out.control_ids = vocab.control_ids();
      reply(res, wire::to_json(out));
    });

    server_.Post("/v1/logprobs", [this](const httplib::Request& req, httplib::Response& res) {
      ++logprobs_count_;
      if (inject_failure(res)) return;
      handle(res, [&] {
        wire::LogprobsRequest r = wire::logprobs_request_from_json(wire::parse_body(req.body));
        check_model(r.model);
        check_tokens(r.prompt_tokens);
        check_tokens(r.continuation_tokens);
        if (r.prompt_tokens.empty() || r.continuation_tokens.empty())
          throw ProtocolError("prompt and continuation must be non-empty");
        ScoreResult scores =
            model_->score_continuation(r.prompt_tokens, r.continuation_tokens, r.early_stop);
        wire::LogprobsResponse out;
        out.logprobs = scores.logprobs;
        out.stopped_at = scores.stopped_at;
        return wire::to_json(out);
      });
    });

    server_.Post("/v1/generate", [this](const httplib::Request& req, httplib::Response& res) {
      ++generate_count_;
      if (inject_failure(res)) return;
      handle(res, [&] {
        wire::GenerateRequest r = wire::generate_request_from_json(wire::parse_body(req.body));
        check_model(r.model);
        check_tokens(r.prompt_tokens);
        if (r.max_new < 1) throw ProtocolError("max_new must be >= 1");
        if (!model_->supports_generation())
          throw CapabilityError("backend does not support generation");
        SamplingParams params{r.temperature, r.top_p, r.top_k, r.seed};
        return wire::to_json(wire::GenerateResponse{model_->generate(r.prompt_tokens, r.max_new, params)});
      });
    });

    server_.Post("/v1/embed", [this](const httplib::Request& req, httplib::Response& res) {
      ++embed_count_;
      if (inject_failure(res)) return;
      handle(res, [&] {
        if (!embedder_) throw CapabilityError("no embedding provider configured");
        wire::EmbedRequest r = wire::embed_request_from_json(wire::parse_body(req.body));
        return wire::to_json(wire::EmbedResponse{embedder_->embed(r.text)});
      });
    });

    server_.Post("/v1/invert", [this](const httplib::Request& req, httplib::Response& res) {
      ++invert_count_;
      if (inject_failure(res)) return;
      handle(res, [&] {
        if (!inverter_) throw CapabilityError("no inversion provider configured");
        wire::InvertRequest r = wire::invert_request_from_json(wire::parse_body(req.body));
        SamplingParams params{r.temperature, r.top_p, r.top_k, r.seed};
        return wire::to_json(wire::InvertResponse{inverter_->generate(r.output_text, params)});
      });
    });
  }

  template <typename Fn>
  void handle(httplib::Response& res, Fn&& fn) {
    try {
      reply(res, fn());
    } catch (const ProtocolError& e) {
      error(res, 400, e.what());
    } catch (const ContractError& e) {
      error(res, 400, e.what());
    } catch (const CapabilityError& e) {
      error(res, 501, e.what());
    } catch (const std::exception& e) {
      error(res, 500, e.what());
    }
  }

  void check_model(const std::string& requested) const {
    if (!requested.empty() && requested != model_->model_id())
      throw ProtocolError("unknown model: '" + requested + "' (serving '" +
                          model_->model_id() + "')");
  }

  void check_tokens(const TokenSequence& tokens) const {
    if (!model_->vocabulary().valid(tokens)) throw ProtocolError("token id out of range");
  }

  bool inject_failure(httplib::Response& res) {
    int n = fail_next_.load();
    while (n > 0 && !fail_next_.compare_exchange_weak(n, n - 1)) {
    }
    if (n > 0) {
      error(res, 503, "injected transient failure");
      return true;
    }
    return false;
  }

  static void reply(httplib::Response& res, const nlohmann::json& body) {
    res.set_content(body.dump(), "application/json");
  }

  static void error(httplib::Response& res, int status, const std::string& message) {
    res.status = status;
    res.set_content(nlohmann::json{{"error", message}}.dump(), "application/json");
  }

  const LanguageModelBackend* model_;
  const EmbeddingProvider* embedder_;
  const init::CandidateGenerator* inverter_;
  std::string host_;
  httplib::Server server_;
  std::thread thread_;
  bool running_ = false;
  int port_ = -1;
  std::atomic<std::uint64_t> logprobs_count_{0};
  std::atomic<std::uint64_t> generate_count_{0};
  std::atomic<std::uint64_t> embed_count_{0};
  std::atomic<std::uint64_t> invert_count_{0};
  std::atomic<int> fail_next_{0};
};

}  // namespace inversor::http
