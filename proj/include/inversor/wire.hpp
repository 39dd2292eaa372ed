#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "inversor/core.hpp"

namespace inversor::wire {

using nlohmann::json;

// Floats on the wire are finite JSON numbers or the string "-inf"; JSON has
// no infinity literal.

inline json encode_logprob(double lp) {
  if (std::isfinite(lp)) return lp;
  if (lp < 0) return "-inf";
  throw ProtocolError("cannot encode non-finite, non -inf float");
}

inline double decode_logprob(const json& j) {
  if (j.is_number()) {
    double v = j.get<double>();
    if (!std::isfinite(v)) throw ProtocolError("non-finite float on the wire");
    return v;
  }
  if (j.is_string() && j.get<std::string>() == "-inf") return kNegInf;
  throw ProtocolError("expected float or \"-inf\", got: " + j.dump());
}

namespace detail {

inline const json& field(const json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end())
    throw ProtocolError(std::string("missing field '") + name + "' in: " + j.dump());
  return *it;
}

inline TokenSequence tokens_from(const json& j, const char* name) {
  const json& arr = field(j, name);
  if (!arr.is_array()) throw ProtocolError(std::string("field '") + name + "' must be an array");
  TokenSequence out;
  out.reserve(arr.size());
  for (const auto& v : arr) {
    if (!v.is_number_integer()) throw ProtocolError(std::string("non-integer token in '") + name + "'");
    out.push_back(v.get<TokenId>());
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// POST /v1/logprobs
// ---------------------------------------------------------------------------

struct LogprobsRequest {
  std::string model;
  TokenSequence prompt_tokens;
  TokenSequence continuation_tokens;
  bool early_stop = true;

  bool operator==(const LogprobsRequest&) const = default;
};

inline json to_json(const LogprobsRequest& r) {
  return json{{"model", r.model},
              {"prompt_tokens", r.prompt_tokens},
              {"continuation_tokens", r.continuation_tokens},
              {"early_stop", r.early_stop}};
}

inline LogprobsRequest logprobs_request_from_json(const json& j) {
  if (!j.is_object()) throw ProtocolError("logprobs request must be an object: " + j.dump());
  LogprobsRequest r;
  r.model = detail::field(j, "model").get<std::string>();
  r.prompt_tokens = detail::tokens_from(j, "prompt_tokens");
  r.continuation_tokens = detail::tokens_from(j, "continuation_tokens");
  r.early_stop = detail::field(j, "early_stop").get<bool>();
  return r;
}

/// stopped_at is the 1-based position whose conditional probability was zero,
/// or null; logprobs carries the finite conditionals before it (all positions
/// when null, with "-inf" entries allowed only for early_stop=false scoring).
struct LogprobsResponse {
  std::vector<double> logprobs;
  std::optional<int> stopped_at;

  bool operator==(const LogprobsResponse&) const = default;
};

inline json to_json(const LogprobsResponse& r) {
  json arr = json::array();
  for (double lp : r.logprobs) arr.push_back(encode_logprob(lp));
  return json{{"logprobs", arr},
              {"stopped_at", r.stopped_at ? json(*r.stopped_at) : json(nullptr)}};
}

inline LogprobsResponse logprobs_response_from_json(const json& j) {
  if (!j.is_object()) throw ProtocolError("logprobs response must be an object: " + j.dump());
  LogprobsResponse r;
  const json& arr = detail::field(j, "logprobs");
  if (!arr.is_array()) throw ProtocolError("'logprobs' must be an array");
  for (const auto& v : arr) r.logprobs.push_back(decode_logprob(v));
  const json& stopped = detail::field(j, "stopped_at");
  if (!stopped.is_null()) {
    if (!stopped.is_number_integer()) throw ProtocolError("'stopped_at' must be int or null");
    int s = stopped.get<int>();
    if (s < 1) throw ProtocolError("'stopped_at' must be >= 1");
    r.stopped_at = s;
  }
  return r;
}

// ---------------------------------------------------------------------------
// POST /v1/generate
// ---------------------------------------------------------------------------

struct GenerateRequest {
  std::string model;
  TokenSequence prompt_tokens;
  int max_new = 1;
  double temperature = 1.0;
  double top_p = 1.0;
  int top_k = 0;
  std::uint64_t seed = 0;

  bool operator==(const GenerateRequest&) const = default;
};

inline json to_json(const GenerateRequest& r) {
  return json{{"model", r.model},         {"prompt_tokens", r.prompt_tokens},
              {"max_new", r.max_new},     {"temperature", r.temperature},
              {"top_p", r.top_p},         {"top_k", r.top_k},
              {"seed", r.seed}};
}

inline GenerateRequest generate_request_from_json(const json& j) {
  if (!j.is_object()) throw ProtocolError("generate request must be an object: " + j.dump());
  GenerateRequest r;
  r.model = detail::field(j, "model").get<std::string>();
  r.prompt_tokens = detail::tokens_from(j, "prompt_tokens");
  r.max_new = detail::field(j, "max_new").get<int>();
  r.temperature = detail::field(j, "temperature").get<double>();
  r.top_p = detail::field(j, "top_p").get<double>();
  r.top_k = detail::field(j, "top_k").get<int>();
  r.seed = detail::field(j, "seed").get<std::uint64_t>();
  return r;
}

struct GenerateResponse {
  TokenSequence tokens;

  bool operator==(const GenerateResponse&) const = default;
};

inline json to_json(const GenerateResponse& r) { return json{{"tokens", r.tokens}}; }

inline GenerateResponse generate_response_from_json(const json& j) {
  if (!j.is_object()) throw ProtocolError("generate response must be an object: " + j.dump());
  return GenerateResponse{detail::tokens_from(j, "tokens")};
}

// ---------------------------------------------------------------------------
// POST /v1/embed
// ---------------------------------------------------------------------------

struct EmbedRequest {
  std::string text;

  bool operator==(const EmbedRequest&) const = default;
};

inline json to_json(const EmbedRequest& r) { return json{{"text", r.text}}; }

inline EmbedRequest embed_request_from_json(const json& j) {
  if (!j.is_object()) throw ProtocolError("embed request must be an object: " + j.dump());
  return EmbedRequest{detail::field(j, "text").get<std::string>()};
}

struct EmbedResponse {
  std::vector<double> vector;

  bool operator==(const EmbedResponse&) const = default;
};

inline json to_json(const EmbedResponse& r) {
  json arr = json::array();
  for (double v : r.vector) {
    if (!std::isfinite(v)) throw ProtocolError("embedding components must be finite");
    arr.push_back(v);
  }
  return json{{"vector", arr}};
}

inline EmbedResponse embed_response_from_json(const json& j) {
  if (!j.is_object()) throw ProtocolError("embed response must be an object: " + j.dump());
  const json& arr = detail::field(j, "vector");
  if (!arr.is_array()) throw ProtocolError("'vector' must be an array");
  EmbedResponse r;
  for (const auto& v : arr) {
    if (!v.is_number()) throw ProtocolError("non-numeric embedding component");
    double x = v.get<double>();
    if (!std::isfinite(x)) throw ProtocolError("embedding components must be finite");
    r.vector.push_back(x);
  }
  return r;
}

// ---------------------------------------------------------------------------
// POST /v1/invert
// ---------------------------------------------------------------------------

struct InvertRequest {
  std::string output_text;
  double temperature = 1.0;
  double top_p = 1.0;
  int top_k = 0;
  std::uint64_t seed = 0;

  bool operator==(const InvertRequest&) const = default;
};

inline json to_json(const InvertRequest& r) {
  return json{{"output_text", r.output_text},
              {"temperature", r.temperature},
              {"top_p", r.top_p},
              {"top_k", r.top_k},
              {"seed", r.seed}};
}

inline InvertRequest invert_request_from_json(const json& j) {
  if (!j.is_object()) throw ProtocolError("invert request must be an object: " + j.dump());
  InvertRequest r;
  r.output_text = detail::field(j, "output_text").get<std::string>();
  r.temperature = detail::field(j, "temperature").get<double>();
  r.top_p = detail::field(j, "top_p").get<double>();
  r.top_k = detail::field(j, "top_k").get<int>();
  r.seed = detail::field(j, "seed").get<std::uint64_t>();
  return r;
}

struct InvertResponse {
  std::string input_text;

  bool operator==(const InvertResponse&) const = default;
};

inline json to_json(const InvertResponse& r) { return json{{"input_text", r.input_text}}; }

inline InvertResponse invert_response_from_json(const json& j) {
  if (!j.is_object()) throw ProtocolError("invert response must be an object: " + j.dump());
  return InvertResponse{detail::field(j, "input_text").get<std::string>()};
}

// ---------------------------------------------------------------------------
// GET /v1/vocab
// ---------------------------------------------------------------------------

/// Tokenizer definition fetched once per model id; keeps the scoring
/// protocol purely id-based.
struct VocabResponse {
  std::string model;
  std::vector<std::string> tokens;
  std::vector<TokenId> control_ids;

  bool operator==(const VocabResponse&) const = default;
};

inline json to_json(const VocabResponse& r) {
  return json{{"model", r.model}, {"tokens", r.tokens}, {"control_ids", r.control_ids}};
}

inline VocabResponse vocab_response_from_json(const json& j) {
  if (!j.is_object()) throw ProtocolError("vocab response must be an object: " + j.dump());
  VocabResponse r;
  r.model = detail::field(j, "model").get<std::string>();
  const json& toks = detail::field(j, "tokens");
  if (!toks.is_array()) throw ProtocolError("'tokens' must be an array");
  for (const auto& t : toks) {
    if (!t.is_string()) throw ProtocolError("vocab tokens must be strings");
    r.tokens.push_back(t.get<std::string>());
  }
  r.control_ids = detail::tokens_from(j, "control_ids");
  return r;
}

inline json parse_body(const std::string& body) {
  json j = json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) {
    std::string shown = body.size() > 256 ? body.substr(0, 256) + "..." : body;
    throw ProtocolError("malformed JSON body: " + shown);
  }
  return j;
}

}  // namespace inversor::wire
