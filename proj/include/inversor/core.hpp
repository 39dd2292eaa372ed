#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "inversor/util.hpp"

namespace inversor {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Probabilities below this are treated as exactly zero. Gives "zero
/// probability" a concrete meaning over finite-precision wire formats.
inline constexpr double kZeroProbFloor = 1e-45;

inline double zero_prob_log_floor() {
  static const double v = std::log(kZeroProbFloor);
  return v;
}

inline bool is_zero_logprob(double lp) {
  return !(lp >= zero_prob_log_floor());  // catches -inf and NaN too
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

/// Closed token alphabet. Token ids are dense integers in [0, size()).
/// Control tokens (eos and friends) are valid ids but are excluded from
/// uniform random draws and from text rendering lookups.
class Vocabulary {
public:
  /// Size-only vocabulary; ids render as "#<id>".
  explicit Vocabulary(std::size_t size) : size_(size) { check_size(); }

  Vocabulary(std::vector<std::string> token_texts, std::vector<TokenId> control_ids = {})
      : size_(token_texts.size()), texts_(std::move(token_texts)) {
    check_size();
    for (std::size_t i = 0; i < texts_.size(); ++i) {
      index_.emplace(texts_[i], static_cast<TokenId>(i));
    }
    control_.assign(size_, false);
    for (TokenId id : control_ids) {
      if (!valid(id)) throw ConfigError("control token id out of range");
      control_[static_cast<std::size_t>(id)] = true;
    }
    rebuild_regular();
  }

  std::size_t size() const { return size_; }
  bool has_texts() const { return !texts_.empty(); }

  bool valid(TokenId id) const {
    return id >= 0 && static_cast<std::size_t>(id) < size_;
  }
  bool valid(const TokenSequence& seq) const {
    for (TokenId id : seq)
      if (!valid(id)) return false;
    return true;
  }

  bool is_control(TokenId id) const {
    return !control_.empty() && valid(id) && control_[static_cast<std::size_t>(id)];
  }

  std::vector<TokenId> control_ids() const {
    std::vector<TokenId> out;
    for (std::size_t i = 0; i < control_.size(); ++i)
      if (control_[i]) out.push_back(static_cast<TokenId>(i));
    return out;
  }

  std::string text(TokenId id) const {
    if (!valid(id)) throw ContractError("token id out of range");
    if (texts_.empty()) return "#" + std::to_string(id);
    return texts_[static_cast<std::size_t>(id)];
  }

  std::optional<TokenId> find(std::string_view word) const {
    auto it = index_.find(std::string(word));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::string render(const TokenSequence& seq) const {
    std::string out;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (i) out += ' ';
      out += text(seq[i]);
    }
    return out;
  }

  /// Whitespace tokenization against the closed vocabulary.
  /// Returns nullopt if any word is unknown.
  std::optional<TokenSequence> try_tokenize(std::string_view text) const {
    TokenSequence out;
    for (const auto& w : split_whitespace(text)) {
      auto id = find(w);
      if (!id) return std::nullopt;
      out.push_back(*id);
    }
    return out;
  }

  TokenSequence tokenize(std::string_view text) const {
    TokenSequence out;
    for (const auto& w : split_whitespace(text)) {
      auto id = find(w);
      if (!id) throw ConfigError("word not in vocabulary: '" + w + "'");
      out.push_back(*id);
    }
    return out;
  }

  /// Tokenize keeping only in-vocabulary words.
  TokenSequence tokenize_lossy(std::string_view text) const {
    TokenSequence out;
    for (const auto& w : split_whitespace(text)) {
      if (auto id = find(w)) out.push_back(*id);
    }
    return out;
  }

  /// Uniform draw over non-control token ids.
  TokenId random_regular(Rng& rng) const {
    if (!regular_.empty()) return regular_[rng.index(regular_.size())];
    return static_cast<TokenId>(rng.index(size_));
  }

  std::size_t regular_count() const {
    return regular_.empty() ? size_ : regular_.size();
  }

private:
  void check_size() const {
    if (size_ < 2) throw ConfigError("vocabulary size must be at least 2");
  }
  void rebuild_regular() {
    regular_.clear();
    for (std::size_t i = 0; i < size_; ++i)
      if (!control_[i]) regular_.push_back(static_cast<TokenId>(i));
    if (regular_.empty()) throw ConfigError("vocabulary has no non-control tokens");
  }

  std::size_t size_;
  std::vector<std::string> texts_;
  std::unordered_map<std::string, TokenId> index_;
  std::vector<bool> control_;
  std::vector<TokenId> regular_;
};

// ---------------------------------------------------------------------------
// Backend interface
// ---------------------------------------------------------------------------

struct SamplingParams {
  double temperature = 1.0;
  double top_p = 1.0;
  int top_k = 0;  // 0 = unrestricted
  std::uint64_t seed = 0;
};

/// Per-position chain-rule scores for a continuation. When scoring stopped at
/// a zero-probability position, `stopped_at` holds that position (1-based) and
/// `logprobs` holds the finite conditionals before it.
struct ScoreResult {
  std::vector<double> logprobs;
  std::optional<int> stopped_at;
};

struct ObjectiveReport {
  double log_likelihood = 0.0;  // <= 0, or -inf when some position had probability 0
  int tokens_scored = 0;        // output positions evaluated (1-based failing position on early stop)
  int model_calls = 0;

  bool zero_probability() const { return !std::isfinite(log_likelihood); }
};

/// Abstract deterministic language model. Scoring is const and safely
/// shareable across threads; generation with an explicit seed is pure.
class LanguageModelBackend {
public:
  virtual ~LanguageModelBackend() = default;

  virtual const std::string& model_id() const = 0;
  virtual const Vocabulary& vocabulary() const = 0;

  /// log P_f(continuation_i | prompt continuation_1..i-1) for each position.
  /// With early_stop, scoring halts at the first zero-probability position.
  virtual ScoreResult score_continuation(const TokenSequence& prompt,
                                         const TokenSequence& continuation,
                                         bool early_stop) const = 0;

  virtual bool supports_generation() const = 0;

  /// Samples up to max_new tokens. Temperature 0 is the greedy continuation.
  /// Identical seed and settings give identical output.
  virtual TokenSequence generate(const TokenSequence& prompt, int max_new,
                                 const SamplingParams& sampling) const = 0;
};

// ---------------------------------------------------------------------------
// Chain-rule likelihood
// ---------------------------------------------------------------------------

/// Sum of per-position conditional log-probs of output_prefix given input.
/// Stops at the first zero-probability position and reports -inf with
/// tokens_scored marking that position.
inline ObjectiveReport sequence_log_likelihood(const LanguageModelBackend& model,
                                               const TokenSequence& input,
                                               const TokenSequence& output_prefix) {
  if (input.empty()) throw ContractError("sequence_log_likelihood: empty input");
  if (output_prefix.empty()) throw ContractError("sequence_log_likelihood: empty output prefix");
  const Vocabulary& vocab = model.vocabulary();
  if (!vocab.valid(input) || !vocab.valid(output_prefix))
    throw ContractError("sequence_log_likelihood: token id out of range");

  ScoreResult scores = model.score_continuation(input, output_prefix, /*early_stop=*/true);

  ObjectiveReport report;
  if (scores.stopped_at) {
    report.log_likelihood = kNegInf;
    report.tokens_scored = *scores.stopped_at;
  } else {
    double total = 0.0;
    for (double lp : scores.logprobs) total += lp;
    report.log_likelihood = total;
    report.tokens_scored = static_cast<int>(scores.logprobs.size());
  }
  report.model_calls = report.tokens_scored;
  return report;
}

// ---------------------------------------------------------------------------
// Sampling helper for in-process backends
// ---------------------------------------------------------------------------

/// Draw one token from a full-vocabulary log-distribution under temperature /
/// top-k / top-p. Temperature 0 (or top_k 1) selects the argmax, ties broken
/// by lowest id.
inline TokenId sample_from_logprobs(const std::vector<double>& logprobs,
                                    const SamplingParams& params, Rng& rng) {
  if (logprobs.empty()) throw ContractError("sample_from_logprobs: empty distribution");

  std::vector<std::size_t> order(logprobs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (logprobs[a] != logprobs[b]) return logprobs[a] > logprobs[b];
    return a < b;
  });

  if (params.temperature <= 0.0 || params.top_k == 1) {
    return static_cast<TokenId>(order[0]);
  }

  std::size_t keep = order.size();
  if (params.top_k > 0) keep = std::min<std::size_t>(keep, static_cast<std::size_t>(params.top_k));

  // Scale by 1/temperature in log domain, then softmax over the kept set.
  std::vector<double> weights(keep);
  double max_scaled = kNegInf;
  for (std::size_t i = 0; i < keep; ++i) {
    double scaled = logprobs[order[i]] / params.temperature;
    weights[i] = scaled;
    max_scaled = std::max(max_scaled, scaled);
  }
  if (!std::isfinite(max_scaled)) return static_cast<TokenId>(order[0]);
  double z = 0.0;
  for (std::size_t i = 0; i < keep; ++i) {
    weights[i] = std::isfinite(weights[i]) ? std::exp(weights[i] - max_scaled) : 0.0;
    z += weights[i];
  }

  // Nucleus cut: smallest prefix of the sorted set with mass >= top_p.
  if (params.top_p < 1.0) {
    double target = params.top_p * z;
    double cum = 0.0;
    std::size_t cut = keep;
    for (std::size_t i = 0; i < keep; ++i) {
      cum += weights[i];
      if (cum >= target) {
        cut = i + 1;
        break;
      }
    }
    keep = std::max<std::size_t>(1, cut);
    z = 0.0;
    for (std::size_t i = 0; i < keep; ++i) z += weights[i];
  }

  double draw = rng.uniform01() * z;
  double cum = 0.0;
  for (std::size_t i = 0; i < keep; ++i) {
    cum += weights[i];
    if (draw < cum) return static_cast<TokenId>(order[i]);
  }
  return static_cast<TokenId>(order[keep - 1]);
}

}  // namespace inversor
