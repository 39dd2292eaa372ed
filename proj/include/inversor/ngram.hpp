#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "inversor/core.hpp"

namespace inversor {

struct NGramConfig {
  int order = 2;
  double alpha = 1.0;  // additive smoothing constant, > 0
  std::vector<std::string> hard_zero_tokens;
};

/// Deterministic n-gram backend with additive smoothing. Every conditional is
/// strictly positive unless the token is on the hard-zero list, which pins it
/// to exactly 0 in all contexts. Immutable after training.
class NGramModel final : public LanguageModelBackend {
public:
  static constexpr int kMaxOrder = 5;
  static constexpr const char* kEosText = "</s>";

  static NGramModel train_from_corpus(const std::vector<std::string>& lines,
                                      const NGramConfig& config = {}) {
    validate_config(config);

    std::set<std::string> words;
    std::vector<std::vector<std::string>> docs;
    for (const auto& line : lines) {
      auto tokens = split_whitespace(line);
      if (tokens.empty()) continue;
      for (const auto& w : tokens) words.insert(w);
      docs.push_back(std::move(tokens));
    }
    if (docs.empty()) throw ConfigError("corpus has no non-empty lines");
    words.erase(kEosText);

    std::vector<std::string> texts(words.begin(), words.end());
    texts.push_back(kEosText);
    if (texts.size() >= 0xFFFF) throw ConfigError("vocabulary too large for n-gram model");

    const TokenId eos = static_cast<TokenId>(texts.size() - 1);
    NGramModel model(Vocabulary(std::move(texts), {eos}), eos, config);

    for (const auto& doc : docs) {
      TokenSequence ids;
      ids.reserve(doc.size() + 1);
      for (const auto& w : doc) ids.push_back(*model.vocab_.find(w));
      ids.push_back(eos);
      model.count_document(ids);
    }
    model.finalize();
    return model;
  }

  static NGramModel train_from_file(const std::string& path, const NGramConfig& config = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open corpus file: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return train_from_corpus(lines, config);
  }

  // --- LanguageModelBackend ---

  const std::string& model_id() const override { return model_id_; }
  const Vocabulary& vocabulary() const override { return vocab_; }

  ScoreResult score_continuation(const TokenSequence& prompt, const TokenSequence& continuation,
                                 bool early_stop) const override {
    ScoreResult out;
    out.logprobs.reserve(continuation.size());
    std::deque<TokenId> window = context_window(prompt);
    for (std::size_t i = 0; i < continuation.size(); ++i) {
      TokenId tok = continuation[i];
      double lp = conditional_logprob(window, tok);
      if (is_zero_logprob(lp)) {
        if (early_stop) {
          out.stopped_at = static_cast<int>(i) + 1;
          return out;
        }
        out.logprobs.push_back(kNegInf);
      } else {
        out.logprobs.push_back(lp);
      }
      push_window(window, tok);
    }
    return out;
  }

  bool supports_generation() const override { return true; }

  TokenSequence generate(const TokenSequence& prompt, int max_new,
                         const SamplingParams& sampling) const override {
    if (max_new < 1) throw ContractError("generate: max_new must be >= 1");
    if (!vocab_.valid(prompt)) throw ContractError("generate: token id out of range");
    Rng rng(sampling.seed);
    std::deque<TokenId> window = context_window(prompt);
    TokenSequence out;
    for (int i = 0; i < max_new; ++i) {
      std::vector<double> logprobs = next_token_logprobs_window(window);
      TokenId tok = sample_from_logprobs(logprobs, sampling, rng);
      if (tok == eos_) break;
      out.push_back(tok);
      push_window(window, tok);
    }
    return out;
  }

  // --- n-gram specific ---

  /// Full next-token log-distribution given a (possibly empty) context.
  std::vector<double> next_token_logprobs(const TokenSequence& context) const {
    std::deque<TokenId> window = context_window(context);
    return next_token_logprobs_window(window);
  }

  int order() const { return order_; }
  double alpha() const { return alpha_; }
  TokenId eos_id() const { return eos_; }
  const std::vector<TokenId>& hard_zero_ids() const { return hard_zero_ids_; }

  // --- serialization ---

  nlohmann::json to_json() const {
    nlohmann::json counts = nlohmann::json::object();
    // std::map keeps key order deterministic.
    std::map<std::string, nlohmann::json> sorted;
    for (const auto& [key, ctx] : counts_) {
      nlohmann::json pairs = nlohmann::json::array();
      for (const auto& [tok, n] : ctx.entries) pairs.push_back({tok, n});
      sorted.emplace(context_key_string(key), std::move(pairs));
    }
    for (auto& [k, v] : sorted) counts[k] = std::move(v);

    std::vector<std::string> vocab_texts;
    vocab_texts.reserve(vocab_.size());
    for (std::size_t i = 0; i < vocab_.size(); ++i)
      vocab_texts.push_back(vocab_.text(static_cast<TokenId>(i)));

    return nlohmann::json{{"format", "inversor-ngram"},
                          {"version", 1},
                          {"order", order_},
                          {"alpha", alpha_},
                          {"vocab", vocab_texts},
                          {"eos_id", eos_},
                          {"hard_zero_ids", hard_zero_ids_},
                          {"counts", counts}};
  }

  static NGramModel from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("format", "") != "inversor-ngram")
      throw ConfigError("not an inversor-ngram model file");
    if (j.value("version", 0) != 1)
      throw ConfigError("unsupported n-gram model version");

    NGramConfig config;
    config.order = j.at("order").get<int>();
    config.alpha = j.at("alpha").get<double>();
    validate_config(config);

    auto vocab_texts = j.at("vocab").get<std::vector<std::string>>();
    TokenId eos = j.at("eos_id").get<TokenId>();
    NGramModel model(Vocabulary(vocab_texts, {eos}), eos, config);
    model.hard_zero_ids_ = j.at("hard_zero_ids").get<std::vector<TokenId>>();
    for (TokenId id : model.hard_zero_ids_) {
      if (!model.vocab_.valid(id)) throw ConfigError("hard-zero id out of range in model file");
      model.hard_zero_[static_cast<std::size_t>(id)] = true;
    }

    for (const auto& [key_str, pairs] : j.at("counts").items()) {
      std::uint64_t key = parse_context_key(key_str, model.order_, model.vocab_.size());
      ContextCounts& ctx = model.counts_[key];
      for (const auto& p : pairs) {
        TokenId tok = p.at(0).get<TokenId>();
        std::uint64_t n = p.at(1).get<std::uint64_t>();
        if (!model.vocab_.valid(tok)) throw ConfigError("count token id out of range in model file");
        ctx.entries.emplace_back(tok, n);
      }
    }
    model.finalize();
    return model;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write model file: " + path);
    out << to_json().dump() << '\n';
  }

  static NGramModel load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open model file: " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("malformed model file: ") + e.what());
    }
    return from_json(j);
  }

private:
  struct ContextCounts {
    std::vector<std::pair<TokenId, std::uint64_t>> entries;  // sorted by token id
    std::uint64_t total_nonzero = 0;  // excludes hard-zero tokens

    std::uint64_t count(TokenId tok) const {
      auto it = std::lower_bound(entries.begin(), entries.end(), tok,
                                 [](const auto& e, TokenId t) { return e.first < t; });
      if (it != entries.end() && it->first == tok) return it->second;
      return 0;
    }
  };

  NGramModel(Vocabulary vocab, TokenId eos, const NGramConfig& config)
      : vocab_(std::move(vocab)), eos_(eos), order_(config.order), alpha_(config.alpha) {
    bos_ = static_cast<TokenId>(vocab_.size());  // context-only sentinel
    hard_zero_.assign(vocab_.size(), false);
    for (const auto& w : config.hard_zero_tokens) {
      auto id = vocab_.find(w);
      if (!id) throw ConfigError("hard-zero token not in vocabulary: '" + w + "'");
      if (!hard_zero_[static_cast<std::size_t>(*id)]) {
        hard_zero_[static_cast<std::size_t>(*id)] = true;
        hard_zero_ids_.push_back(*id);
      }
    }
    std::sort(hard_zero_ids_.begin(), hard_zero_ids_.end());
  }

  static void validate_config(const NGramConfig& config) {
    if (config.order < 1 || config.order > kMaxOrder)
      throw ConfigError("n-gram order must be in [1, " + std::to_string(kMaxOrder) + "]");
    if (!(config.alpha > 0.0)) throw ConfigError("smoothing alpha must be > 0");
  }

  void count_document(const TokenSequence& ids) {
    std::deque<TokenId> window(static_cast<std::size_t>(order_ - 1), bos_);
    for (TokenId tok : ids) {
      raw_bump(pack_context(window), tok);
      push_window(window, tok);
    }
  }

  void raw_bump(std::uint64_t key, TokenId tok) {
    ContextCounts& ctx = counts_[key];
    auto it = std::lower_bound(ctx.entries.begin(), ctx.entries.end(), tok,
                               [](const auto& e, TokenId t) { return e.first < t; });
    if (it != ctx.entries.end() && it->first == tok) {
      ++it->second;
    } else {
      ctx.entries.insert(it, {tok, 1});
    }
  }

  void finalize() {
    std::size_t zeros = 0;
    for (bool z : hard_zero_)
      if (z) ++zeros;
    if (zeros >= vocab_.size()) throw ConfigError("all tokens are hard-zero");
    denom_vocab_ = static_cast<double>(vocab_.size() - zeros);

    for (auto& [key, ctx] : counts_) {
      std::sort(ctx.entries.begin(), ctx.entries.end());
      ctx.total_nonzero = 0;
      for (const auto& [tok, n] : ctx.entries)
        if (!hard_zero_[static_cast<std::size_t>(tok)]) ctx.total_nonzero += n;
    }

    HashBuilder h;
    h.add(order_).add(alpha_).add(static_cast<std::uint64_t>(vocab_.size()));
    for (std::size_t i = 0; i < vocab_.size(); ++i) h.add(vocab_.text(static_cast<TokenId>(i)));
    for (TokenId id : hard_zero_ids_) h.add(id);
    std::map<std::uint64_t, const ContextCounts*> ordered;
    for (const auto& [key, ctx] : counts_) ordered.emplace(key, &ctx);
    for (const auto& [key, ctx] : ordered) {
      h.add(key);
      for (const auto& [tok, n] : ctx->entries) h.add(tok).add(n);
    }
    std::ostringstream id;
    id << "ngram-o" << order_ << "-a" << alpha_ << "-" << h.digest().hex().substr(0, 12);
    model_id_ = id.str();
  }

  // Context handling: the window always holds exactly order-1 ids, padded
  // with the bos sentinel on the left.
  std::deque<TokenId> context_window(const TokenSequence& context) const {
    std::deque<TokenId> window(static_cast<std::size_t>(order_ - 1), bos_);
    for (TokenId tok : context) push_window(window, tok);
    return window;
  }

  void push_window(std::deque<TokenId>& window, TokenId tok) const {
    if (order_ <= 1) return;
    window.push_back(tok);
    window.pop_front();
  }

  std::uint64_t pack_context(const std::deque<TokenId>& window) const {
    std::uint64_t key = 0;
    for (TokenId id : window) key = (key << 16) | static_cast<std::uint64_t>(id);
    return key;
  }

  std::string context_key_string(std::uint64_t key) const {
    std::vector<std::uint64_t> ids(static_cast<std::size_t>(order_ - 1));
    for (int i = order_ - 2; i >= 0; --i) {
      ids[static_cast<std::size_t>(i)] = key & 0xFFFF;
      key >>= 16;
    }
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i) out += ' ';
      out += std::to_string(ids[i]);
    }
    return out;
  }

  static std::uint64_t parse_context_key(const std::string& s, int order, std::size_t vocab_size) {
    std::istringstream in(s);
    std::uint64_t key = 0;
    int fields = 0;
    std::uint64_t id;
    while (in >> id) {
      if (id > vocab_size) throw ConfigError("context id out of range in model file");
      key = (key << 16) | id;
      ++fields;
    }
    if (fields != order - 1) throw ConfigError("context width mismatch in model file");
    return key;
  }

  double conditional_prob(const std::deque<TokenId>& window, TokenId tok) const {
    if (hard_zero_[static_cast<std::size_t>(tok)]) return 0.0;
    auto it = counts_.find(pack_context(window));
    std::uint64_t c = 0, total = 0;
    if (it != counts_.end()) {
      c = it->second.count(tok);
      total = it->second.total_nonzero;
    }
    return (static_cast<double>(c) + alpha_) /
           (static_cast<double>(total) + alpha_ * denom_vocab_);
  }

  double conditional_logprob(const std::deque<TokenId>& window, TokenId tok) const {
    double p = conditional_prob(window, tok);
    return p > 0.0 ? std::log(p) : kNegInf;
  }

  std::vector<double> next_token_logprobs_window(const std::deque<TokenId>& window) const {
    std::vector<double> out(vocab_.size(), kNegInf);
    auto it = counts_.find(pack_context(window));
    const ContextCounts* ctx = it != counts_.end() ? &it->second : nullptr;
    double denom = (ctx ? static_cast<double>(ctx->total_nonzero) : 0.0) + alpha_ * denom_vocab_;
    double default_lp = std::log(alpha_ / denom);
    for (std::size_t i = 0; i < vocab_.size(); ++i) {
      if (hard_zero_[i]) continue;
      out[i] = default_lp;
    }
    if (ctx) {
      for (const auto& [tok, n] : ctx->entries) {
        if (hard_zero_[static_cast<std::size_t>(tok)]) continue;
        out[static_cast<std::size_t>(tok)] =
            std::log((static_cast<double>(n) + alpha_) / denom);
      }
    }
    return out;
  }

  Vocabulary vocab_;
  TokenId eos_;
  TokenId bos_;
  int order_;
  double alpha_;
  std::vector<bool> hard_zero_;
  std::vector<TokenId> hard_zero_ids_;
  std::unordered_map<std::uint64_t, ContextCounts> counts_;
  double denom_vocab_ = 0.0;
  std::string model_id_;
};

}  // namespace inversor
