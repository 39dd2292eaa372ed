#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "inversor/core.hpp"
#include "inversor/pso.hpp"

namespace inversor::init {

enum class Kind {
  random,
  output,
  output_synonym,
  output_paraphrase,
  inversion,
  inversion_sample,
  random_dataset,
  random_fluent,
  random_output,
};

inline std::string to_string(Kind k) {
  switch (k) {
    case Kind::random: return "random";
    case Kind::output: return "output";
    case Kind::output_synonym: return "output_synonym";
    case Kind::output_paraphrase: return "output_paraphrase";
    case Kind::inversion: return "inversion";
    case Kind::inversion_sample: return "inversion_sample";
    case Kind::random_dataset: return "random_dataset";
    case Kind::random_fluent: return "random_fluent";
    case Kind::random_output: return "random_output";
  }
  return "?";
}

inline Kind kind_from_string(const std::string& s) {
  for (Kind k : {Kind::random, Kind::output, Kind::output_synonym, Kind::output_paraphrase,
                 Kind::inversion, Kind::inversion_sample, Kind::random_dataset,
                 Kind::random_fluent, Kind::random_output}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown initialization kind: '" + s + "'");
}

// ---------------------------------------------------------------------------
// Providers
// ---------------------------------------------------------------------------

/// word -> synonyms table loaded from a plain-text lexicon ("word: a, b").
/// Lookups are case-insensitive; absent words map to themselves.
class SynonymLexicon {
public:
  SynonymLexicon() = default;

  static SynonymLexicon load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open synonym lexicon: " + path);
    SynonymLexicon lex;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      auto colon = line.find(':');
      if (colon == std::string::npos) continue;
      std::string word = to_lower(trim(line.substr(0, colon)));
      if (word.empty()) continue;
      std::vector<std::string> syns;
      std::string rest = line.substr(colon + 1);
      std::size_t start = 0;
      while (start <= rest.size()) {
        auto comma = rest.find(',', start);
        std::string syn = trim(rest.substr(start, comma == std::string::npos
                                                      ? std::string::npos
                                                      : comma - start));
        if (!syn.empty()) syns.push_back(to_lower(syn));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      if (!syns.empty()) lex.table_[word] = std::move(syns);
    }
    return lex;
  }

  void add(const std::string& word, std::vector<std::string> synonyms) {
    table_[to_lower(word)] = std::move(synonyms);
  }

  const std::vector<std::string>* synonyms(const std::string& word) const {
    auto it = table_.find(to_lower(word));
    if (it == table_.end()) return nullptr;
    return &it->second;
  }

  bool empty() const { return table_.empty(); }
  std::size_t size() const { return table_.size(); }

private:
  static std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
  }

  std::map<std::string, std::vector<std::string>> table_;
};

/// Common contract for paraphrasers and inverted models: text in, candidate
/// input text out. Always returns non-empty text.
class CandidateGenerator {
public:
  virtual ~CandidateGenerator() = default;
  virtual std::string generate(const std::string& target_output_text,
                               const SamplingParams& sampling) const = 0;
};

/// Built-in stand-in for an inverted model. Greedy sampling (temperature 0)
/// guesses the output text itself; sampled calls perturb it (word drops and
/// adjacent swaps) so repeated sampling yields population variety.
class EchoInverter final : public CandidateGenerator {
public:
  std::string generate(const std::string& target_output_text,
                       const SamplingParams& sampling) const override {
    auto words = split_whitespace(target_output_text);
    if (words.empty()) return target_output_text;
    if (sampling.temperature <= 0.0) return join(words);
    Rng rng(sampling.seed);
    std::vector<std::string> out;
    for (auto& w : words) {
      if (rng.bernoulli(0.2) && words.size() > 1) continue;  // drop
      out.push_back(w);
    }
    if (out.empty()) out.push_back(words[rng.index(words.size())]);
    for (std::size_t i = 0; i + 1 < out.size(); ++i) {
      if (rng.bernoulli(0.15)) std::swap(out[i], out[i + 1]);
    }
    return join(out);
  }
};

/// Built-in stand-in for a paraphraser: seeded synonym-free rewording via
/// word rotation and duplication, keeping the vocabulary unchanged.
class RotateParaphraser final : public CandidateGenerator {
public:
  std::string generate(const std::string& target_output_text,
                       const SamplingParams& sampling) const override {
    auto words = split_whitespace(target_output_text);
    if (words.empty()) return target_output_text;
    Rng rng(sampling.seed);
    std::size_t shift = rng.index(words.size());
    std::rotate(words.begin(), words.begin() + static_cast<std::ptrdiff_t>(shift), words.end());
    if (words.size() > 2 && rng.bernoulli(0.5)) words.pop_back();
    return join(words);
  }
};

// ---------------------------------------------------------------------------
// Population construction
// ---------------------------------------------------------------------------

enum class Representation { tokens, embedding };

struct InitStrategy {
  Kind kind = Kind::random;
  std::uint64_t seed = 0;
  int max_len = 15;

  const LanguageModelBackend* model = nullptr;      // fluent / output continuation kinds
  const pso::TextAutoencoder* autoencoder = nullptr;  // embedding representation
  const SynonymLexicon* lexicon = nullptr;
  const CandidateGenerator* paraphraser = nullptr;
  const CandidateGenerator* inverter = nullptr;
  const std::vector<std::string>* corpus_lines = nullptr;

  // Sampling defaults per provider role.
  SamplingParams continuation_sampling{0.7, 0.95, 300, 0};
  SamplingParams paraphrase_sampling{1.5, 0.99, 500, 0};
  SamplingParams inversion_sampling{1.0, 0.99, 500, 0};
};

struct InitPopulation {
  std::vector<TokenSequence> tokens;               // one per candidate (token mode)
  std::vector<std::vector<double>> embeddings;     // one per candidate (embedding mode)
};

namespace detail {

inline void require(const void* provider, Kind kind, const std::string& provider_name) {
  if (!provider) {
    throw ConfigError("initialization '" + to_string(kind) + "' requires " + provider_name);
  }
}

inline TokenSequence clamp_len(TokenSequence t, int max_len) {
  if (static_cast<int>(t.size()) > max_len) t.resize(static_cast<std::size_t>(max_len));
  return t;
}

/// Tokenize provider text against the model vocabulary, dropping unknown
/// words; falls back to the target output when nothing survives.
inline TokenSequence tokenize_provider_text(const std::string& text, const Vocabulary& vocab,
                                            const TokenSequence& fallback, int max_len) {
  TokenSequence ids = vocab.tokenize_lossy(text);
  if (ids.empty()) ids = fallback;
  return clamp_len(std::move(ids), max_len);
}

}  // namespace detail

/// Builds the initial population for the requested strategy. Every token
/// candidate is non-empty, within max_len and vocabulary-valid; embedding
/// candidates are in-box vectors. Deterministic per seed.
inline InitPopulation build_population(const InitStrategy& strategy,
                                       const TokenSequence& target_output, int size,
                                       Representation representation, Rng& rng) {
  if (size < 1) throw ContractError("build_population: size must be >= 1");
  if (target_output.empty()) throw ContractError("build_population: empty target output");
  detail::require(strategy.model, strategy.kind, "a language model backend");
  const Vocabulary& vocab = strategy.model->vocabulary();
  const int max_len = strategy.max_len;
  if (max_len < 1) throw ConfigError("initialization: max_len must be >= 1");

  InitPopulation out;

  if (representation == Representation::embedding) {
    detail::require(strategy.autoencoder, strategy.kind, "a text autoencoder");
    if (strategy.kind == Kind::random) {
      const std::size_t d = static_cast<std::size_t>(strategy.autoencoder->dimension());
      for (int i = 0; i < size; ++i) {
        std::vector<double> v(d);
        for (auto& x : v) x = rng.uniform(-1.0, 1.0);
        out.embeddings.push_back(std::move(v));
      }
      return out;
    }
    // Every other kind builds text first and encodes it.
    InitStrategy token_strategy = strategy;
    InitPopulation texts =
        build_population(token_strategy, target_output, size, Representation::tokens, rng);
    out.tokens = texts.tokens;
    for (const auto& t : texts.tokens)
      out.embeddings.push_back(strategy.autoencoder->encode(t));
    return out;
  }

  auto target = detail::clamp_len(target_output, max_len);
  std::string target_text = vocab.render(target_output);

  switch (strategy.kind) {
    case Kind::random: {
      for (int i = 0; i < size; ++i) {
        int len = static_cast<int>(rng.uniform_int(1, max_len));
        TokenSequence t(static_cast<std::size_t>(len));
        for (auto& id : t) id = vocab.random_regular(rng);
        out.tokens.push_back(std::move(t));
      }
      break;
    }
    case Kind::output: {
      out.tokens.assign(static_cast<std::size_t>(size), target);
      break;
    }
    case Kind::output_synonym: {
      detail::require(strategy.lexicon, strategy.kind, "a synonym lexicon");
      for (int i = 0; i < size; ++i) {
        TokenSequence t;
        for (TokenId id : target) {
          std::string word = vocab.text(id);
          const auto* syns = strategy.lexicon->synonyms(word);
          if (syns && !syns->empty()) {
            // Only in-vocabulary synonyms can be substituted.
            std::vector<TokenId> options;
            for (const auto& s : *syns) {
              if (auto sid = vocab.find(s)) options.push_back(*sid);
            }
            if (!options.empty()) {
              t.push_back(options[rng.index(options.size())]);
              continue;
            }
          }
          t.push_back(id);
        }
        out.tokens.push_back(detail::clamp_len(std::move(t), max_len));
      }
      break;
    }
    case Kind::output_paraphrase: {
      detail::require(strategy.paraphraser, strategy.kind,
                      "a paraphrase generator (configure a paraphraser provider)");
      for (int i = 0; i < size; ++i) {
        SamplingParams params = strategy.paraphrase_sampling;
        params.seed = derive_seed(strategy.seed, 0x70617261, static_cast<std::uint64_t>(i));
        std::string text = strategy.paraphraser->generate(target_text, params);
        out.tokens.push_back(detail::tokenize_provider_text(text, vocab, target, max_len));
      }
      break;
    }
    case Kind::inversion: {
      detail::require(strategy.inverter, strategy.kind,
                      "an inverted-model generator (configure an inverter provider)");
      SamplingParams params;  // single greedy sample copied to the whole population
      params.temperature = 0.0;
      params.seed = strategy.seed;
      std::string text = strategy.inverter->generate(target_text, params);
      TokenSequence t = detail::tokenize_provider_text(text, vocab, target, max_len);
      out.tokens.assign(static_cast<std::size_t>(size), t);
      break;
    }
    case Kind::inversion_sample: {
      detail::require(strategy.inverter, strategy.kind,
                      "an inverted-model generator (configure an inverter provider)");
      for (int i = 0; i < size; ++i) {
        SamplingParams params = strategy.inversion_sampling;
        params.seed = derive_seed(strategy.seed, 0x696e76, static_cast<std::uint64_t>(i));
        std::string text = strategy.inverter->generate(target_text, params);
        out.tokens.push_back(detail::tokenize_provider_text(text, vocab, target, max_len));
      }
      break;
    }
    case Kind::random_dataset: {
      detail::require(strategy.corpus_lines, strategy.kind, "a text corpus");
      if (strategy.corpus_lines->empty())
        throw ConfigError("initialization 'random_dataset': corpus is empty");
      for (int i = 0; i < size; ++i) {
        TokenSequence t;
        for (int attempt = 0; attempt < 64 && t.empty(); ++attempt) {
          const std::string& line = (*strategy.corpus_lines)[rng.index(strategy.corpus_lines->size())];
          t = vocab.tokenize_lossy(line);
        }
        if (t.empty())
          throw ConfigError("initialization 'random_dataset': no corpus line tokenizes");
        out.tokens.push_back(detail::clamp_len(std::move(t), max_len));
      }
      break;
    }
    case Kind::random_fluent: {
      if (!strategy.model->supports_generation())
        throw ConfigError("initialization 'random_fluent' requires a generative backend");
      for (int i = 0; i < size; ++i) {
        TokenSequence t{vocab.random_regular(rng)};
        if (max_len > 1) {
          SamplingParams params = strategy.continuation_sampling;
          params.seed = derive_seed(strategy.seed, 0x666c75, static_cast<std::uint64_t>(i));
          TokenSequence cont = strategy.model->generate(t, max_len - 1, params);
          t.insert(t.end(), cont.begin(), cont.end());
        }
        out.tokens.push_back(detail::clamp_len(std::move(t), max_len));
      }
      break;
    }
    case Kind::random_output: {
      if (!strategy.model->supports_generation())
        throw ConfigError("initialization 'random_output' requires a generative backend");
      for (int i = 0; i < size; ++i) {
        TokenSequence t = target_output;
        int room = max_len - static_cast<int>(t.size());
        if (room > 0) {
          SamplingParams params = strategy.continuation_sampling;
          params.seed = derive_seed(strategy.seed, 0x726f75, static_cast<std::uint64_t>(i));
          TokenSequence cont = strategy.model->generate(t, room, params);
          t.insert(t.end(), cont.begin(), cont.end());
        }
        out.tokens.push_back(detail::clamp_len(std::move(t), max_len));
      }
      break;
    }
  }

  return out;
}

}  // namespace inversor::init
