#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "inversor/core.hpp"

namespace inversor {

// ---------------------------------------------------------------------------
// Inversion decisions
// ---------------------------------------------------------------------------

/// Weak inversion: the found input reproduces the target at least as probably
/// as the original did, i.e. found >= baseline in log space.
inline bool weak_inversion(double found_score, double baseline_score) {
  if (!std::isfinite(baseline_score))
    throw ContractError("weak_inversion: baseline score must be finite");
  return found_score >= baseline_score;
}

/// Exact inversion: token sequences identical under the shared tokenizer.
inline bool exact_inversion(const TokenSequence& found, const TokenSequence& original) {
  return found == original;
}

// ---------------------------------------------------------------------------
// Similarity metrics (whitespace-token text)
// ---------------------------------------------------------------------------

namespace detail {

inline std::map<std::vector<std::string>, int> ngram_counts(
    const std::vector<std::string>& words, std::size_t n) {
  std::map<std::vector<std::string>, int> counts;
  if (words.size() < n) return counts;
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    counts[std::vector<std::string>(words.begin() + static_cast<std::ptrdiff_t>(i),
                                    words.begin() + static_cast<std::ptrdiff_t>(i + n))]++;
  }
  return counts;
}

}  // namespace detail

/// Sentence BLEU: geometric mean of modified n-gram precisions for n = 1..4,
/// add-one smoothed wherever the match count is zero, times the brevity
/// penalty exp(1 - r/c) for candidates shorter than the reference.
inline double bleu(const std::string& candidate_text, const std::string& reference_text) {
  auto cand = split_whitespace(candidate_text);
  auto ref = split_whitespace(reference_text);
  if (cand.empty() || ref.empty()) throw ContractError("bleu: empty text");

  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    auto cand_counts = detail::ngram_counts(cand, n);
    auto ref_counts = detail::ngram_counts(ref, n);
    std::int64_t total = cand.size() >= n ? static_cast<std::int64_t>(cand.size() - n + 1) : 0;
    std::int64_t matched = 0;
    for (const auto& [gram, c] : cand_counts) {
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) matched += std::min(c, it->second);
    }
    double p = matched > 0
                   ? static_cast<double>(matched) / static_cast<double>(total)
                   : (static_cast<double>(matched) + 1.0) / (static_cast<double>(total) + 1.0);
    log_sum += 0.25 * std::log(p);
  }

  double c = static_cast<double>(cand.size());
  double r = static_cast<double>(ref.size());
  double brevity = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return brevity * std::exp(log_sum);
}

/// Token-level F1 over word multisets; overlap counts are capped by per-side
/// multiplicity. Returns 0 when the overlap is empty.
inline double token_f1(const std::string& candidate_text, const std::string& reference_text) {
  auto cand = split_whitespace(candidate_text);
  auto ref = split_whitespace(reference_text);
  if (cand.empty() || ref.empty()) throw ContractError("token_f1: empty text");

  std::map<std::string, int> cand_counts, ref_counts;
  for (const auto& w : cand) cand_counts[w]++;
  for (const auto& w : ref) ref_counts[w]++;

  std::int64_t overlap = 0;
  for (const auto& [w, c] : cand_counts) {
    auto it = ref_counts.find(w);
    if (it != ref_counts.end()) overlap += std::min(c, it->second);
  }
  if (overlap == 0) return 0.0;
  // 2PR/(P+R) simplified to 2*overlap/(|cand|+|ref|).
  return 2.0 * static_cast<double>(overlap) /
         static_cast<double>(cand.size() + ref.size());
}

// ---------------------------------------------------------------------------
// Embedding-based similarity
// ---------------------------------------------------------------------------

/// Deterministic text embedder returning unit-norm vectors of a fixed
/// dimension.
class EmbeddingProvider {
public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<double> embed(const std::string& text) const = 0;
};

/// Cosine similarity of the two embeddings, or nullopt when the provider
/// fails (the metric is marked missing, never coerced to zero).
inline std::optional<double> cosine_similarity(const std::string& candidate_text,
                                               const std::string& reference_text,
                                               const EmbeddingProvider& provider) {
  std::vector<double> a, b;
  try {
    a = provider.embed(candidate_text);
    b = provider.embed(reference_text);
  } catch (const std::exception&) {
    return std::nullopt;
  }
  if (a.size() != b.size() || a.empty()) return std::nullopt;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na <= 0.0 || nb <= 0.0) return std::nullopt;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

/// Default offline provider: hashed character-trigram counts, L2-normalized.
/// Deterministic for a given (dimension, seed); absolute values are not
/// comparable to embeddings from hosted models.
class HashedTrigramEmbedder final : public EmbeddingProvider {
public:
  explicit HashedTrigramEmbedder(std::size_t dimension = 256,
                                 std::uint64_t seed = 0x7261657369676e65ULL)
      : dimension_(dimension), seed_(seed) {
    if (dimension_ < 2) throw ConfigError("embedding dimension must be >= 2");
  }

  std::size_t dimension() const { return dimension_; }

  std::vector<double> embed(const std::string& text) const override {
    std::vector<double> v(dimension_, 0.0);
    if (text.size() < 3) {
      v[bucket(text)] += 1.0;
    } else {
      for (std::size_t i = 0; i + 3 <= text.size(); ++i) v[bucket(text.substr(i, 3))] += 1.0;
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm <= 0.0) {
      v[0] = 1.0;
      return v;
    }
    for (double& x : v) x /= norm;
    return v;
  }

private:
  std::size_t bucket(const std::string& gram) const {
    std::uint64_t acc = 0xcbf29ce484222325ULL;
    for (unsigned char c : gram) acc = (acc ^ c) * 0x100000001b3ULL;
    return static_cast<std::size_t>(splitmix64(acc ^ seed_) % dimension_);
  }

  std::size_t dimension_;
  std::uint64_t seed_;
};

/// Per-candidate metric bundle as reported in result rows.
struct InversionScores {
  bool weak = false;
  bool exact = false;
  double bleu = 0.0;
  double token_f1 = 0.0;
  std::optional<double> cos_sim;
};

}  // namespace inversor
