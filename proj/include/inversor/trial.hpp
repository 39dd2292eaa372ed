#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "inversor/metrics.hpp"
#include "inversor/objective.hpp"

namespace inversor {

/// One benchmark item: hidden input x, target output y, and the baseline
/// likelihood P_f(y|x) the weak-inversion decision compares against.
struct InversionInstance {
  std::string id;
  TokenSequence input;
  TokenSequence output;
  std::string input_text;
  std::string output_text;
  double baseline_loglik = 0.0;  // finite by the dataset filter
};

/// Snapshot of one candidate under the full objective.
struct CandidateScore {
  TokenSequence tokens;
  std::string text;
  double log_likelihood = kNegInf;
  InversionScores scores;
};

/// Per-run record shared by GA and PSO. "before" is the best initial
/// individual prior to any search iteration; "after" is the final re-scored
/// best. bleu / token_f1 / cos_sim are filled in by the harness.
struct TrialResult {
  std::string instance_id;
  int trial_index = 0;
  std::uint64_t seed = 0;

  CandidateScore before;
  CandidateScore after;

  std::uint64_t objective_calls = 0;
  int iterations_run = 0;
  std::vector<std::pair<std::uint64_t, double>> history;  // (objective_calls, best full score)
  double wall_seconds = 0.0;

  bool failed = false;
  std::string failure_reason;
};

/// Running best-by-full-objective across a search, with the call/score
/// history the reports plot.
class BestSoFarTracker {
public:
  explicit BestSoFarTracker(const InversionInstance& instance) : instance_(&instance) {}

  /// Returns true when the candidate strictly improves the best full score.
  bool offer(const TokenSequence& tokens, double full_log_likelihood) {
    if (!has_best_ || full_log_likelihood > best_score_) {
      best_tokens_ = tokens;
      best_score_ = full_log_likelihood;
      has_best_ = true;
      return true;
    }
    return false;
  }

  void record(std::uint64_t objective_calls) {
    history_.emplace_back(objective_calls, best_score_);
  }

  CandidateScore snapshot(const Vocabulary& vocab) const {
    CandidateScore s;
    s.tokens = best_tokens_;
    s.text = vocab.render(best_tokens_);
    s.log_likelihood = best_score_;
    s.scores.weak = weak_inversion(best_score_, instance_->baseline_loglik);
    s.scores.exact = exact_inversion(best_tokens_, instance_->input);
    return s;
  }

  double best_score() const { return best_score_; }
  const TokenSequence& best_tokens() const { return best_tokens_; }
  const std::vector<std::pair<std::uint64_t, double>>& history() const { return history_; }
  std::vector<std::pair<std::uint64_t, double>> take_history() { return std::move(history_); }

private:
  const InversionInstance* instance_;
  TokenSequence best_tokens_;
  double best_score_ = kNegInf;
  bool has_best_ = false;
  std::vector<std::pair<std::uint64_t, double>> history_;
};

}  // namespace inversor
