#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>

#include "inversor/core.hpp"
#include "inversor/eval_cache.hpp"

namespace inversor {

enum class ObjectiveMode { full, progressive };

inline std::string to_string(ObjectiveMode m) {
  return m == ObjectiveMode::full ? "full" : "progressive";
}

inline ObjectiveMode objective_mode_from_string(const std::string& s) {
  if (s == "full") return ObjectiveMode::full;
  if (s == "progressive") return ObjectiveMode::progressive;
  throw ConfigError("unknown objective mode: '" + s + "' (expected full|progressive)");
}

/// Number of target-output tokens scored at iteration t of T:
/// i = min(floor(m*t/T) + 1, m).
inline int reveal_index(int t, int total_iterations, int output_length) {
  if (output_length < 1) throw ContractError("reveal_index: output length must be >= 1");
  if (total_iterations < 1) throw ContractError("reveal_index: total iterations must be >= 1");
  if (t < 1 || t > total_iterations) throw ContractError("reveal_index: iteration out of range");
  std::int64_t i =
      (static_cast<std::int64_t>(output_length) * t) / total_iterations + 1;
  return static_cast<int>(std::min<std::int64_t>(i, output_length));
}

struct Schedule {
  ObjectiveMode mode = ObjectiveMode::full;
  int total_iterations = 1;  // T
  int output_length = 1;     // m

  void validate() const {
    if (total_iterations < 1) throw ConfigError("schedule: T must be >= 1");
    if (output_length < 1) throw ConfigError("schedule: m must be >= 1");
  }

  int reveal_at(int t) const {
    if (mode == ObjectiveMode::full) return output_length;
    return reveal_index(t, total_iterations, output_length);
  }
};

/// Cumulative objective-call accounting plus optional halting limits.
/// Exceeding the wall deadline halts a search after the current iteration.
class Budget {
public:
  Budget() : start_(clock::now()) {}

  Budget(const Budget&) = delete;
  Budget& operator=(const Budget&) = delete;

  void set_call_limit(std::uint64_t max_calls) { max_calls_ = max_calls; }
  void set_wall_limit_seconds(double seconds) { wall_seconds_ = seconds; }
  void set_iteration_limit(int iterations) { max_iterations_ = iterations; }

  void restart_clock() { start_ = clock::now(); }

  void charge(std::uint64_t n = 1) { calls_.fetch_add(n, std::memory_order_relaxed); }
  std::uint64_t calls() const { return calls_.load(std::memory_order_relaxed); }

  double elapsed_seconds() const {
    return std::chrono::duration<double>(clock::now() - start_).count();
  }

  bool calls_exhausted() const { return max_calls_ && calls() >= *max_calls_; }
  bool wall_exceeded() const { return wall_seconds_ && elapsed_seconds() >= *wall_seconds_; }
  bool exhausted() const { return calls_exhausted() || wall_exceeded(); }

  /// Caps the number of search iterations actually run; -1 means "all of T".
  int iteration_limit() const { return max_iterations_.value_or(-1); }

private:
  using clock = std::chrono::steady_clock;
  std::atomic<std::uint64_t> calls_{0};
  std::optional<std::uint64_t> max_calls_;
  std::optional<double> wall_seconds_;
  std::optional<int> max_iterations_;
  clock::time_point start_;
};

/// Scores candidates against a fixed target under the full or progressive
/// objective. Fresh evaluations charge the budget; cache hits are free.
/// Pure given (candidate, reveal index), so populations may be scored
/// concurrently.
class Evaluator {
public:
  Evaluator(const LanguageModelBackend& model, TokenSequence target, Schedule schedule,
            Budget& budget, EvalCache* cache = nullptr)
      : model_(&model),
        target_(std::move(target)),
        schedule_(schedule),
        budget_(&budget),
        cache_(cache) {
    schedule_.validate();
    if (target_.empty()) throw ContractError("evaluator: empty target output");
    if (static_cast<std::size_t>(schedule_.output_length) != target_.size())
      throw ContractError("evaluator: schedule output length does not match target");
  }

  const TokenSequence& target() const { return target_; }
  const Schedule& schedule() const { return schedule_; }
  Budget& budget() const { return *budget_; }

  int reveal_at(int t) const { return schedule_.reveal_at(t); }

  /// Objective at iteration t: all m tokens in full mode, the first
  /// reveal_index(t, T, m) tokens in progressive mode.
  ObjectiveReport evaluate(const TokenSequence& candidate, int t) const {
    return evaluate_prefix(candidate, reveal_at(t));
  }

  ObjectiveReport evaluate_prefix(const TokenSequence& candidate, int reveal) const {
    if (reveal < 1 || static_cast<std::size_t>(reveal) > target_.size())
      throw ContractError("evaluate_prefix: reveal index out of range");
    Hash128 key;
    if (cache_) {
      key = EvalCache::make_key(model_->model_id(), candidate, prefix(reveal), reveal);
      if (auto hit = cache_->find(key)) return *hit;
    }
    ObjectiveReport report = sequence_log_likelihood(*model_, candidate, prefix(reveal));
    budget_->charge(1);
    if (cache_) cache_->insert(key, report);
    return report;
  }

  ObjectiveReport evaluate_full(const TokenSequence& candidate) const {
    return evaluate_prefix(candidate, static_cast<int>(target_.size()));
  }

private:
  TokenSequence prefix(int reveal) const {
    return TokenSequence(target_.begin(), target_.begin() + reveal);
  }

  const LanguageModelBackend* model_;
  TokenSequence target_;
  Schedule schedule_;
  Budget* budget_;
  EvalCache* cache_;
};

}  // namespace inversor
