#pragma once

#include <algorithm>
#include <chrono>
#include <functional>
#include <utility>
#include <vector>

#include "inversor/objective.hpp"
#include "inversor/trial.hpp"

namespace inversor::ga {

struct GaConfig {
  int population_size = 1000;
  double crossover_indpb = 0.3;   // per-position swap probability inside cxUniform
  double mutation_indpb = 0.1;    // per-token mutation probability
  int tournament_size = 15;
  double crossover_rate = 0.5;    // probability a selected pair mates
  double mutation_rate = 0.5;     // probability a selected individual mutates
  int elitism_count = 1;          // 0 disables elitism for strict replication
  int max_len = 15;
  std::uint64_t seed = 0;

  void validate() const {
    if (population_size < 2) throw ConfigError("ga: population_size must be >= 2");
    if (tournament_size < 1 || tournament_size > population_size)
      throw ConfigError("ga: tournament_size must be in [1, population_size]");
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(crossover_indpb) || !prob(mutation_indpb) || !prob(crossover_rate) ||
        !prob(mutation_rate))
      throw ConfigError("ga: probabilities must be in [0, 1]");
    if (elitism_count < 0 || elitism_count >= population_size)
      throw ConfigError("ga: elitism_count must be in [0, population_size)");
    if (max_len < 1) throw ConfigError("ga: max_len must be >= 1");
  }
};

/// One search individual: a token sequence plus its cached objective value,
/// tagged with the reveal index the value was computed at.
struct Individual {
  TokenSequence tokens;
  double fitness = kNegInf;
  int fitness_reveal = -1;  // -1 = unevaluated

  bool evaluated_at(int reveal) const { return fitness_reveal == reveal; }
};

struct MutationStats {
  int events = 0;
  int replaces = 0;
  int inserts = 0;
  int deletes = 0;
  int swaps = 0;
};

/// Per-token mutation: with probability indpb a token receives one mutation,
/// chosen uniformly among replace / insert-left / delete / position-swap.
/// Length-1 individuals only replace or insert; at max_len insertion is
/// excluded. The result is never empty.
inline TokenSequence mutate(const TokenSequence& individual, const Vocabulary& vocab,
                            double indpb, int max_len, Rng& rng,
                            MutationStats* stats = nullptr) {
  if (individual.empty()) throw ContractError("mutate: empty individual");
  TokenSequence seq = individual;
  std::size_t i = 0;
  while (i < seq.size()) {
    if (!rng.bernoulli(indpb)) {
      ++i;
      continue;
    }
    if (stats) ++stats->events;
    enum Op { kReplace, kInsert, kDelete, kSwap };
    std::vector<Op> ops{kReplace};
    if (static_cast<int>(seq.size()) < max_len) ops.push_back(kInsert);
    if (seq.size() > 1) {
      ops.push_back(kDelete);
      ops.push_back(kSwap);
    }
    switch (ops[rng.index(ops.size())]) {
      case kReplace:
        seq[i] = vocab.random_regular(rng);
        if (stats) ++stats->replaces;
        ++i;
        break;
      case kInsert:
        seq.insert(seq.begin() + static_cast<std::ptrdiff_t>(i), vocab.random_regular(rng));
        if (stats) ++stats->inserts;
        i += 2;  // skip the inserted token and the original
        break;
      case kDelete:
        seq.erase(seq.begin() + static_cast<std::ptrdiff_t>(i));
        if (stats) ++stats->deletes;
        break;
      case kSwap: {
        std::size_t j = rng.index(seq.size() - 1);
        if (j >= i) ++j;  // uniform over the other positions
        std::swap(seq[i], seq[j]);
        if (stats) ++stats->swaps;
        ++i;
        break;
      }
    }
  }
  return seq;
}

/// Uniform crossover: positions up to the shorter length swap independently
/// with probability indpb; tails beyond that stay with their parent. The
/// token multiset across the pair is preserved.
inline std::pair<TokenSequence, TokenSequence> crossover_uniform(const TokenSequence& a,
                                                                 const TokenSequence& b,
                                                                 double indpb, Rng& rng) {
  if (a.empty() || b.empty()) throw ContractError("crossover_uniform: empty parent");
  TokenSequence child_a = a;
  TokenSequence child_b = b;
  std::size_t overlap = std::min(child_a.size(), child_b.size());
  for (std::size_t i = 0; i < overlap; ++i) {
    if (rng.bernoulli(indpb)) std::swap(child_a[i], child_b[i]);
  }
  return {std::move(child_a), std::move(child_b)};
}

/// Best entrant by fitness, ties broken by lower population index. Every
/// entrant must be evaluated at the given reveal index.
inline std::size_t tournament_best(const std::vector<Individual>& population,
                                   const std::vector<std::size_t>& entrants, int reveal) {
  if (entrants.empty()) throw ContractError("tournament_best: no entrants");
  std::size_t best = entrants[0];
  for (std::size_t idx : entrants) {
    if (idx >= population.size()) throw ContractError("tournament_best: index out of range");
    if (!population[idx].evaluated_at(reveal))
      throw ContractError("tournament_best: individual not evaluated under current objective");
    if (population[idx].fitness > population[best].fitness ||
        (population[idx].fitness == population[best].fitness && idx < best)) {
      best = idx;
    }
  }
  return best;
}

/// k tournament winners, each the best of tournament_size individuals drawn
/// uniformly with replacement. The optional hook records the drawn entrant
/// sets for verification.
inline std::vector<Individual> select_tournament(
    const std::vector<Individual>& population, int k, int tournament_size, int reveal,
    Rng& rng, std::vector<std::vector<std::size_t>>* drawn = nullptr) {
  if (population.empty()) throw ContractError("select_tournament: empty population");
  if (tournament_size < 1) throw ContractError("select_tournament: tournament_size must be >= 1");
  std::vector<Individual> winners;
  winners.reserve(static_cast<std::size_t>(k));
  std::vector<std::size_t> entrants(static_cast<std::size_t>(tournament_size));
  for (int w = 0; w < k; ++w) {
    for (auto& e : entrants) e = rng.index(population.size());
    if (drawn) drawn->push_back(entrants);
    winners.push_back(population[tournament_best(population, entrants, reveal)]);
  }
  return winners;
}

namespace detail {

inline void ensure_evaluated(std::vector<Individual>& population, const Evaluator& evaluator,
                             int reveal) {
  for (auto& ind : population) {
    if (!ind.evaluated_at(reveal)) {
      ind.fitness = evaluator.evaluate_prefix(ind.tokens, reveal).log_likelihood;
      ind.fitness_reveal = reveal;
    }
  }
}

inline std::size_t best_index(const std::vector<Individual>& population) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < population.size(); ++i) {
    if (population[i].fitness > population[best].fitness) best = i;
  }
  return best;
}

}  // namespace detail

using GenerationObserver = std::function<void(int generation, const std::vector<Individual>&)>;

/// Simple generational GA (tournament selection, uniform crossover, the
/// token-level mutation above) over variable-length sequences. Deterministic
/// for a given seed and config in single-evaluator mode.
inline TrialResult run_ga(const GaConfig& config, const InversionInstance& instance,
                          const LanguageModelBackend& model, const Schedule& schedule,
                          Budget& budget, std::vector<TokenSequence> init_population,
                          EvalCache* cache = nullptr,
                          const GenerationObserver& observer = nullptr) {
  config.validate();
  if (static_cast<int>(init_population.size()) != config.population_size)
    throw ContractError("run_ga: init population size does not match config");
  const Vocabulary& vocab = model.vocabulary();
  for (const auto& tokens : init_population) {
    if (tokens.empty() || static_cast<int>(tokens.size()) > config.max_len ||
        !vocab.valid(tokens))
      throw ContractError("run_ga: invalid initial individual");
  }

  auto wall_start = std::chrono::steady_clock::now();
  budget.restart_clock();

  Evaluator evaluator(model, instance.output, schedule, budget, cache);
  Rng rng(config.seed);

  std::vector<Individual> population;
  population.reserve(init_population.size());
  for (auto& tokens : init_population) population.push_back({std::move(tokens)});

  TrialResult result;
  result.instance_id = instance.id;
  result.seed = config.seed;

  // Generation 0: score the initial population; "before" is the best initial
  // individual re-scored on the full output.
  int reveal = evaluator.reveal_at(1);
  detail::ensure_evaluated(population, evaluator, reveal);
  BestSoFarTracker tracker(instance);
  {
    const Individual& first_best = population[detail::best_index(population)];
    tracker.offer(first_best.tokens,
                  evaluator.evaluate_full(first_best.tokens).log_likelihood);
    tracker.record(budget.calls());
    result.before = tracker.snapshot(vocab);
  }
  if (observer) observer(0, population);

  const int total = schedule.total_iterations;
  const int cap = budget.iteration_limit() >= 0
                      ? std::min(total, budget.iteration_limit())
                      : total;
  for (int t = 1; t <= cap; ++t) {
    if (budget.exhausted()) break;

    int reveal_t = evaluator.reveal_at(t);
    if (reveal_t != reveal) {
      // Prefix scores from different reveal indices are never compared.
      for (auto& ind : population) ind.fitness_reveal = -1;
      detail::ensure_evaluated(population, evaluator, reveal_t);
      reveal = reveal_t;
    }

    std::vector<Individual> next;
    next.reserve(population.size());
    if (config.elitism_count > 0) {
      std::vector<std::size_t> order(population.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return population[a].fitness > population[b].fitness;
      });
      for (int e = 0; e < config.elitism_count; ++e)
        next.push_back(population[order[static_cast<std::size_t>(e)]]);
    }

    int offspring_count = config.population_size - config.elitism_count;
    std::vector<Individual> offspring =
        select_tournament(population, offspring_count, config.tournament_size, reveal, rng);

    for (std::size_t i = 0; i + 1 < offspring.size(); i += 2) {
      if (!rng.bernoulli(config.crossover_rate)) continue;
      auto [a, b] =
          crossover_uniform(offspring[i].tokens, offspring[i + 1].tokens,
                            config.crossover_indpb, rng);
      offspring[i] = Individual{std::move(a)};
      offspring[i + 1] = Individual{std::move(b)};
    }
    for (auto& ind : offspring) {
      if (!rng.bernoulli(config.mutation_rate)) continue;
      ind = Individual{mutate(ind.tokens, vocab, config.mutation_indpb, config.max_len, rng)};
    }

    detail::ensure_evaluated(offspring, evaluator, reveal);
    for (auto& ind : offspring) next.push_back(std::move(ind));
    population = std::move(next);

    const Individual& gen_best = population[detail::best_index(population)];
    tracker.offer(gen_best.tokens,
                  evaluator.evaluate_full(gen_best.tokens).log_likelihood);
    tracker.record(budget.calls());
    result.iterations_run = t;
    if (observer) observer(t, population);
  }

  // Re-rank the final population on the full output; the winner is the best
  // candidate seen anywhere in the run.
  if (result.iterations_run > 0) {
    for (const auto& ind : population) {
      tracker.offer(ind.tokens, evaluator.evaluate_full(ind.tokens).log_likelihood);
    }
  }

  result.after = tracker.snapshot(vocab);
  result.history = tracker.take_history();
  result.objective_calls = budget.calls();
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  return result;
}

}  // namespace inversor::ga
