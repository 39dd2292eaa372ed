#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "inversor/objective.hpp"
#include "inversor/trial.hpp"

namespace inversor::pso {

/// Bridge between embedding space and token space. encode maps text into
/// [-1,1]^d; decode always returns a non-empty sequence of at most
/// max_sample_len tokens and is defined for every in-box vector.
class TextAutoencoder {
public:
  virtual ~TextAutoencoder() = default;
  virtual int dimension() const = 0;
  virtual std::vector<double> encode(const TokenSequence& text) const = 0;
  virtual TokenSequence decode(std::span<const double> position, int max_sample_len,
                               const SamplingParams& sampling) const = 0;
};

struct PsoConfig {
  int swarm_size = 500;
  double phi1 = 2.0;  // pull toward the particle's own best position
  double phi2 = 2.0;  // pull toward the swarm's best position
  double velocity_clamp = 0.5;
  int max_sample_len = 64;  // 99 for the extended runs
  std::uint64_t seed = 0;
  SamplingParams decode_sampling{1.0, 0.9, 0, 0};

  void validate() const {
    if (swarm_size < 2) throw ConfigError("pso: swarm_size must be >= 2");
    if (!(phi1 > 0.0) || !(phi2 > 0.0)) throw ConfigError("pso: phi1 and phi2 must be > 0");
    if (!(velocity_clamp > 0.0)) throw ConfigError("pso: velocity clamp must be > 0");
    if (max_sample_len < 1) throw ConfigError("pso: max_sample_len must be >= 1");
  }
};

/// One swarm member: box-constrained position, clamped velocity, the decoded
/// text it currently scores as, and its personal best.
struct Particle {
  std::vector<double> position;   // in [-1, 1]^d
  std::vector<double> velocity;   // per-component magnitude <= clamp
  TokenSequence tokens;           // decoded text at `position`
  double fitness = kNegInf;
  int fitness_reveal = -1;

  std::vector<double> best_position;
  TokenSequence best_tokens;
  double best_fitness = kNegInf;
  int best_fitness_reveal = -1;
};

/// Velocity/position update:
///   v <- clamp(v + u1*phi1*(pbest - x) + u2*phi2*(gbest - x), +-clamp)
///   x <- clamp(x + v, +-1)
/// u1, u2 are per-component draws in [0,1] taken from `u01`, interleaved
/// component-major (u1 then u2 for each component).
template <typename UniformSource>
void pso_step_kinematics(Particle& particle, std::span<const double> global_best_position,
                         double phi1, double phi2, double velocity_clamp,
                         UniformSource&& u01) {
  const std::size_t d = particle.position.size();
  if (global_best_position.size() != d || particle.velocity.size() != d ||
      particle.best_position.size() != d)
    throw ContractError("pso_step: dimension mismatch");
  for (std::size_t c = 0; c < d; ++c) {
    double u1 = u01();
    double u2 = u01();
    double v = particle.velocity[c] + u1 * phi1 * (particle.best_position[c] - particle.position[c]) +
               u2 * phi2 * (global_best_position[c] - particle.position[c]);
    v = std::clamp(v, -velocity_clamp, velocity_clamp);
    particle.velocity[c] = v;
    particle.position[c] = std::clamp(particle.position[c] + v, -1.0, 1.0);
  }
}

/// Full step: kinematics plus refreshing the decoded text from the new
/// position. Invalidates the cached fitness.
template <typename UniformSource>
void pso_step(Particle& particle, std::span<const double> global_best_position,
              const PsoConfig& config, const TextAutoencoder& autoencoder,
              UniformSource&& u01) {
  pso_step_kinematics(particle, global_best_position, config.phi1, config.phi2,
                      config.velocity_clamp, u01);
  particle.tokens =
      autoencoder.decode(particle.position, config.max_sample_len, config.decode_sampling);
  particle.fitness_reveal = -1;
}

// ---------------------------------------------------------------------------
// Toy autoencoder
// ---------------------------------------------------------------------------

/// Offline stand-in for a sentence autoencoder: encode is a tanh-squashed
/// seeded random projection of the token-count vector; decode greedily grows
/// a sequence, appending whichever token moves the re-encoded point closest
/// to the target, and stops when no token improves. Deterministic; the
/// sampling parameters are accepted for interface compatibility and ignored.
class RandomProjectionAutoencoder final : public TextAutoencoder {
public:
  static constexpr std::uint64_t kDefaultSeed = 0x616e636f64657232ULL;

  RandomProjectionAutoencoder(const Vocabulary& vocab, int dimension = 512,
                              std::uint64_t seed = kDefaultSeed)
      : vocab_(&vocab), dim_(dimension) {
    if (dim_ < 1) throw ConfigError("autoencoder dimension must be >= 1");
    Rng rng(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim_));
    projection_.resize(static_cast<std::size_t>(dim_) * vocab.size());
    for (auto& x : projection_) x = rng.normal() * scale;
    for (std::size_t id = 0; id < vocab.size(); ++id)
      if (!vocab.is_control(static_cast<TokenId>(id))) decodable_.push_back(static_cast<TokenId>(id));
  }

  int dimension() const override { return dim_; }

  std::vector<double> encode(const TokenSequence& text) const override {
    std::vector<double> acc(static_cast<std::size_t>(dim_), 0.0);
    for (TokenId id : text) {
      if (!vocab_->valid(id)) throw ContractError("encode: token id out of range");
      add_column(acc, id);
    }
    squash(acc, text.size());
    return acc;
  }

  TokenSequence decode(std::span<const double> position, int max_sample_len,
                       const SamplingParams&) const override {
    if (static_cast<int>(position.size()) != dim_)
      throw ContractError("decode: dimension mismatch");
    // Greedy alignment runs in pre-squash space: compare scaled projection
    // sums against atanh of the target, which avoids re-squashing the whole
    // vector for every candidate token.
    std::vector<double> target(static_cast<std::size_t>(dim_));
    for (int c = 0; c < dim_; ++c) {
      double x = std::clamp(position[static_cast<std::size_t>(c)], -0.999999, 0.999999);
      target[static_cast<std::size_t>(c)] = std::atanh(x);
    }
    TokenSequence out;
    std::vector<double> acc(static_cast<std::size_t>(dim_), 0.0);
    double current = std::numeric_limits<double>::infinity();
    while (static_cast<int>(out.size()) < max_sample_len) {
      double scale = kGain / std::sqrt(static_cast<double>(out.size() + 1));
      TokenId best_tok = decodable_.front();
      double best_dist = std::numeric_limits<double>::infinity();
      for (TokenId tok : decodable_) {
        const double* col =
            &projection_[static_cast<std::size_t>(tok) * static_cast<std::size_t>(dim_)];
        double dist = 0.0;
        for (int c = 0; c < dim_; ++c) {
          double delta = (acc[static_cast<std::size_t>(c)] + col[c]) * scale -
                         target[static_cast<std::size_t>(c)];
          dist += delta * delta;
        }
        if (dist < best_dist) {
          best_dist = dist;
          best_tok = tok;
        }
      }
      if (!out.empty() && best_dist >= current - 1e-12) break;
      out.push_back(best_tok);
      add_column(acc, best_tok);
      current = best_dist;
    }
    return out;
  }

private:
  static constexpr double kGain = 3.0;

  void add_column(std::vector<double>& acc, TokenId id) const {
    const double* col = &projection_[static_cast<std::size_t>(id) * static_cast<std::size_t>(dim_)];
    for (int c = 0; c < dim_; ++c) acc[static_cast<std::size_t>(c)] += col[c];
  }

  void squash(std::vector<double>& acc, std::size_t length) const {
    double norm = kGain / std::sqrt(static_cast<double>(std::max<std::size_t>(length, 1)));
    for (double& x : acc) x = std::tanh(x * norm);
  }

  const Vocabulary* vocab_;
  int dim_;
  std::vector<double> projection_;  // dim_ x vocab, column per token
  std::vector<TokenId> decodable_;
};

// ---------------------------------------------------------------------------
// Swarm search
// ---------------------------------------------------------------------------

namespace detail {

/// Positions repeat across iterations often enough that decoded text is
/// memoized by position hash.
class DecodeMemo {
public:
  const TokenSequence& decode(const TextAutoencoder& autoencoder,
                              const std::vector<double>& position, int max_sample_len,
                              const SamplingParams& sampling) {
    HashBuilder h;
    for (double x : position) h.add(x);
    h.add(max_sample_len);
    Hash128 key = h.digest();
    auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;
    TokenSequence tokens = autoencoder.decode(position, max_sample_len, sampling);
    return memo_.emplace(key, std::move(tokens)).first->second;
  }

private:
  std::unordered_map<Hash128, TokenSequence, Hash128Hasher> memo_;
};

inline std::size_t best_particle(const std::vector<Particle>& swarm) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < swarm.size(); ++i) {
    if (swarm[i].best_fitness > swarm[best].best_fitness) best = i;
  }
  return best;
}

}  // namespace detail

using SwarmObserver = std::function<void(int iteration, const std::vector<Particle>&)>;

/// Particle swarm search in embedding space, bridged to text per iteration by
/// the autoencoder. Personal and global bests are compared only between
/// scores computed at the same reveal index. Optional initial_texts overrides
/// the decoded text of selected particles for their first evaluation (used to
/// inject known inputs).
inline TrialResult run_pso(const PsoConfig& config, const InversionInstance& instance,
                           const LanguageModelBackend& model,
                           const TextAutoencoder& autoencoder, const Schedule& schedule,
                           Budget& budget, std::vector<std::vector<double>> init_positions,
                           EvalCache* cache = nullptr,
                           std::vector<std::optional<TokenSequence>> initial_texts = {},
                           const SwarmObserver& observer = nullptr) {
  config.validate();
  if (static_cast<int>(init_positions.size()) != config.swarm_size)
    throw ContractError("run_pso: init positions count does not match swarm size");
  if (!initial_texts.empty() && initial_texts.size() != init_positions.size())
    throw ContractError("run_pso: initial text overrides must match swarm size");
  const std::size_t d = static_cast<std::size_t>(autoencoder.dimension());
  for (const auto& p : init_positions) {
    if (p.size() != d) throw ContractError("run_pso: init position dimension mismatch");
    for (double x : p)
      if (!(x >= -1.0 && x <= 1.0)) throw ContractError("run_pso: init position out of box");
  }

  auto wall_start = std::chrono::steady_clock::now();
  budget.restart_clock();

  Evaluator evaluator(model, instance.output, schedule, budget, cache);
  Rng rng(config.seed);
  auto u01 = [&rng] { return rng.uniform01(); };
  detail::DecodeMemo memo;

  std::vector<Particle> swarm;
  swarm.reserve(init_positions.size());
  for (std::size_t i = 0; i < init_positions.size(); ++i) {
    Particle p;
    p.position = std::move(init_positions[i]);
    p.velocity.assign(d, 0.0);
    if (!initial_texts.empty() && initial_texts[i]) {
      p.tokens = *initial_texts[i];
    } else {
      p.tokens = memo.decode(autoencoder, p.position, config.max_sample_len,
                             config.decode_sampling);
    }
    p.best_position = p.position;
    swarm.push_back(std::move(p));
  }

  TrialResult result;
  result.instance_id = instance.id;
  result.seed = config.seed;

  int reveal = evaluator.reveal_at(1);
  auto score_current = [&](Particle& p) {
    p.fitness = evaluator.evaluate_prefix(p.tokens, reveal).log_likelihood;
    p.fitness_reveal = reveal;
  };
  for (auto& p : swarm) {
    score_current(p);
    p.best_tokens = p.tokens;
    p.best_fitness = p.fitness;
    p.best_fitness_reveal = reveal;
  }

  BestSoFarTracker tracker(instance);
  {
    const Particle& first_best = swarm[detail::best_particle(swarm)];
    tracker.offer(first_best.best_tokens,
                  evaluator.evaluate_full(first_best.best_tokens).log_likelihood);
    tracker.record(budget.calls());
    result.before = tracker.snapshot(model.vocabulary());
  }
  if (observer) observer(0, swarm);

  const int total = schedule.total_iterations;
  const int cap = budget.iteration_limit() >= 0
                      ? std::min(total, budget.iteration_limit())
                      : total;
  for (int t = 1; t <= cap; ++t) {
    if (budget.exhausted()) break;

    int reveal_t = evaluator.reveal_at(t);
    if (reveal_t != reveal) {
      reveal = reveal_t;
      // Re-anchor personal bests at the new reveal index before comparing.
      for (auto& p : swarm) {
        p.best_fitness = evaluator.evaluate_prefix(p.best_tokens, reveal).log_likelihood;
        p.best_fitness_reveal = reveal;
      }
    }

    std::vector<double> gbest = swarm[detail::best_particle(swarm)].best_position;
    for (auto& p : swarm) {
      pso_step_kinematics(p, gbest, config.phi1, config.phi2, config.velocity_clamp, u01);
      p.tokens = memo.decode(autoencoder, p.position, config.max_sample_len,
                             config.decode_sampling);
      score_current(p);
      if (p.best_fitness_reveal != reveal || p.fitness > p.best_fitness) {
        p.best_position = p.position;
        p.best_tokens = p.tokens;
        p.best_fitness = p.fitness;
        p.best_fitness_reveal = reveal;
      }
    }

    const Particle& iter_best = swarm[detail::best_particle(swarm)];
    tracker.offer(iter_best.best_tokens,
                  evaluator.evaluate_full(iter_best.best_tokens).log_likelihood);
    tracker.record(budget.calls());
    result.iterations_run = t;
    if (observer) observer(t, swarm);
  }

  if (result.iterations_run > 0) {
    for (const auto& p : swarm) {
      tracker.offer(p.tokens, evaluator.evaluate_full(p.tokens).log_likelihood);
      tracker.offer(p.best_tokens, evaluator.evaluate_full(p.best_tokens).log_likelihood);
    }
  }

  result.after = tracker.snapshot(model.vocabulary());
  result.history = tracker.take_history();
  result.objective_calls = budget.calls();
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  return result;
}

}  // namespace inversor::pso
