#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "inversor/eval_cache.hpp"
#include "inversor/ga.hpp"
#include "inversor/init.hpp"
#include "inversor/metrics.hpp"
#include "inversor/ngram.hpp"
#include "inversor/pso.hpp"
#include "inversor/trial.hpp"
#include "inversor/wire.hpp"

namespace inversor::harness {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Dataset files (JSON-lines: {id, input_text, output_text, baseline_logprob?})
// ---------------------------------------------------------------------------

struct DatasetRecord {
  std::string id;
  std::string input_text;
  std::string output_text;
  std::optional<double> baseline_logprob;
};

inline std::vector<DatasetRecord> read_dataset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset: " + path);
  std::vector<DatasetRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object())
      throw ConfigError(path + ":" + std::to_string(line_no) + ": not a JSON object");
    DatasetRecord r;
    try {
      r.id = j.at("id").get<std::string>();
      r.input_text = j.at("input_text").get<std::string>();
      r.output_text = j.at("output_text").get<std::string>();
      if (j.contains("baseline_logprob") && !j["baseline_logprob"].is_null())
        r.baseline_logprob = j["baseline_logprob"].get<double>();
    } catch (const json::exception& e) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    records.push_back(std::move(r));
  }
  if (records.empty()) throw ConfigError("dataset is empty: " + path);
  return records;
}

inline void write_dataset_file(const std::string& path, const std::vector<DatasetRecord>& records) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw ConfigError("cannot write dataset: " + tmp);
    for (const auto& r : records) {
      json j{{"id", r.id}, {"input_text", r.input_text}, {"output_text", r.output_text}};
      if (r.baseline_logprob) j["baseline_logprob"] = *r.baseline_logprob;
      out << j.dump() << '\n';
    }
  }
  std::rename(tmp.c_str(), path.c_str());
}

struct Dataset {
  std::vector<InversionInstance> instances;
  std::string fingerprint;  // identifies (model, instance set); result files must agree
};

/// Tokenizes records against the backend and computes any missing baselines.
inline Dataset bind_dataset(const std::vector<DatasetRecord>& records,
                            const LanguageModelBackend& model) {
  Dataset out;
  const Vocabulary& vocab = model.vocabulary();
  HashBuilder fp;
  fp.add(model.model_id());
  for (const auto& r : records) {
    InversionInstance inst;
    inst.id = r.id;
    inst.input_text = r.input_text;
    inst.output_text = r.output_text;
    auto input = vocab.try_tokenize(r.input_text);
    if (!input || input->empty())
      throw ConfigError("instance '" + r.id + "': input does not tokenize");
    auto output = vocab.try_tokenize(r.output_text);
    if (!output || output->empty())
      throw ConfigError("instance '" + r.id + "': output does not tokenize");
    inst.input = std::move(*input);
    inst.output = std::move(*output);
    if (r.baseline_logprob) {
      inst.baseline_loglik = *r.baseline_logprob;
    } else {
      inst.baseline_loglik =
          sequence_log_likelihood(model, inst.input, inst.output).log_likelihood;
    }
    if (!std::isfinite(inst.baseline_loglik))
      throw ConfigError("instance '" + r.id + "': baseline likelihood is zero");
    fp.add(inst.id).add(inst.input).add(inst.output);
    out.instances.push_back(std::move(inst));
  }
  out.fingerprint = fp.digest().hex().substr(0, 16);
  return out;
}

// ---------------------------------------------------------------------------
// Dataset validation
// ---------------------------------------------------------------------------

struct InstanceValidation {
  std::string id;
  bool valid = true;
  std::vector<std::string> problems;
};

struct ValidationReport {
  std::vector<InstanceValidation> instances;
  bool all_valid = true;
  int baselines_written = 0;
};

/// Checks token limits and baseline finiteness for every instance; fills in
/// missing baselines (rewriting the dataset file) when write_baselines is
/// set and all instances are valid.
inline ValidationReport validate_dataset(const std::string& path,
                                         const LanguageModelBackend& model,
                                         int input_token_limit = 15,
                                         int output_token_limit = 100,
                                         bool write_baselines = true) {
  auto records = read_dataset_file(path);
  const Vocabulary& vocab = model.vocabulary();
  ValidationReport report;
  std::set<std::string> seen_ids;
  int wrote = 0;

  for (auto& r : records) {
    InstanceValidation v;
    v.id = r.id;
    if (!seen_ids.insert(r.id).second) v.problems.push_back("duplicate id");

    auto input = vocab.try_tokenize(r.input_text);
    auto output = vocab.try_tokenize(r.output_text);
    if (!input) v.problems.push_back("input contains out-of-vocabulary words");
    if (!output) v.problems.push_back("output contains out-of-vocabulary words");
    if (input) {
      if (input->empty()) v.problems.push_back("input is empty");
      if (static_cast<int>(input->size()) > input_token_limit)
        v.problems.push_back("input exceeds " + std::to_string(input_token_limit) + " tokens");
    }
    if (output) {
      if (output->empty()) v.problems.push_back("output is empty");
      if (static_cast<int>(output->size()) > output_token_limit)
        v.problems.push_back("output exceeds " + std::to_string(output_token_limit) + " tokens");
    }
    if (input && output && !input->empty() && !output->empty()) {
      double baseline = sequence_log_likelihood(model, *input, *output).log_likelihood;
      if (!std::isfinite(baseline)) {
        v.problems.push_back("zero baseline probability");
      } else if (!r.baseline_logprob) {
        r.baseline_logprob = baseline;
        ++wrote;
      } else if (std::abs(*r.baseline_logprob - baseline) > 1e-6) {
        v.problems.push_back("stored baseline does not match this backend");
      }
    }
    v.valid = v.problems.empty();
    report.all_valid = report.all_valid && v.valid;
    report.instances.push_back(std::move(v));
  }

  if (write_baselines && report.all_valid && wrote > 0) {
    write_dataset_file(path, records);
    report.baselines_written = wrote;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Trial serialization
// ---------------------------------------------------------------------------

struct RunMeta {
  std::string dataset_fingerprint;
  std::string model_id;
  std::string algorithm;
  std::string objective;
  std::string initialization;
};

inline json candidate_to_json(const CandidateScore& c) {
  json j;
  j["log_likelihood"] = wire::encode_logprob(c.log_likelihood);
  j["weak"] = c.scores.weak;
  j["exact"] = c.scores.exact;
  j["bleu"] = c.scores.bleu;
  j["token_f1"] = c.scores.token_f1;
  j["cos_sim"] = c.scores.cos_sim ? json(*c.scores.cos_sim) : json(nullptr);
  j["text"] = c.text;
  return j;
}

inline CandidateScore candidate_from_json(const json& j) {
  CandidateScore c;
  c.log_likelihood = wire::decode_logprob(j.at("log_likelihood"));
  c.scores.weak = j.at("weak").get<bool>();
  c.scores.exact = j.at("exact").get<bool>();
  c.scores.bleu = j.at("bleu").get<double>();
  c.scores.token_f1 = j.at("token_f1").get<double>();
  if (!j.at("cos_sim").is_null()) c.scores.cos_sim = j.at("cos_sim").get<double>();
  c.text = j.at("text").get<std::string>();
  return c;
}

inline json trial_to_json(const TrialResult& t, const RunMeta& meta,
                          std::int64_t started_unix_ms) {
  json j;
  j["schema"] = "inversor-trial-v1";
  j["dataset"] = meta.dataset_fingerprint;
  j["model"] = meta.model_id;
  j["algorithm"] = meta.algorithm;
  j["objective"] = meta.objective;
  j["initialization"] = meta.initialization;
  j["instance"] = t.instance_id;
  j["trial"] = t.trial_index;
  j["seed"] = t.seed;
  j["before"] = candidate_to_json(t.before);
  j["after"] = candidate_to_json(t.after);
  j["objective_calls"] = t.objective_calls;
  j["iterations"] = t.iterations_run;
  json hist = json::array();
  for (const auto& [calls, score] : t.history)
    hist.push_back(json::array({calls, wire::encode_logprob(score)}));
  j["history"] = std::move(hist);
  j["failed"] = t.failed;
  j["failure_reason"] = t.failure_reason;
  // All wall-clock information lives under this one field; everything else
  // is byte-reproducible for a fixed config and seed.
  j["timing"] = json{{"wall_seconds", t.wall_seconds}, {"started_unix_ms", started_unix_ms}};
  return j;
}

struct TrialRow {
  RunMeta meta;
  TrialResult result;
};

inline TrialRow trial_from_json(const json& j) {
  TrialRow row;
  row.meta.dataset_fingerprint = j.at("dataset").get<std::string>();
  row.meta.model_id = j.at("model").get<std::string>();
  row.meta.algorithm = j.at("algorithm").get<std::string>();
  row.meta.objective = j.at("objective").get<std::string>();
  row.meta.initialization = j.at("initialization").get<std::string>();
  row.result.instance_id = j.at("instance").get<std::string>();
  row.result.trial_index = j.at("trial").get<int>();
  row.result.seed = j.at("seed").get<std::uint64_t>();
  row.result.failed = j.at("failed").get<bool>();
  row.result.failure_reason = j.at("failure_reason").get<std::string>();
  if (!row.result.failed) {
    row.result.before = candidate_from_json(j.at("before"));
    row.result.after = candidate_from_json(j.at("after"));
  }
  row.result.objective_calls = j.at("objective_calls").get<std::uint64_t>();
  row.result.iterations_run = j.at("iterations").get<int>();
  for (const auto& h : j.at("history"))
    row.result.history.emplace_back(h.at(0).get<std::uint64_t>(),
                                    wire::decode_logprob(h.at(1)));
  if (j.contains("timing") && j["timing"].contains("wall_seconds"))
    row.result.wall_seconds = j["timing"]["wall_seconds"].get<double>();
  return row;
}

// ---------------------------------------------------------------------------
// Experiment runner
// ---------------------------------------------------------------------------

enum class InjectOriginal { none, first, all };

inline InjectOriginal inject_from_string(const std::string& s) {
  if (s == "none") return InjectOriginal::none;
  if (s == "first") return InjectOriginal::first;
  if (s == "all") return InjectOriginal::all;
  throw ConfigError("unknown inject-original mode: '" + s + "' (expected none|first|all)");
}

struct ExperimentConfig {
  std::string dataset_path;
  std::string results_path;
  std::string algorithm = "ga";  // ga | pso
  ObjectiveMode objective = ObjectiveMode::full;
  init::Kind initialization = init::Kind::random;
  int trials = 3;
  int iterations = 60;                     // schedule length T
  std::optional<double> timeout_seconds;   // per-trial wall budget
  std::optional<std::uint64_t> max_calls;  // per-trial objective-call budget
  std::optional<int> iteration_cap;        // debug: cap loop count (0 = init only)
  std::uint64_t seed = 0;
  InjectOriginal inject_original = InjectOriginal::none;

  ga::GaConfig ga;
  pso::PsoConfig pso;

  void validate() const {
    if (trials < 1) throw ConfigError("trials must be >= 1");
    if (iterations < 1) throw ConfigError("iterations must be >= 1");
    if (timeout_seconds && *timeout_seconds <= 0.0)
      throw ConfigError("timeout must be > 0 seconds");
    if (algorithm != "ga" && algorithm != "pso")
      throw ConfigError("algorithm must be ga or pso");
  }
};

/// External services an experiment needs; the non-optional ones are the
/// model and (for similarity metrics) the embedder.
struct ExperimentEnv {
  const LanguageModelBackend* model = nullptr;
  const EmbeddingProvider* embedder = nullptr;
  const pso::TextAutoencoder* autoencoder = nullptr;
  const init::SynonymLexicon* lexicon = nullptr;
  const init::CandidateGenerator* paraphraser = nullptr;
  const init::CandidateGenerator* inverter = nullptr;
  const std::vector<std::string>* corpus_lines = nullptr;
  EvalCache* shared_cache = nullptr;  // else one in-memory cache per trial
};

namespace detail {

inline void complete_metrics(CandidateScore& c, const InversionInstance& instance,
                             const EmbeddingProvider* embedder) {
  c.scores.bleu = bleu(c.text, instance.input_text);
  c.scores.token_f1 = token_f1(c.text, instance.input_text);
  if (embedder) c.scores.cos_sim = cosine_similarity(c.text, instance.input_text, *embedder);
}

inline std::int64_t unix_ms_now() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace detail

/// Runs one (instance, trial) search and fills in the similarity metrics.
inline TrialResult run_single_trial(const ExperimentConfig& config, const ExperimentEnv& env,
                                    const InversionInstance& instance, int instance_index,
                                    int trial_index) {
  const LanguageModelBackend& model = *env.model;
  std::uint64_t trial_seed =
      derive_seed(config.seed, static_cast<std::uint64_t>(instance_index),
                  static_cast<std::uint64_t>(trial_index));

  Schedule schedule{config.objective, config.iterations,
                    static_cast<int>(instance.output.size())};

  Budget budget;
  if (config.max_calls) budget.set_call_limit(*config.max_calls);
  if (config.timeout_seconds) budget.set_wall_limit_seconds(*config.timeout_seconds);
  if (config.iteration_cap) budget.set_iteration_limit(*config.iteration_cap);

  std::unique_ptr<EvalCache> local_cache;
  EvalCache* cache = env.shared_cache;
  if (!cache) {
    local_cache = std::make_unique<EvalCache>();
    cache = local_cache.get();
  }

  init::InitStrategy strategy;
  strategy.kind = config.initialization;
  strategy.seed = derive_seed(trial_seed, 0x696e6974);
  strategy.model = &model;
  strategy.autoencoder = env.autoencoder;
  strategy.lexicon = env.lexicon;
  strategy.paraphraser = env.paraphraser;
  strategy.inverter = env.inverter;
  strategy.corpus_lines = env.corpus_lines;

  TrialResult result;
  if (config.algorithm == "ga") {
    ga::GaConfig ga_config = config.ga;
    ga_config.seed = derive_seed(trial_seed, 0x6761);
    strategy.max_len = ga_config.max_len;
    Rng init_rng(strategy.seed);
    init::InitPopulation population =
        init::build_population(strategy, instance.output, ga_config.population_size,
                               init::Representation::tokens, init_rng);
    if (config.inject_original == InjectOriginal::first) {
      population.tokens[0] = instance.input;
    } else if (config.inject_original == InjectOriginal::all) {
      population.tokens.assign(population.tokens.size(), instance.input);
    }
    result = ga::run_ga(ga_config, instance, model, schedule, budget,
                        std::move(population.tokens), cache);
  } else {
    if (!env.autoencoder) throw ConfigError("pso requires a text autoencoder");
    pso::PsoConfig pso_config = config.pso;
    pso_config.seed = derive_seed(trial_seed, 0x70736f);
    strategy.max_len = pso_config.max_sample_len;
    Rng init_rng(strategy.seed);
    init::InitPopulation population =
        init::build_population(strategy, instance.output, pso_config.swarm_size,
                               init::Representation::embedding, init_rng);
    std::vector<std::optional<TokenSequence>> overrides;
    if (config.inject_original != InjectOriginal::none) {
      overrides.assign(population.embeddings.size(), std::nullopt);
      std::vector<double> encoded = env.autoencoder->encode(instance.input);
      if (config.inject_original == InjectOriginal::first) {
        population.embeddings[0] = encoded;
        overrides[0] = instance.input;
      } else {
        for (std::size_t i = 0; i < population.embeddings.size(); ++i) {
          population.embeddings[i] = encoded;
          overrides[i] = instance.input;
        }
      }
    }
    result = pso::run_pso(pso_config, instance, model, *env.autoencoder, schedule, budget,
                          std::move(population.embeddings), cache, std::move(overrides));
  }

  result.trial_index = trial_index;
  detail::complete_metrics(result.before, instance, env.embedder);
  detail::complete_metrics(result.after, instance, env.embedder);
  return result;
}

/// Runs every instance x trial, appending one JSON line per trial (flushed
/// immediately, so interrupted runs keep completed trials). Per-trial
/// failures are recorded and the run continues.
inline void run_experiment(const ExperimentConfig& config, const ExperimentEnv& env,
                           std::ostream* progress = nullptr) {
  config.validate();
  if (!env.model) throw ConfigError("run_experiment: model backend is required");
  Dataset dataset = bind_dataset(read_dataset_file(config.dataset_path), *env.model);

  std::ofstream out(config.results_path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write results file: " + config.results_path);

  RunMeta meta;
  meta.dataset_fingerprint = dataset.fingerprint;
  meta.model_id = env.model->model_id();
  meta.algorithm = config.algorithm;
  meta.objective = to_string(config.objective);
  meta.initialization = init::to_string(config.initialization);

  for (std::size_t i = 0; i < dataset.instances.size(); ++i) {
    const InversionInstance& instance = dataset.instances[i];
    for (int trial = 0; trial < config.trials; ++trial) {
      std::int64_t started = detail::unix_ms_now();
      TrialResult result;
      try {
        result = run_single_trial(config, env, instance, static_cast<int>(i), trial);
      } catch (const std::exception& e) {
        result = TrialResult{};
        result.instance_id = instance.id;
        result.trial_index = trial;
        result.failed = true;
        result.failure_reason = e.what();
      }
      out << trial_to_json(result, meta, started).dump() << '\n';
      out.flush();
      if (progress) {
        *progress << instance.id << " trial " << trial
                  << (result.failed ? " FAILED: " + result.failure_reason
                                    : " after=" + std::to_string(result.after.log_likelihood))
                  << "\n";
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Reporting
// ---------------------------------------------------------------------------

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
  int n = 0;
};

/// Mean and standard error (sample stdev / sqrt(n)) over per-trial values.
inline MeanStderr mean_stderr(const std::vector<double>& values) {
  MeanStderr out;
  out.n = static_cast<int>(values.size());
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    double stdev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    out.stderr_ = stdev / std::sqrt(static_cast<double>(values.size()));
  }
  return out;
}

struct GroupSummary {
  std::string algorithm;
  std::string objective;
  std::string initialization;
  int trials = 0;
  int instances = 0;
  int failed_trials = 0;
  // Keyed by metric name; percent-scaled (0-100) as in the tables.
  std::map<std::string, MeanStderr> metrics;
};

struct ReportSummary {
  std::string dataset_fingerprint;
  std::string model_id;
  std::vector<GroupSummary> groups;
};

inline ReportSummary summarize(const std::vector<std::string>& results_paths) {
  if (results_paths.empty()) throw ConfigError("report: no results files");
  std::vector<TrialRow> rows;
  for (const auto& path : results_paths) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open results file: " + path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
      if (j.is_discarded())
        throw ConfigError(path + ":" + std::to_string(line_no) + ": malformed JSON line");
      try {
        rows.push_back(trial_from_json(j));
      } catch (const std::exception& e) {
        throw ConfigError(path + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
  }
  if (rows.empty()) throw ConfigError("report: results files contain no trials");

  ReportSummary summary;
  summary.dataset_fingerprint = rows[0].meta.dataset_fingerprint;
  summary.model_id = rows[0].meta.model_id;
  for (const auto& row : rows) {
    if (row.meta.dataset_fingerprint != summary.dataset_fingerprint)
      throw ConfigError(
          "results files mix different benchmarks (dataset fingerprint mismatch: " +
          summary.dataset_fingerprint + " vs " + row.meta.dataset_fingerprint +
          "); report refuses to aggregate them");
  }

  std::map<std::array<std::string, 3>, std::vector<const TrialRow*>> groups;
  for (const auto& row : rows) {
    groups[{row.meta.algorithm, row.meta.objective, row.meta.initialization}].push_back(&row);
  }

  for (const auto& [key, group_rows] : groups) {
    GroupSummary g;
    g.algorithm = key[0];
    g.objective = key[1];
    g.initialization = key[2];

    // Per-trial benchmark means, then mean +- stderr across trials.
    std::map<int, std::vector<const TrialRow*>> by_trial;
    std::set<std::string> instance_ids;
    for (const TrialRow* r : group_rows) {
      if (r->result.failed) {
        ++g.failed_trials;
        continue;
      }
      by_trial[r->result.trial_index].push_back(r);
      instance_ids.insert(r->result.instance_id);
    }
    g.trials = static_cast<int>(by_trial.size());
    g.instances = static_cast<int>(instance_ids.size());

    auto aggregate = [&](const std::string& name, auto&& per_trial_value) {
      std::vector<double> per_trial;
      for (const auto& [trial, trial_rows] : by_trial) {
        double sum = 0.0;
        int n = 0;
        for (const TrialRow* r : trial_rows) {
          auto v = per_trial_value(r->result);
          if (!v) continue;
          sum += *v;
          ++n;
        }
        if (n > 0) per_trial.push_back(sum / n);
      }
      g.metrics[name] = mean_stderr(per_trial);
    };

    auto pct = [](bool b) { return std::optional<double>(b ? 100.0 : 0.0); };
    aggregate("weak_before", [&](const TrialResult& t) { return pct(t.before.scores.weak); });
    aggregate("weak_after", [&](const TrialResult& t) { return pct(t.after.scores.weak); });
    aggregate("exact_before", [&](const TrialResult& t) { return pct(t.before.scores.exact); });
    aggregate("exact_after", [&](const TrialResult& t) { return pct(t.after.scores.exact); });
    aggregate("bleu_before",
              [](const TrialResult& t) { return std::optional<double>(100.0 * t.before.scores.bleu); });
    aggregate("bleu_after",
              [](const TrialResult& t) { return std::optional<double>(100.0 * t.after.scores.bleu); });
    aggregate("token_f1_before", [](const TrialResult& t) {
      return std::optional<double>(100.0 * t.before.scores.token_f1);
    });
    aggregate("token_f1_after", [](const TrialResult& t) {
      return std::optional<double>(100.0 * t.after.scores.token_f1);
    });
    aggregate("cos_before", [](const TrialResult& t) -> std::optional<double> {
      if (!t.before.scores.cos_sim) return std::nullopt;
      return 100.0 * *t.before.scores.cos_sim;
    });
    aggregate("cos_after", [](const TrialResult& t) -> std::optional<double> {
      if (!t.after.scores.cos_sim) return std::nullopt;
      return 100.0 * *t.after.scores.cos_sim;
    });
    aggregate("objective_calls", [](const TrialResult& t) {
      return std::optional<double>(static_cast<double>(t.objective_calls));
    });
    aggregate("wall_seconds",
              [](const TrialResult& t) { return std::optional<double>(t.wall_seconds); });

    summary.groups.push_back(std::move(g));
  }
  return summary;
}

inline json summary_to_json(const ReportSummary& summary) {
  json groups = json::array();
  for (const auto& g : summary.groups) {
    json metrics;
    for (const auto& [name, ms] : g.metrics) {
      metrics[name] = json{{"mean", ms.mean}, {"stderr", ms.stderr_}, {"n", ms.n}};
    }
    groups.push_back(json{{"algorithm", g.algorithm},
                          {"objective", g.objective},
                          {"initialization", g.initialization},
                          {"trials", g.trials},
                          {"instances", g.instances},
                          {"failed_trials", g.failed_trials},
                          {"metrics", metrics}});
  }
  return json{{"schema", "inversor-summary-v1"},
              {"dataset", summary.dataset_fingerprint},
              {"model", summary.model_id},
              {"groups", groups}};
}

inline void render_summary(const ReportSummary& summary, std::ostream& out) {
  out << "dataset " << summary.dataset_fingerprint << "  model " << summary.model_id << "\n";
  auto cell = [](const MeanStderr& ms, bool annotate_single) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(1) << ms.mean << "+-" << ms.stderr_;
    if (annotate_single && ms.n == 1) s << " (single trial)";
    return s.str();
  };
  out << std::left << std::setw(6) << "search" << std::setw(13) << "objective" << std::setw(19)
      << "initialization" << std::setw(17) << "weak B/A %" << std::setw(15) << "exact B/A %"
      << std::setw(14) << "bleu B/A" << std::setw(14) << "f1 B/A" << std::setw(14) << "cos B/A"
      << std::setw(16) << "obj. calls" << "\n";
  for (const auto& g : summary.groups) {
    auto m = [&](const std::string& name) { return g.metrics.count(name) ? g.metrics.at(name) : MeanStderr{}; };
    std::ostringstream calls;
    calls << std::fixed << std::setprecision(0) << m("objective_calls").mean << "+-"
          << m("objective_calls").stderr_;
    bool single = g.trials == 1;
    out << std::left << std::setw(6) << g.algorithm << std::setw(13) << g.objective
        << std::setw(19) << g.initialization << std::setw(17)
        << (cell(m("weak_before"), false) + "/" + cell(m("weak_after"), false)) << std::setw(15)
        << (cell(m("exact_before"), false) + "/" + cell(m("exact_after"), false)) << std::setw(14)
        << (cell(m("bleu_before"), false) + "/" + cell(m("bleu_after"), false)) << std::setw(14)
        << (cell(m("token_f1_before"), false) + "/" + cell(m("token_f1_after"), false))
        << std::setw(14) << (cell(m("cos_before"), false) + "/" + cell(m("cos_after"), false))
        << std::setw(16) << calls.str();
    if (single) out << "  [single trial: stderr reported as 0]";
    out << "\n";
  }
}

/// Best-so-far series for external plotting, one JSON line per trial.
inline void write_series(const std::vector<std::string>& results_paths,
                         const std::string& series_path) {
  std::ofstream out(series_path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write series file: " + series_path);
  for (const auto& path : results_paths) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open results file: " + path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
      if (j.is_discarded()) continue;
      TrialRow row = trial_from_json(j);
      if (row.result.failed) continue;
      json hist = json::array();
      for (const auto& [calls, score] : row.result.history)
        hist.push_back(json::array({calls, wire::encode_logprob(score)}));
      out << json{{"algorithm", row.meta.algorithm},
                  {"objective", row.meta.objective},
                  {"initialization", row.meta.initialization},
                  {"instance", row.result.instance_id},
                  {"trial", row.result.trial_index},
                  {"history", hist}}
                 .dump()
          << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Benchmark planting
// ---------------------------------------------------------------------------

struct PlantConfig {
  std::string corpus_path;
  int order = 3;
  double alpha = 0.1;
  int instances = 30;
  int min_input_tokens = 3;
  int max_input_tokens = 14;
  std::vector<int> output_token_choices = {6, 8, 12};  // greedy continuation lengths
  int min_output_tokens = 4;
  std::uint64_t seed = 20240501;
};

/// Builds a planted benchmark: inputs are prefixes of corpus lines, outputs
/// are the model's greedy continuations, so every baseline likelihood is
/// finite by construction. Trivial pairs (y identical to x) are rejected.
inline std::vector<DatasetRecord> plant_benchmark(const NGramModel& model,
                                                  const std::vector<std::string>& corpus_lines,
                                                  const PlantConfig& config) {
  const Vocabulary& vocab = model.vocabulary();
  Rng rng(config.seed);
  std::vector<DatasetRecord> records;
  std::set<TokenSequence> seen_inputs;

  std::vector<TokenSequence> lines;
  for (const auto& line : corpus_lines) {
    if (auto t = vocab.try_tokenize(line); t && static_cast<int>(t->size()) >= config.min_input_tokens)
      lines.push_back(std::move(*t));
  }
  if (lines.empty()) throw ConfigError("plant: no usable corpus lines");

  int attempts = 0;
  const int max_attempts = config.instances * 500;
  while (static_cast<int>(records.size()) < config.instances && attempts < max_attempts) {
    ++attempts;
    const TokenSequence& line = lines[rng.index(lines.size())];
    int max_k = std::min<int>(config.max_input_tokens, static_cast<int>(line.size()));
    if (max_k < config.min_input_tokens) continue;
    int k = static_cast<int>(rng.uniform_int(config.min_input_tokens, max_k));
    TokenSequence input(line.begin(), line.begin() + k);
    if (!seen_inputs.insert(input).second) continue;

    SamplingParams greedy;
    greedy.temperature = 0.0;
    int out_len = config.output_token_choices[rng.index(config.output_token_choices.size())];
    TokenSequence output = model.generate(input, out_len, greedy);
    if (static_cast<int>(output.size()) < config.min_output_tokens) continue;
    if (output == input) continue;

    double baseline = sequence_log_likelihood(model, input, output).log_likelihood;
    if (!std::isfinite(baseline)) continue;

    DatasetRecord r;
    std::ostringstream id;
    id << "t" << std::setw(3) << std::setfill('0') << records.size();
    r.id = id.str();
    r.input_text = vocab.render(input);
    r.output_text = vocab.render(output);
    r.baseline_logprob = baseline;
    records.push_back(std::move(r));
  }
  if (static_cast<int>(records.size()) < config.instances)
    throw ConfigError("plant: could not assemble enough instances from this corpus");
  return records;
}

}  // namespace inversor::harness
