// inversor: searches for inputs that make a language model reproduce a target
// output (weak inversion) and measures how close they come to the hidden
// original (exact inversion).

#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "inversor/client.hpp"
#include "inversor/harness.hpp"
#include "inversor/ngram.hpp"
#include "inversor/server.hpp"

namespace {

using namespace inversor;

struct BackendSettings {
  std::string model_path;   // toy n-gram model file
  std::string backend_url;  // remote /v1 endpoint
  std::string backend_model;
  int retries = 3;
  int backoff_ms = 50;
  double http_timeout = 30.0;
};

void add_backend_flags(CLI::App* cmd, BackendSettings& s) {
  cmd->add_option("--model", s.model_path, "toy n-gram model file (JSON)");
  cmd->add_option("--backend", s.backend_url,
                  "remote backend URL (default: $INVERSOR_BACKEND_URL)");
  cmd->add_option("--backend-model", s.backend_model, "model id to request from the backend");
  cmd->add_option("--retries", s.retries, "HTTP retries on transient failures");
  cmd->add_option("--backoff-ms", s.backoff_ms, "base retry backoff in milliseconds");
  cmd->add_option("--http-timeout", s.http_timeout, "HTTP timeout in seconds");
}

std::unique_ptr<LanguageModelBackend> make_backend(const BackendSettings& s) {
  if (!s.model_path.empty()) {
    return std::make_unique<NGramModel>(NGramModel::load(s.model_path));
  }
  std::string url = s.backend_url;
  if (url.empty()) {
    if (auto env = http::backend_url_from_env()) url = *env;
  }
  if (url.empty())
    throw ConfigError("no backend configured: pass --model or --backend (or set $" +
                      std::string(http::kBackendUrlEnvVar) + ")");
  http::ClientConfig config;
  config.base_url = url;
  config.model_id = s.backend_model;
  config.max_retries = s.retries;
  config.backoff_base_ms = s.backoff_ms;
  config.timeout_seconds = s.http_timeout;
  return std::make_unique<http::RemoteBackend>(std::move(config));
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(line);
  return lines;
}

struct InvertSettings {
  BackendSettings backend;
  harness::ExperimentConfig config;
  std::string objective = "full";
  std::string initialization = "random";
  std::string inject = "none";
  double timeout_seconds = 0.0;
  std::uint64_t max_calls = 0;
  int max_iterations = -1;
  std::string lexicon_path;
  std::string init_corpus_path;
  std::string paraphraser_spec;  // "stub" or URL
  std::string inverter_spec;
  std::string embedder_spec = "builtin";  // "builtin" or URL
  int pso_dim = 512;
  std::uint64_t autoencoder_seed = pso::RandomProjectionAutoencoder::kDefaultSeed;
  std::string cache_path;
  std::string config_path;
  bool verbose = false;
};

// The JSON config file overrides any flags it names.
void apply_config_file(InvertSettings& s) {
  if (s.config_path.empty()) return;
  std::ifstream in(s.config_path);
  if (!in) throw ConfigError("cannot open config file: " + s.config_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config file: ") + e.what());
  }
  auto set_str = [&](const char* key, std::string& target) {
    if (j.contains(key)) target = j.at(key).get<std::string>();
  };
  auto set_int = [&](const char* key, int& target) {
    if (j.contains(key)) target = j.at(key).get<int>();
  };
  auto set_u64 = [&](const char* key, std::uint64_t& target) {
    if (j.contains(key)) target = j.at(key).get<std::uint64_t>();
  };
  auto set_dbl = [&](const char* key, double& target) {
    if (j.contains(key)) target = j.at(key).get<double>();
  };
  set_str("dataset", s.config.dataset_path);
  set_str("results", s.config.results_path);
  set_str("algorithm", s.config.algorithm);
  set_str("objective", s.objective);
  set_str("initialization", s.initialization);
  set_str("inject_original", s.inject);
  set_int("trials", s.config.trials);
  set_int("iterations", s.config.iterations);
  set_dbl("timeout_seconds", s.timeout_seconds);
  set_u64("max_calls", s.max_calls);
  set_int("max_iterations", s.max_iterations);
  set_u64("seed", s.config.seed);
  set_int("population_size", s.config.ga.population_size);
  set_dbl("crossover_indpb", s.config.ga.crossover_indpb);
  set_dbl("mutation_indpb", s.config.ga.mutation_indpb);
  set_int("tournament_size", s.config.ga.tournament_size);
  set_dbl("crossover_rate", s.config.ga.crossover_rate);
  set_dbl("mutation_rate", s.config.ga.mutation_rate);
  set_int("elitism", s.config.ga.elitism_count);
  set_int("max_len", s.config.ga.max_len);
  set_int("swarm_size", s.config.pso.swarm_size);
  set_dbl("phi1", s.config.pso.phi1);
  set_dbl("phi2", s.config.pso.phi2);
  set_dbl("velocity_clamp", s.config.pso.velocity_clamp);
  set_int("max_sample_len", s.config.pso.max_sample_len);
  set_int("pso_dim", s.pso_dim);
  set_str("model", s.backend.model_path);
  set_str("backend", s.backend.backend_url);
  set_str("backend_model", s.backend.backend_model);
  set_str("lexicon", s.lexicon_path);
  set_str("init_corpus", s.init_corpus_path);
  set_str("paraphraser", s.paraphraser_spec);
  set_str("inverter", s.inverter_spec);
  set_str("embedder", s.embedder_spec);
  set_str("cache", s.cache_path);
}

int run_invert(InvertSettings& s) {
  apply_config_file(s);
  s.config.objective = objective_mode_from_string(s.objective);
  s.config.initialization = init::kind_from_string(s.initialization);
  s.config.inject_original = harness::inject_from_string(s.inject);
  if (s.timeout_seconds > 0.0) s.config.timeout_seconds = s.timeout_seconds;
  if (s.max_calls > 0) s.config.max_calls = s.max_calls;
  if (s.max_iterations >= 0) s.config.iteration_cap = s.max_iterations;
  if (s.config.results_path.empty()) throw ConfigError("missing --out results path");

  auto model = make_backend(s.backend);

  harness::ExperimentEnv env;
  env.model = model.get();

  std::unique_ptr<EmbeddingProvider> embedder;
  std::unique_ptr<http::RemoteEmbedder> remote_embedder;
  if (s.embedder_spec == "builtin") {
    embedder = std::make_unique<HashedTrigramEmbedder>();
    env.embedder = embedder.get();
  } else if (!s.embedder_spec.empty()) {
    http::ClientConfig cc;
    cc.base_url = s.embedder_spec;
    remote_embedder = std::make_unique<http::RemoteEmbedder>(std::move(cc));
    env.embedder = remote_embedder.get();
  }

  std::unique_ptr<pso::RandomProjectionAutoencoder> autoencoder;
  if (s.config.algorithm == "pso") {
    autoencoder = std::make_unique<pso::RandomProjectionAutoencoder>(
        model->vocabulary(), s.pso_dim, s.autoencoder_seed);
    env.autoencoder = autoencoder.get();
  }

  init::SynonymLexicon lexicon;
  if (!s.lexicon_path.empty()) {
    lexicon = init::SynonymLexicon::load(s.lexicon_path);
    env.lexicon = &lexicon;
  } else if (s.config.initialization == init::Kind::output_synonym) {
    env.lexicon = &lexicon;  // empty lexicon behaves as the output strategy
  }

  std::vector<std::string> init_corpus;
  if (!s.init_corpus_path.empty()) {
    init_corpus = read_lines(s.init_corpus_path);
    env.corpus_lines = &init_corpus;
  }

  auto make_generator = [&](const std::string& spec)
      -> std::unique_ptr<init::CandidateGenerator> {
    if (spec.empty()) return nullptr;
    if (spec == "stub") return std::make_unique<init::EchoInverter>();
    http::ClientConfig cc;
    cc.base_url = spec;
    cc.max_retries = s.backend.retries;
    cc.backoff_base_ms = s.backend.backoff_ms;
    return std::make_unique<http::RemoteGenerator>(std::move(cc));
  };
  std::unique_ptr<init::CandidateGenerator> paraphraser;
  if (s.paraphraser_spec == "stub") {
    paraphraser = std::make_unique<init::RotateParaphraser>();
  } else {
    paraphraser = make_generator(s.paraphraser_spec);
  }
  std::unique_ptr<init::CandidateGenerator> inverter = make_generator(s.inverter_spec);
  env.paraphraser = paraphraser.get();
  env.inverter = inverter.get();

  std::unique_ptr<EvalCache> cache;
  if (!s.cache_path.empty()) {
    cache = std::make_unique<EvalCache>(s.cache_path);
    env.shared_cache = cache.get();
  }

  harness::run_experiment(s.config, env, s.verbose ? &std::cerr : nullptr);
  std::cout << "wrote " << s.config.results_path << "\n";
  return 0;
}

int run_validate(const BackendSettings& backend, const std::string& dataset, int input_limit,
                 int output_limit, bool no_write) {
  auto model = make_backend(backend);
  harness::ValidationReport report =
      harness::validate_dataset(dataset, *model, input_limit, output_limit, !no_write);
  for (const auto& inst : report.instances) {
    if (inst.valid) {
      std::cout << inst.id << ": ok\n";
    } else {
      std::cout << inst.id << ": INVALID";
      for (const auto& p : inst.problems) std::cout << " [" << p << "]";
      std::cout << "\n";
    }
  }
  if (report.baselines_written > 0)
    std::cout << "wrote " << report.baselines_written << " baseline likelihoods\n";
  std::cout << (report.all_valid ? "dataset valid" : "dataset INVALID") << "\n";
  return report.all_valid ? 0 : 1;
}

int run_report(const std::vector<std::string>& results, const std::string& json_out,
               const std::string& series_out) {
  harness::ReportSummary summary = harness::summarize(results);
  harness::render_summary(summary, std::cout);
  if (!json_out.empty()) {
    std::ofstream out(json_out, std::ios::trunc);
    if (!out) throw ConfigError("cannot write summary: " + json_out);
    out << harness::summary_to_json(summary).dump(2) << "\n";
    std::cout << "wrote " << json_out << "\n";
  }
  if (!series_out.empty()) {
    harness::write_series(results, series_out);
    std::cout << "wrote " << series_out << "\n";
  }
  return 0;
}

int run_serve(const BackendSettings& backend, const std::string& host, int port) {
  auto model = make_backend(backend);
  HashedTrigramEmbedder embedder;
  init::EchoInverter inverter;
  http::LoopbackServer server(*model, &embedder, &inverter, host);
  server.start(port);
  std::cout << "serving " << model->model_id() << " at " << server.url() << "\n";
  std::cout << "endpoints: GET /v1/vocab, POST /v1/logprobs /v1/generate /v1/embed /v1/invert\n";
  std::cout << "press enter to stop\n";
  std::cin.get();
  server.stop();
  return 0;
}

int run_plant(const std::string& corpus, harness::PlantConfig config,
              const std::string& model_out, const std::string& dataset_out,
              const std::vector<std::string>& hard_zero) {
  auto lines = read_lines(corpus);
  NGramConfig ngram_config{config.order, config.alpha, hard_zero};
  NGramModel model = NGramModel::train_from_corpus(lines, ngram_config);
  auto records = harness::plant_benchmark(model, lines, config);
  model.save(model_out);
  harness::write_dataset_file(dataset_out, records);
  std::cout << "trained " << model.model_id() << " (vocab " << model.vocabulary().size()
            << ") -> " << model_out << "\n";
  std::cout << "planted " << records.size() << " instances -> " << dataset_out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"search-based language model inversion"};
  app.require_subcommand(1);

  // validate
  auto* validate = app.add_subcommand("validate", "check a benchmark dataset");
  BackendSettings validate_backend;
  std::string validate_dataset_path;
  int input_limit = 15, output_limit = 100;
  bool no_write = false;
  add_backend_flags(validate, validate_backend);
  validate->add_option("--dataset", validate_dataset_path, "dataset JSONL")->required();
  validate->add_option("--input-limit", input_limit, "max input tokens");
  validate->add_option("--output-limit", output_limit, "max output tokens");
  validate->add_flag("--no-write", no_write, "do not write missing baselines back");

  // invert
  auto* invert = app.add_subcommand("invert", "run an inversion experiment");
  InvertSettings inv;
  add_backend_flags(invert, inv.backend);
  invert->add_option("--dataset", inv.config.dataset_path, "dataset JSONL")->required();
  invert->add_option("--out", inv.config.results_path, "results JSONL path")->required();
  invert->add_option("--algorithm", inv.config.algorithm, "ga | pso");
  invert->add_option("--objective", inv.objective, "full | progressive");
  invert->add_option("--init", inv.initialization,
                     "random | output | output_synonym | output_paraphrase | inversion | "
                     "inversion_sample | random_dataset | random_fluent | random_output");
  invert->add_option("--trials", inv.config.trials, "trials per instance");
  invert->add_option("--iterations", inv.config.iterations, "schedule length T");
  invert->add_option("--timeout-seconds", inv.timeout_seconds, "per-trial wall budget");
  invert->add_option("--max-calls", inv.max_calls, "per-trial objective-call budget");
  invert->add_option("--max-iterations", inv.max_iterations,
                     "cap on iterations actually run (0 = score the initialization only)");
  invert->add_option("--seed", inv.config.seed, "master seed");
  invert->add_option("--inject-original", inv.inject, "none | first | all");
  invert->add_option("--population", inv.config.ga.population_size, "GA population size");
  invert->add_option("--crossover-indpb", inv.config.ga.crossover_indpb);
  invert->add_option("--mutation-indpb", inv.config.ga.mutation_indpb);
  invert->add_option("--tournament-size", inv.config.ga.tournament_size);
  invert->add_option("--crossover-rate", inv.config.ga.crossover_rate);
  invert->add_option("--mutation-rate", inv.config.ga.mutation_rate);
  invert->add_option("--elitism", inv.config.ga.elitism_count);
  invert->add_option("--max-len", inv.config.ga.max_len, "max candidate length (GA)");
  invert->add_option("--swarm", inv.config.pso.swarm_size, "PSO swarm size");
  invert->add_option("--phi1", inv.config.pso.phi1);
  invert->add_option("--phi2", inv.config.pso.phi2);
  invert->add_option("--velocity-clamp", inv.config.pso.velocity_clamp);
  invert->add_option("--max-sample-len", inv.config.pso.max_sample_len);
  invert->add_option("--pso-dim", inv.pso_dim, "autoencoder embedding dimension");
  invert->add_option("--lexicon", inv.lexicon_path, "synonym lexicon file");
  invert->add_option("--init-corpus", inv.init_corpus_path, "corpus for random_dataset init");
  invert->add_option("--paraphraser", inv.paraphraser_spec, "stub | URL");
  invert->add_option("--inverter", inv.inverter_spec, "stub | URL");
  invert->add_option("--embedder", inv.embedder_spec, "builtin | URL");
  invert->add_option("--cache", inv.cache_path, "persistent evaluation cache file");
  invert->add_option("--config", inv.config_path, "JSON config file (overrides flags)");
  invert->add_flag("--verbose", inv.verbose, "per-trial progress on stderr");

  // report
  auto* report = app.add_subcommand("report", "summarize results files");
  std::vector<std::string> results_files;
  std::string json_out, series_out;
  report->add_option("results", results_files, "results JSONL files")->required();
  report->add_option("--json", json_out, "machine-readable summary path");
  report->add_option("--series", series_out, "best-so-far series JSONL path");

  // serve
  auto* serve = app.add_subcommand("serve", "loopback wire-protocol server");
  BackendSettings serve_backend;
  std::string host = "127.0.0.1";
  int port = 8080;
  add_backend_flags(serve, serve_backend);
  serve->add_option("--host", host);
  serve->add_option("--port", port);

  // plant
  auto* plant = app.add_subcommand("plant", "train a toy model and plant a benchmark");
  harness::PlantConfig plant_config;
  std::string plant_corpus, model_out = "toy_model.json", dataset_out = "toy_benchmark.jsonl";
  std::vector<std::string> hard_zero;
  plant->add_option("--corpus", plant_corpus, "plain-text corpus, one document per line")
      ->required();
  plant->add_option("--order", plant_config.order, "n-gram order");
  plant->add_option("--alpha", plant_config.alpha, "additive smoothing constant");
  plant->add_option("--instances", plant_config.instances);
  plant->add_option("--min-input-tokens", plant_config.min_input_tokens);
  plant->add_option("--max-input-tokens", plant_config.max_input_tokens);
  plant->add_option("--output-lengths", plant_config.output_token_choices,
                    "greedy continuation lengths to draw from");
  plant->add_option("--seed", plant_config.seed);
  plant->add_option("--out-model", model_out);
  plant->add_option("--out-dataset", dataset_out);
  plant->add_option("--hard-zero", hard_zero, "tokens pinned to zero probability");

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed())
      return run_validate(validate_backend, validate_dataset_path, input_limit, output_limit,
                          no_write);
    if (invert->parsed()) return run_invert(inv);
    if (report->parsed()) return run_report(results_files, json_out, series_out);
    if (serve->parsed()) return run_serve(serve_backend, host, port);
    if (plant->parsed()) return run_plant(plant_corpus, plant_config, model_out, dataset_out,
                                          hard_zero);
  } catch (const std::exception& e) {
    std::cerr << "inversor: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
