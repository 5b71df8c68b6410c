#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "jsi/baselines.hpp"
#include "jsi/jsi.hpp"
#include "jsi/neural_model.hpp"
#include "jsi/objectives.hpp"
#include "jsi/training.hpp"

namespace jsi {

// ---- synthetic data ------------------------------------------------------

struct CorpusConfig {
  double scale = 1.5;         // standard deviation of the bigram logits
  double mean_length = 11.0;  // expected content length before truncation
};

// First-order Markov generator over the content tokens: Gaussian bigram
// logits, a constant stop probability 1 / mean_length after the first
// token, and no empty sequences.
TabularJointModel make_corpus_generator(const Vocabulary& vocab, int max_length, const CorpusConfig& cfg,
                                        Rng& rng);

// `n` distinct sequences drawn from the generator, labeled with the
// landscape's components (reference labels, no ledger involved).
std::vector<LabeledExample> synthetic_dataset(const SyntheticLandscape& landscape,
                                              const SequenceModel& generator, std::size_t n, Rng& rng);

// ---- metrics ---------------------------------------------------------------

struct SampleRow {
  Sequence sequence;
  std::vector<double> components;
  bool hit = false;
  double score = 0.0;  // aggregated score that ranked the sample (predicted offline, oracle online)
  std::size_t iteration = 0;
};

// 100 * hits / |rows|. Throws std::invalid_argument on an empty list.
double hit_ratio(const std::vector<SampleRow>& rows);

// 1 - mean pairwise Jaccard similarity of k-mer sets. Two empty k-mer sets
// count as identical. Throws std::invalid_argument for fewer than 2 samples.
double intdiv1(const std::vector<Sequence>& samples, int k = 3);

using Clock = std::function<double()>;  // seconds, monotone
Clock steady_clock_seconds();

struct SamplingTime {
  double seconds = 0.0;
  std::size_t samples = 0;
};

// Seconds per returned sample. Throws std::invalid_argument for zero samples.
double time_per_sample(const SamplingTime& t);

// ---- shared experiment setup ---------------------------------------------

struct ModelSetup {
  NeuralConfig neural;
  int max_length = 24;
};

struct DataSetup {
  std::string dataset_path;  // empty: generate a synthetic set
  std::size_t dataset_size = 3000;
  std::uint64_t data_seed = 0;  // landscape data is shared across run seeds
  CorpusConfig corpus;
};

struct PretrainConfig {
  std::size_t epochs = 20;
  double learning_rate = 0.3;
  std::size_t batch_size = 32;
};

// Everything a run needs besides the method knobs.
struct Environment {
  SyntheticLandscape landscape;
  std::vector<LabeledExample> dataset;
};

Environment make_environment(const std::optional<std::filesystem::path>& landscape_path,
                             const DataSetup& data, int max_length);

// The reference set's "actives": the best 10% by primary component. The hit
// threshold is the median primary value among them.
double active_median_threshold(const std::vector<LabeledExample>& reference, const LandscapeSpec& spec);

// ---- run records ---------------------------------------------------------

struct RunRecord {
  std::string kind;
  std::uint64_t seed = 0;
  std::string config_json;  // canonical config snapshot
  std::vector<SampleRow> samples;
  double hit_threshold = 0.0;
  double hit_ratio = 0.0;
  std::optional<double> intdiv1;
  std::size_t oracle_calls = 0;
  std::size_t oracle_budget = 0;
  std::size_t oracle_calls_during_optimization = 0;
  std::size_t model_samples = 0;  // sequences drawn from the model while optimizing
  SamplingTime sampling;          // wall clock; kept out of the record JSON
  std::vector<double> progress;   // per outer iteration: best aggregated oracle score so far (online)
};

std::string config_hash(const std::string& config_json);
std::string record_json(const RunRecord& r, const Vocabulary& vocab);
std::string record_jsonl(const RunRecord& r, const Vocabulary& vocab);

struct RecordPaths {
  std::filesystem::path json, jsonl, timing;
};
// <dir>/<kind>_seed<seed>_<hash>.{json,jsonl,timing.json}
RecordPaths write_run_record(const std::filesystem::path& dir, const RunRecord& r, const Vocabulary& vocab);

// ---- offline ---------------------------------------------------------------

enum class OfflineVariant { kFull, kNoJoint, kNoSelfImprove };
std::string variant_name(OfflineVariant v);
OfflineVariant parse_variant(const std::string& name);

struct OfflineRunConfig {
  ModelSetup model;
  PretrainConfig pretrain;
  TrainConfig train;  // joint finetuning on the train split
  JsiConfig jsi;
  double train_fraction = 0.5;
  std::size_t evaluation_count = 64;
  std::size_t oracle_budget = 3000;
  std::size_t best_of_n = 256;
  OfflineVariant variant = OfflineVariant::kFull;
  std::uint64_t seed = 0;
  std::string config_json;  // snapshot stored in the record
};

// Train the joint model (pretraining with lambda = 0 on every dataset
// sequence, then joint finetuning on the train split), sample with
// predictor-guided JSI, and spend the oracle only on the final candidates.
RunRecord run_offline(const OfflineRunConfig& cfg, const Environment& env, const Clock& clock = steady_clock_seconds());

// ---- online ----------------------------------------------------------------

enum class OnlineSampler { kJsi, kBestOfN, kReinvent };
std::string sampler_name(OnlineSampler s);
OnlineSampler parse_sampler(const std::string& name);

struct OnlineRunConfig {
  ModelSetup model;
  PretrainConfig pretrain;
  TrainConfig retrain;  // lambda is forced to 0
  JsiConfig jsi;
  std::size_t oracle_budget = 3000;
  double top_fraction = 0.25;
  std::size_t max_iterations = 1000;
  OnlineSampler sampler = OnlineSampler::kJsi;
  std::size_t best_of_n = 256;  // draws per iteration for the Best-of-N loop
  ReinventConfig reinvent;
  std::uint64_t seed = 0;
  std::string config_json;
};

// Sample, score with the oracle, keep the top fraction of everything scored so
// far, retrain generatively on it, repeat until the budget is spent.
RunRecord run_online(const OnlineRunConfig& cfg, const Environment& env, const Clock& clock = steady_clock_seconds());

}  // namespace jsi
