#include "jsi/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <json.hpp>
#include <set>
#include <stdexcept>
#include <unordered_set>

#include "jsi/errors.hpp"
#include "jsi/numeric.hpp"

namespace jsi {

TabularJointModel make_corpus_generator(const Vocabulary& vocab, int max_length, const CorpusConfig& cfg,
                                        Rng& rng) {
  if (!(cfg.mean_length >= 1.0)) throw ConfigError("corpus mean_length must be >= 1");
  if (!(cfg.scale >= 0.0)) throw ConfigError("corpus scale must be >= 0");
  TabularJointModel m(vocab, max_length, 1);
  const auto content = vocab.content_tokens();
  const auto eos = static_cast<std::size_t>(vocab.eos());
  const auto bos = static_cast<std::size_t>(vocab.bos());
  const double stop = 1.0 / cfg.mean_length;

  auto fill = [&](std::span<const Token> ctx, bool allow_stop) {
    auto& row = m.row_logits(ctx);
    row.assign(static_cast<std::size_t>(vocab.size()), kNegInf);
    double lse = kNegInf;
    for (Token t : content) {
      row[static_cast<std::size_t>(t)] = cfg.scale * rng.normal();
      lse = log_add_exp(lse, row[static_cast<std::size_t>(t)]);
    }
    row[bos] = kNegInf;
    // p(EOS) = stop exactly: odds stop / (1 - stop) against the content mass.
    row[eos] = (allow_stop && stop < 1.0) ? std::log(stop / (1.0 - stop)) + lse : (allow_stop ? 0.0 : kNegInf);
  };
  fill({}, false);
  for (Token t : content) fill(std::vector<Token>{t}, true);
  return m;
}

std::vector<LabeledExample> synthetic_dataset(const SyntheticLandscape& landscape,
                                              const SequenceModel& generator, std::size_t n, Rng& rng) {
  std::vector<LabeledExample> out;
  std::unordered_set<Sequence, SequenceHash> seen;
  const std::size_t max_draws = 100 * n + 1000;
  for (std::size_t draws = 0; out.size() < n; ++draws) {
    if (draws >= max_draws) throw ConfigError("synthetic dataset: generator support too small for the requested size");
    auto x = sample_ancestral(generator, rng);
    if (!seen.insert(x).second) continue;
    auto comps = landscape.components(x);
    out.push_back({std::move(x), std::move(comps)});
  }
  return out;
}

double hit_ratio(const std::vector<SampleRow>& rows) {
  if (rows.empty()) throw std::invalid_argument("hit_ratio of an empty sample list");
  const auto hits = std::count_if(rows.begin(), rows.end(), [](const SampleRow& r) { return r.hit; });
  return 100.0 * static_cast<double>(hits) / static_cast<double>(rows.size());
}

double intdiv1(const std::vector<Sequence>& samples, int k) {
  if (samples.size() < 2) throw std::invalid_argument("intdiv1 needs at least two samples");
  std::vector<std::set<Kmer>> sets;
  sets.reserve(samples.size());
  for (const auto& x : samples) sets.push_back(kmer_set(x, k));
  double sim = 0.0;
  std::vector<Kmer> common;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    for (std::size_t j = i + 1; j < sets.size(); ++j) {
      common.clear();
      std::set_intersection(sets[i].begin(), sets[i].end(), sets[j].begin(), sets[j].end(),
                            std::back_inserter(common));
      const std::size_t uni = sets[i].size() + sets[j].size() - common.size();
      sim += uni == 0 ? 1.0 : static_cast<double>(common.size()) / static_cast<double>(uni);
    }
  }
  const double pairs = 0.5 * static_cast<double>(sets.size()) * static_cast<double>(sets.size() - 1);
  return 1.0 - sim / pairs;
}

Clock steady_clock_seconds() {
  return [] {
    using namespace std::chrono;
    return duration<double>(steady_clock::now().time_since_epoch()).count();
  };
}

double time_per_sample(const SamplingTime& t) {
  if (t.samples == 0) throw std::invalid_argument("time_per_sample: no samples");
  return t.seconds / static_cast<double>(t.samples);
}

Environment make_environment(const std::optional<std::filesystem::path>& landscape_path,
                             const DataSetup& data, int max_length) {
  auto landscape = landscape_path
                       ? SyntheticLandscape::read(*landscape_path, SyntheticLandscape::default_landscape().vocab())
                       : SyntheticLandscape::default_landscape();
  std::vector<LabeledExample> dataset;
  if (!data.dataset_path.empty()) {
    dataset = read_dataset(data.dataset_path, landscape.vocab(), max_length);
    for (const auto& ex : dataset)
      if (ex.scores.size() != SyntheticLandscape::kNumObjectives)
        throw ConfigError("dataset rows must carry " + std::to_string(SyntheticLandscape::kNumObjectives) +
                          " objective values");
  } else {
    Rng rng(data.data_seed);
    const auto gen = make_corpus_generator(landscape.vocab(), max_length, data.corpus, rng);
    dataset = synthetic_dataset(landscape, gen, data.dataset_size, rng);
  }
  if (dataset.size() < 2) throw ConfigError("dataset needs at least two examples");
  return {std::move(landscape), std::move(dataset)};
}

namespace {

bool lower_is_better(const LandscapeSpec& spec) { return spec.primary_sign < 0; }

HitBounds bounds_for(const LandscapeSpec& spec) {
  HitBounds b;
  b.primary_lower_is_better = lower_is_better(spec);
  return b;
}

std::vector<std::vector<double>> component_rows(const std::vector<LabeledExample>& data) {
  std::vector<std::vector<double>> rows;
  rows.reserve(data.size());
  for (const auto& ex : data) rows.push_back(ex.scores);
  return rows;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Derived streams, one per stage, so that changing one stage's consumption
// never shifts another's.
struct Streams {
  Rng split, init, pretrain, train, sample, aux;
  explicit Streams(std::uint64_t seed)
      : split(seed ^ 0x1111ULL), init(seed ^ 0x2222ULL), pretrain(seed ^ 0x3333ULL),
        train(seed ^ 0x4444ULL), sample(seed ^ 0x5555ULL), aux(seed ^ 0x6666ULL) {}
};

void pretrain_generative(NeuralJointModel& m, const std::vector<LabeledExample>& data, const PretrainConfig& p,
                         Rng& rng) {
  if (p.epochs == 0) return;
  TrainConfig cfg;
  cfg.lambda = 0.0;
  cfg.learning_rate = p.learning_rate;
  cfg.batch_size = p.batch_size;
  cfg.epochs = p.epochs;
  train_joint(m, data, cfg, rng);
}

}  // namespace

double active_median_threshold(const std::vector<LabeledExample>& reference, const LandscapeSpec& spec) {
  if (reference.empty()) throw ConfigError("reference set for the hit threshold is empty");
  std::vector<double> primary;
  primary.reserve(reference.size());
  for (const auto& ex : reference) primary.push_back(ex.scores.at(0));
  if (lower_is_better(spec))
    std::sort(primary.begin(), primary.end());
  else
    std::sort(primary.begin(), primary.end(), std::greater<>());
  const auto n_active = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(0.1 * static_cast<double>(primary.size()) + 0.5)));
  primary.resize(n_active);
  return median(primary);
}

std::string config_hash(const std::string& config_json) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(config_json)));
  return buf;
}

std::string record_json(const RunRecord& r, const Vocabulary& vocab) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["kind"] = r.kind;
  j["seed"] = r.seed;
  j["config_hash"] = config_hash(r.config_json);
  j["config"] = r.config_json.empty() ? ordered_json() : ordered_json::parse(r.config_json);
  j["metrics"] = {{"hit_ratio", r.hit_ratio},
                  {"intdiv1", r.intdiv1 ? ordered_json(*r.intdiv1) : ordered_json()},
                  {"hit_threshold", r.hit_threshold},
                  {"num_samples", r.samples.size()}};
  j["ledger"] = {{"used", r.oracle_calls},
                 {"budget", r.oracle_budget},
                 {"during_optimization", r.oracle_calls_during_optimization}};
  j["model_samples"] = r.model_samples;
  j["progress"] = r.progress;
  ordered_json rows = ordered_json::array();
  for (const auto& s : r.samples)
    rows.push_back({{"sequence", s.sequence.to_string(vocab)},
                    {"components", s.components},
                    {"hit", s.hit},
                    {"score", s.score},
                    {"iteration", s.iteration}});
  j["samples"] = std::move(rows);
  return j.dump(2) + "\n";
}

std::string record_jsonl(const RunRecord& r, const Vocabulary& vocab) {
  std::string out;
  for (const auto& s : r.samples) {
    nlohmann::ordered_json j{{"sequence", s.sequence.to_string(vocab)},
                             {"components", s.components},
                             {"hit", s.hit},
                             {"score", s.score},
                             {"iteration", s.iteration}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

RecordPaths write_run_record(const std::filesystem::path& dir, const RunRecord& r, const Vocabulary& vocab) {
  std::filesystem::create_directories(dir);
  const std::string stem = r.kind + "_seed" + std::to_string(r.seed) + "_" + config_hash(r.config_json);
  RecordPaths p{dir / (stem + ".json"), dir / (stem + ".jsonl"), dir / (stem + ".timing.json")};
  auto write = [](const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
  };
  write(p.json, record_json(r, vocab));
  write(p.jsonl, record_jsonl(r, vocab));
  nlohmann::ordered_json t{{"sampling_seconds", r.sampling.seconds},
                           {"returned_samples", r.sampling.samples},
                           {"seconds_per_sample", r.sampling.samples ? nlohmann::ordered_json(time_per_sample(r.sampling))
                                                                     : nlohmann::ordered_json()}};
  write(p.timing, t.dump(2) + "\n");
  return p;
}

std::string variant_name(OfflineVariant v) {
  switch (v) {
    case OfflineVariant::kFull: return "full";
    case OfflineVariant::kNoJoint: return "no-joint";
    case OfflineVariant::kNoSelfImprove: return "no-self-improve";
  }
  throw std::logic_error("unknown variant");
}

OfflineVariant parse_variant(const std::string& name) {
  if (name == "full") return OfflineVariant::kFull;
  if (name == "no-joint") return OfflineVariant::kNoJoint;
  if (name == "no-self-improve") return OfflineVariant::kNoSelfImprove;
  throw ConfigError("unknown variant '" + name + "' (expected full, no-joint or no-self-improve)");
}

std::string sampler_name(OnlineSampler s) {
  switch (s) {
    case OnlineSampler::kJsi: return "jsi";
    case OnlineSampler::kBestOfN: return "best-of-n";
    case OnlineSampler::kReinvent: return "reinvent";
  }
  throw std::logic_error("unknown sampler");
}

OnlineSampler parse_sampler(const std::string& name) {
  if (name == "jsi") return OnlineSampler::kJsi;
  if (name == "best-of-n") return OnlineSampler::kBestOfN;
  if (name == "reinvent") return OnlineSampler::kReinvent;
  throw ConfigError("unknown sampler '" + name + "' (expected jsi, best-of-n or reinvent)");
}

namespace {

NeuralJointModel fresh_model(const ModelSetup& setup, const Vocabulary& vocab, Rng& rng) {
  NeuralConfig nc = setup.neural;
  nc.num_targets = SyntheticLandscape::kNumObjectives;
  return NeuralJointModel(vocab, setup.max_length, nc, rng);
}

std::vector<LabeledExample> zscored(const std::vector<LabeledExample>& data, const ZScoreStats& stats) {
  std::vector<LabeledExample> out = data;
  for (auto& ex : out)
    for (std::size_t i = 0; i < ex.scores.size(); ++i) ex.scores[i] = (ex.scores[i] - stats.mean[i]) / stats.stddev[i];
  return out;
}

void finish_metrics(RunRecord& r) {
  if (r.samples.empty()) return;
  r.hit_ratio = hit_ratio(r.samples);
  if (r.samples.size() >= 2) {
    std::vector<Sequence> xs;
    for (const auto& s : r.samples) xs.push_back(s.sequence);
    r.intdiv1 = jsi::intdiv1(xs);
  }
}

}  // namespace

RunRecord run_offline(const OfflineRunConfig& cfg, const Environment& env, const Clock& clock) {
  if (cfg.evaluation_count == 0) throw ConfigError("evaluation count must be >= 1");
  if (cfg.evaluation_count > cfg.oracle_budget)
    throw ConfigError("oracle budget " + std::to_string(cfg.oracle_budget) + " cannot cover the final evaluation of " +
                      std::to_string(cfg.evaluation_count) + " candidates");
  if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
  if (cfg.best_of_n == 0) throw ConfigError("best_of_n must be >= 1");
  cfg.jsi.validate();

  const auto& landscape = env.landscape;
  const auto& vocab = landscape.vocab();
  Streams st(cfg.seed);
  const auto split = split_dataset(env.dataset, cfg.train_fraction, st.split);
  const auto stats = ZScoreStats::from_rows(component_rows(split.train));
  const auto signs = landscape_signs(landscape.spec());
  const auto train_z = zscored(split.train, stats);

  auto base = fresh_model(cfg.model, vocab, st.init);
  pretrain_generative(base, env.dataset, cfg.pretrain, st.pretrain);

  // sampler and predictor are the same model except in the no-joint ablation
  NeuralJointModel sampler = base;
  NeuralJointModel predictor_model = base;
  if (cfg.variant == OfflineVariant::kNoJoint) {
    TrainConfig gen = cfg.train;
    gen.lambda = 0.0;
    train_joint(sampler, train_z, gen, st.train);
    TrainConfig pred = cfg.train;
    pred.generative_weight = 0.0;
    if (pred.lambda == 0.0) pred.lambda = 1.0;
    train_joint(predictor_model, train_z, pred, st.train);
  } else {
    train_joint(sampler, train_z, cfg.train, st.train);
    predictor_model = sampler;
  }
  auto predicted = [&](const Sequence& x) {
    const auto y = predictor_model.predict(x);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += signs[i] * y[i];
    return s / static_cast<double>(y.size());
  };
  const ScoreFn score_fn{predicted, ScoreFlavor::kPredictor};

  LandscapeOracle oracle(landscape, cfg.oracle_budget);
  std::unordered_set<Sequence, SequenceHash> known;
  for (const auto& ex : env.dataset) known.insert(ex.sequence);

  RunRecord r;
  r.kind = "offline-" + variant_name(cfg.variant);
  r.seed = cfg.seed;
  r.config_json = cfg.config_json;
  r.oracle_budget = cfg.oracle_budget;
  r.hit_threshold = active_median_threshold(split.eval, landscape.spec());

  std::vector<Sequence> candidates;
  std::unordered_set<Sequence, SequenceHash> have;
  auto offer = [&](const Sequence& x) {
    if (!known.count(x) && have.insert(x).second) candidates.push_back(x);
  };
  const double t0 = clock();
  std::size_t produced = 0;
  if (cfg.variant == OfflineVariant::kNoSelfImprove) {
    const std::size_t max_calls = 8 * cfg.evaluation_count;
    for (std::size_t c = 0; c < max_calls && candidates.size() < cfg.evaluation_count; ++c) {
      auto b = best_of_n(sampler, score_fn, cfg.best_of_n, cfg.jsi.temperature, st.sample);
      r.model_samples += b.samples.size();
      ++produced;
      offer(b.best);
    }
  } else {
    // A novelty shortfall (samples that are already in the dataset) triggers
    // another independent JSI run, up to a fixed number of attempts.
    for (int attempt = 0; attempt < 8 && candidates.size() < cfg.evaluation_count; ++attempt) {
      auto res = jsi_sample(sampler, score_fn, cfg.jsi, st.sample);
      r.model_samples += res.trace.sampled.size();
      produced += res.trace.sampled.size();
      for (const auto& x : res.trace.sampled) offer(x);
    }
  }
  r.sampling = {clock() - t0, produced};

  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t i = 0; i < candidates.size(); ++i) ranked.push_back({predicted(candidates[i]), i});
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  if (ranked.size() > cfg.evaluation_count) ranked.resize(cfg.evaluation_count);

  r.oracle_calls_during_optimization = oracle.ledger().used();
  const auto bounds = bounds_for(landscape.spec());
  for (const auto& [score, i] : ranked) {
    auto comps = oracle.evaluate(candidates[i]);
    const bool hit = hit_criterion(comps, r.hit_threshold, bounds);
    r.samples.push_back({candidates[i], std::move(comps), hit, score, 0});
  }
  r.oracle_calls = oracle.ledger().used();
  finish_metrics(r);
  return r;
}

RunRecord run_online(const OnlineRunConfig& cfg, const Environment& env, const Clock& clock) {
  if (cfg.oracle_budget == 0) throw ConfigError("oracle budget must be >= 1");
  if (!(cfg.top_fraction > 0.0 && cfg.top_fraction <= 1.0)) throw ConfigError("top_fraction must lie in (0, 1]");
  if (cfg.best_of_n == 0) throw ConfigError("best_of_n must be >= 1");
  if (cfg.max_iterations == 0) throw ConfigError("max_iterations must be >= 1");
  cfg.jsi.validate();
  if (cfg.sampler == OnlineSampler::kReinvent) cfg.reinvent.validate();

  const auto& landscape = env.landscape;
  const auto& vocab = landscape.vocab();
  Streams st(cfg.seed);
  const auto stats = ZScoreStats::from_rows(component_rows(env.dataset));
  const auto signs = landscape_signs(landscape.spec());

  auto model = fresh_model(cfg.model, vocab, st.init);
  pretrain_generative(model, env.dataset, cfg.pretrain, st.pretrain);

  LandscapeOracle oracle(landscape, cfg.oracle_budget);
  CachingEvaluator cache(oracle);
  auto aggregate = [&](const std::vector<double>& c) { return aggregate_score(c, stats, signs); };
  std::size_t score_calls = 0;
  const ScoreFn score_fn{[&](const Sequence& x) {
                           ++score_calls;
                           return aggregate(cache.evaluate(x));
                         },
                         ScoreFlavor::kOracle};

  RunRecord r;
  r.kind = "online-" + sampler_name(cfg.sampler);
  r.seed = cfg.seed;
  r.config_json = cfg.config_json;
  r.oracle_budget = cfg.oracle_budget;
  r.hit_threshold = active_median_threshold(env.dataset, landscape.spec());

  std::vector<std::size_t> iteration_of;
  double best = -std::numeric_limits<double>::infinity();
  auto tag_new = [&](std::size_t it) {
    while (iteration_of.size() < cache.log().size()) {
      best = std::max(best, aggregate(cache.log()[iteration_of.size()].components));
      iteration_of.push_back(it);
    }
  };

  TrainConfig retrain = cfg.retrain;
  retrain.lambda = 0.0;
  double sampling_seconds = 0.0;
  std::size_t scored = 0;

  if (cfg.sampler == OnlineSampler::kReinvent) {
    const NeuralJointModel prior = model;
    const double t0 = clock();
    const auto res = reinvent_finetune(model, prior, cache, aggregate, cfg.reinvent, st.sample);
    sampling_seconds += clock() - t0;
    r.model_samples = res.trace.size() * cfg.reinvent.batch_size;
    scored = cache.log().size();
    tag_new(0);
    r.progress.push_back(best);
  } else {
    std::size_t stalls = 0;
    for (std::size_t it = 0; it < cfg.max_iterations && oracle.ledger().remaining() > 0; ++it) {
      const std::size_t before = oracle.ledger().used();
      const double t0 = clock();
      bool spent = false;
      if (cfg.sampler == OnlineSampler::kJsi) {
        // Repeats are served from the cache for free, so the round runs until
        // the ledger itself refuses a new sequence.
        const std::size_t calls_before = score_calls;
        try {
          jsi_sample(model, score_fn, cfg.jsi, st.sample);
        } catch (const BudgetExhausted&) {
          spent = true;
          --score_calls;  // the refused call scored nothing
        }
        r.model_samples += score_calls - calls_before;
        scored += score_calls - calls_before;
      } else {
        const std::size_t n = std::min(cfg.best_of_n, oracle.ledger().remaining());
        const auto res = best_of_n(model, score_fn, n, cfg.jsi.temperature, st.sample);
        r.model_samples += res.samples.size();
        scored += n;
      }
      sampling_seconds += clock() - t0;
      tag_new(it);
      r.progress.push_back(best);
      if (spent) break;
      if (oracle.ledger().used() == before) {
        if (++stalls >= 3) break;
      } else {
        stalls = 0;
      }
      if (oracle.ledger().remaining() == 0 || retrain.epochs == 0) continue;

      std::vector<std::pair<double, std::size_t>> ranked;
      const auto& log = cache.log();
      for (std::size_t i = 0; i < log.size(); ++i) ranked.push_back({aggregate(log[i].components), i});
      std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
      const auto keep = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::ceil(cfg.top_fraction * static_cast<double>(ranked.size()))));
      std::vector<LabeledExample> kept;
      for (std::size_t j = 0; j < keep && j < ranked.size(); ++j)
        kept.push_back({log[ranked[j].second].sequence, log[ranked[j].second].components});
      train_joint(model, kept, retrain, st.train);
    }
  }
  r.sampling = {sampling_seconds, scored};

  const auto bounds = bounds_for(landscape.spec());
  const auto& log = cache.log();
  for (std::size_t i = 0; i < log.size(); ++i) {
    const bool hit = hit_criterion(log[i].components, r.hit_threshold, bounds);
    r.samples.push_back({log[i].sequence, log[i].components, hit, aggregate(log[i].components), iteration_of[i]});
  }
  r.oracle_calls = oracle.ledger().used();
  r.oracle_calls_during_optimization = r.oracle_calls;
  if (r.oracle_calls > r.oracle_budget) throw std::logic_error("ledger exceeded its budget");
  finish_metrics(r);
  return r;
}

}  // namespace jsi
