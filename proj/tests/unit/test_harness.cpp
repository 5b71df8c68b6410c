#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "jsi/errors.hpp"
#include "jsi/harness.hpp"
#include "jsi/verify/brute_force.hpp"

using namespace jsi;
using fixtures::seq;

namespace {

std::vector<SampleRow> rows_with_hits(std::size_t n, std::size_t hits) {
  std::vector<SampleRow> rows(n);
  for (std::size_t i = 0; i < hits; ++i) rows[i].hit = true;
  return rows;
}

// Small enough that a run takes well under a second.
const Environment& small_env() {
  static const Environment env = [] {
    DataSetup d;
    d.dataset_size = 240;
    d.data_seed = 4;
    d.corpus.mean_length = 8;
    return make_environment(std::nullopt, d, 16);
  }();
  return env;
}

ModelSetup small_model() {
  ModelSetup m;
  m.neural.embed_dim = 8;
  m.neural.hidden_dim = 12;
  m.neural.context = 4;
  m.max_length = 16;
  return m;
}

OfflineRunConfig small_offline(std::uint64_t seed, OfflineVariant v = OfflineVariant::kFull) {
  OfflineRunConfig c;
  c.model = small_model();
  c.pretrain.epochs = 2;
  c.train.learning_rate = 0.3;
  c.train.epochs = 2;
  c.jsi.beam_width = 8;
  c.jsi.rounds = 4;
  c.evaluation_count = 12;
  c.oracle_budget = 100;
  c.best_of_n = 16;
  c.variant = v;
  c.seed = seed;
  c.config_json = R"({"test": "offline"})";
  return c;
}

OnlineRunConfig small_online(std::uint64_t seed, OnlineSampler s = OnlineSampler::kJsi) {
  OnlineRunConfig c;
  c.model = small_model();
  c.pretrain.epochs = 1;
  c.retrain.learning_rate = 0.3;
  c.retrain.epochs = 1;
  c.jsi.beam_width = 8;
  c.jsi.rounds = 3;
  c.oracle_budget = 96;
  c.best_of_n = 40;
  c.reinvent.batch_size = 16;
  c.reinvent.learning_rate = 0.05;
  c.sampler = s;
  c.seed = seed;
  return c;
}

// Advances by a fixed step on every call.
Clock ticking(double step) {
  auto t = std::make_shared<double>(0.0);
  return [t, step] { return *t += step; };
}

}  // namespace

TEST_CASE("hit_ratio") {
  CHECK(hit_ratio(rows_with_hits(10, 10)) == 100.0);
  CHECK(hit_ratio(rows_with_hits(10, 0)) == 0.0);
  CHECK(hit_ratio(rows_with_hits(64, 3)) == 4.6875);
  CHECK_THROWS_AS(hit_ratio({}), std::invalid_argument);
  auto rows = rows_with_hits(64, 3);
  std::reverse(rows.begin(), rows.end());
  CHECK(hit_ratio(rows) == 4.6875);
}

TEST_CASE("intdiv1") {
  const auto v = Vocabulary::letters(8);
  const auto x = seq("a b c d", v);
  CHECK(intdiv1({x, x, x}) == 0.0);
  CHECK(intdiv1({x, seq("e f g h", v)}) == 1.0);
  CHECK(intdiv1({seq("a", v), seq("b", v)}) == 0.0);  // both k-mer sets empty
  CHECK_THROWS_AS(intdiv1({x}), std::invalid_argument);

  const auto gen = fixtures::random_model(4, 10, 3, 1.0, 1);
  Rng rng(9);
  for (int t = 0; t < 10; ++t) {
    std::vector<Sequence> xs;
    for (int i = 0; i < 15; ++i) xs.push_back(sample_ancestral(gen, rng));
    const double d = intdiv1(xs);
    CHECK(std::abs(d - verify::intdiv_pairwise(xs, 3)) < 1e-12);
    shuffle(xs, rng);
    CHECK(std::abs(intdiv1(xs) - d) < 1e-12);
    CHECK(d >= 0.0);
    CHECK(d <= 1.0);
  }
}

TEST_CASE("time_per_sample") {
  auto clock = ticking(10.0);
  const double t0 = clock();
  const SamplingTime t{clock() - t0, 5};
  CHECK(time_per_sample(t) == 2.0);
  CHECK_THROWS_AS(time_per_sample({1.0, 0}), std::invalid_argument);
  auto real = steady_clock_seconds();
  const double a = real(), b = real();
  CHECK(b >= a);
}

TEST_CASE("corpus generator and synthetic dataset") {
  const auto v = Vocabulary::letters(6);
  Rng rng(1);
  CorpusConfig cfg;
  cfg.mean_length = 5;
  const auto gen = make_corpus_generator(v, 40, cfg, rng);
  for (const auto& [ctx, row] : gen.rows()) {
    (void)row;
    const auto lp = gen.next_logprobs(ctx);
    double total = 0.0;
    for (double x : lp) total += std::exp(x);
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
  CHECK(gen.next_logprobs({})[static_cast<std::size_t>(v.eos())] == -INFINITY);
  double len = 0.0;
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    const auto x = sample_ancestral(gen, rng);
    CHECK_FALSE(x.content().empty());
    len += static_cast<double>(x.content().size());
  }
  CHECK(std::abs(len / n - 5.0) < 0.25);

  const auto land = SyntheticLandscape::default_landscape();
  Rng r2(2);
  const auto g2 = make_corpus_generator(land.vocab(), 24, {}, r2);
  const auto data = synthetic_dataset(land, g2, 300, r2);
  CHECK(data.size() == 300);
  std::set<Sequence> distinct;
  for (const auto& ex : data) {
    distinct.insert(ex.sequence);
    CHECK(ex.scores == land.components(ex.sequence));
  }
  CHECK(distinct.size() == 300);

  const TabularJointModel tiny(Vocabulary::letters(1), 2, 1);
  Rng r3(3);
  CHECK_THROWS_AS(synthetic_dataset(land, tiny, 5, r3), ConfigError);
}

TEST_CASE("3000-example synthetic set splits 1500/1500") {
  const auto env = make_environment(std::nullopt, DataSetup{}, 24);
  REQUIRE(env.dataset.size() == 3000);
  Rng rng(0);
  const auto split = split_dataset(env.dataset, 0.5, rng);
  CHECK(split.train.size() == 1500);
  CHECK(split.eval.size() == 1500);
}

TEST_CASE("active median threshold") {
  const auto land = SyntheticLandscape::default_landscape();
  std::vector<LabeledExample> ref;
  for (int i = 0; i < 20; ++i) ref.push_back({Sequence{}, {static_cast<double>(i), 0.0, 0.0}});
  // Lower is better by default: actives are 0 and 1, median 0.5.
  CHECK(active_median_threshold(ref, land.spec()) == 0.5);
  auto spec = land.spec();
  spec.primary_sign = 1.0;
  CHECK(active_median_threshold(ref, spec) == 18.5);
  CHECK_THROWS_AS(active_median_threshold({}, spec), ConfigError);
}

TEST_CASE("offline runs spend exactly the evaluation count, all at the end") {
  for (auto v : {OfflineVariant::kFull, OfflineVariant::kNoJoint, OfflineVariant::kNoSelfImprove}) {
    const auto r = run_offline(small_offline(1, v), small_env());
    CHECK(r.oracle_calls_during_optimization == 0);
    CHECK(r.oracle_calls == 12);
    CHECK(r.samples.size() == 12);
    CHECK(r.kind == "offline-" + variant_name(v));
    std::size_t hits = 0;
    for (const auto& s : r.samples) {
      hits += s.hit ? 1 : 0;
      CHECK(s.components == small_env().landscape.components(s.sequence));
    }
    CHECK(r.hit_ratio == 100.0 * static_cast<double>(hits) / 12.0);
    for (std::size_t i = 1; i < r.samples.size(); ++i) CHECK(r.samples[i - 1].score >= r.samples[i].score);
  }
  auto bad = small_offline(1);
  bad.evaluation_count = 101;
  CHECK_THROWS_AS(run_offline(bad, small_env(), [] () -> double { throw std::logic_error("work started"); }),
                  ConfigError);
}

TEST_CASE("offline candidates are new sequences") {
  const auto r = run_offline(small_offline(2), small_env());
  std::set<Sequence> known;
  for (const auto& ex : small_env().dataset) known.insert(ex.sequence);
  std::set<Sequence> seen;
  for (const auto& s : r.samples) {
    CHECK(known.count(s.sequence) == 0);
    CHECK(seen.insert(s.sequence).second);
  }
}

TEST_CASE("offline timing uses the injected clock") {
  const auto r = run_offline(small_offline(3), small_env(), ticking(1.0));
  CHECK(r.sampling.seconds == 1.0);
  CHECK(r.sampling.samples == 32);  // one JSI run of 8 x 4
}

TEST_CASE("tilted sampling is cheaper per returned candidate than Best-of-256") {
  auto full = small_offline(4);
  auto nsi = small_offline(4, OfflineVariant::kNoSelfImprove);
  full.jsi.beam_width = 16;
  nsi.best_of_n = 256;
  const auto a = run_offline(full, small_env());
  const auto b = run_offline(nsi, small_env());
  CHECK(time_per_sample(a.sampling) < time_per_sample(b.sampling));
}

TEST_CASE("online runs stay within the ledger") {
  for (auto s : {OnlineSampler::kJsi, OnlineSampler::kBestOfN, OnlineSampler::kReinvent}) {
    const auto r = run_online(small_online(5, s), small_env());
    CHECK(r.oracle_calls <= 96);
    CHECK(r.oracle_calls == r.samples.size());
    CHECK(r.kind == "online-" + sampler_name(s));
    std::set<Sequence> distinct;
    for (const auto& x : r.samples) distinct.insert(x.sequence);
    CHECK(distinct.size() == r.samples.size());
  }
  // 96 = 4 iterations of 8 x 3 scored samples; the budget is used up exactly.
  CHECK(run_online(small_online(6), small_env()).oracle_calls == 96);
  auto odd = small_online(6);
  odd.oracle_budget = 50;  // not a multiple of 24: the last round is cut short
  CHECK(run_online(odd, small_env()).oracle_calls == 50);
  auto bon = small_online(6, OnlineSampler::kBestOfN);
  bon.oracle_budget = 90;
  CHECK(run_online(bon, small_env()).oracle_calls <= 90);
}

TEST_CASE("without retraining the top fraction is irrelevant") {
  auto a = small_online(7);
  a.retrain.epochs = 0;
  a.top_fraction = 1.0;
  auto b = a;
  b.top_fraction = 0.25;
  const auto ra = run_online(a, small_env()), rb = run_online(b, small_env());
  const auto& v = small_env().landscape.vocab();
  CHECK(record_json(ra, v) == record_json(rb, v));
  CHECK(ra.progress.size() >= 4);
}

TEST_CASE("run records are reproducible and written under the output directory") {
  const auto& v = small_env().landscape.vocab();
  const auto r1 = run_offline(small_offline(8), small_env());
  const auto r2 = run_offline(small_offline(8), small_env());
  CHECK(record_json(r1, v) == record_json(r2, v));
  CHECK(record_jsonl(r1, v) == record_jsonl(r2, v));
  const auto o1 = run_online(small_online(8), small_env());
  const auto o2 = run_online(small_online(8), small_env());
  CHECK(record_json(o1, v) == record_json(o2, v));

  const auto dir = std::filesystem::temp_directory_path() / "jsi_harness_test";
  std::filesystem::remove_all(dir);
  const auto paths = write_run_record(dir, r1, v);
  CHECK(paths.json.filename().string() == "offline-full_seed8_" + config_hash(r1.config_json) + ".json");
  CHECK(paths.jsonl.parent_path() == dir);
  std::ifstream in(paths.jsonl);
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == r1.samples.size());
  std::ifstream j(paths.json);
  std::stringstream ss;
  ss << j.rdbuf();
  CHECK(ss.str() == record_json(r1, v));
  CHECK(ss.str().find("\"test\": \"offline\"") != std::string::npos);
  CHECK(std::filesystem::exists(paths.timing));
  std::filesystem::remove_all(dir);

  CHECK(config_hash("a") != config_hash("b"));
  CHECK(config_hash("a").size() == 16);
}

TEST_CASE("variant and sampler names") {
  for (auto v : {OfflineVariant::kFull, OfflineVariant::kNoJoint, OfflineVariant::kNoSelfImprove})
    CHECK(parse_variant(variant_name(v)) == v);
  for (auto s : {OnlineSampler::kJsi, OnlineSampler::kBestOfN, OnlineSampler::kReinvent})
    CHECK(parse_sampler(sampler_name(s)) == s);
  CHECK_THROWS_AS(parse_variant("half"), ConfigError);
  CHECK_THROWS_AS(parse_sampler("gfn"), ConfigError);
}
