#include "jsi/verify/suites.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <json.hpp>
#include <set>
#include <sstream>

#include "jsi/baselines.hpp"
#include "jsi/harness.hpp"
#include "jsi/jsi.hpp"
#include "jsi/sbs.hpp"
#include "jsi/tilt_trie.hpp"
#include "jsi/training.hpp"
#include "jsi/verify/brute_force.hpp"

namespace jsi::verify {
namespace {

TabularJointModel random_tabular(int n_content, int max_length, std::uint64_t seed, double scale = 1.0,
                                 int order = 8) {
  Rng rng(seed);
  return TabularJointModel::random(Vocabulary::letters(n_content), max_length, order, rng, scale);
}

std::string fmt(const char* label, double v) {
  std::ostringstream out;
  out.precision(3);
  out << label << '=' << v;
  return out.str();
}

std::string join(const std::vector<std::string>& parts) {
  std::string s;
  for (const auto& p : parts) s += (s.empty() ? "" : " ") + p;
  return s;
}

}  // namespace

SuiteOutcome check_trie_exactness(std::size_t models) {
  double worst = 0.0;
  std::size_t compared = 0;
  for (std::uint64_t s = 0; s < models; ++s) {
    const auto m = random_tabular(2, 5, 300 + s, 1.5);  // |V| = 4 with the markers
    const auto exact = exact_distribution(m);
    auto pool = all_sequences(m.vocab(), 5);
    Rng rng(700 + s);
    shuffle(pool, rng);
    // An arbitrary subset, inserted over a random number of rounds.
    const std::size_t take = rng.uniform_index(pool.size());
    TiltedView view(m, 0.0);
    std::vector<Sequence> removed;
    std::size_t next = 0;
    while (next < take) {
      const std::size_t round = 1 + rng.uniform_index(std::min<std::size_t>(6, take - next));
      std::vector<TiltSample> batch;
      for (std::size_t i = 0; i < round; ++i, ++next)
        batch.push_back({pool[next], step_logprobs(view, pool[next]), 0.0});
      view.insert_round(batch);
      for (const auto& b : batch) removed.push_back(b.sequence);
      for (const auto& [x, p] : renormalized_excluding(exact, removed)) {
        worst = std::max(worst, std::abs(sequence_prob_under_view(view, x) - p));
        ++compared;
      }
    }
  }
  return {worst <= 1e-9, join({fmt("max_abs_err", worst), "comparisons=" + std::to_string(compared)})};
}

SuiteOutcome check_worked_example() {
  // Content {a, b}, T_max = 3, two samples with advantages +0.3 and -0.3.
  const auto v = Vocabulary::letters(2);
  TabularJointModel m(v, 3, 2);
  m.set_row_probs({}, std::vector<double>{0.0, 0.2, 0.5, 0.3});
  m.set_row_probs(std::vector<Token>{2}, std::vector<double>{0.0, 0.2, 0.4, 0.4});
  m.set_row_probs(std::vector<Token>{3}, std::vector<double>{0.0, 0.3, 0.1, 0.6});
  const auto aa = parse_sequence("a a", v, 3), ab = parse_sequence("a b", v, 3);
  TiltedView view(m, 1.0);
  const std::vector<TiltSample> round{{aa, step_logprobs(view, aa), 0.3}, {ab, step_logprobs(view, ab), -0.3}};
  view.insert_round(round);
  DenseTilt dense(m);
  dense.apply_round(std::vector<RoundSample>{{aa, 0.3}, {ab, -0.3}}, 1.0);
  double worst = 0.0;
  for (const auto& x : all_sequences(v, 3)) worst = std::max(worst, std::abs(sequence_prob_under_view(view, x) - dense.prob(x)));
  // Root row by hand: a keeps 0.5 - 0.4 with a zero net advantage.
  const auto root = view.next_logprobs({});
  const double hand = std::abs(std::exp(root[2]) - 0.1 / 0.6);
  return {worst <= 1e-9 && hand <= 1e-12, join({fmt("max_abs_err", worst), fmt("root_a_err", hand)})};
}

SuiteOutcome check_sbs(std::size_t trials) {
  std::vector<TabularJointModel> models;
  std::vector<std::size_t> support;
  for (std::uint64_t s = 0; s < 24; ++s) {
    models.push_back(random_tabular(2 + static_cast<int>(s % 3), 3 + static_cast<int>(s % 4), 40 + s, 1.5));
    support.push_back(enumerate_support(models.back()).size());
  }
  Rng rng(11);
  std::size_t bad = 0;
  double c = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto& m = models[t % models.size()];
    const std::size_t k = 1 + rng.uniform_index(12);
    const double temp = (t % 3 == 0) ? 0.5 + rng.uniform_open() : 1.0;
    const auto r = sbs_sample(m, k, temp, rng);
    const std::set<Sequence> distinct(r.sequences.begin(), r.sequences.end());
    if (distinct.size() != r.sequences.size() || r.sequences.size() != std::min(k, support[t % models.size()])) ++bad;
    c = std::max(c, static_cast<double>(r.model_evaluations) / static_cast<double>(k * static_cast<std::size_t>(m.max_length())));
  }
  // K = 1 marginal against exact enumeration.
  const auto m = random_tabular(2, 5, 9, 1.0);
  const auto exact = exact_distribution(m);
  std::map<Sequence, double> counts;
  const std::size_t draws = 20'000;
  for (std::size_t i = 0; i < draws; ++i) counts[sbs_sample(m, 1, 1.0, rng).sequences[0]] += 1.0;
  std::vector<double> obs, expd;
  for (const auto& [x, p] : exact) {
    obs.push_back(counts.count(x) ? counts[x] : 0.0);
    expd.push_back(p * static_cast<double>(draws));
  }
  const double pval = chi_square_p_value(obs, expd);
  return {bad == 0 && pval > 0.01 && c <= 2.0,
          join({"non_distinct_or_short=" + std::to_string(bad), fmt("chi2_p", pval), fmt("c", c),
                "trials=" + std::to_string(trials)})};
}

SuiteOutcome check_advantage_identities() {
  Rng rng(5);
  std::size_t nonzero = 0;
  for (int t = 0; t < 2000; ++t) {
    const std::size_t k = 1 + rng.uniform_index(128);
    const double mag = std::pow(10.0, rng.uniform(-3.0, 6.0));
    std::vector<double> scores(k);
    for (auto& s : scores) s = mag * rng.normal() + rng.uniform(-1e3, 1e3);
    const auto adv = centered_advantages(scores, mu_estimate(scores));
    double sum = 0.0;
    for (double a : adv) sum += a;
    if (sum != 0.0) ++nonzero;
  }
  double tower = 0.0, dual = 0.0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    auto m = random_tabular(3, 5, 80 + s);
    Rng srng(s);
    m.set_scores([&](const Sequence&) { return std::vector<double>{3.0 * srng.normal()}; });
    const auto v = m.vocab();
    std::vector<std::vector<Token>> prefixes{{}};
    for (Token a : v.content_tokens()) {
      prefixes.push_back({a});
      for (Token b : v.content_tokens()) prefixes.push_back({a, b});
    }
    for (const auto& pre : prefixes) {
      const auto row = m.next_logprobs(pre);
      double e = 0.0;
      for (std::size_t tok = 0; tok < row.size(); ++tok) {
        if (row[tok] == kNegInf) continue;
        const double a = individual_advantage_exact(m, pre, static_cast<Token>(tok));
        e += std::exp(row[tok]) * a;
        dual = std::max(dual, std::abs(a - individual_advantage_brute(m, pre, static_cast<Token>(tok))));
      }
      tower = std::max(tower, std::abs(e));
    }
  }
  return {nonzero == 0 && tower <= 1e-10 && dual <= 1e-10,
          join({"nonzero_round_sums=" + std::to_string(nonzero), fmt("tower_err", tower), fmt("dual_err", dual)})};
}

SuiteOutcome check_gradients(std::size_t seeds) {
  const auto v = Vocabulary::letters(4);
  double worst = 0.0;
  for (std::uint64_t s = 0; s < seeds; ++s) {
    Rng rng(1000 + s);
    NeuralConfig cfg;
    cfg.embed_dim = 6;
    cfg.hidden_dim = 7;
    cfg.context = 3;
    cfg.num_targets = 2;
    const NeuralJointModel m(v, 7, cfg, rng);
    const auto gen = random_tabular(4, 7, 2000 + s, 1.0, 1);
    std::vector<LabeledExample> batch;
    for (int i = 0; i < 3; ++i) batch.push_back({sample_ancestral(gen, rng), {rng.normal(), rng.normal()}});
    worst = std::max(worst, grad_check(m, batch, 1.0, 1e-4, rng).max_relative_error);
  }
  return {worst < 1e-4, join({fmt("max_rel_err", worst), "seeds=" + std::to_string(seeds)})};
}

SuiteOutcome check_reinvent_identity(std::size_t instances) {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < instances; ++s) {
    const auto agent = random_tabular(3, 6, 500 + s);
    const auto prior = random_tabular(3, 6, 900 + s);
    Rng rng(s);
    const auto x = sample_ancestral(agent, rng);
    const double f = 3.0 * rng.normal(), sigma = rng.uniform(0.2, 4.0);
    worst = std::max(worst, reinvent_gradient_identity_check(agent, prior, x, f, sigma));
  }
  return {worst < 1e-6, join({fmt("max_rel_err", worst), "instances=" + std::to_string(instances)})};
}

SuiteOutcome check_gibbs() {
  const auto v1 = Vocabulary::letters(1);
  const TabularJointModel two(v1, 2, 1);  // "<eos>" and "a", 1/2 each
  const auto a = parse_sequence("a", v1, 2);
  const auto g = gibbs_tilt_exact(two, [&](const Sequence& x) { return x == a ? std::log(3.0) : 0.0; }, 1.0);
  double worked = 0.0;
  for (const auto& e : g) worked = std::max(worked, std::abs(e.prob - (e.sequence == a ? 0.75 : 0.25)));

  double norm = 0.0;
  bool invariant = true;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto m = random_tabular(3, 5, 60 + s);
    Rng rng(s);
    std::map<Sequence, double> fv;
    for (const auto& x : all_sequences(m.vocab(), 5)) fv[x] = 5.0 * rng.normal();
    double total = 0.0;
    for (const auto& e : gibbs_tilt_exact(m, [&](const Sequence& x) { return fv.at(x); }, 0.7)) total += e.prob;
    norm = std::max(norm, std::abs(total - 1.0));
    const auto flat0 = gibbs_tilt_exact(m, [](const Sequence&) { return 0.0; }, 0.7);
    const auto flat = gibbs_tilt_exact(m, [](const Sequence&) { return -42.5; }, 0.7);
    for (std::size_t i = 0; i < flat.size(); ++i) invariant = invariant && flat[i].prob == flat0[i].prob;
  }
  return {worked <= 1e-12 && norm <= 1e-12 && invariant,
          join({fmt("worked_err", worked), fmt("norm_err", norm), std::string("constant_invariant=") + (invariant ? "yes" : "no")})};
}

SuiteOutcome check_tilt_monotonicity() {
  // One sampled sequence with advantage +1 (or -1): the probability of its
  // first token under the tilted view must rise (fall) strictly with sigma.
  std::size_t violations = 0, checks = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto m = random_tabular(3, 5, 150 + s);
    Rng rng(s);
    Sequence x;
    do x = sample_ancestral(m, rng);
    while (x.content().empty());
    const auto first = static_cast<std::size_t>(x[0]);
    for (double sign : {1.0, -1.0}) {
      double prev = sign > 0 ? -1.0 : 2.0;
      for (double sigma : {0.0, 0.25, 0.5, 1.0, 1.5}) {
        TiltedView view(m, sigma);
        view.insert_round(std::vector<TiltSample>{{x, step_logprobs(view, x), sign}});
        const double p = std::exp(view.next_logprobs({})[first]);
        ++checks;
        if (sign > 0 ? !(p > prev) : !(p < prev)) ++violations;
        prev = p;
      }
    }
  }
  return {violations == 0, join({"violations=" + std::to_string(violations), "checks=" + std::to_string(checks)})};
}

SuiteOutcome check_metrics() {
  const auto v = Vocabulary::letters(4);
  Rng rng(3);
  const auto gen = random_tabular(4, 10, 12, 1.0, 1);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    std::vector<Sequence> xs;
    const std::size_t n = 2 + rng.uniform_index(20);
    for (std::size_t i = 0; i < n; ++i) xs.push_back(sample_ancestral(gen, rng));
    worst = std::max(worst, std::abs(intdiv1(xs, 3) - intdiv_pairwise(xs, 3)));
  }
  std::vector<SampleRow> rows(64);
  for (int i = 0; i < 3; ++i) rows[static_cast<std::size_t>(i)].hit = true;
  const double hr = hit_ratio(rows);
  double agg = 0.0;
  const ZScoreStats stats{{1.0, 0.5, 3.0}, {2.0, 0.1, 1.5}};
  const std::vector<double> signs{-1.0, 1.0, -1.0};
  for (int t = 0; t < 50; ++t) {
    const std::vector<double> c{rng.normal(), rng.uniform_open(), 1.0 + 9.0 * rng.uniform_open()};
    agg = std::max(agg, std::abs(aggregate_score(c, stats, signs) - aggregate_formula(c, stats.mean, stats.stddev, signs)));
  }
  return {worst <= 1e-12 && hr == 4.6875 && agg <= 1e-12,
          join({fmt("intdiv_err", worst), fmt("hit_ratio_3_of_64", hr), fmt("aggregate_err", agg)})};
}

std::vector<Suite> all_suites() {
  return {
      {"trie-exactness", [] { return check_trie_exactness(); }},
      {"worked-example", check_worked_example},
      {"sbs", [] { return check_sbs(); }},
      {"advantage-identities", check_advantage_identities},
      {"gradient-check", [] { return check_gradients(); }},
      {"reinvent-identity", [] { return check_reinvent_identity(); }},
      {"gibbs-tilt", check_gibbs},
      {"tilt-monotonicity", check_tilt_monotonicity},
      {"metrics", check_metrics},
  };
}

SuiteResult run_suite(const Suite& s) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteResult r{s.name, false, 0.0, ""};
  try {
    const auto out = s.run();
    r.passed = out.passed;
    r.detail = out.detail;
  } catch (const std::exception& e) {
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::string results_json(const std::vector<SuiteResult>& results) {
  nlohmann::ordered_json j;
  bool all = true;
  nlohmann::ordered_json suites = nlohmann::ordered_json::array();
  for (const auto& r : results) {
    all = all && r.passed;
    suites.push_back({{"name", r.name}, {"passed", r.passed}, {"seconds", r.seconds}, {"detail", r.detail}});
  }
  j["passed"] = all;
  j["suites"] = std::move(suites);
  return j.dump(2) + "\n";
}

}  // namespace jsi::verify
