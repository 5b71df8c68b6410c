#include <cmath>
#include <numeric>

#include "doctest.h"
#include "fixtures.hpp"
#include "jsi/checkpoint.hpp"
#include "jsi/errors.hpp"
#include "jsi/neural_model.hpp"
#include "jsi/training.hpp"
#include "jsi/verify/brute_force.hpp"

using namespace jsi;
using fixtures::seq;

namespace {

std::vector<LabeledExample> sample_batch(const SequenceModel& gen, std::size_t n, Rng& rng,
                                         std::size_t targets = 1) {
  std::vector<LabeledExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto x = sample_ancestral(gen, rng);
    std::vector<double> y(targets);
    for (auto& v : y) v = rng.normal();
    out.push_back({std::move(x), std::move(y)});
  }
  return out;
}

// Mean over held-out prefixes of KL(generator row || model row).
double mean_row_kl(const SequenceModel& gen, const SequenceModel& m, const std::vector<LabeledExample>& held) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& ex : held) {
    const auto idx = ex.sequence.indices();
    for (std::size_t t = 0; t < idx.size(); ++t) {
      const auto p = gen.next_logprobs(idx.first(t));
      const auto q = m.next_logprobs(idx.first(t));
      for (std::size_t v = 0; v < p.size(); ++v)
        if (p[v] != -INFINITY) total += std::exp(p[v]) * (p[v] - q[v]);
      ++n;
    }
  }
  return total / static_cast<double>(n);
}

NeuralJointModel small_neural(const Vocabulary& v, int tmax, std::uint64_t seed, std::size_t targets = 1) {
  Rng rng(seed);
  NeuralConfig cfg;
  cfg.embed_dim = 6;
  cfg.hidden_dim = 7;
  cfg.context = 3;
  cfg.num_targets = targets;
  return NeuralJointModel(v, tmax, cfg, rng);
}

}  // namespace

TEST_CASE("uniform tabular model: logprob is -T log V") {
  const auto m = fixtures::uniform_model(4, 8);  // 4 content + EOS emittable
  const auto v = m.vocab();
  CHECK(sequence_logprob(m, seq("a b", v)) == doctest::Approx(-3 * std::log(5.0)).epsilon(1e-14));
  CHECK(sequence_logprob(m, seq("d d d d", v)) == doctest::Approx(-5 * std::log(5.0)).epsilon(1e-14));
}

TEST_CASE("zero-probability row entry propagates -inf") {
  auto m = fixtures::uniform_model(3, 5);
  const auto v = m.vocab();
  std::vector<double> probs(static_cast<std::size_t>(v.size()), 0.0);
  probs[1] = 0.5;  // eos
  probs[3] = 0.5;  // b
  m.set_row_probs({}, probs);
  CHECK(sequence_logprob(m, seq("a", v)) == -INFINITY);
  CHECK(std::isfinite(sequence_logprob(m, seq("b", v))));
}

TEST_CASE("tabular logprob agrees with brute-force product on small spaces") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto m = fixtures::random_model(3, 6, 100 + s);  // |V| = 5
    double total = 0.0;
    for (const auto& x : verify::all_sequences(m.vocab(), m.max_length())) {
      const double p = verify::product_prob(m, x);
      total += p;
      CHECK(std::exp(sequence_logprob(m, x)) == doctest::Approx(p).epsilon(1e-12));
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("rows normalize for both backends") {
  const auto tab = fixtures::random_model(4, 6, 9, 2.0, 2);
  const auto neural = small_neural(tab.vocab(), 6, 3);
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto x = sample_ancestral(tab, rng);
    const auto idx = x.indices();
    for (std::size_t t = 0; t < idx.size(); ++t) {
      for (const SequenceModel* m : {static_cast<const SequenceModel*>(&tab), static_cast<const SequenceModel*>(&neural)}) {
        const auto row = m->next_logprobs(idx.first(t));
        double z = 0.0;
        for (double l : row) z += std::exp(l);
        REQUIRE(std::abs(z - 1.0) < 1e-9);
        REQUIRE(row[static_cast<std::size_t>(tab.vocab().bos())] == -INFINITY);
      }
    }
  }
}

TEST_CASE("enumerate_support lists exactly the nonzero sequences") {
  const auto m = fixtures::random_model(3, 4, 77);
  const auto support = enumerate_support(m);
  std::size_t nonzero = 0;
  for (const auto& x : verify::all_sequences(m.vocab(), m.max_length()))
    if (verify::product_prob(m, x) > 0.0) ++nonzero;
  CHECK(support.size() == nonzero);
  CHECK_THROWS_AS(enumerate_support(m, 5), SizeError);
}

TEST_CASE("tempered view") {
  const auto m = fixtures::random_model(3, 5, 4);
  const TemperedView same(m, 1.0);
  const TemperedView hot(m, 0.5);
  const std::vector<Token> prefix{2};
  CHECK(same.next_logprobs(prefix) == m.next_logprobs(prefix));
  const auto base = m.next_logprobs(prefix);
  const auto t = hot.next_logprobs(prefix);
  double z = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i)
    if (base[i] != -INFINITY) z += std::exp(2.0 * base[i]);
  for (std::size_t i = 0; i < base.size(); ++i)
    if (base[i] != -INFINITY) CHECK(t[i] == doctest::Approx(2.0 * base[i] - std::log(z)).epsilon(1e-12));
}

TEST_CASE("joint_loss examples") {
  auto m = fixtures::uniform_model(4, 8);
  const auto v = m.vocab();
  const auto x = seq("a b", v);
  m.set_score(x, {0.7});
  const std::vector<LabeledExample> batch{{x, {2.7}}};
  CHECK(joint_loss(m, batch, 0.0) == doctest::Approx(3 * std::log(5.0)).epsilon(1e-14));
  CHECK(joint_loss(m, batch, 1.0) == doctest::Approx(3 * std::log(5.0) + 0.5 * 4.0).epsilon(1e-14));
  const std::vector<LabeledExample> exact{{x, {0.7}}};
  CHECK(joint_loss(m, exact, 1.0) == doctest::Approx(joint_loss(m, exact, 0.0)).epsilon(1e-15));
  CHECK_THROWS(joint_loss(m, {}, 1.0));
}

TEST_CASE("grad_check: analytic gradient matches finite differences") {
  const auto v = Vocabulary::letters(4);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto m = small_neural(v, 7, 1000 + s, 2);
    const auto gen = fixtures::random_model(4, 7, 2000 + s, 1.0, 1);
    Rng rng(s);
    const auto batch = sample_batch(gen, 3, rng, 2);
    const auto r = grad_check(m, batch, 1.0, 1e-4, rng);
    CHECK(r.coordinates == m.params().size());
    CHECK(r.max_relative_error < 1e-4);
  }
  // Default-size model, subsampled coordinates.
  Rng rng(5);
  const NeuralJointModel big(v, 10, NeuralConfig{}, rng);
  const auto gen = fixtures::random_model(4, 10, 6, 1.0, 1);
  const auto batch = sample_batch(gen, 4, rng);
  const auto r = grad_check(big, batch, 1.0, 1e-4, rng, 300);
  CHECK(r.coordinates >= 200);
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("grad_check preconditions") {
  const auto v = Vocabulary::letters(3);
  const auto m = small_neural(v, 5, 1);
  Rng rng(1);
  CHECK_THROWS(grad_check(m, {}, 1.0, 1e-4, rng));
  const std::vector<LabeledExample> batch{{seq("a", v, 5), {1.0}}};
  CHECK_THROWS(grad_check(m, batch, 1.0, 1e-2, rng));
}

TEST_CASE("lambda = 0 leaves the score head without gradient; lambda > 0 reaches the trunk") {
  const auto v = Vocabulary::letters(4);
  const auto m = small_neural(v, 7, 3);
  const auto gen = fixtures::random_model(4, 7, 8, 1.0, 1);
  Rng rng(2);
  const auto batch = sample_batch(gen, 5, rng);
  std::vector<double> g;
  joint_loss_gradient(m, batch, 1.0, 0.0, g);
  for (std::size_t i = 0; i < g.size(); ++i)
    if (m.in_score_head(i)) REQUIRE(g[i] == 0.0);

  joint_loss_gradient(m, batch, 0.0, 1.0, g);
  bool trunk_moved = false;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (m.in_trunk(i) && g[i] != 0.0) trunk_moved = true;
  CHECK(trunk_moved);
}

TEST_CASE("train_joint with lambda = 0 approaches the generator and keeps the score head") {
  auto gen = fixtures::random_model(4, 10, 31, 1.5, 1);
  const auto v = gen.vocab();
  Rng rng(17);
  const auto train = sample_batch(gen, 400, rng);
  const auto held = sample_batch(gen, 100, rng);
  NeuralJointModel m(v, 10, NeuralConfig{8, 16, 4, 1}, rng);
  const std::vector<double> head_before(m.params().begin() + static_cast<std::ptrdiff_t>(m.block("ws").offset),
                                        m.params().end());
  const double kl_before = mean_row_kl(gen, m, held);
  TrainConfig cfg;
  cfg.lambda = 0.0;
  cfg.learning_rate = 0.5;
  cfg.epochs = 30;
  cfg.batch_size = 16;
  const auto res = train_joint(m, train, cfg, rng);
  const double kl_after = mean_row_kl(gen, m, held);
  MESSAGE("row KL " << kl_before << " -> " << kl_after << ", smooth descent " << res.smooth_descent);
  CHECK(kl_after < 0.5 * kl_before);
  const std::vector<double> head_after(m.params().begin() + static_cast<std::ptrdiff_t>(m.block("ws").offset),
                                       m.params().end());
  CHECK(head_before == head_after);
  CHECK(res.steps == 30 * 25);
}

TEST_CASE("train_joint fits linearly separable score labels") {
  auto gen = fixtures::random_model(4, 10, 41, 1.0, 1);
  const auto v = gen.vocab();
  Rng rng(23);
  auto label = [&](std::vector<LabeledExample> data) {
    for (auto& ex : data) {
      double count = 0.0;
      for (Token t : ex.sequence.content()) count += (t == 2) ? 1.0 : 0.0;
      ex.scores = {ex.sequence.content().empty() ? 0.0 : 4.0 * count / static_cast<double>(ex.sequence.content().size())};
    }
    return data;
  };
  const auto train = label(sample_batch(gen, 400, rng));
  const auto held = label(sample_batch(gen, 100, rng));
  NeuralJointModel m(v, 10, NeuralConfig{8, 16, 4, 1}, rng);
  auto mse = [&] {
    double s = 0.0;
    for (const auto& ex : held) s += std::pow(ex.scores[0] - m.predict(ex.sequence)[0], 2);
    return s / static_cast<double>(held.size());
  };
  const double before = mse();
  TrainConfig cfg;
  cfg.lambda = 1.0;
  cfg.learning_rate = 0.3;
  cfg.epochs = 40;
  cfg.batch_size = 16;
  train_joint(m, train, cfg, rng);
  const double after = mse();
  MESSAGE("held-out squared error " << before << " -> " << after);
  CHECK(after <= 0.5 * before);
}

TEST_CASE("training aborts on divergence") {
  const auto v = Vocabulary::letters(3);
  auto m = small_neural(v, 6, 1);
  std::vector<LabeledExample> data{{seq("a b", v, 6), {1e308}}};
  TrainConfig cfg;
  cfg.learning_rate = 1.0;
  cfg.grad_clip = 0.0;
  Rng rng(1);
  CHECK_THROWS_AS(train_joint(m, data, cfg, rng), TrainingDiverged);
}

TEST_CASE("checkpoint round trips") {
  const auto v = Vocabulary::letters(4);
  const auto m = small_neural(v, 7, 12, 2);
  const auto bytes = encode_checkpoint(m.to_checkpoint());
  const auto back = NeuralJointModel::from_checkpoint(decode_checkpoint(bytes));
  CHECK(std::equal(m.params().begin(), m.params().end(), back.params().begin(), back.params().end()));
  CHECK(encode_checkpoint(back.to_checkpoint()) == bytes);
  CHECK(bytes.substr(0, 4) == "JSIC");

  auto tab = fixtures::random_model(3, 5, 3, 1.0, 2);
  tab.set_scores([](const Sequence& x) { return std::vector<double>{static_cast<double>(x.size())}; });
  const auto tbytes = encode_checkpoint(tab.to_checkpoint());
  const auto tback = TabularJointModel::from_checkpoint(decode_checkpoint(tbytes));
  CHECK(encode_checkpoint(tback.to_checkpoint()) == tbytes);
  for (const auto& x : verify::all_sequences(tab.vocab(), 5)) {
    CHECK(sequence_logprob(tab, x) == sequence_logprob(tback, x));
    CHECK(tab.predict(x) == tback.predict(x));
  }
  CHECK_THROWS(decode_checkpoint(tbytes.substr(0, tbytes.size() - 3)));
  CHECK_THROWS(decode_checkpoint("XXXX" + tbytes.substr(4)));
}
