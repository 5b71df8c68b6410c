#include "jsi/jsi.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "jsi/errors.hpp"
#include "jsi/numeric.hpp"
#include "jsi/sbs.hpp"
#include "jsi/tilt_trie.hpp"

namespace jsi {

void JsiConfig::validate() const {
  if (beam_width < 1) throw ConfigError("jsi.beam_width must be >= 1");
  if (rounds < 1) throw ConfigError("jsi.rounds must be >= 1");
  if (!(step_size > 0.0) || !std::isfinite(step_size)) throw ConfigError("jsi.step_size must be > 0");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("jsi.temperature must be > 0");
}

double mu_estimate(std::span<const double> scores, MuKind kind) {
  if (scores.empty()) throw std::invalid_argument("mu_estimate: no scores");
  switch (kind) {
    case MuKind::kEmpiricalMean:
      return std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
  }
  throw std::logic_error("unknown MuKind");
}

std::vector<double> centered_advantages(std::span<const double> scores, double mu) {
  std::vector<double> adv;
  adv.reserve(scores.size());
  double partial = 0.0;
  for (std::size_t k = 0; k + 1 < scores.size(); ++k) {
    adv.push_back(global_advantage(scores[k], mu));
    partial += adv.back();
  }
  if (!scores.empty()) adv.push_back(-partial);
  return adv;
}

JsiResult jsi_sample(const SequenceModel& model, const ScoreFn& score_fn, const JsiConfig& cfg,
                     Rng& rng, std::optional<std::size_t> score_limit) {
  cfg.validate();
  TemperedView tempered(model, cfg.temperature);
  TiltedView view(tempered, cfg.step_size);
  JsiResult res;
  bool have_best = false;
  for (std::size_t round = 0; round < cfg.rounds; ++round) {
    if (view.exhausted()) {
      res.trace.truncated = true;
      break;
    }
    auto drawn = sbs_sample(view, cfg.beam_width, 1.0, rng);
    JsiRound r;
    std::vector<TiltSample> update;
    for (std::size_t k = 0; k < drawn.sequences.size(); ++k) {
      if (score_limit && res.trace.score_calls >= *score_limit) {
        res.trace.truncated = true;
        break;
      }
      const double s = score_fn(drawn.sequences[k]);
      ++res.trace.score_calls;
      r.samples.push_back(drawn.sequences[k]);
      r.scores.push_back(s);
      update.push_back({drawn.sequences[k], std::move(drawn.step_logprobs[k]), 0.0});
      if (!have_best || s > res.best_score) {
        res.best = drawn.sequences[k];
        res.best_score = s;
        have_best = true;
      }
    }
    if (!r.samples.empty()) {
      r.mu = mu_estimate(r.scores, cfg.mu);
      r.advantages = centered_advantages(r.scores, r.mu);
      for (std::size_t k = 0; k < r.scores.size(); ++k) update[k].advantage = r.advantages[k];
      view.insert_round(update);
      res.trace.sampled.insert(res.trace.sampled.end(), r.samples.begin(), r.samples.end());
      res.trace.rounds.push_back(std::move(r));
    }
    if (drawn.truncated) res.trace.truncated = true;
    if (res.trace.truncated) break;
  }
  if (!have_best) throw std::runtime_error("jsi_sample: no sequence was scored");
  return res;
}

namespace {

// E[score | prefix] by listing every completion with its conditional probability.
double expected_score(const TabularJointModel& m, std::vector<Token>& prefix, std::size_t limit) {
  struct Frame {
    std::vector<Token> seq;
    double logp;
  };
  std::vector<Frame> stack{{prefix, 0.0}};
  double total = 0.0;
  std::size_t visited = 0;
  while (!stack.empty()) {
    Frame f = std::move(stack.back());
    stack.pop_back();
    if (!f.seq.empty() && f.seq.back() == m.vocab().eos()) {
      if (++visited > limit) throw SizeError("individual advantage: too many completions");
      total += std::exp(f.logp) * m.predict(Sequence(f.seq, m.vocab(), m.max_length()))[0];
      continue;
    }
    const auto row = m.next_logprobs(f.seq);
    for (std::size_t v = 0; v < row.size(); ++v) {
      if (row[v] == kNegInf) continue;
      Frame c{f.seq, f.logp + row[v]};
      c.seq.push_back(static_cast<Token>(v));
      stack.push_back(std::move(c));
    }
  }
  return total;
}

}  // namespace

double individual_advantage_exact(const TabularJointModel& m, std::span<const Token> prefix,
                                  Token token, std::size_t limit) {
  std::vector<Token> p(prefix.begin(), prefix.end());
  const auto row = m.next_logprobs(p);
  if (row.at(static_cast<std::size_t>(token)) == kNegInf) return 0.0;
  const double marginal = expected_score(m, p, limit);
  p.push_back(token);
  return expected_score(m, p, limit) - marginal;
}

std::vector<double> perturbed_logits_individual(const TabularJointModel& m,
                                                std::span<const Token> prefix, double sigma,
                                                std::size_t limit) {
  auto row = m.next_logprobs(prefix);
  if (sigma == 0.0) return row;
  for (std::size_t v = 0; v < row.size(); ++v) {
    if (row[v] == kNegInf) continue;
    row[v] += sigma * individual_advantage_exact(m, prefix, static_cast<Token>(v), limit);
  }
  log_softmax_inplace(row);
  return row;
}

std::string format_trace(const JsiTrace& trace, const Vocabulary& vocab) {
  std::ostringstream out;
  out.precision(17);
  for (std::size_t r = 0; r < trace.rounds.size(); ++r) {
    const auto& round = trace.rounds[r];
    for (std::size_t k = 0; k < round.samples.size(); ++k)
      out << r << '\t' << round.samples[k].to_string(vocab) << '\t' << round.scores[k] << '\t'
          << round.advantages[k] << '\t' << round.mu << '\n';
  }
  return out.str();
}

}  // namespace jsi
