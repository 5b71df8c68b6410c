#include "jsi/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "jsi/errors.hpp"

namespace jsi {

BestOfNResult best_of_n(const SequenceModel& model, const ScoreFn& score_fn, std::size_t n,
                        double temperature, Rng& rng) {
  if (n == 0) throw std::invalid_argument("best_of_n: N must be >= 1");
  if (!(temperature > 0.0)) throw std::invalid_argument("best_of_n: temperature must be > 0");
  const TemperedView view(model, temperature);
  BestOfNResult res;
  res.samples.reserve(n);
  res.scores.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    res.samples.push_back(sample_ancestral(view, rng));
    res.scores.push_back(score_fn(res.samples.back()));
    if (i == 0 || res.scores.back() > res.best_score) {
      res.best = res.samples.back();
      res.best_score = res.scores.back();
    }
  }
  return res;
}

double reinvent_loss(double agent_logprob, double prior_logprob, double f, double sigma_r) {
  const double r = prior_logprob + sigma_r * f - agent_logprob;
  return r * r;
}

double reinvent_loss(const SequenceModel& agent, const SequenceModel& prior, const Sequence& x,
                     double f, double sigma_r) {
  return reinvent_loss(sequence_logprob(agent, x), sequence_logprob(prior, x), f, sigma_r);
}

ReinventGradients reinvent_gradients(const TabularJointModel& agent, const TabularJointModel& prior,
                                     const Sequence& x, double f, double sigma_r) {
  const double lp_agent = sequence_logprob(agent, x);
  const double lp_prior = sequence_logprob(prior, x);
  const std::size_t V = static_cast<std::size_t>(agent.vocab().size());
  ReinventGradients g;

  // dL/dtheta = 2 r dr/dtheta with r = lp_prior + sigma_r f - lp_agent, so
  // each step contributes -2 r (onehot(x_t) - p(. | context)).
  const double r = lp_prior + sigma_r * f - lp_agent;
  const auto idx = x.indices();
  for (std::size_t t = 0; t < idx.size(); ++t) {
    const auto prefix = idx.first(t);
    const auto lp = agent.next_logprobs(prefix);
    auto& row = g.chain_rule[agent.context_of(prefix)];
    row.resize(V, 0.0);
    for (std::size_t v = 0; v < V; ++v) {
      const double d = (static_cast<Token>(v) == idx[t] ? 1.0 : 0.0) - std::exp(lp[v]);
      row[v] += -2.0 * r * d;
    }
  }

  // grad log p_agent[c][v] = count(c, v) - count(c) * p(v | c).
  std::map<std::vector<Token>, std::pair<std::vector<double>, double>> counts;
  std::map<std::vector<Token>, std::vector<double>> probs;
  for (std::size_t t = 0; t < idx.size(); ++t) {
    const auto prefix = idx.first(t);
    auto ctx = agent.context_of(prefix);
    auto& [tok, total] = counts[ctx];
    tok.resize(V, 0.0);
    tok[static_cast<std::size_t>(idx[t])] += 1.0;
    total += 1.0;
    if (!probs.count(ctx)) {
      auto lp = agent.next_logprobs(prefix);
      for (double& v : lp) v = std::exp(v);
      probs.emplace(ctx, std::move(lp));
    }
  }
  const double residual = f - (lp_agent - lp_prior) / sigma_r;
  const double coef = -2.0 * sigma_r * residual;
  for (const auto& [ctx, c] : counts) {
    auto& row = g.factored[ctx];
    row.resize(V);
    const auto& p = probs.at(ctx);
    for (std::size_t v = 0; v < V; ++v) row[v] = coef * (c.first[v] - c.second * p[v]);
  }
  return g;
}

double reinvent_gradient_identity_check(const TabularJointModel& agent, const TabularJointModel& prior,
                                        const Sequence& x, double f, double sigma_r) {
  const auto g = reinvent_gradients(agent, prior, x, f, sigma_r);
  if (g.chain_rule.size() != g.factored.size())
    throw std::logic_error("reinvent gradients touch different rows");
  // Coordinates that cancel to rounding noise are compared against the
  // gradient's overall scale rather than against themselves.
  double scale = 0.0;
  for (const auto& [ctx, a] : g.chain_rule)
    for (double v : a) scale = std::max(scale, std::abs(v));
  double worst = 0.0;
  for (const auto& [ctx, a] : g.chain_rule) {
    const auto& b = g.factored.at(ctx);
    for (std::size_t v = 0; v < a.size(); ++v) {
      if (a[v] == b[v]) continue;
      const double denom = std::max({std::abs(a[v]), std::abs(b[v]), 1e-12 * scale, 1e-300});
      worst = std::max(worst, std::abs(a[v] - b[v]) / denom);
    }
  }
  return worst;
}

void ReinventConfig::validate() const {
  if (!(sigma_r > 0.0)) throw ConfigError("reinvent sigma_r must be > 0");
  if (learning_rate < 0.0) throw ConfigError("reinvent learning_rate must be >= 0");
  if (batch_size == 0) throw ConfigError("reinvent batch_size must be >= 1");
  if (!(temperature > 0.0)) throw ConfigError("reinvent temperature must be > 0");
}

ReinventResult reinvent_finetune(NeuralJointModel& agent, const SequenceModel& prior,
                                 CachingEvaluator& evaluator,
                                 const std::function<double(const std::vector<double>&)>& reward,
                                 const ReinventConfig& cfg, Rng& rng) {
  cfg.validate();
  ReinventResult res;
  std::vector<double> grad(agent.params().size());
  std::vector<Sequence> batch;
  std::vector<double> rewards;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    batch.clear();
    rewards.clear();
    {
      const TemperedView view(agent, cfg.temperature);
      for (std::size_t i = 0; i < cfg.batch_size; ++i) batch.push_back(sample_ancestral(view, rng));
    }
    try {
      for (const auto& x : batch) rewards.push_back(reward(evaluator.evaluate(x)));
    } catch (const BudgetExhausted&) {
      res.budget_exhausted = true;
      break;
    }

    // d/dtheta (r^2) = -2 r d log p_agent / dtheta, and accumulate_gradient
    // adds gen_coef * d(-log p)/dtheta.
    std::fill(grad.begin(), grad.end(), 0.0);
    const double n = static_cast<double>(batch.size());
    ReinventStep s;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const double r = sequence_logprob(prior, batch[i]) + cfg.sigma_r * rewards[i] -
                       sequence_logprob(agent, batch[i]);
      agent.accumulate_gradient(batch[i], 2.0 * r / n, {}, 0.0, grad);
      s.mean_reward += rewards[i] / n;
      s.mean_loss += r * r / n;
    }
    double norm2 = 0.0;
    for (double g : grad) norm2 += g * g;
    s.grad_norm = std::sqrt(norm2);
    if (!std::isfinite(s.grad_norm)) throw TrainingDiverged("reinvent: non-finite gradient");
    const double scale = (cfg.grad_clip > 0.0 && s.grad_norm > cfg.grad_clip) ? cfg.grad_clip / s.grad_norm : 1.0;
    auto params = agent.params();
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= cfg.learning_rate * scale * grad[i];
    res.trace.push_back(s);
  }
  return res;
}

}  // namespace jsi
