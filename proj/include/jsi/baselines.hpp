#pragma once

#include <cstddef>
#include <vector>

#include "jsi/jsi.hpp"
#include "jsi/neural_model.hpp"
#include "jsi/objectives.hpp"
#include "jsi/tabular_model.hpp"

namespace jsi {

struct BestOfNResult {
  Sequence best;
  double best_score = 0.0;
  std::vector<Sequence> samples;  // in draw order, repeats kept
  std::vector<double> scores;
};

// N iid draws from the temperature-scaled model, each scored once; returns the
// first argmax. Exactly N score_fn calls.
BestOfNResult best_of_n(const SequenceModel& model, const ScoreFn& score_fn, std::size_t n,
                        double temperature, Rng& rng);

// (log p_prior(x) + sigma_r * f - log p_agent(x))^2
double reinvent_loss(double agent_logprob, double prior_logprob, double f, double sigma_r);
double reinvent_loss(const SequenceModel& agent, const SequenceModel& prior, const Sequence& x,
                     double f, double sigma_r);

// Gradient of reinvent_loss w.r.t. the agent's row logits, computed two ways:
// step by step through the chain rule, and in the factored form
// -2 sigma_r (f - log(p_agent / p_prior) / sigma_r) * grad log p_agent with
// grad log p_agent built from token and context counts. The check returns the
// largest coordinate-wise |a - b| / max(|a|, |b|, 1e-12 * max_i |a_i|).
struct ReinventGradients {
  RowGradient chain_rule;
  RowGradient factored;
};
ReinventGradients reinvent_gradients(const TabularJointModel& agent, const TabularJointModel& prior,
                                     const Sequence& x, double f, double sigma_r);
double reinvent_gradient_identity_check(const TabularJointModel& agent, const TabularJointModel& prior,
                                        const Sequence& x, double f, double sigma_r);

struct ReinventConfig {
  double sigma_r = 1.0;  // reward scale; the KL weight of the regularized objective is 1 / sigma_r
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t steps = 1000;
  double temperature = 1.0;
  double grad_clip = 1.0;

  void validate() const;
};

struct ReinventStep {
  double mean_reward = 0.0;
  double grad_norm = 0.0;  // before clipping
  double mean_loss = 0.0;
};

struct ReinventResult {
  std::vector<ReinventStep> trace;
  bool budget_exhausted = false;
};

// Policy-gradient fine-tuning on the augmented-likelihood loss. Each step
// draws a batch from the agent, scores it through `evaluator` (repeats are
// served from its cache) and `reward`, then takes one clipped gradient step on
// the batch-mean loss. Stops cleanly when the budget runs out mid-batch; the
// partial batch is discarded.
ReinventResult reinvent_finetune(NeuralJointModel& agent, const SequenceModel& prior,
                                 CachingEvaluator& evaluator,
                                 const std::function<double(const std::vector<double>&)>& reward,
                                 const ReinventConfig& cfg, Rng& rng);

}  // namespace jsi
