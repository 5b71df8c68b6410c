#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jsi/model.hpp"
#include "jsi/tabular_model.hpp"

namespace jsi {

enum class MuKind { kEmpiricalMean };

struct JsiConfig {
  std::size_t beam_width = 16;
  std::size_t rounds = 8;
  double step_size = 1.0;
  double temperature = 0.9;
  MuKind mu = MuKind::kEmpiricalMean;

  // Throws ConfigError unless every field is positive.
  void validate() const;
};

enum class ScoreFlavor { kPredictor, kOracle };

struct ScoreFn {
  std::function<double(const Sequence&)> fn;
  ScoreFlavor flavor = ScoreFlavor::kPredictor;

  double operator()(const Sequence& x) const { return fn(x); }
};

struct JsiRound {
  std::vector<Sequence> samples;
  std::vector<double> scores;
  std::vector<double> advantages;
  double mu = 0.0;
};

struct JsiTrace {
  std::vector<JsiRound> rounds;
  std::vector<Sequence> sampled;  // D_sampled in sampling order
  std::size_t score_calls = 0;
  bool truncated = false;  // support exhausted or score limit reached
};

struct JsiResult {
  Sequence best;
  double best_score = 0.0;
  JsiTrace trace;
};

double mu_estimate(std::span<const double> scores, MuKind kind = MuKind::kEmpiricalMean);

inline double global_advantage(double score, double mu) { return score - mu; }

// score_k - mu for every k, except that the last entry absorbs the rounding
// residual so the left-to-right sum of the result is exactly zero. It differs
// from score_K - mu by a few ulps at most.
std::vector<double> centered_advantages(std::span<const double> scores, double mu);

// Rounds of SBS on the tilted view of `model` (temperature applied to the
// model before tilting), each followed by a mass-removal-plus-advantage
// update. Returns the highest-scoring sampled sequence (earliest on ties).
// `score_limit` caps the number of score_fn calls; sampling stops once the
// cap is reached and unscored samples are dropped.
JsiResult jsi_sample(const SequenceModel& model, const ScoreFn& score_fn, const JsiConfig& cfg,
                     Rng& rng, std::optional<std::size_t> score_limit = std::nullopt);

// Exact individual advantage of `token` after `prefix` using the model's own
// score table (first target): E[score | prefix, token] - E[score | prefix].
// Zero for tokens with zero probability.
double individual_advantage_exact(const TabularJointModel& m, std::span<const Token> prefix,
                                  Token token, std::size_t limit = 1'000'000);

// log-softmax(log p(. | prefix) + sigma * individual advantage).
std::vector<double> perturbed_logits_individual(const TabularJointModel& m,
                                                std::span<const Token> prefix, double sigma,
                                                std::size_t limit = 1'000'000);

// Tab-separated: round, sequence, score, advantage, mu.
std::string format_trace(const JsiTrace& trace, const Vocabulary& vocab);

}  // namespace jsi
