#pragma once

#include <cstddef>
#include <vector>

#include "jsi/model.hpp"

namespace jsi {

struct SbsResult {
  // Sorted by key, highest first.
  std::vector<Sequence> sequences;
  std::vector<double> logprobs;  // log-probability under the sampled (tempered) view
  std::vector<double> keys;      // Gumbel-perturbed log-probabilities
  std::vector<std::vector<double>> step_logprobs;
  bool truncated = false;        // support held fewer than K sequences
  std::size_t model_evaluations = 0;
};

// Conditional Gumbel for a child: given the parent key `parent_key` and the
// maximum `max_perturbed` of the children's unconditioned perturbed
// log-probabilities, returns
//   -log(exp(-parent_key) - exp(-max_perturbed) + exp(-perturbed))
// evaluated as
//   v = parent_key - perturbed + log1mexp(perturbed - max_perturbed)
//   key = parent_key - max(0, v) - log1p(exp(-|v|)).
double conditional_gumbel_key(double parent_key, double perturbed, double max_perturbed);

// Stochastic Beam Search: K distinct sequences without replacement from the
// temperature-scaled view, via top-down Gumbel-Top-k. The beam keeps at most
// K items per step, so the view is called at most K * max_length times.
// Ties in keys are broken by lexicographic token order.
SbsResult sbs_sample(const SequenceModel& view, std::size_t k, double temperature, Rng& rng);

}  // namespace jsi
