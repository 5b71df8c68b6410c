#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "jsi/seqcore.hpp"

namespace jsi {

// Anything that defines an autoregressive distribution over Sequences.
// Implementations must be safe to call concurrently from several readers.
class SequenceModel {
 public:
  virtual ~SequenceModel() = default;

  virtual const Vocabulary& vocab() const = 0;
  virtual int max_length() const = 0;

  // Writes log p(v | prefix) for every v into `out` (size vocab().size()).
  // `prefix` holds x_1..x_{t-1}; BOS is implicit.
  virtual void next_logprobs(std::span<const Token> prefix, std::span<double> out) const = 0;

  std::vector<double> next_logprobs(std::span<const Token> prefix) const {
    std::vector<double> out(static_cast<std::size_t>(vocab().size()));
    next_logprobs(prefix, out);
    return out;
  }

  DecodeRules rules() const { return {vocab().bos(), vocab().eos(), max_length()}; }
};

// p(x, y) = p(y | x) p(x) with shared parameters. predict() returns the mean
// of the unit-variance Gaussian realizing p(y | x), one entry per objective.
class JointModel : public SequenceModel {
 public:
  virtual std::size_t num_targets() const = 0;
  virtual std::vector<double> predict(const Sequence& x) const = 0;
};

// Sum of next-token log-probabilities along x, EOS step included.
double sequence_logprob(const SequenceModel& m, const Sequence& x);

// Per-step conditional log-probabilities along x.
std::vector<double> step_logprobs(const SequenceModel& m, const Sequence& x);

// log-softmax(logp / temperature) over a wrapped model. With temperature 1
// rows are forwarded untouched.
class TemperedView final : public SequenceModel {
 public:
  TemperedView(const SequenceModel& base, double temperature);

  const Vocabulary& vocab() const override { return base_.vocab(); }
  int max_length() const override { return base_.max_length(); }
  void next_logprobs(std::span<const Token> prefix, std::span<double> out) const override;
  using SequenceModel::next_logprobs;

  double temperature() const { return temperature_; }

 private:
  const SequenceModel& base_;
  double temperature_;
};

struct WeightedSequence {
  Sequence sequence;
  double logprob;
};

// Depth-first enumeration of every sequence with nonzero probability, in
// lexicographic token order. Throws SizeError past `limit` sequences.
std::vector<WeightedSequence> enumerate_support(const SequenceModel& m, std::size_t limit = 1'000'000);

// Draws one sequence by ancestral sampling (inverse CDF per step).
Sequence sample_ancestral(const SequenceModel& m, Rng& rng);

}  // namespace jsi
