#pragma once

// Reference implementations written independently of the library code paths
// they check: plain enumeration, dense probability tables and direct formula
// evaluation. Only used by the test suites and the `verify` command.

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "jsi/model.hpp"
#include "jsi/tabular_model.hpp"

namespace jsi::verify {

// Every well-formed sequence over the vocabulary: content strings of length
// 0 .. max_length-1 followed by EOS, in length-then-lexicographic order.
std::vector<Sequence> all_sequences(const Vocabulary& vocab, int max_length);

// Product of next-token probabilities along x (not in log space).
double product_prob(const SequenceModel& m, const Sequence& x);

using Distribution = std::map<Sequence, double>;

// Probability of every well-formed sequence, zeros included.
Distribution exact_distribution(const SequenceModel& m);

// p(x) / (1 - sum_{d in removed} p(d)) for x not removed, 0 otherwise.
Distribution renormalized_excluding(const Distribution& p, std::span<const Sequence> removed);

struct RoundSample {
  Sequence sequence;
  double advantage = 0.0;
};

// Dense-table realization of the perturbed model: one explicit probability
// row per prefix. A round rewrites, for every prefix u reached by a sample
// and every token v that a sample takes after u,
//   logit(v | u) = log(p(v | u) - sum_{x in S(uv)} p(x | u)) + sigma * sum_{x in S(uv)} Adv(x)
// with p the current table, then renormalizes the row.
class DenseTilt {
 public:
  explicit DenseTilt(const SequenceModel& base);

  void apply_round(std::span<const RoundSample> samples, double sigma);
  double prob(const Sequence& x) const;
  const std::vector<double>& row(const std::vector<Token>& prefix) const { return rows_.at(prefix); }
  Distribution distribution() const;

 private:
  const Vocabulary& vocab_;
  int max_length_;
  std::map<std::vector<Token>, std::vector<double>> rows_;
};

// E[score | prefix, token] - E[score | prefix] from the full list of
// sequences, scores taken from the model's score table (first target).
double individual_advantage_brute(const TabularJointModel& m, std::span<const Token> prefix, Token token);

// Chi-square goodness-of-fit p-value. Categories with expected count below
// `min_expected` are pooled into one bin.
double chi_square_p_value(std::span<const double> observed, std::span<const double> expected,
                          double min_expected = 5.0);

// Mean over pairs of (1 - Jaccard) of k-mer sets, with explicit nested loops.
double intdiv_pairwise(std::span<const Sequence> xs, int k);

// sum over i of sign_i * (c_i - mean_i) / std_i, divided by M.
double aggregate_formula(std::span<const double> c, std::span<const double> mean,
                         std::span<const double> sd, std::span<const double> signs);

}  // namespace jsi::verify
