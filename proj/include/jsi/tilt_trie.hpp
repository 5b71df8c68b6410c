#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "jsi/model.hpp"
#include "jsi/numeric.hpp"

namespace jsi {

// One sampled sequence handed to a tilt update: the per-step conditional
// log-probabilities it was drawn with and its global advantage.
struct TiltSample {
  Sequence sequence;
  std::vector<double> step_logprobs;
  double advantage = 0.0;
};

// Augmented prefix tree over sampled sequences.
//
// Each node stands for the prefix x_{1:t} and carries the logit that replaces
// log p_base(x_t | x_{1:t-1}) in the parent's row. Logits live in the frame of
// the base row: untouched siblings keep their base log-probability, so the
// perturbed conditional at x_{1:t-1} is
//   softmax over v of (node(x_{1:t-1} v).logit if present, else log p_base(v | .)).
//
// A round of samples drawn from the current perturbed model updates every node
// on their paths by
//   logit <- logit + log(1 - sum_{x in S} p_cur(x_{t+1:T} | x_{1:t})) + sigma * sum_{x in S} Adv(x)
// which is the mass-removal-plus-advantage update applied to the current
// perturbed model, written relative to its row normalizer. With sigma = 0 this
// reproduces p_base(x | x not yet sampled) exactly across any number of rounds.
class TiltTrie {
 public:
  static constexpr std::uint32_t kNone = 0xffffffffu;

  struct Node {
    Token token = -1;  // -1 at the root
    int depth = 0;
    std::uint32_t parent = kNone;
    std::vector<std::pair<Token, std::uint32_t>> children;  // sorted by token
    double base_cond_logprob = 0.0;  // log p_base(token | parent prefix), tempered
    double logit = 0.0;              // current logit in the parent's base-row frame
    // log of the base probability, conditioned on the parent prefix, of all
    // sampled sequences through this node.
    double removed_logmass = kNegInf;
    double advantage_sum = 0.0;  // sum of advantages of sampled sequences through this node
    bool exhausted = false;
    // Populated once the node gains a child: base row at this prefix and the
    // number of tokens with nonzero base probability.
    std::vector<double> base_row;
    int support = -1;
    int exhausted_children = 0;
  };

  TiltTrie();

  const Node& node(std::uint32_t i) const { return nodes_[i]; }
  const Node& root() const { return nodes_[0]; }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.size() == 1; }

  // Node index for a prefix, or kNone.
  std::uint32_t find(std::span<const Token> prefix) const;
  std::uint32_t child(std::uint32_t parent, Token token) const;
  bool contains(const Sequence& x) const { return find(x.indices()) != kNone; }

  // Applies one round. `base` must be the model the trie perturbs (already
  // temperature-scaled). Throws DuplicateSample when a sequence is already
  // present or appears twice in the round.
  void insert_round(const SequenceModel& base, double sigma, std::span<const TiltSample> samples);

  // Pre-order, children in token order, root omitted. One line per node:
  // depth, symbol, base_cond_logprob, removed_logmass, advantage_sum, exhausted.
  std::string dump(const Vocabulary& vocab) const;

 private:
  std::uint32_t add_child(std::uint32_t parent, Token token, double base_cond_logprob);
  void ensure_base_row(std::uint32_t i, const SequenceModel& base, std::span<const Token> prefix);

  std::vector<Node> nodes_;
};

// The perturbed model: a base view plus a tilt trie. Prefixes absent from the
// trie (or with no sampled continuation) return the base row unchanged.
class TiltedView final : public SequenceModel {
 public:
  TiltedView(const SequenceModel& base, double sigma);

  const Vocabulary& vocab() const override { return base_.vocab(); }
  int max_length() const override { return base_.max_length(); }
  void next_logprobs(std::span<const Token> prefix, std::span<double> out) const override;
  using SequenceModel::next_logprobs;

  void insert_round(std::span<const TiltSample> samples) { trie_.insert_round(base_, sigma_, samples); }

  // True once every sequence in the support has been sampled.
  bool exhausted() const { return trie_.root().exhausted; }

  const TiltTrie& trie() const { return trie_; }
  const SequenceModel& base() const { return base_; }
  double sigma() const { return sigma_; }

 private:
  const SequenceModel& base_;
  double sigma_;
  TiltTrie trie_;
};

// exp(sum of view conditionals along x).
double sequence_prob_under_view(const SequenceModel& view, const Sequence& x);

// Test hook for fault injection: when set, every tilt update uses -sigma.
void set_tilt_sign_flip_for_testing(bool on);

}  // namespace jsi
