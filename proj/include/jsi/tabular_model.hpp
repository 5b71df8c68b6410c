#pragma once

#include <functional>
#include <map>
#include <vector>

#include "jsi/checkpoint.hpp"
#include "jsi/model.hpp"

namespace jsi {

using RowGradient = std::map<std::vector<Token>, std::vector<double>>;

// Exact joint model over a small space. Each context (the last `order` tokens
// of the prefix, or the whole prefix when shorter) owns a row of logits; the
// conditional is the softmax of that row after DecodeRules masking. Contexts
// without a row are uniform over the allowed tokens. Scores are looked up in
// a table keyed by the full sequence.
class TabularJointModel final : public JointModel {
 public:
  TabularJointModel(Vocabulary vocab, int max_length, int order, std::size_t num_targets = 1);

  // Gaussian row logits with standard deviation `scale` for every reachable
  // context. Throws SizeError when there are more than `max_rows` contexts.
  static TabularJointModel random(Vocabulary vocab, int max_length, int order, Rng& rng,
                                  double scale = 1.0, std::size_t max_rows = 200'000);

  const Vocabulary& vocab() const override { return vocab_; }
  int max_length() const override { return max_length_; }
  void next_logprobs(std::span<const Token> prefix, std::span<double> out) const override;
  using SequenceModel::next_logprobs;

  std::size_t num_targets() const override { return num_targets_; }
  // Throws std::out_of_range for sequences without a score entry.
  std::vector<double> predict(const Sequence& x) const override;

  int order() const { return order_; }
  std::vector<Token> context_of(std::span<const Token> prefix) const;

  // Logits for a context (created as zeros on first access).
  std::vector<double>& row_logits(std::span<const Token> context);
  const std::map<std::vector<Token>, std::vector<double>>& rows() const { return rows_; }
  // Sets the row so that softmax(row) == probs; zero entries become -inf.
  void set_row_probs(std::span<const Token> context, std::span<const double> probs);

  void set_score(const Sequence& x, std::vector<double> y);
  // Fills the score table over the model's support.
  void set_scores(const std::function<std::vector<double>(const Sequence&)>& fn);
  const std::map<std::vector<Token>, std::vector<double>>& scores() const { return scores_; }

  // d log p(x) / d row logits, accumulated step by step.
  RowGradient logprob_gradient(const Sequence& x) const;

  Checkpoint to_checkpoint() const;
  static TabularJointModel from_checkpoint(const Checkpoint& ckpt);

 private:
  Vocabulary vocab_;
  int max_length_;
  int order_;
  std::size_t num_targets_;
  std::map<std::vector<Token>, std::vector<double>> rows_;
  std::map<std::vector<Token>, std::vector<double>> scores_;
};

}  // namespace jsi
