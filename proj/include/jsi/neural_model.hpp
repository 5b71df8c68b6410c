#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "jsi/checkpoint.hpp"
#include "jsi/model.hpp"

namespace jsi {

struct NeuralConfig {
  int embed_dim = 16;
  int hidden_dim = 32;
  int context = 8;  // tokens in the left window, BOS-padded
  std::size_t num_targets = 1;
};

// Small joint model with one shared trunk:
//
//   u_t = [E(x_{t-h}); ...; E(x_{t-1})]          (BOS where t-j < 1)
//   s_t = tanh(W2 tanh(W1 u_t + b1) + b2)        trunk state, width embed_dim
//   log p(x_t | x_<t) = log_softmax(Wo s_t + bo)
//   y_hat(x) = Ws mean(s_2 .. s_T) + bs           states after each content token
//
// All parameters live in one flat vector; named blocks index into it.
class NeuralJointModel final : public JointModel {
 public:
  struct Block {
    std::string name;
    std::size_t offset;
    std::size_t size;
  };

  // Weights uniform(-0.05, 0.05), biases zero.
  NeuralJointModel(Vocabulary vocab, int max_length, NeuralConfig cfg, Rng& rng);

  const Vocabulary& vocab() const override { return vocab_; }
  int max_length() const override { return max_length_; }
  void next_logprobs(std::span<const Token> prefix, std::span<double> out) const override;
  using SequenceModel::next_logprobs;

  std::size_t num_targets() const override { return cfg_.num_targets; }
  std::vector<double> predict(const Sequence& x) const override;

  const NeuralConfig& config() const { return cfg_; }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  const Block& block(const std::string& name) const;
  bool in_score_head(std::size_t index) const;
  bool in_trunk(std::size_t index) const;

  // Adds the gradient of
  //   gen_coef * (-log p(x)) + pred_coef * 0.5 * ||y - y_hat(x)||^2
  // into `grad` and returns that value. `y` is ignored when pred_coef == 0.
  double accumulate_gradient(const Sequence& x, double gen_coef, std::span<const double> y,
                             double pred_coef, std::span<double> grad) const;

  Checkpoint to_checkpoint() const;
  static NeuralJointModel from_checkpoint(const Checkpoint& ckpt);

 private:
  NeuralJointModel(Vocabulary vocab, int max_length, NeuralConfig cfg);
  void layout();

  struct State {
    std::vector<double> u, z1, s;
  };
  void trunk(std::span<const Token> prefix, State& st) const;
  void token_logits(const State& st, std::span<double> out) const;

  Vocabulary vocab_;
  int max_length_;
  NeuralConfig cfg_;
  std::vector<double> params_;
  std::vector<Block> blocks_;
  // Offsets of the named blocks.
  std::size_t e_, w1_, b1_, w2_, b2_, wo_, bo_, ws_, bs_;
};

}  // namespace jsi
