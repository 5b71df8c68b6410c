#pragma once

#include <cstddef>
#include <vector>

#include "jsi/neural_model.hpp"

namespace jsi {

struct TrainConfig {
  double lambda = 1.0;           // weight of the predictive term
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::size_t patience = 0;      // epochs without improvement before stopping; 0 disables
  double grad_clip = 1.0;        // global L2 norm
  double generative_weight = 1.0;  // 0 trains the predictive head alone
};

// -sum_{(x,y)} (log p(x) + lambda * log p(y|x)), with log p(y|x) the
// unit-variance Gaussian log-density minus its constant -(M/2) log(2 pi).
// The dropped constant is lambda * |batch| * (M/2) * log(2 pi).
double joint_loss(const JointModel& m, const std::vector<LabeledExample>& batch, double lambda);

// Loss of the same form with an explicit weight on the generative term.
double weighted_joint_loss(const JointModel& m, const std::vector<LabeledExample>& batch,
                           double generative_weight, double lambda);

// Gradient of weighted_joint_loss w.r.t. all parameters; returns the loss.
double joint_loss_gradient(const NeuralJointModel& m, const std::vector<LabeledExample>& batch,
                           double generative_weight, double lambda, std::vector<double>& grad);

struct TrainResult {
  std::vector<double> loss_trace;  // mean per-example loss of every step
  std::size_t steps = 0;
  std::size_t epochs_run = 0;
  bool stopped_early = false;
  // True if the 10-step moving average never rose by more than 1% relative.
  bool smooth_descent = true;
};

// Minibatch gradient descent (no momentum) with global-norm clipping.
// Throws TrainingDiverged on a non-finite loss.
TrainResult train_joint(NeuralJointModel& m, const std::vector<LabeledExample>& data,
                        const TrainConfig& cfg, Rng& rng);

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
};

// Compares the analytic gradient of joint_loss with a fourth-order central
// difference at each checked coordinate (all of them when max_coords == 0,
// else a random subsample that always includes the score head).
// relative error = |a - n| / max(|a|, |n|, 1e-6).
GradCheckResult grad_check(const NeuralJointModel& m, const std::vector<LabeledExample>& batch,
                           double lambda, double eps, Rng& rng, std::size_t max_coords = 0);

}  // namespace jsi
