#include "jsi/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "jsi/errors.hpp"

namespace jsi {

double weighted_joint_loss(const JointModel& m, const std::vector<LabeledExample>& batch,
                           double generative_weight, double lambda) {
  if (batch.empty()) throw std::invalid_argument("joint_loss: empty batch");
  if (lambda < 0.0) throw std::invalid_argument("joint_loss: lambda must be >= 0");
  double loss = 0.0;
  for (const auto& ex : batch) {
    if (generative_weight != 0.0) loss -= generative_weight * sequence_logprob(m, ex.sequence);
    if (lambda != 0.0) {
      const auto yhat = m.predict(ex.sequence);
      if (yhat.size() != ex.scores.size()) throw std::invalid_argument("score arity mismatch");
      double sq = 0.0;
      for (std::size_t i = 0; i < yhat.size(); ++i) sq += (ex.scores[i] - yhat[i]) * (ex.scores[i] - yhat[i]);
      loss += lambda * 0.5 * sq;
    }
  }
  return loss;
}

double joint_loss(const JointModel& m, const std::vector<LabeledExample>& batch, double lambda) {
  return weighted_joint_loss(m, batch, 1.0, lambda);
}

double joint_loss_gradient(const NeuralJointModel& m, const std::vector<LabeledExample>& batch,
                           double generative_weight, double lambda, std::vector<double>& grad) {
  if (batch.empty()) throw std::invalid_argument("joint_loss_gradient: empty batch");
  grad.assign(m.params().size(), 0.0);
  double loss = 0.0;
  for (const auto& ex : batch)
    loss += m.accumulate_gradient(ex.sequence, generative_weight, ex.scores, lambda, grad);
  return loss;
}

TrainResult train_joint(NeuralJointModel& m, const std::vector<LabeledExample>& data,
                        const TrainConfig& cfg, Rng& rng) {
  if (data.empty()) throw std::invalid_argument("train_joint: empty dataset");
  if (cfg.lambda < 0.0) throw ConfigError("lambda must be >= 0");
  if (cfg.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  TrainResult res;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grad;
  std::vector<LabeledExample> batch;
  double best_epoch_loss = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  auto params = m.params();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order, rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);
      const double loss = joint_loss_gradient(m, batch, cfg.generative_weight, cfg.lambda, grad);
      const double n = static_cast<double>(batch.size());
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", step " << res.steps
            << " (learning rate " << cfg.learning_rate << " is likely too high)";
        throw TrainingDiverged(msg.str());
      }
      double norm2 = 0.0;
      for (double& g : grad) {
        g /= n;
        norm2 += g * g;
      }
      const double norm = std::sqrt(norm2);
      const double scale = (cfg.grad_clip > 0.0 && norm > cfg.grad_clip) ? cfg.grad_clip / norm : 1.0;
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= cfg.learning_rate * scale * grad[i];
      res.loss_trace.push_back(loss / n);
      epoch_loss += loss;
      ++res.steps;
    }
    ++res.epochs_run;
    if (cfg.patience > 0) {
      if (epoch_loss < best_epoch_loss) {
        best_epoch_loss = epoch_loss;
        stale = 0;
      } else if (++stale >= cfg.patience) {
        res.stopped_early = true;
        break;
      }
    }
  }
  // Soft monotonicity check over a 10-step moving average.
  const std::size_t w = 10;
  if (res.loss_trace.size() >= 2 * w) {
    double prev = std::accumulate(res.loss_trace.begin(), res.loss_trace.begin() + w, 0.0) / w;
    for (std::size_t i = w; i + w <= res.loss_trace.size(); i += w) {
      const double cur = std::accumulate(res.loss_trace.begin() + static_cast<std::ptrdiff_t>(i),
                                         res.loss_trace.begin() + static_cast<std::ptrdiff_t>(i + w), 0.0) / w;
      if (cur > prev * 1.01 + 1e-12) res.smooth_descent = false;
      prev = cur;
    }
  }
  return res;
}

GradCheckResult grad_check(const NeuralJointModel& m, const std::vector<LabeledExample>& batch,
                           double lambda, double eps, Rng& rng, std::size_t max_coords) {
  if (batch.empty()) throw std::invalid_argument("grad_check: empty batch");
  if (!(eps >= 1e-6 && eps <= 1e-3)) throw std::invalid_argument("grad_check: eps must lie in [1e-6, 1e-3]");
  std::vector<double> analytic;
  joint_loss_gradient(m, batch, 1.0, lambda, analytic);

  std::vector<std::size_t> coords;
  const std::size_t n = m.params().size();
  if (max_coords == 0 || max_coords >= n) {
    coords.resize(n);
    std::iota(coords.begin(), coords.end(), 0);
  } else {
    for (std::size_t i = m.block("ws").offset; i < n; ++i) coords.push_back(i);
    std::vector<std::size_t> rest(m.block("ws").offset);
    std::iota(rest.begin(), rest.end(), 0);
    shuffle(rest, rng);
    for (std::size_t i = 0; coords.size() < max_coords && i < rest.size(); ++i) coords.push_back(rest[i]);
  }

  NeuralJointModel probe = m;
  auto p = probe.params();
  GradCheckResult res;
  for (std::size_t c : coords) {
    const double orig = p[c];
    auto eval = [&](double delta) {
      p[c] = orig + delta;
      return joint_loss(probe, batch, lambda);
    };
    const double numeric =
        (-eval(2 * eps) + 8 * eval(eps) - 8 * eval(-eps) + eval(-2 * eps)) / (12 * eps);
    p[c] = orig;
    const double a = analytic[c];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
    res.max_relative_error = std::max(res.max_relative_error, std::abs(a - numeric) / denom);
    ++res.coordinates;
  }
  return res;
}

}  // namespace jsi
