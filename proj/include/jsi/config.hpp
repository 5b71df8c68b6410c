#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "jsi/harness.hpp"

namespace jsi {

// One JSON document with five sections. Every key is optional; unknown keys
// are rejected by name.
//
//   model:  embed_dim, hidden_dim, context, max_length
//   train:  lambda, learning_rate, batch_size, epochs, patience, grad_clip,
//           train_fraction, pretrain {epochs, learning_rate, batch_size}
//   jsi:    beam_width, rounds, step_size, temperature
//   oracle: budget, evaluation_count, landscape
//   run:    seed, dataset, dataset_size, data_seed, corpus {scale, mean_length},
//           variants, sampler, best_of_n, top_fraction, max_iterations,
//           retrain {epochs, learning_rate, batch_size},
//           reinvent {sigma_r, learning_rate, batch_size, steps, temperature}
struct RunConfig {
  ModelSetup model;
  PretrainConfig pretrain;
  TrainConfig train;
  double train_fraction = 0.5;
  JsiConfig jsi;

  std::size_t oracle_budget = 3000;
  std::size_t evaluation_count = 64;
  std::string landscape;  // empty: built-in default landscape

  std::uint64_t seed = 0;
  DataSetup data;
  std::vector<OfflineVariant> variants{OfflineVariant::kFull, OfflineVariant::kNoJoint,
                                       OfflineVariant::kNoSelfImprove};
  OnlineSampler sampler = OnlineSampler::kJsi;
  std::size_t best_of_n = 256;
  double top_fraction = 0.25;
  std::size_t max_iterations = 1000;
  TrainConfig retrain = [] {
    TrainConfig t;
    t.lambda = 0.0;
    t.learning_rate = 0.3;
    t.epochs = 2;
    return t;
  }();
  ReinventConfig reinvent = [] {
    ReinventConfig r;
    r.learning_rate = 0.05;
    return r;
  }();

  // Throws ConfigError on any inconsistent value.
  void validate() const;
};

// Relative paths inside the document are resolved against `base_dir`.
RunConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

// Canonical form with every field present; parse_config(to_json(c)) == c.
std::string config_to_json(const RunConfig& cfg);

OfflineRunConfig offline_config(const RunConfig& cfg, OfflineVariant variant);
OnlineRunConfig online_config(const RunConfig& cfg);
Environment load_environment(const RunConfig& cfg);

}  // namespace jsi
