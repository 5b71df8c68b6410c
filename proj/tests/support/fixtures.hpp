#pragma once

#include <string>
#include <vector>

#include "jsi/seqcore.hpp"
#include "jsi/tabular_model.hpp"

namespace fixtures {

inline jsi::Sequence seq(const std::string& text, const jsi::Vocabulary& v, int max_length = 64) {
  return jsi::parse_sequence(text, v, max_length);
}

// Content a..(n-1), uniform rows: every emittable token equally likely.
inline jsi::TabularJointModel uniform_model(int n_content, int max_length) {
  return jsi::TabularJointModel(jsi::Vocabulary::letters(n_content), max_length, 0);
}

inline jsi::TabularJointModel random_model(int n_content, int max_length, std::uint64_t seed,
                                           double scale = 1.0, int order = 8) {
  jsi::Rng rng(seed);
  return jsi::TabularJointModel::random(jsi::Vocabulary::letters(n_content), max_length, order, rng, scale);
}

}  // namespace fixtures
