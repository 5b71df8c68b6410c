#pragma once

#include <stdexcept>
#include <string>

namespace jsi {

// Invalid configuration or input file. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A token list that violates the Sequence invariants.
class MalformedSequence : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class BudgetExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inserting a sequence that is already fully present in a tilt trie.
class DuplicateSample : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Exhaustive enumeration would exceed its configured bound.
class SizeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace jsi
