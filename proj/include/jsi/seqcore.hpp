#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "jsi/rng.hpp"

namespace jsi {

using Token = int;

class Vocabulary {
 public:
  Vocabulary(std::vector<std::string> tokens, Token bos_index, Token eos_index);

  // "<bos>" at 0, "<eos>" at 1, then the given content symbols.
  static Vocabulary with_markers(const std::vector<std::string>& content);
  // Content symbols "a", "b", ... for n_content <= 26.
  static Vocabulary letters(int n_content);

  int size() const { return static_cast<int>(tokens_.size()); }
  Token bos() const { return bos_; }
  Token eos() const { return eos_; }
  bool is_content(Token t) const { return t >= 0 && t < size() && t != bos_ && t != eos_; }
  std::vector<Token> content_tokens() const;

  const std::string& symbol(Token t) const { return tokens_.at(static_cast<std::size_t>(t)); }
  std::optional<Token> find(std::string_view symbol) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocabulary&) const = default;

 private:
  std::vector<std::string> tokens_;
  Token bos_;
  Token eos_;
};

// A completed sequence x_1..x_T. BOS is implicit and never stored; the last
// token is EOS and EOS appears nowhere else. T <= max_length.
class Sequence {
 public:
  Sequence() = default;
  // Throws MalformedSequence when the invariants do not hold.
  Sequence(std::vector<Token> indices, const Vocabulary& vocab, int max_length);

  std::span<const Token> indices() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }
  // Tokens without the terminal EOS.
  std::span<const Token> content() const {
    return std::span<const Token>(tokens_).first(tokens_.empty() ? 0 : tokens_.size() - 1);
  }
  Token operator[](std::size_t i) const { return tokens_[i]; }

  std::string to_string(const Vocabulary& vocab) const;

  auto operator<=>(const Sequence&) const = default;
  bool operator==(const Sequence&) const = default;

 private:
  std::vector<Token> tokens_;
};

struct SequenceHash {
  std::size_t operator()(const Sequence& s) const noexcept;
};

// Parses space-separated content symbols; a trailing EOS symbol is optional.
Sequence parse_sequence(std::string_view text, const Vocabulary& vocab, int max_length);

// Structural decoding constraints shared by every model: BOS is never emitted
// and a prefix of length max_length - 1 can only be followed by EOS.
struct DecodeRules {
  Token bos;
  Token eos;
  int max_length;

  void apply(std::size_t prefix_length, std::span<double> logits) const;
};

struct LabeledExample {
  Sequence sequence;
  std::vector<double> scores;
};

struct DatasetSplit {
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> eval;
};

// Random partition with |train| = round_half_up(fraction * |data|).
DatasetSplit split_dataset(const std::vector<LabeledExample>& data, double fraction, Rng& rng);

using Kmer = std::vector<Token>;
// All contiguous length-k windows over the content tokens (EOS excluded).
std::set<Kmer> kmer_set(const Sequence& x, int k);

// One example per line: "<symbols>\t<comma-separated scores>". Blank lines are
// skipped. Malformed lines raise ConfigError naming the line number.
std::vector<LabeledExample> read_dataset(const std::filesystem::path& path, const Vocabulary& vocab,
                                         int max_length);
std::vector<LabeledExample> parse_dataset(std::string_view text, const Vocabulary& vocab,
                                          int max_length, std::string_view source_name = "<dataset>");
std::string format_dataset(const std::vector<LabeledExample>& data, const Vocabulary& vocab);
void write_dataset(const std::filesystem::path& path, const std::vector<LabeledExample>& data,
                   const Vocabulary& vocab);

// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace jsi
