#include "jsi/seqcore.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "jsi/errors.hpp"
#include "jsi/numeric.hpp"

namespace jsi {

Vocabulary::Vocabulary(std::vector<std::string> tokens, Token bos_index, Token eos_index)
    : tokens_(std::move(tokens)), bos_(bos_index), eos_(eos_index) {
  const int v = size();
  if (v < 3) throw ConfigError("vocabulary needs BOS, EOS and at least one content token");
  if (bos_ < 0 || bos_ >= v || eos_ < 0 || eos_ >= v || bos_ == eos_)
    throw ConfigError("vocabulary BOS/EOS indices out of range or equal");
  std::unordered_set<std::string> seen;
  for (const auto& t : tokens_) {
    if (t.empty()) throw ConfigError("vocabulary contains an empty symbol");
    if (!seen.insert(t).second) throw ConfigError("duplicate vocabulary symbol '" + t + "'");
  }
}

Vocabulary Vocabulary::with_markers(const std::vector<std::string>& content) {
  std::vector<std::string> tokens{"<bos>", "<eos>"};
  tokens.insert(tokens.end(), content.begin(), content.end());
  return Vocabulary(std::move(tokens), 0, 1);
}

Vocabulary Vocabulary::letters(int n_content) {
  if (n_content < 1 || n_content > 26) throw ConfigError("letters() supports 1..26 content tokens");
  std::vector<std::string> content;
  for (int i = 0; i < n_content; ++i) content.emplace_back(1, static_cast<char>('a' + i));
  return with_markers(content);
}

std::vector<Token> Vocabulary::content_tokens() const {
  std::vector<Token> out;
  for (Token t = 0; t < size(); ++t)
    if (is_content(t)) out.push_back(t);
  return out;
}

std::optional<Token> Vocabulary::find(std::string_view symbol) const {
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    if (tokens_[i] == symbol) return static_cast<Token>(i);
  return std::nullopt;
}

Sequence::Sequence(std::vector<Token> indices, const Vocabulary& vocab, int max_length)
    : tokens_(std::move(indices)) {
  if (tokens_.empty()) throw MalformedSequence("sequence is empty (missing EOS)");
  if (static_cast<int>(tokens_.size()) > max_length)
    throw MalformedSequence("sequence length " + std::to_string(tokens_.size()) +
                            " exceeds max_length " + std::to_string(max_length));
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const Token t = tokens_[i];
    if (t < 0 || t >= vocab.size()) throw MalformedSequence("token index out of range");
    if (t == vocab.bos()) throw MalformedSequence("BOS is never stored in a sequence");
    const bool last = i + 1 == tokens_.size();
    if (last && t != vocab.eos()) throw MalformedSequence("sequence does not end with EOS");
    if (!last && t == vocab.eos()) throw MalformedSequence("EOS before the last position");
  }
}

std::string Sequence::to_string(const Vocabulary& vocab) const {
  std::string out;
  for (Token t : content()) {
    if (!out.empty()) out += ' ';
    out += vocab.symbol(t);
  }
  return out;
}

std::size_t SequenceHash::operator()(const Sequence& s) const noexcept {
  std::size_t h = 1469598103934665603ULL;
  for (Token t : s.indices()) {
    h ^= static_cast<std::size_t>(t) + 0x9e3779b97f4a7c15ULL;
    h *= 1099511628211ULL;
  }
  return h;
}

Sequence parse_sequence(std::string_view text, const Vocabulary& vocab, int max_length) {
  std::vector<Token> idx;
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && text[pos] == ' ') ++pos;
    if (pos >= text.size()) break;
    std::size_t end = text.find(' ', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto sym = text.substr(pos, end - pos);
    const auto t = vocab.find(sym);
    if (!t) throw MalformedSequence("unknown token '" + std::string(sym) + "'");
    idx.push_back(*t);
    pos = end;
  }
  if (idx.empty() || idx.back() != vocab.eos()) idx.push_back(vocab.eos());
  return Sequence(std::move(idx), vocab, max_length);
}

void DecodeRules::apply(std::size_t prefix_length, std::span<double> logits) const {
  logits[static_cast<std::size_t>(bos)] = kNegInf;
  if (static_cast<int>(prefix_length) + 1 >= max_length) {
    for (std::size_t v = 0; v < logits.size(); ++v)
      if (static_cast<Token>(v) != eos) logits[v] = kNegInf;
  }
}

DatasetSplit split_dataset(const std::vector<LabeledExample>& data, double fraction, Rng& rng) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ConfigError("split fraction must lie in (0, 1)");
  if (data.empty()) throw ConfigError("cannot split an empty dataset");
  const auto n_train = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(data.size()) + 0.5));
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle(order, rng);
  DatasetSplit out;
  out.train.reserve(n_train);
  out.eval.reserve(data.size() - n_train);
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < n_train ? out.train : out.eval).push_back(data[order[i]]);
  return out;
}

std::set<Kmer> kmer_set(const Sequence& x, int k) {
  if (k < 1) throw std::invalid_argument("kmer_set: k must be >= 1");
  std::set<Kmer> out;
  const auto c = x.content();
  const auto uk = static_cast<std::size_t>(k);
  if (uk > c.size()) return out;
  for (std::size_t i = 0; i + uk <= c.size(); ++i) out.emplace(c.begin() + i, c.begin() + i + uk);
  return out;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

double parse_number(std::string_view s) {
  s = trim(s);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw std::invalid_argument("not a number: '" + std::string(s) + "'");
  return v;
}

}  // namespace

std::vector<LabeledExample> parse_dataset(std::string_view text, const Vocabulary& vocab,
                                          int max_length, std::string_view source_name) {
  std::vector<LabeledExample> out;
  std::size_t line_no = 0;
  std::size_t n_scores = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) {
      if (end == text.size()) break;
      continue;
    }
    const auto where = std::string(source_name) + ":" + std::to_string(line_no) + ": ";
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) throw ConfigError(where + "expected '<tokens>\\t<scores>'");
    LabeledExample ex;
    try {
      ex.sequence = parse_sequence(line.substr(0, tab), vocab, max_length);
      std::string_view rest = line.substr(tab + 1);
      std::size_t p = 0;
      while (p <= rest.size()) {
        std::size_t c = rest.find(',', p);
        if (c == std::string_view::npos) c = rest.size();
        ex.scores.push_back(parse_number(rest.substr(p, c - p)));
        p = c + 1;
      }
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where + e.what());
    }
    for (double s : ex.scores)
      if (!std::isfinite(s)) throw ConfigError(where + "non-finite score");
    if (n_scores == 0) n_scores = ex.scores.size();
    if (ex.scores.size() != n_scores)
      throw ConfigError(where + "expected " + std::to_string(n_scores) + " scores, got " +
                        std::to_string(ex.scores.size()));
    out.push_back(std::move(ex));
    if (end == text.size()) break;
  }
  return out;
}

std::vector<LabeledExample> read_dataset(const std::filesystem::path& path, const Vocabulary& vocab,
                                         int max_length) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open dataset '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str(), vocab, max_length, path.filename().string());
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string format_dataset(const std::vector<LabeledExample>& data, const Vocabulary& vocab) {
  std::string out;
  for (const auto& ex : data) {
    out += ex.sequence.to_string(vocab);
    out += '\t';
    for (std::size_t i = 0; i < ex.scores.size(); ++i) {
      if (i) out += ',';
      out += format_double(ex.scores[i]);
    }
    out += '\n';
  }
  return out;
}

void write_dataset(const std::filesystem::path& path, const std::vector<LabeledExample>& data,
                   const Vocabulary& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset '" + path.string() + "'");
  out << format_dataset(data, vocab);
}

}  // namespace jsi
