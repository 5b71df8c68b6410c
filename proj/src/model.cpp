#include "jsi/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "jsi/errors.hpp"
#include "jsi/numeric.hpp"

namespace jsi {

double sequence_logprob(const SequenceModel& m, const Sequence& x) {
  double total = 0.0;
  for (double lp : step_logprobs(m, x)) total += lp;
  return total;
}

std::vector<double> step_logprobs(const SequenceModel& m, const Sequence& x) {
  const auto idx = x.indices();
  std::vector<double> row(static_cast<std::size_t>(m.vocab().size()));
  std::vector<double> out;
  out.reserve(idx.size());
  for (std::size_t t = 0; t < idx.size(); ++t) {
    m.next_logprobs(idx.first(t), row);
    out.push_back(row[static_cast<std::size_t>(idx[t])]);
  }
  return out;
}

TemperedView::TemperedView(const SequenceModel& base, double temperature)
    : base_(base), temperature_(temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw ConfigError("temperature must be positive and finite");
}

void TemperedView::next_logprobs(std::span<const Token> prefix, std::span<double> out) const {
  base_.next_logprobs(prefix, out);
  if (temperature_ == 1.0) return;
  for (double& v : out)
    if (v != kNegInf) v /= temperature_;
  log_softmax_inplace(out);
}

namespace {

void enumerate_rec(const SequenceModel& m, std::vector<Token>& prefix, double logp,
                   std::size_t limit, std::vector<WeightedSequence>& out) {
  const auto row = m.next_logprobs(prefix);
  for (std::size_t v = 0; v < row.size(); ++v) {
    if (row[v] == kNegInf) continue;
    prefix.push_back(static_cast<Token>(v));
    if (static_cast<Token>(v) == m.vocab().eos()) {
      if (out.size() >= limit)
        throw SizeError("support exceeds enumeration limit " + std::to_string(limit));
      out.push_back({Sequence(prefix, m.vocab(), m.max_length()), logp + row[v]});
    } else {
      enumerate_rec(m, prefix, logp + row[v], limit, out);
    }
    prefix.pop_back();
  }
}

}  // namespace

std::vector<WeightedSequence> enumerate_support(const SequenceModel& m, std::size_t limit) {
  std::vector<WeightedSequence> out;
  std::vector<Token> prefix;
  enumerate_rec(m, prefix, 0.0, limit, out);
  return out;
}

Sequence sample_ancestral(const SequenceModel& m, Rng& rng) {
  std::vector<Token> prefix;
  std::vector<double> row(static_cast<std::size_t>(m.vocab().size()));
  while (true) {
    m.next_logprobs(prefix, row);
    const double u = rng.uniform_open();
    double cum = 0.0;
    Token pick = -1;
    for (std::size_t v = 0; v < row.size(); ++v) {
      if (row[v] == kNegInf) continue;
      pick = static_cast<Token>(v);
      cum += std::exp(row[v]);
      if (u < cum) break;
    }
    if (pick < 0) throw std::logic_error("model row has no support");
    prefix.push_back(pick);
    if (pick == m.vocab().eos()) return Sequence(std::move(prefix), m.vocab(), m.max_length());
  }
}

}  // namespace jsi
