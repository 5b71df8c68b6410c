#include "jsi/verify/brute_force.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <set>
#include <stdexcept>

namespace jsi::verify {

std::vector<Sequence> all_sequences(const Vocabulary& vocab, int max_length) {
  const auto content = vocab.content_tokens();
  std::vector<Sequence> out;
  std::vector<std::vector<Token>> layer{{}};
  for (int len = 0; len < max_length; ++len) {
    std::vector<std::vector<Token>> next;
    for (const auto& body : layer) {
      auto full = body;
      full.push_back(vocab.eos());
      out.emplace_back(std::move(full), vocab, max_length);
      for (Token t : content) {
        auto longer = body;
        longer.push_back(t);
        next.push_back(std::move(longer));
      }
    }
    layer.swap(next);
  }
  return out;
}

double product_prob(const SequenceModel& m, const Sequence& x) {
  double p = 1.0;
  std::vector<Token> prefix;
  for (Token t : x.indices()) {
    const auto row = m.next_logprobs(prefix);
    p *= std::exp(row[static_cast<std::size_t>(t)]);
    prefix.push_back(t);
  }
  return p;
}

Distribution exact_distribution(const SequenceModel& m) {
  Distribution d;
  for (auto& x : all_sequences(m.vocab(), m.max_length())) {
    const double p = product_prob(m, x);
    d.emplace(std::move(x), p);
  }
  return d;
}

Distribution renormalized_excluding(const Distribution& p, std::span<const Sequence> removed) {
  const std::set<Sequence> gone(removed.begin(), removed.end());
  double mass = 0.0;
  for (const auto& x : gone) mass += p.at(x);
  Distribution out;
  for (const auto& [x, px] : p) out.emplace(x, gone.count(x) ? 0.0 : px / (1.0 - mass));
  return out;
}

DenseTilt::DenseTilt(const SequenceModel& base) : vocab_(base.vocab()), max_length_(base.max_length()) {
  // Rows for every prefix of every well-formed sequence.
  for (const auto& x : all_sequences(vocab_, max_length_)) {
    const auto idx = x.indices();
    for (std::size_t t = 0; t < idx.size(); ++t) {
      std::vector<Token> prefix(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(t));
      if (rows_.count(prefix)) continue;
      auto row = base.next_logprobs(prefix);
      for (double& v : row) v = std::exp(v);
      rows_.emplace(std::move(prefix), std::move(row));
    }
  }
}

double DenseTilt::prob(const Sequence& x) const {
  double p = 1.0;
  std::vector<Token> prefix;
  for (Token t : x.indices()) {
    p *= rows_.at(prefix)[static_cast<std::size_t>(t)];
    prefix.push_back(t);
  }
  return p;
}

void DenseTilt::apply_round(std::span<const RoundSample> samples, double sigma) {
  // (prefix u, token v) -> (sum of p(x | u) over samples through uv, sum of advantages)
  std::map<std::pair<std::vector<Token>, Token>, std::pair<double, double>> agg;
  for (const auto& s : samples) {
    const auto idx = s.sequence.indices();
    for (std::size_t t = 0; t < idx.size(); ++t) {
      std::vector<Token> u(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(t));
      double pxu = 1.0;  // p(x | u) = prod over steps t..T-1
      std::vector<Token> pre = u;
      for (std::size_t j = t; j < idx.size(); ++j) {
        pxu *= rows_.at(pre)[static_cast<std::size_t>(idx[j])];
        pre.push_back(idx[j]);
      }
      auto& a = agg[{u, idx[t]}];
      a.first += pxu;
      a.second += s.advantage;
    }
  }
  std::map<std::vector<Token>, std::vector<double>> updated;
  for (const auto& [key, val] : agg) {
    const auto& [u, v] = key;
    auto it = updated.find(u);
    if (it == updated.end()) {
      std::vector<double> logits(rows_.at(u).size());
      for (std::size_t i = 0; i < logits.size(); ++i) logits[i] = std::log(rows_.at(u)[i]);
      it = updated.emplace(u, std::move(logits)).first;
    }
    const double remaining = rows_.at(u)[static_cast<std::size_t>(v)] - val.first;
    it->second[static_cast<std::size_t>(v)] =
        remaining <= 1e-15 ? -INFINITY : std::log(remaining) + sigma * val.second;
  }
  for (auto& [u, logits] : updated) {
    double mx = -INFINITY;
    for (double l : logits) mx = std::max(mx, l);
    auto& row = rows_.at(u);
    if (mx == -INFINITY) {  // every continuation sampled: the prefix is unreachable
      std::fill(row.begin(), row.end(), 0.0);
      continue;
    }
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    for (std::size_t i = 0; i < row.size(); ++i) row[i] = std::exp(logits[i] - mx) / z;
  }
}

Distribution DenseTilt::distribution() const {
  Distribution d;
  for (auto& x : all_sequences(vocab_, max_length_)) {
    const double p = prob(x);
    d.emplace(std::move(x), p);
  }
  return d;
}

double individual_advantage_brute(const TabularJointModel& m, std::span<const Token> prefix, Token token) {
  double mass_prefix = 0.0, score_prefix = 0.0, mass_tok = 0.0, score_tok = 0.0;
  for (const auto& x : all_sequences(m.vocab(), m.max_length())) {
    const auto idx = x.indices();
    if (idx.size() < prefix.size() || !std::equal(prefix.begin(), prefix.end(), idx.begin())) continue;
    const double p = product_prob(m, x);
    if (p == 0.0) continue;
    const double s = m.predict(x)[0];
    mass_prefix += p;
    score_prefix += p * s;
    if (idx.size() > prefix.size() && idx[prefix.size()] == token) {
      mass_tok += p;
      score_tok += p * s;
    }
  }
  if (mass_tok == 0.0) return 0.0;
  return score_tok / mass_tok - score_prefix / mass_prefix;
}

double chi_square_p_value(std::span<const double> observed, std::span<const double> expected,
                          double min_expected) {
  if (observed.size() != expected.size()) throw std::invalid_argument("chi-square: size mismatch");
  double stat = 0.0, pooled_o = 0.0, pooled_e = 0.0;
  int bins = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (expected[i] < min_expected) {
      pooled_o += observed[i];
      pooled_e += expected[i];
      continue;
    }
    stat += (observed[i] - expected[i]) * (observed[i] - expected[i]) / expected[i];
    ++bins;
  }
  if (pooled_e > 0.0) {
    stat += (pooled_o - pooled_e) * (pooled_o - pooled_e) / pooled_e;
    ++bins;
  }
  if (bins < 2) return 1.0;
  boost::math::chi_squared dist(bins - 1);
  return boost::math::cdf(boost::math::complement(dist, stat));
}

double intdiv_pairwise(std::span<const Sequence> xs, int k) {
  auto grams = [k](const Sequence& x) {
    std::vector<std::vector<Token>> g;
    const auto c = x.content();
    for (std::size_t i = 0; i + static_cast<std::size_t>(k) <= c.size(); ++i) {
      std::vector<Token> w(c.begin() + static_cast<std::ptrdiff_t>(i),
                           c.begin() + static_cast<std::ptrdiff_t>(i) + k);
      if (std::find(g.begin(), g.end(), w) == g.end()) g.push_back(std::move(w));
    }
    return g;
  };
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto a = grams(xs[i]);
    for (std::size_t j = i + 1; j < xs.size(); ++j) {
      const auto b = grams(xs[j]);
      std::size_t inter = 0;
      for (const auto& w : a)
        if (std::find(b.begin(), b.end(), w) != b.end()) ++inter;
      const std::size_t uni = a.size() + b.size() - inter;
      const double sim = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
      total += 1.0 - sim;
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

double aggregate_formula(std::span<const double> c, std::span<const double> mean,
                         std::span<const double> sd, std::span<const double> signs) {
  double s = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) s += signs[i] * ((c[i] - mean[i]) / sd[i]);
  return s / static_cast<double>(c.size());
}

}  // namespace jsi::verify
