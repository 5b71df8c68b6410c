#include "jsi/tilt_trie.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "jsi/errors.hpp"

namespace jsi {
namespace {

std::atomic<bool> g_flip_sign{false};

// Floor on log(1 - f) for a node that is not structurally exhausted but whose
// sampled fraction rounds to one: keep roughly one ulp of the remaining mass.
constexpr double kMinLogRemaining = -36.04;

}  // namespace

void set_tilt_sign_flip_for_testing(bool on) { g_flip_sign.store(on); }

TiltTrie::TiltTrie() { nodes_.emplace_back(); }

std::uint32_t TiltTrie::child(std::uint32_t parent, Token token) const {
  const auto& ch = nodes_[parent].children;
  const auto it = std::lower_bound(ch.begin(), ch.end(), token,
                                   [](const auto& p, Token t) { return p.first < t; });
  return (it != ch.end() && it->first == token) ? it->second : kNone;
}

std::uint32_t TiltTrie::find(std::span<const Token> prefix) const {
  std::uint32_t cur = 0;
  for (Token t : prefix) {
    cur = child(cur, t);
    if (cur == kNone) return kNone;
  }
  return cur;
}

std::uint32_t TiltTrie::add_child(std::uint32_t parent, Token token, double base_cond_logprob) {
  const auto idx = static_cast<std::uint32_t>(nodes_.size());
  Node n;
  n.token = token;
  n.depth = nodes_[parent].depth + 1;
  n.parent = parent;
  n.base_cond_logprob = base_cond_logprob;
  n.logit = base_cond_logprob;
  nodes_.push_back(std::move(n));
  auto& ch = nodes_[parent].children;
  const auto it = std::lower_bound(ch.begin(), ch.end(), token,
                                   [](const auto& p, Token t) { return p.first < t; });
  ch.insert(it, {token, idx});
  return idx;
}

void TiltTrie::ensure_base_row(std::uint32_t i, const SequenceModel& base,
                               std::span<const Token> prefix) {
  auto& n = nodes_[i];
  if (n.support >= 0) return;
  n.base_row = base.next_logprobs(prefix);
  n.support = static_cast<int>(
      std::count_if(n.base_row.begin(), n.base_row.end(), [](double v) { return v != kNegInf; }));
}

void TiltTrie::insert_round(const SequenceModel& base, double sigma,
                            std::span<const TiltSample> samples) {
  if (g_flip_sign.load()) sigma = -sigma;
  const Token eos = base.vocab().eos();

  struct Acc {
    double tail = kNegInf;  // log sum of current-view suffix probabilities
    double adv = 0.0;
  };
  std::unordered_map<std::uint32_t, Acc> acc;
  std::vector<std::uint32_t> touched;
  std::vector<std::uint32_t> path;
  std::vector<double> view_tail;

  for (const auto& s : samples) {
    const auto idx = s.sequence.indices();
    const std::size_t T = idx.size();
    if (s.step_logprobs.size() != T)
      throw std::invalid_argument("insert_round: step_logprobs length differs from sequence length");
    if (find(idx) != kNone)
      throw DuplicateSample("insert_round: sequence already sampled: " + s.sequence.to_string(base.vocab()));

    path.clear();
    std::uint32_t cur = 0;
    for (std::size_t t = 0; t < T; ++t) {
      std::uint32_t nxt = child(cur, idx[t]);
      if (nxt == kNone) {
        ensure_base_row(cur, base, idx.first(t));
        const double b = nodes_[cur].base_row[static_cast<std::size_t>(idx[t])];
        if (b == kNegInf) throw std::logic_error("insert_round: token has zero base probability");
        nxt = add_child(cur, idx[t], b);
      }
      path.push_back(nxt);
      cur = nxt;
    }

    // Suffix sums, both under the base (for removed_logmass) and under the
    // view the sample was drawn from (for the update).
    view_tail.assign(T, 0.0);
    double base_suffix = 0.0;
    for (std::size_t t = T; t-- > 0;) {
      if (t + 1 < T) view_tail[t] = view_tail[t + 1] + s.step_logprobs[t + 1];
      auto& n = nodes_[path[t]];
      base_suffix += n.base_cond_logprob;
      n.removed_logmass = log_add_exp(n.removed_logmass, base_suffix);
    }
    for (std::size_t t = 0; t < T; ++t) {
      auto [it, fresh] = acc.try_emplace(path[t]);
      if (fresh) touched.push_back(path[t]);
      it->second.tail = log_add_exp(it->second.tail, view_tail[t]);
      it->second.adv += s.advantage;
    }
  }

  for (std::uint32_t i : touched) {
    auto& n = nodes_[i];
    const auto& a = acc[i];
    n.advantage_sum += a.adv;
    if (n.token != eos && !n.exhausted)
      n.logit += std::max(log1m_exp(a.tail), kMinLogRemaining) + sigma * a.adv;
  }

  std::sort(touched.begin(), touched.end(), [this](std::uint32_t a, std::uint32_t b) {
    return nodes_[a].depth != nodes_[b].depth ? nodes_[a].depth > nodes_[b].depth : a < b;
  });
  auto settle = [this, eos](std::uint32_t i) {
    auto& n = nodes_[i];
    if (n.exhausted) return;
    const bool leaf = n.token == eos;
    if (leaf || (n.support >= 0 && n.exhausted_children == n.support)) {
      n.exhausted = true;
      n.logit = kNegInf;
      if (n.parent != kNone) ++nodes_[n.parent].exhausted_children;
    }
  };
  for (std::uint32_t i : touched) settle(i);
  auto& root = nodes_[0];
  if (!root.exhausted && root.support >= 0 && root.exhausted_children == root.support) root.exhausted = true;
}

std::string TiltTrie::dump(const Vocabulary& vocab) const {
  std::ostringstream out;
  out.precision(17);
  std::vector<std::uint32_t> stack;
  for (auto it = nodes_[0].children.rbegin(); it != nodes_[0].children.rend(); ++it) stack.push_back(it->second);
  while (!stack.empty()) {
    const auto i = stack.back();
    stack.pop_back();
    const auto& n = nodes_[i];
    out << n.depth << '\t' << vocab.symbol(n.token) << '\t' << n.base_cond_logprob << '\t'
        << n.removed_logmass << '\t' << n.advantage_sum << '\t' << (n.exhausted ? 1 : 0) << '\n';
    for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) stack.push_back(it->second);
  }
  return out.str();
}

TiltedView::TiltedView(const SequenceModel& base, double sigma) : base_(base), sigma_(sigma) {
  if (!std::isfinite(sigma) || sigma < 0.0) throw ConfigError("step size must be finite and >= 0");
}

void TiltedView::next_logprobs(std::span<const Token> prefix, std::span<double> out) const {
  const auto i = trie_.find(prefix);
  if (i == TiltTrie::kNone || trie_.node(i).children.empty()) {
    base_.next_logprobs(prefix, out);
    return;
  }
  const auto& n = trie_.node(i);
  std::copy(n.base_row.begin(), n.base_row.end(), out.begin());
  for (const auto& [tok, ci] : n.children) {
    const auto& c = trie_.node(ci);
    out[static_cast<std::size_t>(tok)] = c.exhausted ? kNegInf : c.logit;
  }
  log_softmax_inplace(out);
}

double sequence_prob_under_view(const SequenceModel& view, const Sequence& x) {
  return std::exp(sequence_logprob(view, x));
}

}  // namespace jsi
