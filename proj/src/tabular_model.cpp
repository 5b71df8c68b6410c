#include "jsi/tabular_model.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "jsi/errors.hpp"
#include "jsi/numeric.hpp"

namespace jsi {
namespace {

std::string join_tokens(std::span<const Token> ts) {
  std::string s;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(ts[i]);
  }
  return s;
}

std::vector<Token> split_tokens(std::string_view s) {
  std::vector<Token> out;
  std::size_t p = 0;
  while (p < s.size()) {
    std::size_t c = s.find(',', p);
    if (c == std::string_view::npos) c = s.size();
    out.push_back(std::stoi(std::string(s.substr(p, c - p))));
    p = c + 1;
  }
  return out;
}

}  // namespace

TabularJointModel::TabularJointModel(Vocabulary vocab, int max_length, int order,
                                     std::size_t num_targets)
    : vocab_(std::move(vocab)), max_length_(max_length), order_(order), num_targets_(num_targets) {
  if (max_length_ < 1) throw ConfigError("max_length must be >= 1");
  if (order_ < 0) throw ConfigError("context order must be >= 0");
  if (num_targets_ < 1) throw ConfigError("num_targets must be >= 1");
}

TabularJointModel TabularJointModel::random(Vocabulary vocab, int max_length, int order, Rng& rng,
                                            double scale, std::size_t max_rows) {
  TabularJointModel m(std::move(vocab), max_length, order);
  const auto content = m.vocab_.content_tokens();
  const auto v = static_cast<std::size_t>(m.vocab_.size());
  // Breadth-first over prefixes of length < max_length - 1 (longer prefixes
  // are forced to EOS and need no row).
  std::vector<std::vector<Token>> frontier{{}};
  for (int len = 0; len < max_length - 1 && !frontier.empty(); ++len) {
    std::vector<std::vector<Token>> next;
    for (const auto& prefix : frontier) {
      const auto ctx = m.context_of(prefix);
      if (!m.rows_.contains(ctx)) {
        if (m.rows_.size() >= max_rows) throw SizeError("tabular model exceeds max_rows");
        std::vector<double> row(v);
        for (auto& x : row) x = scale * rng.normal();
        m.rows_.emplace(ctx, std::move(row));
      }
      if (len + 1 < max_length - 1) {
        for (Token t : content) {
          auto p = prefix;
          p.push_back(t);
          next.push_back(std::move(p));
        }
      }
    }
    frontier = std::move(next);
  }
  return m;
}

std::vector<Token> TabularJointModel::context_of(std::span<const Token> prefix) const {
  const auto h = static_cast<std::size_t>(order_);
  const auto start = prefix.size() > h ? prefix.size() - h : 0;
  return std::vector<Token>(prefix.begin() + static_cast<std::ptrdiff_t>(start), prefix.end());
}

void TabularJointModel::next_logprobs(std::span<const Token> prefix, std::span<double> out) const {
  const auto it = rows_.find(context_of(prefix));
  if (it == rows_.end()) {
    std::fill(out.begin(), out.end(), 0.0);
  } else {
    std::copy(it->second.begin(), it->second.end(), out.begin());
  }
  rules().apply(prefix.size(), out);
  log_softmax_inplace(out);
}

std::vector<double> TabularJointModel::predict(const Sequence& x) const {
  const auto idx = x.indices();
  const auto it = scores_.find(std::vector<Token>(idx.begin(), idx.end()));
  if (it == scores_.end()) throw std::out_of_range("no score entry for sequence");
  return it->second;
}

std::vector<double>& TabularJointModel::row_logits(std::span<const Token> context) {
  std::vector<Token> key(context.begin(), context.end());
  auto it = rows_.find(key);
  if (it == rows_.end())
    it = rows_.emplace(std::move(key), std::vector<double>(static_cast<std::size_t>(vocab_.size()), 0.0)).first;
  return it->second;
}

void TabularJointModel::set_row_probs(std::span<const Token> context, std::span<const double> probs) {
  auto& row = row_logits(context);
  for (std::size_t v = 0; v < row.size(); ++v) row[v] = probs[v] > 0.0 ? std::log(probs[v]) : kNegInf;
}

void TabularJointModel::set_score(const Sequence& x, std::vector<double> y) {
  if (y.size() != num_targets_) throw std::invalid_argument("score has wrong number of targets");
  const auto idx = x.indices();
  scores_[std::vector<Token>(idx.begin(), idx.end())] = std::move(y);
}

void TabularJointModel::set_scores(const std::function<std::vector<double>(const Sequence&)>& fn) {
  for (const auto& ws : enumerate_support(*this)) set_score(ws.sequence, fn(ws.sequence));
}

RowGradient TabularJointModel::logprob_gradient(const Sequence& x) const {
  RowGradient grad;
  const auto idx = x.indices();
  std::vector<double> row(static_cast<std::size_t>(vocab_.size()));
  for (std::size_t t = 0; t < idx.size(); ++t) {
    const auto prefix = idx.first(t);
    next_logprobs(prefix, row);
    auto& g = grad[context_of(prefix)];
    if (g.empty()) g.assign(row.size(), 0.0);
    for (std::size_t v = 0; v < row.size(); ++v) {
      const double p = row[v] == kNegInf ? 0.0 : std::exp(row[v]);
      g[v] += (static_cast<Token>(v) == idx[t] ? 1.0 : 0.0) - p;
    }
  }
  return grad;
}

Checkpoint TabularJointModel::to_checkpoint() const {
  Checkpoint c;
  c.kind = "tabular";
  std::string symbols;
  for (const auto& s : vocab_.tokens()) symbols += (symbols.empty() ? "" : " ") + s;
  c.blocks.push_back({"vocab:" + symbols, {double(vocab_.bos()), double(vocab_.eos())}});
  c.blocks.push_back({"meta", {double(max_length_), double(order_), double(num_targets_)}});
  for (const auto& [ctx, row] : rows_) c.blocks.push_back({"row:" + join_tokens(ctx), row});
  for (const auto& [seq, y] : scores_) c.blocks.push_back({"score:" + join_tokens(seq), y});
  return c;
}

TabularJointModel TabularJointModel::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "tabular") throw ConfigError("checkpoint kind is '" + ckpt.kind + "', expected tabular");
  if (ckpt.blocks.empty() || ckpt.blocks[0].name.rfind("vocab:", 0) != 0)
    throw ConfigError("tabular checkpoint missing vocab block");
  std::vector<std::string> symbols;
  std::istringstream ss(ckpt.blocks[0].name.substr(6));
  for (std::string s; ss >> s;) symbols.push_back(s);
  const auto& vb = ckpt.blocks[0].values;
  Vocabulary vocab(symbols, static_cast<Token>(vb.at(0)), static_cast<Token>(vb.at(1)));
  const auto& meta = ckpt.block("meta").values;
  TabularJointModel m(std::move(vocab), static_cast<int>(meta.at(0)), static_cast<int>(meta.at(1)),
                      static_cast<std::size_t>(meta.at(2)));
  for (const auto& b : ckpt.blocks) {
    if (b.name.rfind("row:", 0) == 0) m.rows_[split_tokens(b.name.substr(4))] = b.values;
    if (b.name.rfind("score:", 0) == 0) m.scores_[split_tokens(b.name.substr(6))] = b.values;
  }
  return m;
}

}  // namespace jsi
