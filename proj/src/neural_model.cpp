#include "jsi/neural_model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "jsi/errors.hpp"
#include "jsi/numeric.hpp"

namespace jsi {

NeuralJointModel::NeuralJointModel(Vocabulary vocab, int max_length, NeuralConfig cfg)
    : vocab_(std::move(vocab)), max_length_(max_length), cfg_(cfg) {
  if (max_length_ < 1) throw ConfigError("max_length must be >= 1");
  if (cfg_.embed_dim < 1 || cfg_.hidden_dim < 1 || cfg_.context < 1 || cfg_.num_targets < 1)
    throw ConfigError("neural model dimensions must be positive");
  layout();
}

NeuralJointModel::NeuralJointModel(Vocabulary vocab, int max_length, NeuralConfig cfg, Rng& rng)
    : NeuralJointModel(std::move(vocab), max_length, cfg) {
  for (const auto& b : blocks_) {
    const bool bias = b.name[0] == 'b';
    for (std::size_t i = 0; i < b.size; ++i)
      params_[b.offset + i] = bias ? 0.0 : rng.uniform(-0.05, 0.05);
  }
}

void NeuralJointModel::layout() {
  const auto v = static_cast<std::size_t>(vocab_.size());
  const auto d = static_cast<std::size_t>(cfg_.embed_dim);
  const auto hid = static_cast<std::size_t>(cfg_.hidden_dim);
  const auto in = static_cast<std::size_t>(cfg_.context) * d;
  const auto m = cfg_.num_targets;
  std::size_t off = 0;
  auto add = [&](const char* name, std::size_t n) {
    blocks_.push_back({name, off, n});
    off += n;
    return blocks_.back().offset;
  };
  e_ = add("embed", v * d);
  w1_ = add("w1", hid * in);
  b1_ = add("b1", hid);
  w2_ = add("w2", d * hid);
  b2_ = add("b2", d);
  wo_ = add("wo", v * d);
  bo_ = add("bo", v);
  ws_ = add("ws", m * d);
  bs_ = add("bs", m);
  params_.assign(off, 0.0);
}

const NeuralJointModel::Block& NeuralJointModel::block(const std::string& name) const {
  for (const auto& b : blocks_)
    if (b.name == name) return b;
  throw std::out_of_range("no parameter block '" + name + "'");
}

bool NeuralJointModel::in_score_head(std::size_t index) const { return index >= ws_; }

bool NeuralJointModel::in_trunk(std::size_t index) const { return index < wo_; }

void NeuralJointModel::trunk(std::span<const Token> prefix, State& st) const {
  const auto d = static_cast<std::size_t>(cfg_.embed_dim);
  const auto hid = static_cast<std::size_t>(cfg_.hidden_dim);
  const auto h = static_cast<std::size_t>(cfg_.context);
  const auto in = h * d;
  st.u.resize(in);
  st.z1.resize(hid);
  st.s.resize(d);
  const double* p = params_.data();
  for (std::size_t j = 0; j < h; ++j) {
    // Window slot j holds x_{t-h+j}.
    const auto back = h - j;
    const Token tok = back <= prefix.size() ? prefix[prefix.size() - back] : vocab_.bos();
    const double* emb = p + e_ + static_cast<std::size_t>(tok) * d;
    std::copy(emb, emb + d, st.u.begin() + static_cast<std::ptrdiff_t>(j * d));
  }
  for (std::size_t i = 0; i < hid; ++i) {
    const double* w = p + w1_ + i * in;
    double a = p[b1_ + i];
    for (std::size_t k = 0; k < in; ++k) a += w[k] * st.u[k];
    st.z1[i] = std::tanh(a);
  }
  for (std::size_t i = 0; i < d; ++i) {
    const double* w = p + w2_ + i * hid;
    double a = p[b2_ + i];
    for (std::size_t k = 0; k < hid; ++k) a += w[k] * st.z1[k];
    st.s[i] = std::tanh(a);
  }
}

void NeuralJointModel::token_logits(const State& st, std::span<double> out) const {
  const auto d = static_cast<std::size_t>(cfg_.embed_dim);
  const double* p = params_.data();
  for (std::size_t v = 0; v < out.size(); ++v) {
    const double* w = p + wo_ + v * d;
    double a = p[bo_ + v];
    for (std::size_t k = 0; k < d; ++k) a += w[k] * st.s[k];
    out[v] = a;
  }
}

void NeuralJointModel::next_logprobs(std::span<const Token> prefix, std::span<double> out) const {
  State st;
  trunk(prefix, st);
  token_logits(st, out);
  rules().apply(prefix.size(), out);
  log_softmax_inplace(out);
}

std::vector<double> NeuralJointModel::predict(const Sequence& x) const {
  const auto d = static_cast<std::size_t>(cfg_.embed_dim);
  const auto idx = x.indices();
  std::vector<double> pooled(d, 0.0);
  State st;
  const std::size_t n_content = idx.size() - 1;
  for (std::size_t t = 1; t <= n_content; ++t) {
    trunk(idx.first(t), st);
    for (std::size_t k = 0; k < d; ++k) pooled[k] += st.s[k];
  }
  if (n_content > 0)
    for (auto& v : pooled) v /= static_cast<double>(n_content);
  std::vector<double> y(cfg_.num_targets);
  const double* p = params_.data();
  for (std::size_t m = 0; m < y.size(); ++m) {
    double a = p[bs_ + m];
    for (std::size_t k = 0; k < d; ++k) a += p[ws_ + m * d + k] * pooled[k];
    y[m] = a;
  }
  return y;
}

double NeuralJointModel::accumulate_gradient(const Sequence& x, double gen_coef,
                                             std::span<const double> y, double pred_coef,
                                             std::span<double> grad) const {
  const auto v_size = static_cast<std::size_t>(vocab_.size());
  const auto d = static_cast<std::size_t>(cfg_.embed_dim);
  const auto hid = static_cast<std::size_t>(cfg_.hidden_dim);
  const auto h = static_cast<std::size_t>(cfg_.context);
  const auto in = h * d;
  const auto m_size = cfg_.num_targets;
  const double* p = params_.data();
  double* g = grad.data();
  const auto idx = x.indices();
  const std::size_t T = idx.size();
  const std::size_t n_content = T - 1;

  std::vector<State> states(T);
  for (std::size_t t = 0; t < T; ++t) trunk(idx.first(t), states[t]);

  // ds[t] accumulates dLoss/ds_t from both heads.
  std::vector<std::vector<double>> ds(T, std::vector<double>(d, 0.0));
  double loss = 0.0;

  if (gen_coef != 0.0) {
    std::vector<double> logits(v_size);
    for (std::size_t t = 0; t < T; ++t) {
      token_logits(states[t], logits);
      rules().apply(t, logits);
      log_softmax_inplace(logits);
      const auto target = static_cast<std::size_t>(idx[t]);
      loss -= gen_coef * logits[target];
      for (std::size_t v = 0; v < v_size; ++v) {
        const double prob = logits[v] == kNegInf ? 0.0 : std::exp(logits[v]);
        const double dl = gen_coef * (prob - (v == target ? 1.0 : 0.0));
        if (dl == 0.0) continue;
        g[bo_ + v] += dl;
        const double* w = p + wo_ + v * d;
        double* gw = g + wo_ + v * d;
        for (std::size_t k = 0; k < d; ++k) {
          gw[k] += dl * states[t].s[k];
          ds[t][k] += dl * w[k];
        }
      }
    }
  }

  if (pred_coef != 0.0) {
    if (y.size() != m_size) throw std::invalid_argument("target size does not match num_targets");
    std::vector<double> pooled(d, 0.0);
    for (std::size_t t = 1; t <= n_content; ++t)
      for (std::size_t k = 0; k < d; ++k) pooled[k] += states[t].s[k];
    if (n_content > 0)
      for (auto& v : pooled) v /= static_cast<double>(n_content);
    std::vector<double> dpooled(d, 0.0);
    for (std::size_t m = 0; m < m_size; ++m) {
      double yhat = p[bs_ + m];
      for (std::size_t k = 0; k < d; ++k) yhat += p[ws_ + m * d + k] * pooled[k];
      const double r = yhat - y[m];
      loss += pred_coef * 0.5 * r * r;
      const double dy = pred_coef * r;
      g[bs_ + m] += dy;
      for (std::size_t k = 0; k < d; ++k) {
        g[ws_ + m * d + k] += dy * pooled[k];
        dpooled[k] += dy * p[ws_ + m * d + k];
      }
    }
    if (n_content > 0) {
      const double inv = 1.0 / static_cast<double>(n_content);
      for (std::size_t t = 1; t <= n_content; ++t)
        for (std::size_t k = 0; k < d; ++k) ds[t][k] += dpooled[k] * inv;
    }
  }

  std::vector<double> da2(d), dz1(hid), da1(hid), du(in);
  for (std::size_t t = 0; t < T; ++t) {
    const auto& st = states[t];
    bool any = false;
    for (std::size_t k = 0; k < d; ++k) {
      da2[k] = ds[t][k] * (1.0 - st.s[k] * st.s[k]);
      any = any || da2[k] != 0.0;
    }
    if (!any) continue;
    std::fill(dz1.begin(), dz1.end(), 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      g[b2_ + i] += da2[i];
      const double* w = p + w2_ + i * hid;
      double* gw = g + w2_ + i * hid;
      for (std::size_t k = 0; k < hid; ++k) {
        gw[k] += da2[i] * st.z1[k];
        dz1[k] += da2[i] * w[k];
      }
    }
    std::fill(du.begin(), du.end(), 0.0);
    for (std::size_t i = 0; i < hid; ++i) {
      da1[i] = dz1[i] * (1.0 - st.z1[i] * st.z1[i]);
      g[b1_ + i] += da1[i];
      const double* w = p + w1_ + i * in;
      double* gw = g + w1_ + i * in;
      for (std::size_t k = 0; k < in; ++k) {
        gw[k] += da1[i] * st.u[k];
        du[k] += da1[i] * w[k];
      }
    }
    const auto prefix = idx.first(t);
    for (std::size_t j = 0; j < h; ++j) {
      const auto back = h - j;
      const Token tok = back <= prefix.size() ? prefix[prefix.size() - back] : vocab_.bos();
      double* ge = g + e_ + static_cast<std::size_t>(tok) * d;
      for (std::size_t k = 0; k < d; ++k) ge[k] += du[j * d + k];
    }
  }
  return loss;
}

Checkpoint NeuralJointModel::to_checkpoint() const {
  Checkpoint c;
  c.kind = "neural";
  std::string symbols;
  for (const auto& s : vocab_.tokens()) symbols += (symbols.empty() ? "" : " ") + s;
  c.blocks.push_back({"vocab:" + symbols, {double(vocab_.bos()), double(vocab_.eos())}});
  c.blocks.push_back({"meta",
                      {double(max_length_), double(cfg_.embed_dim), double(cfg_.hidden_dim),
                       double(cfg_.context), double(cfg_.num_targets)}});
  for (const auto& b : blocks_)
    c.blocks.push_back({b.name, std::vector<double>(params_.begin() + static_cast<std::ptrdiff_t>(b.offset),
                                                    params_.begin() + static_cast<std::ptrdiff_t>(b.offset + b.size))});
  return c;
}

NeuralJointModel NeuralJointModel::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "neural") throw ConfigError("checkpoint kind is '" + ckpt.kind + "', expected neural");
  if (ckpt.blocks.empty() || ckpt.blocks[0].name.rfind("vocab:", 0) != 0)
    throw ConfigError("neural checkpoint missing vocab block");
  std::vector<std::string> symbols;
  std::istringstream ss(ckpt.blocks[0].name.substr(6));
  for (std::string s; ss >> s;) symbols.push_back(s);
  const auto& vb = ckpt.blocks[0].values;
  Vocabulary vocab(symbols, static_cast<Token>(vb.at(0)), static_cast<Token>(vb.at(1)));
  const auto& meta = ckpt.block("meta").values;
  if (meta.size() != 5) throw ConfigError("neural checkpoint meta block malformed");
  NeuralConfig cfg{static_cast<int>(meta[1]), static_cast<int>(meta[2]), static_cast<int>(meta[3]),
                   static_cast<std::size_t>(meta[4])};
  NeuralJointModel m(std::move(vocab), static_cast<int>(meta[0]), cfg);
  for (const auto& b : m.blocks_) {
    const auto& src = ckpt.block(b.name).values;
    if (src.size() != b.size) throw ConfigError("checkpoint block '" + b.name + "' has wrong size");
    std::copy(src.begin(), src.end(), m.params_.begin() + static_cast<std::ptrdiff_t>(b.offset));
  }
  return m;
}

}  // namespace jsi
