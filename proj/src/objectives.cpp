#include "jsi/objectives.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "jsi/errors.hpp"
#include "jsi/numeric.hpp"

namespace jsi {

void BudgetLedger::charge() {
  std::size_t cur = used_.load();
  do {
    if (cur >= budget_)
      throw BudgetExhausted("oracle budget of " + std::to_string(budget_) + " evaluations exhausted");
  } while (!used_.compare_exchange_weak(cur, cur + 1));
}

const std::vector<double>& CachingEvaluator::evaluate(const Sequence& x) {
  if (auto it = index_.find(x); it != index_.end()) return log_[it->second].components;
  auto components = oracle_.evaluate(x);
  index_.emplace(x, log_.size());
  log_.push_back({x, std::move(components)});
  return log_.back().components;
}

SyntheticLandscape::SyntheticLandscape(Vocabulary vocab, LandscapeSpec spec)
    : vocab_(std::move(vocab)), spec_(std::move(spec)) {
  for (const auto& p : spec_.patterns) {
    if (p.tokens.empty()) throw ConfigError("landscape pattern is empty");
    for (Token t : p.tokens)
      if (!vocab_.is_content(t)) throw ConfigError("landscape pattern uses a non-content token");
    if (!std::isfinite(p.weight)) throw ConfigError("landscape pattern weight must be finite");
  }
  if (!(spec_.aux1_width > 0.0)) throw ConfigError("aux1_width must be > 0");
  if (spec_.aux1_diversity_weight < 0.0 || spec_.aux1_diversity_weight > 1.0)
    throw ConfigError("aux1_diversity_weight must lie in [0, 1]");
  if (spec_.primary_sign != 1.0 && spec_.primary_sign != -1.0) throw ConfigError("primary_sign must be +1 or -1");
}

SyntheticLandscape SyntheticLandscape::default_landscape() {
  auto vocab = Vocabulary::letters(12);
  auto pat = [&](std::string_view s, double w) {
    const auto x = parse_sequence(s, vocab, 64);
    return Pattern{std::vector<Token>(x.content().begin(), x.content().end()), w};
  };
  LandscapeSpec spec;
  spec.patterns = {pat("a b c", 1.0),     pat("d e f g", 2.0), pat("h h i", 1.5),
                   pat("c a b d", 1.2),   pat("j k l j k", 3.0), pat("g g f e", 1.8)};
  const Token b = *vocab.find("b"), a = *vocab.find("a"), f = *vocab.find("f"), e = *vocab.find("e");
  spec.aux2_bigrams = {{b, a}, {f, e}};
  return SyntheticLandscape(std::move(vocab), std::move(spec));
}

double SyntheticLandscape::affinity(const Sequence& x) const {
  const auto c = x.content();
  double score = -spec_.length_penalty * static_cast<double>(c.size());
  for (const auto& p : spec_.patterns) {
    const auto n = p.tokens.size();
    if (n > c.size()) continue;
    for (std::size_t i = 0; i + n <= c.size(); ++i)
      if (std::equal(p.tokens.begin(), p.tokens.end(), c.begin() + static_cast<std::ptrdiff_t>(i)))
        score += p.weight;
  }
  return score;
}

std::vector<double> SyntheticLandscape::components(const Sequence& x) const {
  const auto c = x.content();
  const double len = static_cast<double>(c.size());
  const double primary = spec_.primary_sign * affinity(x);

  const double z = (len - spec_.aux1_center) / spec_.aux1_width;
  const auto n_content = static_cast<double>(vocab_.content_tokens().size());
  const double distinct = static_cast<double>(std::set<Token>(c.begin(), c.end()).size());
  const double ratio = c.empty() ? 0.0 : distinct / std::min(len, n_content);
  const double d = spec_.aux1_diversity_weight;
  const double aux1 = std::exp(-z * z) * (1.0 - d + d * ratio);

  double penalized = 0.0;
  for (std::size_t i = 0; i + 1 < c.size(); ++i) {
    const bool repeat = spec_.aux2_penalize_repeats && c[i] == c[i + 1];
    const bool listed = std::find(spec_.aux2_bigrams.begin(), spec_.aux2_bigrams.end(),
                                  std::pair<Token, Token>{c[i], c[i + 1]}) != spec_.aux2_bigrams.end();
    if (repeat || listed) penalized += 1.0;
  }
  const double aux2 = 1.0 + 9.0 * penalized / std::max(1.0, len - 1.0);
  return {primary, aux1, aux2};
}

std::string SyntheticLandscape::to_text() const {
  std::ostringstream out;
  out.precision(17);
  out << "@length_penalty " << spec_.length_penalty << '\n'
      << "@primary_sign " << spec_.primary_sign << '\n'
      << "@aux1_center " << spec_.aux1_center << '\n'
      << "@aux1_width " << spec_.aux1_width << '\n'
      << "@aux1_diversity_weight " << spec_.aux1_diversity_weight << '\n'
      << "@aux2_repeats " << (spec_.aux2_penalize_repeats ? 1 : 0) << '\n';
  for (const auto& [x, y] : spec_.aux2_bigrams)
    out << "@aux2_bigram " << vocab_.symbol(x) << ' ' << vocab_.symbol(y) << '\n';
  for (const auto& p : spec_.patterns) {
    for (std::size_t i = 0; i < p.tokens.size(); ++i) out << (i ? " " : "") << vocab_.symbol(p.tokens[i]);
    out << '\t' << p.weight << '\n';
  }
  return out.str();
}

namespace {

double to_number(std::string_view s, const std::string& where) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw ConfigError(where + "expected a number, got '" + std::string(s) + "'");
  return v;
}

Token to_token(const std::string& sym, const Vocabulary& vocab, const std::string& where) {
  const auto t = vocab.find(sym);
  if (!t || !vocab.is_content(*t)) throw ConfigError(where + "unknown content token '" + sym + "'");
  return *t;
}

}  // namespace

SyntheticLandscape SyntheticLandscape::parse(std::string_view text, const Vocabulary& vocab) {
  LandscapeSpec spec;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto where = "landscape:" + std::to_string(line_no) + ": ";
    if (line.find_first_not_of(" \t") == std::string::npos || line[0] == '#') continue;
    if (line[0] == '@') {
      std::istringstream ls(line.substr(1));
      std::string key, v1, v2;
      ls >> key >> v1 >> v2;
      if (key == "length_penalty") spec.length_penalty = to_number(v1, where);
      else if (key == "primary_sign") spec.primary_sign = to_number(v1, where);
      else if (key == "aux1_center") spec.aux1_center = to_number(v1, where);
      else if (key == "aux1_width") spec.aux1_width = to_number(v1, where);
      else if (key == "aux1_diversity_weight") spec.aux1_diversity_weight = to_number(v1, where);
      else if (key == "aux2_repeats") spec.aux2_penalize_repeats = to_number(v1, where) != 0.0;
      else if (key == "aux2_bigram")
        spec.aux2_bigrams.emplace_back(to_token(v1, vocab, where), to_token(v2, vocab, where));
      else throw ConfigError(where + "unknown header key '" + key + "'");
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ConfigError(where + "expected '<pattern>\\t<weight>'");
    Pattern p;
    std::istringstream ts(line.substr(0, tab));
    for (std::string sym; ts >> sym;) p.tokens.push_back(to_token(sym, vocab, where));
    p.weight = to_number(line.substr(tab + 1), where);
    if (p.tokens.empty()) throw ConfigError(where + "empty pattern");
    spec.patterns.push_back(std::move(p));
  }
  return SyntheticLandscape(vocab, std::move(spec));
}

SyntheticLandscape SyntheticLandscape::read(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open landscape '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), vocab);
}

void ZScoreStats::validate() const {
  if (mean.size() != stddev.size() || mean.empty()) throw ConfigError("z-score stats malformed");
  for (double s : stddev)
    if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("z-score stats: standard deviation must be > 0");
}

ZScoreStats ZScoreStats::from_rows(std::span<const std::vector<double>> rows) {
  if (rows.empty()) throw ConfigError("z-score stats need at least one row");
  const std::size_t m = rows[0].size();
  ZScoreStats st{std::vector<double>(m, 0.0), std::vector<double>(m, 0.0)};
  for (const auto& r : rows) {
    if (r.size() != m) throw ConfigError("z-score stats: ragged rows");
    for (std::size_t i = 0; i < m; ++i) st.mean[i] += r[i];
  }
  const double n = static_cast<double>(rows.size());
  for (auto& v : st.mean) v /= n;
  for (const auto& r : rows)
    for (std::size_t i = 0; i < m; ++i) st.stddev[i] += (r[i] - st.mean[i]) * (r[i] - st.mean[i]);
  for (auto& v : st.stddev) v = std::sqrt(v / n);
  st.validate();
  return st;
}

double aggregate_score(std::span<const double> components, const ZScoreStats& stats,
                       std::span<const double> signs) {
  stats.validate();
  const std::size_t m = components.size();
  if (stats.mean.size() != m || signs.size() != m) throw ConfigError("aggregate_score: arity mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < m; ++i) acc += signs[i] * (components[i] - stats.mean[i]) / stats.stddev[i];
  return acc / static_cast<double>(m);
}

std::vector<double> landscape_signs(const LandscapeSpec& spec) {
  // Primary is flipped when lower is better; aux1 is higher-is-better, aux2 lower.
  return {spec.primary_sign < 0 ? -1.0 : 1.0, 1.0, -1.0};
}

bool hit_criterion(std::span<const double> components, double threshold, const HitBounds& bounds) {
  if (components.size() < 3) throw std::invalid_argument("hit_criterion needs primary, aux1, aux2");
  const bool primary_ok =
      bounds.primary_lower_is_better ? components[0] < threshold : components[0] > threshold;
  return primary_ok && components[1] > bounds.aux1_min && components[2] < bounds.aux2_max;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<GibbsEntry> gibbs_tilt_exact(const SequenceModel& m,
                                         const std::function<double(const Sequence&)>& f,
                                         double beta, std::size_t limit) {
  if (!(beta > 0.0)) throw std::invalid_argument("gibbs_tilt_exact: beta must be > 0");
  auto support = enumerate_support(m, limit);
  std::vector<double> fx(support.size());
  double fmax = kNegInf;
  for (std::size_t i = 0; i < support.size(); ++i) {
    fx[i] = f(support[i].sequence);
    if (!std::isfinite(fx[i])) throw std::invalid_argument("gibbs_tilt_exact: f must be finite");
    fmax = std::max(fmax, fx[i]);
  }
  // Shifting f by its maximum keeps exp() in range and makes a constant f
  // drop out bit for bit.
  std::vector<double> logw(support.size());
  for (std::size_t i = 0; i < support.size(); ++i) logw[i] = support[i].logprob + (fx[i] - fmax) / beta;
  const double z = log_sum_exp(logw);
  std::vector<GibbsEntry> out;
  out.reserve(support.size());
  for (std::size_t i = 0; i < support.size(); ++i)
    out.push_back({std::move(support[i].sequence), std::exp(logw[i] - z)});
  return out;
}

}  // namespace jsi
