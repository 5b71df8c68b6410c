#include "jsi/sbs.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "jsi/numeric.hpp"

namespace jsi {

double conditional_gumbel_key(double parent_key, double perturbed, double max_perturbed) {
  const double v = parent_key - perturbed + log1m_exp(perturbed - max_perturbed);
  if (v == kNegInf) return parent_key;
  return parent_key - std::max(0.0, v) - std::log1p(std::exp(-std::abs(v)));
}

namespace {

struct BeamItem {
  std::vector<Token> prefix;
  std::vector<double> steps;
  double logprob = 0.0;
  double key = 0.0;
  bool done = false;
};

bool ranks_before(const BeamItem& a, const BeamItem& b) {
  if (a.key != b.key) return a.key > b.key;
  return a.prefix < b.prefix;
}

SbsResult run(const SequenceModel& view, std::size_t k, Rng& rng) {
  const Token eos = view.vocab().eos();
  SbsResult res;
  std::vector<BeamItem> beam(1);
  beam[0].key = rng.gumbel();
  std::vector<double> row(static_cast<std::size_t>(view.vocab().size()));
  std::vector<double> perturbed;
  std::vector<Token> children;
  std::vector<BeamItem> candidates;

  auto all_done = [&] {
    return std::all_of(beam.begin(), beam.end(), [](const BeamItem& b) { return b.done; });
  };
  while (!beam.empty() && !all_done()) {
    candidates.clear();
    for (auto& item : beam) {
      if (item.done) {
        candidates.push_back(std::move(item));
        continue;
      }
      view.next_logprobs(item.prefix, row);
      ++res.model_evaluations;
      children.clear();
      perturbed.clear();
      double z = kNegInf;
      for (std::size_t v = 0; v < row.size(); ++v) {
        if (row[v] == kNegInf) continue;
        children.push_back(static_cast<Token>(v));
        const double g = item.logprob + row[v] + rng.gumbel();
        perturbed.push_back(g);
        z = std::max(z, g);
      }
      for (std::size_t c = 0; c < children.size(); ++c) {
        BeamItem child;
        child.prefix = item.prefix;
        child.prefix.push_back(children[c]);
        child.steps = item.steps;
        const double lp = row[static_cast<std::size_t>(children[c])];
        child.steps.push_back(lp);
        child.logprob = item.logprob + lp;
        child.key = conditional_gumbel_key(item.key, perturbed[c], z);
        child.done = children[c] == eos;
        candidates.push_back(std::move(child));
      }
    }
    const std::size_t keep = std::min(k, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                      candidates.end(), ranks_before);
    candidates.resize(keep);
    beam.swap(candidates);
  }
  res.truncated = beam.size() < k;
  for (auto& item : beam) {
    res.sequences.emplace_back(std::move(item.prefix), view.vocab(), view.max_length());
    res.logprobs.push_back(item.logprob);
    res.keys.push_back(item.key);
    res.step_logprobs.push_back(std::move(item.steps));
  }
  return res;
}

}  // namespace

SbsResult sbs_sample(const SequenceModel& view, std::size_t k, double temperature, Rng& rng) {
  if (k == 0) throw std::invalid_argument("sbs_sample: K must be >= 1");
  if (temperature == 1.0) return run(view, k, rng);
  TemperedView tempered(view, temperature);
  return run(tempered, k, rng);
}

}  // namespace jsi
