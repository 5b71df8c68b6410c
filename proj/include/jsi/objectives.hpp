#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "jsi/model.hpp"

namespace jsi {

// Hard cap on oracle evaluations. charge() throws BudgetExhausted on the
// (budget + 1)-th call and leaves `used` unchanged.
class BudgetLedger {
 public:
  explicit BudgetLedger(std::size_t budget) : budget_(budget) {}
  BudgetLedger(const BudgetLedger&) = delete;
  BudgetLedger& operator=(const BudgetLedger&) = delete;

  void charge();
  std::size_t used() const { return used_.load(); }
  std::size_t budget() const { return budget_; }
  std::size_t remaining() const { return budget_ - used(); }

 private:
  std::atomic<std::size_t> used_{0};
  std::size_t budget_;
};

// Ground-truth objective f: X -> R^M behind a budget ledger.
class Oracle {
 public:
  explicit Oracle(std::size_t budget) : ledger_(budget) {}
  virtual ~Oracle() = default;

  virtual std::size_t num_objectives() const = 0;

  std::vector<double> evaluate(const Sequence& x) {
    ledger_.charge();
    return compute(x);
  }

  BudgetLedger& ledger() { return ledger_; }
  const BudgetLedger& ledger() const { return ledger_; }

 protected:
  virtual std::vector<double> compute(const Sequence& x) const = 0;

 private:
  BudgetLedger ledger_;
};

struct Evaluation {
  Sequence sequence;
  std::vector<double> components;
};

// Oracle front end that charges each distinct sequence once and keeps the
// evaluations in first-seen order.
class CachingEvaluator {
 public:
  explicit CachingEvaluator(Oracle& oracle) : oracle_(oracle) {}

  // Throws BudgetExhausted when a new sequence cannot be paid for.
  const std::vector<double>& evaluate(const Sequence& x);
  bool seen(const Sequence& x) const { return index_.count(x) != 0; }
  const std::vector<Evaluation>& log() const { return log_; }
  Oracle& oracle() { return oracle_; }

 private:
  Oracle& oracle_;
  std::unordered_map<Sequence, std::size_t, SequenceHash> index_;
  std::vector<Evaluation> log_;
};

struct Pattern {
  std::vector<Token> tokens;
  double weight = 1.0;
};

// Desk-scale stand-in for a docking objective with two feasibility statistics.
//   affinity = sum_p weight_p * occurrences_p(x) - length_penalty * L
//   primary  = primary_sign * affinity           (sign -1: lower is better)
//   aux1     = exp(-((L - c)/w)^2) * (1 - d + d * distinct/min(L, n_content))   in [0, 1]
//   aux2     = 1 + 9 * penalized_adjacent_pairs / max(1, L - 1)                  in [1, 10]
// L is the content length; occurrences overlap.
struct LandscapeSpec {
  std::vector<Pattern> patterns;
  double length_penalty = 0.05;
  double primary_sign = -1.0;
  double aux1_center = 12.0;
  double aux1_width = 8.0;
  double aux1_diversity_weight = 0.4;
  bool aux2_penalize_repeats = true;
  std::vector<std::pair<Token, Token>> aux2_bigrams;
};

class SyntheticLandscape {
 public:
  SyntheticLandscape(Vocabulary vocab, LandscapeSpec spec);

  // 12 content tokens, 6 weighted patterns of length 3-5.
  static SyntheticLandscape default_landscape();

  const Vocabulary& vocab() const { return vocab_; }
  const LandscapeSpec& spec() const { return spec_; }
  static constexpr std::size_t kNumObjectives = 3;

  // {primary, aux1, aux2}; pure, never charged to a ledger.
  std::vector<double> components(const Sequence& x) const;
  double affinity(const Sequence& x) const;

  // Text form: "@key value" header lines, then "<pattern tokens>\t<weight>".
  std::string to_text() const;
  static SyntheticLandscape parse(std::string_view text, const Vocabulary& vocab);
  static SyntheticLandscape read(const std::filesystem::path& path, const Vocabulary& vocab);

 private:
  Vocabulary vocab_;
  LandscapeSpec spec_;
};

class LandscapeOracle final : public Oracle {
 public:
  LandscapeOracle(const SyntheticLandscape& landscape, std::size_t budget)
      : Oracle(budget), landscape_(landscape) {}
  std::size_t num_objectives() const override { return SyntheticLandscape::kNumObjectives; }

 protected:
  std::vector<double> compute(const Sequence& x) const override { return landscape_.components(x); }

 private:
  const SyntheticLandscape& landscape_;
};

struct ZScoreStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // population standard deviation

  // Throws ConfigError if any component has zero spread.
  static ZScoreStats from_rows(std::span<const std::vector<double>> rows);
  void validate() const;
};

// Mean over i of sign_i * (c_i - mean_i) / std_i.
double aggregate_score(std::span<const double> components, const ZScoreStats& stats,
                       std::span<const double> signs);

// Signs that align the landscape's components to higher-is-better.
std::vector<double> landscape_signs(const LandscapeSpec& spec);

struct HitBounds {
  double aux1_min = 0.5;  // strict: aux1 > aux1_min
  double aux2_max = 5.0;  // strict: aux2 < aux2_max
  bool primary_lower_is_better = true;
};

// Primary strictly better than `threshold` and both auxiliary bounds hold strictly.
bool hit_criterion(std::span<const double> components, double threshold, const HitBounds& bounds = {});

// Median of the primary component over a reference set.
double median(std::vector<double> values);

struct GibbsEntry {
  Sequence sequence;
  double prob;
};

// p*(x) = p(x) exp(f(x)/beta) / Z over the model's full support. f is shifted
// by its maximum before exponentiating. f is a reference
// evaluation, not charged to any ledger.
std::vector<GibbsEntry> gibbs_tilt_exact(const SequenceModel& m,
                                         const std::function<double(const Sequence&)>& f,
                                         double beta, std::size_t limit = 1'000'000);

}  // namespace jsi
