// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "jsi/config.hpp"
#include "jsi/harness.hpp"
#include "jsi/tilt_trie.hpp"
#include "jsi/verify/suites.hpp"

using namespace jsi;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

double now() { return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count(); }

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void info(const std::string& line) {
  std::printf("    %s\n", line.c_str());
  std::fflush(stdout);
}

const RunConfig& desk_config() {
  static const RunConfig cfg = load_config(fs::path(JSI_SOURCE_DIR) / "configs" / "desk.json");
  return cfg;
}

const Environment& desk_env() {
  static const Environment env = load_environment(desk_config());
  return env;
}

constexpr std::size_t kSeeds = 10;

// Online records shared by criteria 8, 9 and 10.
struct OnlineSeed {
  RunRecord jsi, bon, reinvent;
  double jsi_seconds = 0.0, seed_seconds = 0.0;
};

std::vector<OnlineSeed>& online_runs() {
  static std::vector<OnlineSeed> runs;
  return runs;
}

RunRecord online(OnlineSampler s, std::uint64_t seed) {
  RunConfig c = desk_config();
  c.seed = seed;
  c.sampler = s;
  return run_online(online_config(c), desk_env());
}

RunRecord offline(OfflineVariant v, std::uint64_t seed) {
  RunConfig c = desk_config();
  c.seed = seed;
  return run_offline(offline_config(c, v), desk_env());
}

void ensure_online_runs() {
  auto& runs = online_runs();
  if (!runs.empty()) return;
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    OnlineSeed s;
    const double t0 = now();
    s.jsi = online(OnlineSampler::kJsi, seed);
    s.jsi_seconds = now() - t0;
    s.bon = online(OnlineSampler::kBestOfN, seed);
    s.reinvent = online(OnlineSampler::kReinvent, seed);
    s.seed_seconds = now() - t0;
    info("seed " + std::to_string(seed) + ": hit% jsi " + fixed(s.jsi.hit_ratio) + ", best-of-n " + fixed(s.bon.hit_ratio) +
         ", reinvent " + fixed(s.reinvent.hit_ratio) + "  (jsi " + fixed(s.jsi_seconds, 1) + "s, all three " +
         fixed(s.seed_seconds, 1) + "s)");
    runs.push_back(std::move(s));
  }
}

Outcome from_suite(const verify::SuiteOutcome& o) { return {o.passed, o.detail}; }

Outcome criterion1() {
  const double t0 = now();
  const auto o = verify::check_trie_exactness(50);
  const double secs = now() - t0;
  return {o.passed && secs < 5.0, o.detail + " runtime=" + fixed(secs, 3) + "s"};
}

Outcome criterion2() {
  const auto o = verify::check_worked_example();
  // The same scenario's trie dump against the checked-in golden file.
  const auto v = Vocabulary::letters(2);
  TabularJointModel m(v, 3, 2);
  m.set_row_probs({}, std::vector<double>{0.0, 0.2, 0.5, 0.3});
  m.set_row_probs(std::vector<Token>{2}, std::vector<double>{0.0, 0.2, 0.4, 0.4});
  m.set_row_probs(std::vector<Token>{3}, std::vector<double>{0.0, 0.3, 0.1, 0.6});
  TiltedView view(m, 1.0);
  const auto aa = parse_sequence("a a", v, 3), ab = parse_sequence("a b", v, 3);
  view.insert_round(std::vector<TiltSample>{{aa, step_logprobs(view, aa), 0.3}, {ab, step_logprobs(view, ab), -0.3}});
  std::ifstream in(fs::path(JSI_SOURCE_DIR) / "tests" / "golden" / "worked_example_trie.tsv");
  std::stringstream golden;
  golden << in.rdbuf();
  const bool same = view.trie().dump(v) == golden.str();
  return {o.passed && same, o.detail + " golden_dump=" + (same ? "match" : "differs")};
}

Outcome criterion8() {
  ensure_online_runs();
  std::size_t beat_bon = 0, beat_reinvent = 0;
  double slowest = 0.0;
  for (const auto& s : online_runs()) {
    beat_bon += s.jsi.hit_ratio > s.bon.hit_ratio ? 1 : 0;
    beat_reinvent += s.jsi.hit_ratio > s.reinvent.hit_ratio ? 1 : 0;
    slowest = std::max(slowest, s.seed_seconds);
  }
  return {beat_bon >= 8 && beat_reinvent >= 8 && slowest < 600.0,
          "jsi>best-of-n in " + std::to_string(beat_bon) + "/10, jsi>reinvent in " + std::to_string(beat_reinvent) +
              "/10, slowest seed " + fixed(slowest, 1) + "s"};
}

Outcome criterion9() {
  const auto& cfg = desk_config();
  std::size_t bad = 0;
  std::string detail;
  for (auto v : {OfflineVariant::kFull, OfflineVariant::kNoJoint, OfflineVariant::kNoSelfImprove}) {
    const auto r = offline(v, 0);
    const bool ok = r.oracle_calls == cfg.evaluation_count && r.oracle_calls_during_optimization == 0 &&
                    r.samples.size() == cfg.evaluation_count;
    bad += ok ? 0 : 1;
    detail += variant_name(v) + " calls=" + std::to_string(r.oracle_calls) + "/during=" +
              std::to_string(r.oracle_calls_during_optimization) + " ";
  }
  ensure_online_runs();
  std::size_t max_calls = 0;
  for (const auto& s : online_runs())
    for (const auto* r : {&s.jsi, &s.bon, &s.reinvent}) {
      max_calls = std::max(max_calls, r->oracle_calls);
      if (r->oracle_calls > cfg.oracle_budget || r->samples.size() != r->oracle_calls) ++bad;
    }
  return {bad == 0, detail + "online max calls=" + std::to_string(max_calls) + "/" + std::to_string(cfg.oracle_budget)};
}

Outcome criterion10() {
  const auto& vocab = desk_env().landscape.vocab();
  const auto dir = fs::temp_directory_path() / "jsi_acceptance_determinism";
  fs::remove_all(dir);
  auto bytes = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  std::size_t compared = 0, differing = 0;
  auto compare = [&](const RunRecord& a, const RunRecord& b) {
    const auto pa = write_run_record(dir / "a", a, vocab);
    const auto pb = write_run_record(dir / "b", b, vocab);
    for (auto [x, y] : {std::pair{pa.json, pb.json}, std::pair{pa.jsonl, pb.jsonl}}) {
      ++compared;
      if (bytes(x) != bytes(y) || x.filename() != y.filename()) ++differing;
    }
  };
  compare(offline(OfflineVariant::kFull, 3), offline(OfflineVariant::kFull, 3));
  compare(online(OnlineSampler::kJsi, 3), online(OnlineSampler::kJsi, 3));
  compare(online(OnlineSampler::kReinvent, 4), online(OnlineSampler::kReinvent, 4));
  fs::remove_all(dir);
  return {differing == 0, std::to_string(compared - differing) + "/" + std::to_string(compared) + " record files byte-identical"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"trie mass-removal exactness", criterion1},
      {"worked K=2 sigma=1 update against enumeration", criterion2},
      {"SBS distinctness, K=1 marginal, evaluation bound", [] { return from_suite(verify::check_sbs(10'000)); }},
      {"advantage identities", [] { return from_suite(verify::check_advantage_identities()); }},
      {"joint-loss gradient check", [] { return from_suite(verify::check_gradients(10)); }},
      {"REINVENT gradient identity", [] { return from_suite(verify::check_reinvent_identity(20)); }},
      {"Gibbs tilt oracle", [] { return from_suite(verify::check_gibbs()); }},
      {"online sample efficiency vs Best-of-N and REINVENT", criterion8},
      {"oracle budget discipline", criterion9},
      {"run record determinism", criterion10},
  };
  std::set<std::size_t> only;
  for (int i = 1; i < argc; ++i) only.insert(static_cast<std::size_t>(std::atoi(argv[i])));

  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const std::size_t id = i + 1;
    if (!only.empty() && !only.count(id)) continue;
    const double t0 = now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.passed;
    std::printf("%s criterion %zu (%s): %s [%.1fs]\n", o.passed ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                o.detail.c_str(), now() - t0);
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
