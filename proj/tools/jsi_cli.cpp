#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>
#include <sstream>

#include "jsi/checkpoint.hpp"
#include "jsi/config.hpp"
#include "jsi/errors.hpp"
#include "jsi/harness.hpp"
#include "jsi/tilt_trie.hpp"
#include "jsi/verify/suites.hpp"

namespace fs = std::filesystem;
using namespace jsi;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON config file (defaults apply when omitted)");
  cmd->add_option("--seed", c.seed, "override run.seed");
  cmd->add_option("--out", c.out, "output directory (else $JSI_OUT_DIR, else ./out)");
  cmd->add_flag("--quiet", c.quiet, "print nothing but errors");
}

fs::path out_dir(const Common& c) {
  if (!c.out.empty()) return c.out;
  if (const char* env = std::getenv("JSI_OUT_DIR"); env && *env) return env;
  return "out";
}

RunConfig resolve_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? parse_config("{}") : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string fixed(double v, int digits = 2) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

void say(const Common& c, const std::string& line) {
  if (!c.quiet) std::cout << line << '\n';
}

void summarize(const Common& c, const RunRecord& r, const RecordPaths& p) {
  say(c, r.kind + " seed " + std::to_string(r.seed) + ": hit ratio " + fixed(r.hit_ratio) + "%, intdiv1 " +
             (r.intdiv1 ? fixed(*r.intdiv1, 3) : std::string("n/a")) + ", oracle calls " +
             std::to_string(r.oracle_calls) + "/" + std::to_string(r.oracle_budget));
  say(c, "  record: " + p.json.string());
}

int cmd_train(const Common& c) {
  const auto cfg = resolve_config(c);
  if (cfg.data.dataset_path.empty()) throw ConfigError("train needs run.dataset in the config");
  if (!fs::exists(cfg.data.dataset_path)) throw ConfigError("dataset not found: " + cfg.data.dataset_path);
  const auto landscape = cfg.landscape.empty() ? SyntheticLandscape::default_landscape()
                                               : SyntheticLandscape::read(cfg.landscape, SyntheticLandscape::default_landscape().vocab());
  const auto data = read_dataset(cfg.data.dataset_path, landscape.vocab(), cfg.model.max_length);
  if (data.empty()) throw ConfigError("dataset is empty: " + cfg.data.dataset_path);

  Rng init(cfg.seed), order(cfg.seed ^ 0x5eedULL);
  NeuralConfig nc = cfg.model.neural;
  nc.num_targets = data.front().scores.size();
  NeuralJointModel model(landscape.vocab(), cfg.model.max_length, nc, init);
  const auto res = train_joint(model, data, cfg.train, order);

  const auto dir = out_dir(c);
  const std::string stem = "model_seed" + std::to_string(cfg.seed);
  fs::create_directories(dir);
  write_checkpoint(dir / (stem + ".ckpt"), model.to_checkpoint());
  std::string csv = "step,loss\n";
  for (std::size_t i = 0; i < res.loss_trace.size(); ++i) csv += std::to_string(i) + "," + format_double(res.loss_trace[i]) + "\n";
  write_text(dir / (stem + "_loss.csv"), csv);
  say(c, "trained " + std::to_string(res.steps) + " steps over " + std::to_string(res.epochs_run) + " epochs; final loss " +
             (res.loss_trace.empty() ? std::string("n/a") : fixed(res.loss_trace.back(), 4)));
  say(c, "  checkpoint: " + (dir / (stem + ".ckpt")).string());
  return 0;
}

int cmd_offline(const Common& c) {
  const auto cfg = resolve_config(c);
  const auto env = load_environment(cfg);
  const auto r = run_offline(offline_config(cfg, OfflineVariant::kFull), env);
  if (r.oracle_calls_during_optimization != 0 || r.oracle_calls > r.oracle_budget)
    throw std::runtime_error("offline budget contract violated");
  summarize(c, r, write_run_record(out_dir(c), r, env.landscape.vocab()));
  return 0;
}

int cmd_online(const Common& c) {
  const auto cfg = resolve_config(c);
  const auto env = load_environment(cfg);
  const auto r = run_online(online_config(cfg), env);
  if (r.oracle_calls > r.oracle_budget) throw std::runtime_error("online run exceeded its oracle budget");
  summarize(c, r, write_run_record(out_dir(c), r, env.landscape.vocab()));
  return 0;
}

int cmd_ablate(const Common& c) {
  const auto cfg = resolve_config(c);
  const auto env = load_environment(cfg);
  const auto dir = out_dir(c);
  std::string table = "variant\thit_ratio\tintdiv1\tseconds_per_sample\n";
  for (auto v : cfg.variants) {
    const auto r = run_offline(offline_config(cfg, v), env);
    write_run_record(dir, r, env.landscape.vocab());
    table += variant_name(v) + "\t" + fixed(r.hit_ratio) + "\t" + (r.intdiv1 ? fixed(*r.intdiv1, 4) : "n/a") + "\t" +
             (r.sampling.samples ? fixed(time_per_sample(r.sampling), 6) : "n/a") + "\n";
  }
  write_text(dir / ("ablation_seed" + std::to_string(cfg.seed) + ".tsv"), table);
  if (!c.quiet) std::cout << table;
  return 0;
}

int cmd_verify(const Common& c, const std::string& fault) {
  if (!c.config.empty()) resolve_config(c);
  if (fault == "flip-sigma") set_tilt_sign_flip_for_testing(true);
  else if (!fault.empty()) throw ConfigError("unknown fault '" + fault + "' (expected flip-sigma)");
  std::vector<verify::SuiteResult> results;
  for (const auto& s : verify::all_suites()) {
    results.push_back(verify::run_suite(s));
    const auto& r = results.back();
    say(c, std::string(r.passed ? "PASS " : "FAIL ") + r.name + " (" + fixed(r.seconds, 3) + "s) " + r.detail);
  }
  write_text(out_dir(c) / "verify.json", verify::results_json(results));
  return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed; }) ? 0 : 1;
}

int cmd_report(const Common& c, const std::string& records_dir) {
  const fs::path dir = records_dir.empty() ? out_dir(c) : fs::path(records_dir);
  if (!fs::is_directory(dir)) throw ConfigError("no record directory " + dir.string());
  struct Agg {
    std::vector<double> hit, div;
  };
  std::map<std::string, Agg> by_kind;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (e.path().extension() == ".json" && name.find(".timing.") == std::string::npos && name.find("_seed") != std::string::npos)
      files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    std::ifstream in(f);
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.contains("kind") || !j.contains("metrics")) continue;
    auto& a = by_kind[j["kind"].get<std::string>()];
    a.hit.push_back(j["metrics"]["hit_ratio"].get<double>());
    if (j["metrics"]["intdiv1"].is_number()) a.div.push_back(j["metrics"]["intdiv1"].get<double>());
  }
  if (by_kind.empty()) throw ConfigError("no run records in " + dir.string());
  auto mean_std = [](const std::vector<double>& xs) {
    if (xs.empty()) return std::string("n/a\tn/a");
    double m = 0.0, s = 0.0;
    for (double x : xs) m += x;
    m /= static_cast<double>(xs.size());
    for (double x : xs) s += (x - m) * (x - m);
    return fixed(m, 3) + "\t" + fixed(std::sqrt(s / static_cast<double>(xs.size())), 3);
  };
  std::string table = "kind\truns\thit_mean\thit_std\tintdiv1_mean\tintdiv1_std\n";
  for (const auto& [kind, a] : by_kind)
    table += kind + "\t" + std::to_string(a.hit.size()) + "\t" + mean_std(a.hit) + "\t" + mean_std(a.div) + "\n";
  write_text(out_dir(c) / "report.tsv", table);
  if (!c.quiet) std::cout << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint self-improvement: training, optimization runs and verification"};
  app.require_subcommand(1);
  Common common;
  std::string fault, records_dir;

  auto* train = app.add_subcommand("train", "fit the joint model on run.dataset and write a checkpoint");
  auto* offline = app.add_subcommand("optimize-offline", "offline optimization with the predictor as score");
  auto* online = app.add_subcommand("optimize-online", "online optimization under the oracle budget");
  auto* ablate = app.add_subcommand("ablate", "run every configured offline variant on one seed");
  auto* verify_cmd = app.add_subcommand("verify", "run the brute-force invariant suites");
  auto* report = app.add_subcommand("report", "summarize the run records in a directory");
  for (auto* cmd : {train, offline, online, ablate, verify_cmd, report}) add_common(cmd, common);
  verify_cmd->add_option("--inject-fault", fault, "test hook: flip-sigma")->group("");
  report->add_option("records", records_dir, "directory of run records (default: the output directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train) return cmd_train(common);
    if (*offline) return cmd_offline(common);
    if (*online) return cmd_online(common);
    if (*ablate) return cmd_ablate(common);
    if (*verify_cmd) return cmd_verify(common, fault);
    if (*report) return cmd_report(common, records_dir);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
