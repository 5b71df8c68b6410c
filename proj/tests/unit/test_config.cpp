#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "doctest.h"
#include "jsi/config.hpp"
#include "jsi/errors.hpp"

using namespace jsi;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("an empty document gives the documented defaults") {
  const auto c = parse_config("{}");
  CHECK(c.jsi.beam_width == 16);
  CHECK(c.jsi.rounds == 8);
  CHECK(c.jsi.step_size == 1.0);
  CHECK(c.oracle_budget == 3000);
  CHECK(c.evaluation_count == 64);
  CHECK(c.best_of_n == 256);
  CHECK(c.top_fraction == 0.25);
  CHECK(c.train.learning_rate == 1e-3);
  CHECK(c.retrain.lambda == 0.0);
  CHECK(c.variants.size() == 3);
}

TEST_CASE("canonical JSON round trips") {
  const auto c = parse_config(R"({"jsi": {"beam_width": 32, "step_size": 0.75},
                                  "run": {"seed": 9, "variants": ["no-joint"], "sampler": "reinvent"}})");
  const auto text = config_to_json(c);
  CHECK(config_to_json(parse_config(text)) == text);
  CHECK(c.seed == 9);
  CHECK(c.sampler == OnlineSampler::kReinvent);
  REQUIRE(c.variants.size() == 1);
  CHECK(c.variants[0] == OfflineVariant::kNoJoint);
}

TEST_CASE("published hyperparameter settings are accepted and echoed") {
  struct Case {
    const char* json;
    std::size_t k, rounds;
    double sigma;
  };
  const Case cases[] = {
      {R"({"jsi": {"beam_width": 16, "rounds": 8, "step_size": 1.0}})", 16, 8, 1.0},
      {R"({"jsi": {"beam_width": 128, "rounds": 10, "step_size": 0.25}})", 128, 10, 0.25},
      {R"({"jsi": {"beam_width": 16, "rounds": 10, "step_size": 1.5}})", 16, 10, 1.5},
  };
  for (const auto& tc : cases) {
    const auto c = parse_config(tc.json);
    CHECK(c.jsi.beam_width == tc.k);
    CHECK(c.jsi.rounds == tc.rounds);
    CHECK(c.jsi.step_size == tc.sigma);
    RunRecord r;
    r.kind = "offline-full";
    r.config_json = offline_config(c, OfflineVariant::kFull).config_json;
    const auto echoed = nlohmann::json::parse(record_json(r, Vocabulary::letters(2)));
    CHECK(echoed["config"]["jsi"]["beam_width"] == tc.k);
    CHECK(echoed["config"]["jsi"]["rounds"] == tc.rounds);
    CHECK(echoed["config"]["jsi"]["step_size"] == tc.sigma);
    CHECK(online_config(c).jsi.step_size == tc.sigma);
  }
}

TEST_CASE("unknown keys are named") {
  CHECK(error_of(R"({"jsi": {"beam": 4}})").find("'jsi.beam'") != std::string::npos);
  CHECK(error_of(R"({"trian": {}})").find("'trian'") != std::string::npos);
  CHECK(error_of(R"({"run": {"reinvent": {"sigma": 2}}})").find("'run.reinvent.sigma'") != std::string::npos);
}

TEST_CASE("invalid values are configuration errors") {
  CHECK(error_of(R"({"run": {"variants": []}})").find("variant") != std::string::npos);
  CHECK(error_of(R"({"run": {"variants": ["full", "full"]}})") != "");
  CHECK(error_of(R"({"run": {"variants": ["half"]}})") != "");
  CHECK(error_of(R"({"jsi": {"beam_width": "wide"}})").find("jsi.beam_width") != std::string::npos);
  CHECK(error_of(R"({"jsi": {"beam_width": -3}})") != "");
  CHECK(error_of(R"({"jsi": {"step_size": 0}})") != "");
  CHECK(error_of(R"({"oracle": {"budget": 10, "evaluation_count": 64}})") != "");
  CHECK(error_of(R"({"run": {"top_fraction": 1.5}})") != "");
  CHECK(error_of(R"({"run": {"sampler": "gfn"}})") != "");
  CHECK(error_of(R"({"jsi": 3})") != "");
  CHECK(error_of("{not json") != "");
  CHECK(error_of("[]") != "");
}

TEST_CASE("relative paths resolve against the config file") {
  const auto dir = std::filesystem::temp_directory_path() / "jsi_config_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "c.json");
    out << R"({"run": {"dataset": "data/set.tsv"}, "oracle": {"landscape": "/abs/land.txt"}})";
  }
  const auto c = load_config(dir / "c.json");
  CHECK(c.data.dataset_path == (dir / "data/set.tsv").string());
  CHECK(c.landscape == "/abs/land.txt");
  CHECK_THROWS_AS(load_config(dir / "missing.json"), ConfigError);
  std::filesystem::remove_all(dir);
}
