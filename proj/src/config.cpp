#include "jsi/config.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "jsi/errors.hpp"

namespace jsi {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Reads keys out of one JSON object and remembers which ones were consumed,
// so that leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be a JSON object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    const std::string name = qualified(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw ConfigError(name + " must be a boolean");
      out = it->template get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer() || (it->is_number_integer() && it->template get<long long>() < 0 && !it->is_number_unsigned()))
        throw ConfigError(name + " must be a non-negative integer");
      out = it->template get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw ConfigError(name + " must be a number");
      out = it->template get<double>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) throw ConfigError(name + " must be a string");
      out = it->template get<std::string>();
    } else {
      static_assert(sizeof(T) == 0, "unsupported config type");
    }
  }

  const json* raw(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::optional<Section> sub(const std::string& key) {
    const json* s = raw(key);
    if (!s) return std::nullopt;
    return Section(*s, qualified(key));
  }

  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + qualified(key) + "'");
  }

 private:
  std::string where() const { return path_.empty() ? "config document" : "'" + path_ + "'"; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string resolve(const std::string& p, const std::filesystem::path& base) {
  if (p.empty() || base.empty()) return p;
  const std::filesystem::path path(p);
  return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

bool positive(double v) { return std::isfinite(v) && v > 0.0; }

}  // namespace

void RunConfig::validate() const {
  require(model.neural.embed_dim >= 1 && model.neural.hidden_dim >= 1 && model.neural.context >= 1,
          "model dimensions must be >= 1");
  require(model.max_length >= 2, "model.max_length must be >= 2");
  require(train.lambda >= 0.0 && std::isfinite(train.lambda), "train.lambda must be >= 0");
  require(positive(train.learning_rate), "train.learning_rate must be > 0");
  require(train.batch_size >= 1, "train.batch_size must be >= 1");
  require(train.grad_clip >= 0.0, "train.grad_clip must be >= 0");
  require(train_fraction > 0.0 && train_fraction < 1.0, "train.train_fraction must lie in (0, 1)");
  require(positive(pretrain.learning_rate), "train.pretrain.learning_rate must be > 0");
  require(pretrain.batch_size >= 1, "train.pretrain.batch_size must be >= 1");
  jsi.validate();
  require(oracle_budget >= 1, "oracle.budget must be >= 1");
  require(evaluation_count >= 1, "oracle.evaluation_count must be >= 1");
  require(evaluation_count <= oracle_budget, "oracle.evaluation_count exceeds oracle.budget");
  require(data.dataset_size >= 2, "run.dataset_size must be >= 2");
  require(data.corpus.mean_length >= 1.0, "run.corpus.mean_length must be >= 1");
  require(data.corpus.scale >= 0.0, "run.corpus.scale must be >= 0");
  require(!variants.empty(), "run.variants must list at least one variant");
  require(best_of_n >= 1, "run.best_of_n must be >= 1");
  require(top_fraction > 0.0 && top_fraction <= 1.0, "run.top_fraction must lie in (0, 1]");
  require(max_iterations >= 1, "run.max_iterations must be >= 1");
  require(retrain.lambda == 0.0, "online retraining is generative only (lambda = 0)");
  require(positive(retrain.learning_rate), "run.retrain.learning_rate must be > 0");
  require(retrain.batch_size >= 1, "run.retrain.batch_size must be >= 1");
  reinvent.validate();
}

RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  Section root(doc, "");

  if (auto s = root.sub("model")) {
    s->get("embed_dim", c.model.neural.embed_dim);
    s->get("hidden_dim", c.model.neural.hidden_dim);
    s->get("context", c.model.neural.context);
    s->get("max_length", c.model.max_length);
    s->finish();
  }
  if (auto s = root.sub("train")) {
    s->get("lambda", c.train.lambda);
    s->get("learning_rate", c.train.learning_rate);
    s->get("batch_size", c.train.batch_size);
    s->get("epochs", c.train.epochs);
    s->get("patience", c.train.patience);
    s->get("grad_clip", c.train.grad_clip);
    s->get("train_fraction", c.train_fraction);
    if (auto p = s->sub("pretrain")) {
      p->get("epochs", c.pretrain.epochs);
      p->get("learning_rate", c.pretrain.learning_rate);
      p->get("batch_size", c.pretrain.batch_size);
      p->finish();
    }
    s->finish();
  }
  if (auto s = root.sub("jsi")) {
    s->get("beam_width", c.jsi.beam_width);
    s->get("rounds", c.jsi.rounds);
    s->get("step_size", c.jsi.step_size);
    s->get("temperature", c.jsi.temperature);
    s->finish();
  }
  if (auto s = root.sub("oracle")) {
    s->get("budget", c.oracle_budget);
    s->get("evaluation_count", c.evaluation_count);
    s->get("landscape", c.landscape);
    c.landscape = resolve(c.landscape, base_dir);
    s->finish();
  }
  if (auto s = root.sub("run")) {
    s->get("seed", c.seed);
    s->get("dataset", c.data.dataset_path);
    c.data.dataset_path = resolve(c.data.dataset_path, base_dir);
    s->get("dataset_size", c.data.dataset_size);
    s->get("data_seed", c.data.data_seed);
    if (auto k = s->sub("corpus")) {
      k->get("scale", c.data.corpus.scale);
      k->get("mean_length", c.data.corpus.mean_length);
      k->finish();
    }
    if (const json* v = s->raw("variants")) {
      if (!v->is_array()) throw ConfigError("run.variants must be an array of variant names");
      c.variants.clear();
      for (const auto& item : *v) {
        if (!item.is_string()) throw ConfigError("run.variants entries must be strings");
        const auto variant = parse_variant(item.get<std::string>());
        if (std::find(c.variants.begin(), c.variants.end(), variant) != c.variants.end())
          throw ConfigError("run.variants lists '" + item.get<std::string>() + "' twice");
        c.variants.push_back(variant);
      }
    }
    std::string sampler = sampler_name(c.sampler);
    s->get("sampler", sampler);
    c.sampler = parse_sampler(sampler);
    s->get("best_of_n", c.best_of_n);
    s->get("top_fraction", c.top_fraction);
    s->get("max_iterations", c.max_iterations);
    if (auto r = s->sub("retrain")) {
      r->get("epochs", c.retrain.epochs);
      r->get("learning_rate", c.retrain.learning_rate);
      r->get("batch_size", c.retrain.batch_size);
      r->finish();
    }
    if (auto r = s->sub("reinvent")) {
      r->get("sigma_r", c.reinvent.sigma_r);
      r->get("learning_rate", c.reinvent.learning_rate);
      r->get("batch_size", c.reinvent.batch_size);
      r->get("steps", c.reinvent.steps);
      r->get("temperature", c.reinvent.temperature);
      r->finish();
    }
    s->finish();
  }
  root.finish();
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.parent_path());
}

std::string config_to_json(const RunConfig& c) {
  ordered_json variants = ordered_json::array();
  for (auto v : c.variants) variants.push_back(variant_name(v));
  ordered_json j;
  j["model"] = {{"embed_dim", c.model.neural.embed_dim},
                {"hidden_dim", c.model.neural.hidden_dim},
                {"context", c.model.neural.context},
                {"max_length", c.model.max_length}};
  j["train"] = {{"lambda", c.train.lambda},
                {"learning_rate", c.train.learning_rate},
                {"batch_size", c.train.batch_size},
                {"epochs", c.train.epochs},
                {"patience", c.train.patience},
                {"grad_clip", c.train.grad_clip},
                {"train_fraction", c.train_fraction},
                {"pretrain",
                 {{"epochs", c.pretrain.epochs},
                  {"learning_rate", c.pretrain.learning_rate},
                  {"batch_size", c.pretrain.batch_size}}}};
  j["jsi"] = {{"beam_width", c.jsi.beam_width},
              {"rounds", c.jsi.rounds},
              {"step_size", c.jsi.step_size},
              {"temperature", c.jsi.temperature}};
  j["oracle"] = {{"budget", c.oracle_budget}, {"evaluation_count", c.evaluation_count}, {"landscape", c.landscape}};
  j["run"] = {{"seed", c.seed},
              {"dataset", c.data.dataset_path},
              {"dataset_size", c.data.dataset_size},
              {"data_seed", c.data.data_seed},
              {"corpus", {{"scale", c.data.corpus.scale}, {"mean_length", c.data.corpus.mean_length}}},
              {"variants", variants},
              {"sampler", sampler_name(c.sampler)},
              {"best_of_n", c.best_of_n},
              {"top_fraction", c.top_fraction},
              {"max_iterations", c.max_iterations},
              {"retrain",
               {{"epochs", c.retrain.epochs},
                {"learning_rate", c.retrain.learning_rate},
                {"batch_size", c.retrain.batch_size}}},
              {"reinvent",
               {{"sigma_r", c.reinvent.sigma_r},
                {"learning_rate", c.reinvent.learning_rate},
                {"batch_size", c.reinvent.batch_size},
                {"steps", c.reinvent.steps},
                {"temperature", c.reinvent.temperature}}}};
  return j.dump(2);
}

OfflineRunConfig offline_config(const RunConfig& c, OfflineVariant variant) {
  OfflineRunConfig o;
  o.model = c.model;
  o.pretrain = c.pretrain;
  o.train = c.train;
  o.jsi = c.jsi;
  o.train_fraction = c.train_fraction;
  o.evaluation_count = c.evaluation_count;
  o.oracle_budget = c.oracle_budget;
  o.best_of_n = c.best_of_n;
  o.variant = variant;
  o.seed = c.seed;
  o.config_json = config_to_json(c);
  return o;
}

OnlineRunConfig online_config(const RunConfig& c) {
  OnlineRunConfig o;
  o.model = c.model;
  o.pretrain = c.pretrain;
  o.retrain = c.retrain;
  o.jsi = c.jsi;
  o.oracle_budget = c.oracle_budget;
  o.top_fraction = c.top_fraction;
  o.max_iterations = c.max_iterations;
  o.sampler = c.sampler;
  o.best_of_n = c.best_of_n;
  o.reinvent = c.reinvent;
  o.seed = c.seed;
  o.config_json = config_to_json(c);
  return o;
}

Environment load_environment(const RunConfig& c) {
  std::optional<std::filesystem::path> landscape;
  if (!c.landscape.empty()) landscape = c.landscape;
  return make_environment(landscape, c.data, c.model.max_length);
}

}  // namespace jsi
