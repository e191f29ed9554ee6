#include "tdflow/config.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace tdflow {

namespace {

using nlohmann::json;

// Validates the subset of draft-07 used by the bundled schema.
class SchemaValidator {
 public:
  explicit SchemaValidator(const json& root) : root_(root) {}

  void check(const json& value, const json& schema, const std::string& where) const {
    if (schema.contains("$ref")) {
      check(value, resolve(schema.at("$ref").get<std::string>()), where);
      return;
    }
    if (schema.contains("type")) check_type(value, schema.at("type").get<std::string>(), where);
    if (schema.contains("enum")) {
      const auto& options = schema.at("enum");
      if (std::find(options.begin(), options.end(), value) == options.end()) {
        fail(where, "must be one of " + options.dump() + ", got " + value.dump());
      }
    }
    if (value.is_number()) check_bounds(value.get<double>(), schema, where);
    if (value.is_string() && schema.contains("minLength") &&
        value.get<std::string>().size() < schema.at("minLength").get<std::size_t>()) {
      fail(where, "is too short");
    }
    if (value.is_array()) check_array(value, schema, where);
    if (value.is_object()) check_object(value, schema, where);
  }

 private:
  const json& resolve(const std::string& ref) const {
    const std::string prefix = "#/definitions/";
    if (ref.rfind(prefix, 0) != 0) throw ConfigError("schema: unsupported $ref " + ref);
    return root_.at("definitions").at(ref.substr(prefix.size()));
  }

  static void fail(const std::string& where, const std::string& what) {
    throw ConfigError("config: " + (where.empty() ? std::string("<root>") : where) + " " + what);
  }

  static void check_type(const json& value, const std::string& type, const std::string& where) {
    bool ok = false;
    if (type == "object") ok = value.is_object();
    else if (type == "array") ok = value.is_array();
    else if (type == "string") ok = value.is_string();
    else if (type == "boolean") ok = value.is_boolean();
    else if (type == "integer") ok = value.is_number_integer();
    else if (type == "number") ok = value.is_number();
    if (!ok) fail(where, "must be of type " + type + ", got " + std::string(value.type_name()));
  }

  static void check_bounds(double x, const json& schema, const std::string& where) {
    auto bound = [&](const char* key) { return schema.at(key).get<double>(); };
    if (schema.contains("minimum") && x < bound("minimum")) fail(where, "must be >= " + schema["minimum"].dump());
    if (schema.contains("maximum") && x > bound("maximum")) fail(where, "must be <= " + schema["maximum"].dump());
    if (schema.contains("exclusiveMinimum") && x <= bound("exclusiveMinimum")) {
      fail(where, "must be > " + schema["exclusiveMinimum"].dump());
    }
    if (schema.contains("exclusiveMaximum") && x >= bound("exclusiveMaximum")) {
      fail(where, "must be < " + schema["exclusiveMaximum"].dump());
    }
  }

  void check_array(const json& value, const json& schema, const std::string& where) const {
    if (schema.contains("minItems") && value.size() < schema.at("minItems").get<std::size_t>()) {
      fail(where, "needs at least " + schema["minItems"].dump() + " items");
    }
    if (schema.contains("maxItems") && value.size() > schema.at("maxItems").get<std::size_t>()) {
      fail(where, "allows at most " + schema["maxItems"].dump() + " items");
    }
    if (!schema.contains("items")) return;
    for (std::size_t i = 0; i < value.size(); ++i) {
      check(value[i], schema.at("items"), where + "[" + std::to_string(i) + "]");
    }
  }

  void check_object(const json& value, const json& schema, const std::string& where) const {
    const auto prefix = where.empty() ? std::string() : where + ".";
    if (schema.contains("required")) {
      for (const auto& key : schema.at("required")) {
        if (!value.contains(key.get<std::string>())) fail(prefix + key.get<std::string>(), "is required");
      }
    }
    const json empty = json::object();
    const auto& props = schema.contains("properties") ? schema.at("properties") : empty;
    const bool closed = schema.contains("additionalProperties") && schema.at("additionalProperties") == false;
    for (const auto& [key, item] : value.items()) {
      if (props.contains(key)) {
        check(item, props.at(key), prefix + key);
      } else if (closed) {
        fail(prefix + key, "is not a recognized field");
      }
    }
  }

  const json& root_;
};

const json& schema_document() {
  static const json doc = json::parse(kConfigSchema);
  return doc;
}

json parse_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

template <typename T>
void read(const json& j, const char* key, std::optional<T>& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::filesystem::path resolve_path(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

EnvConfig parse_env(const json& j) {
  EnvConfig e;
  read(j, "kind", e.kind);
  read(j, "n_states", e.n_states);
  read(j, "n_actions", e.n_actions);
  read(j, "seed", e.seed);
  read(j, "width", e.width);
  read(j, "height", e.height);
  read(j, "lo", e.lo);
  read(j, "hi", e.hi);
  read(j, "walls", e.walls);
  read(j, "dt", e.dt);
  read(j, "max_speed", e.max_speed);
  if (j.contains("blocked")) {
    for (const auto& cell : j.at("blocked")) e.blocked.emplace_back(cell[0].get<int>(), cell[1].get<int>());
  }
  return e;
}

PolicyConfig parse_policy(const json& j) {
  PolicyConfig p;
  read(j, "kind", p.kind);
  read(j, "name", p.name);
  read(j, "goal", p.goal);
  read(j, "gain", p.gain);
  read(j, "orbit", p.orbit);
  read(j, "noise", p.noise);
  read(j, "seed", p.seed);
  read(j, "deterministic", p.deterministic);
  read(j, "action", p.action);
  if (p.name.empty()) p.name = p.kind;
  return p;
}

RewardConfig parse_reward(const json& j) {
  RewardConfig r;
  read(j, "kind", r.kind);
  read(j, "value", r.value);
  read(j, "center", r.center);
  read(j, "width", r.width);
  read(j, "radius", r.radius);
  read(j, "values", r.values);
  if (j.contains("terms")) {
    for (const auto& t : j.at("terms")) r.terms.push_back(parse_reward(t));
  }
  const bool needs_center = r.kind == "gaussian" || r.kind == "ball";
  require(!needs_center || !r.center.empty(), "config: reward." + r.kind + " requires a center");
  require(r.kind != "table" || !r.values.empty(), "config: reward.table requires values");
  require(r.kind != "sum" || !r.terms.empty(), "config: reward.sum requires terms");
  return r;
}

std::vector<Algorithm> parse_algorithms(const json& j) {
  std::vector<Algorithm> out;
  for (const auto& name : j) out.push_back(parse_algorithm(name.get<std::string>()));
  return out;
}

void parse_train(const json& j, TrainSection& t) {
  if (j.contains("algorithm")) t.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
  if (j.contains("path")) t.path = parse_path_kind(j.at("path").get<std::string>());
  if (j.contains("branch_mode")) t.branch_mode = parse_branch_mode(j.at("branch_mode").get<std::string>());
  read(j, "gamma", t.gamma);
  read(j, "batch_size", t.batch_size);
  read(j, "steps", t.steps);
  read(j, "lr", t.lr);
  read(j, "adam_eps", t.adam_eps);
  read(j, "weight_decay", t.weight_decay);
  read(j, "ema", t.ema);
  read(j, "ode_steps", t.ode_steps);
  read(j, "ddim_steps", t.ddim_steps);
  read(j, "log_every", t.log_every);
}

void parse_eval(const json& j, EvalSection& e) {
  auto& p = e.protocol;
  read(j, "n_source_states", p.n_source_states);
  read(j, "n_model_samples", p.n_model_samples);
  read(j, "episode_length", p.episode_length);
  read(j, "emd_subsample", p.emd_subsample);
  read(j, "emd_repeats", p.emd_repeats);
  read(j, "policy_index", p.policy_index);
  read(j, "nll", e.nll);
}

void parse_probe(const json& j, ProbeSection& p) {
  if (j.contains("algorithms")) p.algorithms = parse_algorithms(j.at("algorithms"));
  read(j, "gamma", p.gamma);
  read(j, "n_samples", p.n_samples);
  read(j, "n_boot", p.n_boot);
  if (j.contains("frozen")) {
    const auto& f = j.at("frozen");
    read(f, "kind", p.frozen.kind);
    read(f, "scale", p.frozen.scale);
    read(f, "offset", p.frozen.offset);
  }
}

PlotSection parse_plot(const json& j, const std::filesystem::path& base) {
  PlotSection p;
  p.csv = resolve_path(base, j.at("csv").get<std::string>());
  read(j, "x", p.x);
  read(j, "y", p.y);
  read(j, "kind", p.kind);
  read(j, "title", p.title);
  read(j, "log_x", p.log_x);
  read(j, "group", p.group);
  return p;
}

}  // namespace

void validate_config_json(const std::string& json_text) {
  const auto doc = parse_text(json_text);
  SchemaValidator(schema_document()).check(doc, schema_document(), "");
}

RunConfig parse_run_config(const std::string& json_text, const std::filesystem::path& base_dir) {
  const auto j = parse_text(json_text);
  SchemaValidator(schema_document()).check(j, schema_document(), "");

  RunConfig cfg;
  cfg.canonical_json = j.dump();
  read(j, "name", cfg.name);
  read(j, "seed", cfg.seed);
  if (j.contains("out_dir")) cfg.out_dir = resolve_path(base_dir, j.at("out_dir").get<std::string>());
  if (j.contains("checkpoint")) cfg.checkpoint = resolve_path(base_dir, j.at("checkpoint").get<std::string>());
  cfg.env = parse_env(j.at("env"));
  if (j.contains("policies")) {
    for (const auto& p : j.at("policies")) cfg.policies.push_back(parse_policy(p));
  }
  if (j.contains("behavior")) cfg.behavior = parse_policy(j.at("behavior"));
  if (j.contains("reward")) cfg.reward = parse_reward(j.at("reward"));
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    read(d, "n_transitions", cfg.dataset.n_transitions);
    read(d, "episode_length", cfg.dataset.episode_length);
    read(d, "seed", cfg.dataset.seed);
    if (d.contains("path")) cfg.dataset.path = resolve_path(base_dir, d.at("path").get<std::string>());
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    read(m, "width", cfg.model.width);
    read(m, "n_hidden", cfg.model.n_hidden);
    read(m, "time_embed_dim", cfg.model.time_embed_dim);
    read(m, "policy_embed_dim", cfg.model.policy_embed_dim);
    read(m, "init_seed", cfg.model.init_seed);
  }
  if (j.contains("train")) parse_train(j.at("train"), cfg.train);
  if (j.contains("eval")) parse_eval(j.at("eval"), cfg.eval);
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    if (s.contains("algorithms")) cfg.sweep.algorithms = parse_algorithms(s.at("algorithms"));
    read(s, "gammas", cfg.sweep.gammas);
  }
  if (j.contains("probe")) parse_probe(j.at("probe"), cfg.probe);
  if (j.contains("plan")) {
    const auto& p = j.at("plan");
    read(p, "episodes", cfg.plan.episodes);
    read(p, "length", cfg.plan.length);
    read(p, "n_ghm_samples", cfg.plan.n_ghm_samples);
    read(p, "q_source", cfg.plan.q_source);
  }
  if (j.contains("oracle")) {
    read(j.at("oracle"), "gamma", cfg.oracle.gamma);
    read(j.at("oracle"), "iterations", cfg.oracle.iterations);
  }
  if (j.contains("plot")) cfg.plot = parse_plot(j.at("plot"), base_dir);

  require(cfg.model.time_embed_dim % 2 == 0, "config: model.time_embed_dim must be even");
  cfg.eval.protocol.gamma = cfg.train.gamma;
  cfg.eval.protocol.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str(), path.parent_path());
}

TrainConfig make_train_config(const RunConfig& cfg, std::uint64_t seed) {
  const auto& t = cfg.train;
  TrainConfig out;
  out.target.algorithm = t.algorithm;
  out.target.gamma = t.gamma;
  out.target.path = t.path;
  out.target.solver.n_steps = t.ode_steps;
  out.target.ddim_steps = t.ddim_steps;
  out.branch_mode = t.branch_mode;
  out.target.branch_mode = out.effective_branch_mode();
  out.batch_size = t.batch_size;
  out.n_steps = t.steps;
  out.optimizer.lr = t.lr;
  out.optimizer.eps = t.adam_eps;
  out.optimizer.weight_decay = t.weight_decay;
  out.ema_zeta = t.ema;
  out.seed = seed;
  out.validate();
  return out;
}

}  // namespace tdflow
