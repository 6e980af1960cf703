#include "roadsim/config.hpp"

#include "roadsim/error.hpp"

#include <fstream>
#include <set>

namespace roadsim {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const char* section, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(std::string("config: section '") + section + "' must be an object");
  const std::set<std::string> known(keys.begin(), keys.end());
  for (const auto& item : j.items())
    if (!known.count(item.key()))
      throw ConfigError(std::string("config: unknown key '") + item.key() + "' in section '" + section + "'");
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config: key '") + key + "' has the wrong type");
  }
}

LaneLayout parse_layout(const std::string& s) {
  if (s == "straight") return LaneLayout::straight;
  if (s == "arc") return LaneLayout::arc;
  if (s == "intersection") return LaneLayout::intersection;
  throw ConfigError("config: unknown lane layout '" + s + "'");
}

} // namespace

void to_json(json& j, const ScheduleConfig& c) {
  j = {{"sigma_min", c.sigma_min}, {"sigma_max", c.sigma_max}, {"rho", c.rho},
       {"sigma_data", c.sigma_data}, {"window", c.window},       {"obs_count", c.obs_count},
       {"task_ratio", c.task_ratio}};
}

void from_json(const json& j, ScheduleConfig& c) {
  reject_unknown(j, "schedule", {"sigma_min", "sigma_max", "rho", "sigma_data", "window", "obs_count", "task_ratio"});
  read(j, "sigma_min", c.sigma_min);
  read(j, "sigma_max", c.sigma_max);
  read(j, "rho", c.rho);
  read(j, "sigma_data", c.sigma_data);
  read(j, "window", c.window);
  read(j, "obs_count", c.obs_count);
  read(j, "task_ratio", c.task_ratio);
}

void to_json(json& j, const SamplerConfig& c) {
  j = {{"warmup_steps", c.warmup_steps}, {"rolling_substeps", c.rolling_substeps}, {"reference_span", c.reference_span}};
}

void from_json(const json& j, SamplerConfig& c) {
  reject_unknown(j, "sampler", {"warmup_steps", "rolling_substeps", "reference_span"});
  read(j, "warmup_steps", c.warmup_steps);
  read(j, "rolling_substeps", c.rolling_substeps);
  read(j, "reference_span", c.reference_span);
}

void to_json(json& j, const SynthConfig& c) {
  std::vector<std::string> layouts;
  for (LaneLayout l : c.layouts) layouts.emplace_back(to_string(l));
  j = {{"frames", c.frames},
       {"min_agents", c.min_agents},
       {"max_agents", c.max_agents},
       {"layouts", layouts},
       {"lateral_noise", c.lateral_noise},
       {"brake_probability", c.brake_probability},
       {"random_rotation", c.random_rotation},
       {"map_points", c.map_points},
       {"max_retries", c.max_retries}};
}

void from_json(const json& j, SynthConfig& c) {
  reject_unknown(j, "world.synth", {"frames", "min_agents", "max_agents", "layouts", "lateral_noise",
                                    "brake_probability", "random_rotation", "map_points", "max_retries"});
  read(j, "frames", c.frames);
  read(j, "min_agents", c.min_agents);
  read(j, "max_agents", c.max_agents);
  if (j.contains("layouts")) {
    std::vector<std::string> names;
    read(j, "layouts", names);
    c.layouts.clear();
    for (const auto& n : names) c.layouts.push_back(parse_layout(n));
  }
  read(j, "lateral_noise", c.lateral_noise);
  read(j, "brake_probability", c.brake_probability);
  read(j, "random_rotation", c.random_rotation);
  read(j, "map_points", c.map_points);
  read(j, "max_retries", c.max_retries);
}

namespace nn {

void to_json(json& j, const ToyDenoiserConfig& c) {
  j = {{"feature_dim", c.feature_dim},
       {"num_blocks", c.num_blocks},
       {"num_heads", c.num_heads},
       {"map_points_per_polyline", c.map_points_per_polyline},
       {"learning_rate", c.learning_rate},
       {"train_steps", c.train_steps},
       {"batch_size", c.batch_size},
       {"seed", c.seed}};
}

void from_json(const json& j, ToyDenoiserConfig& c) {
  reject_unknown(j, "training.model", {"feature_dim", "num_blocks", "num_heads", "map_points_per_polyline",
                                       "learning_rate", "train_steps", "batch_size", "seed"});
  read(j, "feature_dim", c.feature_dim);
  read(j, "num_blocks", c.num_blocks);
  read(j, "num_heads", c.num_heads);
  read(j, "map_points_per_polyline", c.map_points_per_polyline);
  read(j, "learning_rate", c.learning_rate);
  read(j, "train_steps", c.train_steps);
  read(j, "batch_size", c.batch_size);
  read(j, "seed", c.seed);
}

} // namespace nn

void to_json(json& j, const RunConfig& c) {
  j = {{"seed", c.seed},
       {"out", c.out.string()},
       {"schedule", c.schedule},
       {"sampler", c.sampler},
       {"engine",
        {{"planner", c.simulate.planner},
         {"lookahead", c.lookahead},
         {"horizon", c.horizon},
         {"samples", c.simulate.samples},
         {"adversary", c.simulate.adversary},
         {"time_scale", c.simulate.time_scale}}},
       {"world", {{"synth", c.world.synth}, {"count", c.world.count}, {"min_valid_agents", c.world.min_valid_agents}}},
       {"training",
        {{"model", c.training.model}, {"p_ca", c.training.p_ca}, {"log_uniform_ca", c.training.log_uniform_ca}}}};
}

void from_json(const json& j, RunConfig& c) {
  reject_unknown(j, "root", {"seed", "out", "schedule", "sampler", "engine", "world", "training"});
  read(j, "seed", c.seed);
  if (j.contains("out")) c.out = j.at("out").get<std::string>();
  if (j.contains("schedule")) c.schedule = j.at("schedule").get<ScheduleConfig>();
  if (j.contains("sampler")) c.sampler = j.at("sampler").get<SamplerConfig>();
  if (j.contains("engine")) {
    const json& e = j.at("engine");
    reject_unknown(e, "engine", {"planner", "lookahead", "horizon", "samples", "adversary", "time_scale"});
    read(e, "planner", c.simulate.planner);
    read(e, "lookahead", c.lookahead);
    read(e, "horizon", c.horizon);
    read(e, "samples", c.simulate.samples);
    read(e, "adversary", c.simulate.adversary);
    read(e, "time_scale", c.simulate.time_scale);
  }
  if (j.contains("world")) {
    const json& w = j.at("world");
    reject_unknown(w, "world", {"synth", "count", "min_valid_agents"});
    if (w.contains("synth")) c.world.synth = w.at("synth").get<SynthConfig>();
    read(w, "count", c.world.count);
    read(w, "min_valid_agents", c.world.min_valid_agents);
  }
  if (j.contains("training")) {
    const json& t = j.at("training");
    reject_unknown(t, "training", {"model", "p_ca", "log_uniform_ca"});
    if (t.contains("model")) c.training.model = t.at("model").get<nn::ToyDenoiserConfig>();
    read(t, "p_ca", c.training.p_ca);
    read(t, "log_uniform_ca", c.training.log_uniform_ca);
  }
}

EngineConfig RunConfig::engine() const {
  EngineConfig e;
  e.schedule = schedule;
  e.sampler = sampler;
  e.lookahead = lookahead;
  e.horizon = horizon;
  return e;
}

void RunConfig::validate() const {
  engine().validate();
  training.model.validate();
  PlannerKind::parse(simulate.planner, schedule.obs_count);
  if (simulate.samples < 1) throw ConfigError("config: engine.samples must be >= 1");
  if (!(simulate.time_scale > 0.0 && simulate.time_scale <= 1.0))
    throw ConfigError("config: engine.time_scale must lie in (0, 1]");
  if (!(training.p_ca >= 0.0 && training.p_ca <= 1.0)) throw ConfigError("config: training.p_ca must lie in [0, 1]");
  if (world.count < 0) throw ConfigError("config: world.count must be non-negative");
  if (world.synth.frames < schedule.obs_count + 1) throw ConfigError("config: world.synth.frames too short");
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  RunConfig c;
  try {
    c = json::parse(in, nullptr, true, true).get<RunConfig>();
  } catch (const json::exception& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  c.validate();
  return c;
}

} // namespace roadsim
