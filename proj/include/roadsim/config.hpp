#pragma once

#include "roadsim/engine.hpp"
#include "roadsim/nn/toy_network.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>

namespace roadsim {

struct WorldSection {
  SynthConfig synth;
  int count = 2000;           // scenarios written by `synth`
  int min_valid_agents = 4;   // scene filter
};

struct TrainingSection {
  nn::ToyDenoiserConfig model;
  double p_ca = 0.5;
  bool log_uniform_ca = false;
};

struct SimulateSection {
  std::string planner = "rolling(15)";
  int samples = 3;
  bool adversary = true;
  double time_scale = 0.5;
};

// Everything a CLI run needs; sections are named after modules.
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out = "out";
  ScheduleConfig schedule;
  SamplerConfig sampler;
  int lookahead = 10;
  int horizon = 40;
  SimulateSection simulate;
  WorldSection world;
  TrainingSection training;

  EngineConfig engine() const;
  void validate() const;
};

// Unknown keys are rejected so that typos surface as configuration errors.
void to_json(nlohmann::json& j, const ScheduleConfig& c);
void from_json(const nlohmann::json& j, ScheduleConfig& c);
void to_json(nlohmann::json& j, const SamplerConfig& c);
void from_json(const nlohmann::json& j, SamplerConfig& c);
void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);
void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

namespace nn {
void to_json(nlohmann::json& j, const ToyDenoiserConfig& c);
void from_json(const nlohmann::json& j, ToyDenoiserConfig& c);
} // namespace nn

RunConfig load_run_config(const std::filesystem::path& path);

} // namespace roadsim
