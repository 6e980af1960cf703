// road: synth -> train -> simulate -> eval, plus the NFE benchmark.
//
// Every command takes --config (JSON, see docs/formats.md) and --seed; the
// seed is written into every artifact. Failures print one JSON object on
// stderr and exit nonzero.

#include "roadsim/config.hpp"
#include "roadsim/error.hpp"
#include "roadsim/pipeline.hpp"
#include "roadsim/rng.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace roadsim;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string planner;
  int window = 0;
  std::string adversary;
  int samples = 0;
};

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.out = c.out;
  if (!c.planner.empty()) cfg.simulate.planner = c.planner;
  if (c.window > 0) cfg.simulate.planner = "rolling(" + std::to_string(c.window) + ")";
  if (!c.adversary.empty()) {
    if (c.adversary != "on" && c.adversary != "off") throw ConfigError("--adversary must be 'on' or 'off'");
    cfg.simulate.adversary = c.adversary == "on";
  }
  if (c.samples > 0) cfg.simulate.samples = c.samples;
  cfg.validate();
  return cfg;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw InputError("cannot create directory " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw InputError("cannot write " + path.string());
    out << text;
    if (!out) throw InputError("write failed: " + path.string());
  }
  fs::rename(tmp, path);
}

std::vector<Scenario> load_dir(const fs::path& dir, int skip, int limit) {
  if (!fs::is_directory(dir)) throw InputError("not a scenario directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<Scenario> out;
  for (std::size_t i = static_cast<std::size_t>(std::max(skip, 0)); i < files.size(); ++i) {
    if (limit > 0 && static_cast<int>(out.size()) >= limit) break;
    out.push_back(load_scenario(files[i]));
  }
  if (out.empty()) throw InputError("no scenarios in " + dir.string());
  return out;
}

void log(const std::string& msg) { std::cerr << msg << "\n"; }

// ---------------------------------------------------------------------------

int cmd_synth(const RunConfig& cfg, int count) {
  const fs::path root = cfg.out;
  const fs::path final_dir = root / "scenarios";
  const fs::path staging = root / "scenarios.partial";
  ensure_dir(root);
  fs::remove_all(staging);
  ensure_dir(staging);
  const int n = cfg.schedule.obs_count;
  const auto corpus = synth_corpus(cfg.world.synth, count, cfg.seed, cfg.world.min_valid_agents, n);
  json rows = json::array();
  for (const Scenario& sc : corpus) {
    save_scenario(sc, staging / (sc.id + ".csv"));
    rows.push_back({{"scenario_id", sc.id}, {"file", "scenarios/" + sc.id + ".csv"}, {"agents", sc.num_agents()}});
  }
  fs::remove_all(final_dir);
  fs::rename(staging, final_dir);
  const json manifest = {{"seed", cfg.seed},
                         {"count", count},
                         {"obs_count", n},
                         {"min_valid_agents", cfg.world.min_valid_agents},
                         {"synth", cfg.world.synth},
                         {"scenarios", rows}};
  write_text(root / "manifest.json", manifest.dump(2) + "\n");
  std::cout << json{{"command", "synth"}, {"seed", cfg.seed}, {"scenarios", count}, {"out", root.string()}}.dump()
            << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, const fs::path& data, int limit) {
  const PlannerKind planner = PlannerKind::parse(cfg.simulate.planner, cfg.schedule.obs_count);
  const auto world = load_dir(data, 0, limit);
  const auto scene = training_set(world, cfg.schedule.obs_count);
  ensure_dir(cfg.out);
  const auto t0 = std::chrono::steady_clock::now();
  const TrainedModel m = train_for_planner(scene, planner, cfg, [](int step, double loss) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "step %d  smoothed loss %.5f", step, loss);
    log(buf);
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  nn::save_checkpoint(*m.net, m.meta, fs::path(cfg.out) / "checkpoint.json");
  std::string csv = "# seed=" + std::to_string(cfg.seed) + " planner=" + planner.name() + "\nstep,loss,smoothed\n";
  for (std::size_t i = 0; i < m.fit.losses.size(); ++i) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%zu,%.8g,%.8g\n", i, m.fit.losses[i], m.fit.smoothed[i]);
    csv += buf;
  }
  write_text(fs::path(cfg.out) / "loss.csv", csv);
  json summary = {{"command", "train"},
                  {"seed", cfg.seed},
                  {"planner", planner.name()},
                  {"window", m.meta.window},
                  {"task", to_string(m.meta.batch.task)},
                  {"steps", m.fit.losses.size()},
                  {"scenarios", world.size()},
                  {"wall_time_s", secs}};
  if (!m.fit.smoothed.empty()) summary["final_smoothed_loss"] = m.fit.smoothed.back();
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_simulate(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& data, int skip, int limit) {
  const PlannerKind planner = PlannerKind::parse(cfg.simulate.planner, cfg.schedule.obs_count);
  auto [net, meta] = nn::load_checkpoint(checkpoint);
  check_model_matches(meta, planner, cfg);
  const nn::ToyDenoiser<float> den(net);
  const auto world = load_dir(data, skip, limit);
  SimulationPlan plan;
  plan.planner = planner;
  plan.adversary = cfg.simulate.adversary;
  plan.time_scale = cfg.simulate.time_scale;
  plan.samples = cfg.simulate.samples;
  plan.seed = cfg.seed;
  const fs::path dir = fs::path(cfg.out) / "reports";
  ensure_dir(dir);
  const auto runs = simulate(world, plan, den, cfg.engine(), [&](std::size_t done) {
    if (done % 20 == 0) log("simulated " + std::to_string(done) + "/" + std::to_string(world.size()));
  });
  std::int64_t nfe = 0;
  int files = 0;
  for (const auto& r : runs)
    for (std::size_t s = 0; s < r.samples.size(); ++s) {
      const RolloutReport& rep = r.samples[s];
      save_report(rep, dir / (rep.scenario_id + "__" + planner.name() + "__s" + std::to_string(s) + ".json"));
      nfe += rep.total_nfe;
      ++files;
    }
  std::cout << json{{"command", "simulate"},  {"seed", cfg.seed},         {"planner", planner.name()},
                    {"adversary", plan.adversary}, {"scenarios", runs.size()}, {"reports", files},
                    {"total_nfe", nfe}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::vector<std::string>& report_dirs, const fs::path& data) {
  std::map<std::string, Scenario> gt;
  for (const auto& e : fs::directory_iterator(data))
    if (e.path().extension() == ".csv") {
      Scenario sc = load_scenario(e.path());
      std::string id = sc.id;
      gt.emplace(std::move(id), std::move(sc));
    }
  // planner -> scenario -> reports
  std::map<std::string, std::map<std::string, std::vector<RolloutReport>>> grouped;
  std::set<std::uint64_t> seeds;
  for (const auto& d : report_dirs) {
    if (!fs::is_directory(d)) throw InputError("not a report directory: " + d);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(d))
      if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      RolloutReport r = load_report(f);
      if (!gt.count(r.scenario_id)) throw InputError("report " + f.string() + ": no ground truth for '" + r.scenario_id + "'");
      seeds.insert(r.seed);
      grouped[r.planner][r.scenario_id].push_back(std::move(r));
    }
  }
  if (grouped.empty()) throw InputError("eval: no reports found");

  ensure_dir(cfg.out);
  std::string table = "planner,scenes,samples,min_scene_ade,min_scene_fde,miss_rate,collision_rate,mean_nfe\n";
  std::string traj = "planner,scenario_id,sample,track_id,frame,source,x,y,psi\n";
  json per_planner = json::object();
  for (auto& [planner, by_scene] : grouped) {
    std::vector<ScenarioRollouts> runs;
    double nfe = 0.0;
    int count = 0;
    for (auto& [id, reps] : by_scene) {
      ScenarioRollouts r;
      r.gt = &gt.at(id);
      r.adversary = reps.front().ego;
      r.samples = reps;
      for (const auto& rep : reps) {
        nfe += static_cast<double>(rep.total_nfe);
        ++count;
      }
      runs.push_back(std::move(r));
    }
    const MetricReport m = summarize(runs);
    json j = json::parse(m.to_json());
    j["mean_nfe"] = nfe / count;
    per_planner[planner] = j;
    char row[256];
    std::snprintf(row, sizeof row, "%s,%d,%d,%.6f,%.6f,%s,%.6f,%.1f\n", planner.c_str(), m.scenes, m.sample_count,
                  m.min_scene_ade, m.min_scene_fde,
                  std::isnan(m.miss_rate) ? "" : std::to_string(m.miss_rate).c_str(), m.collision_rate, nfe / count);
    table += row;

    for (const auto& r : runs)
      for (std::size_t s = 0; s < r.samples.size(); ++s) {
        const Scenario& sim = r.samples[s].realized;
        for (Index a = 0; a < sim.num_agents(); ++a)
          for (Index t = 0; t < sim.num_frames(); ++t) {
            auto emit = [&](const Scenario& sc, const char* source, std::size_t sample) {
              if (!sc.valid(a, t)) return;
              const State st = sc.states.at(a, t);
              char line[256];
              std::snprintf(line, sizeof line, "%s,%s,%zu,%d,%ld,%s,%.4f,%.4f,%.5f\n", planner.c_str(),
                            sc.id.c_str(), sample, sc.track_ids[a], static_cast<long>(t), source, st(0), st(1),
                            st(2));
              traj += line;
            };
            emit(sim, "sample", s);
            if (s == 0 && t < r.gt->num_frames()) emit(*r.gt, "gt", 0);
          }
      }
  }
  const json seed_list = std::vector<std::uint64_t>(seeds.begin(), seeds.end());
  write_text(fs::path(cfg.out) / "metrics.json",
             json{{"seed", cfg.seed}, {"report_seeds", seed_list}, {"planners", per_planner}}.dump(2) + "\n");
  write_text(fs::path(cfg.out) / "comparison.csv", "# seed=" + std::to_string(cfg.seed) + "\n" + table);
  write_text(fs::path(cfg.out) / "trajectories.csv", "# seed=" + std::to_string(cfg.seed) + "\n" + traj);
  std::cout << table;
  return 0;
}

int cmd_bench_nfe(const RunConfig& cfg, const std::vector<int>& horizons, bool toy) {
  // one synthetic scene; NFE counts do not depend on the network, so the
  // closed-form oracle keeps this fast unless --toy is given
  const Scenario sc = synth_corpus(cfg.world.synth, 1, cfg.seed, 1, cfg.schedule.obs_count).front();
  const GaussianOracle oracle(0.0, cfg.schedule.sigma_data);
  const int n = cfg.schedule.obs_count;
  std::vector<PlannerKind> planners = {PlannerKind::rolling(15, n), PlannerKind::rolling(20, n),
                                       PlannerKind::autoregressive(), PlannerKind::mpc(1), PlannerKind::mpc(5),
                                       PlannerKind::one_shot()};
  std::string table = "planner,horizon,analytic_nfe,measured_nfe,match\n";
  json rows = json::array();
  bool all_match = true;
  for (int T : horizons) {
    EngineConfig eng = cfg.engine();
    eng.horizon = T;
    Scenario init = sc;
    if (init.num_frames() < n + T) {
      // extend the log so the rollout has ground-truth room; only the
      // first n frames are read by the engine
      Scenario longer = synth_corpus([&] {
        SynthConfig s = cfg.world.synth;
        s.frames = n + T;
        return s;
      }(), 1, cfg.seed, 1, n).front();
      init = std::move(longer);
    }
    for (const PlannerKind& p : planners) {
      const std::int64_t analytic = analytic_nfe(p, eng, T);
      std::int64_t measured = 0;
      if (toy) {
        ScheduleConfig sch = cfg.schedule;
        sch.window = planner_window(p, eng);
        const nn::ToyDenoiser<float> den(nn::toy_denoiser(cfg.training.model, sch));
        measured = rollout(init, p, nullptr, -1, den, eng, cfg.seed).total_nfe;
      } else {
        measured = rollout(init, p, nullptr, -1, oracle, eng, cfg.seed).total_nfe;
      }
      const bool match = analytic == measured;
      all_match = all_match && match;
      table += p.name() + "," + std::to_string(T) + "," + std::to_string(analytic) + "," + std::to_string(measured) +
               "," + (match ? "yes" : "NO") + "\n";
      rows.push_back({{"planner", p.name()}, {"horizon", T}, {"analytic_nfe", analytic}, {"measured_nfe", measured}});
    }
  }
  ensure_dir(cfg.out);
  write_text(fs::path(cfg.out) / "nfe.json", json{{"seed", cfg.seed}, {"rows", rows}}.dump(2) + "\n");
  std::cout << table;
  if (!all_match) throw StateError("bench-nfe: measured NFE differs from the closed form");
  return 0;
}

int fail(const char* type, const std::string& message, int code) {
  std::cerr << json{{"error", {{"type", type}, {"message", message}}}}.dump() << "\n";
  return code;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"road: rolling-diffusion traffic simulation"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "root seed (overrides the config)");
    sub->add_option("--out", common.out, "output directory (overrides the config)");
  };

  auto* synth = app.add_subcommand("synth", "write synthetic scenarios and a manifest");
  add_common(synth);
  int count = -1;
  synth->add_option("--count", count, "number of scenarios (default world.count)");

  auto* train = app.add_subcommand("train", "fit the toy denoiser for a planner");
  add_common(train);
  std::string data;
  int limit = 0, skip = 0;
  train->add_option("--data", data, "scenario directory")->required();
  train->add_option("--planner", common.planner, "planner the model is for");
  train->add_option("--window", common.window, "shorthand for --planner rolling(W)");
  train->add_option("--limit", limit, "use at most this many scenarios");

  auto* sim = app.add_subcommand("simulate", "closed-loop rollouts");
  add_common(sim);
  std::string checkpoint;
  sim->add_option("--checkpoint", checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  sim->add_option("--data", data, "scenario directory")->required();
  sim->add_option("--planner", common.planner, "rolling(W[,n]), ar, mpc(X) or one-shot");
  sim->add_option("--window", common.window, "shorthand for --planner rolling(W)");
  sim->add_option("--adversary", common.adversary, "on|off: slowed replay of one agent");
  sim->add_option("--samples", common.samples, "rollouts per scenario");
  sim->add_option("--skip", skip, "skip the first scenarios (sorted by file name)");
  sim->add_option("--limit", limit, "simulate at most this many scenarios");

  auto* eval = app.add_subcommand("eval", "metrics, comparison table and trajectory CSV");
  add_common(eval);
  std::vector<std::string> reports;
  eval->add_option("--reports", reports, "report directories")->required();
  eval->add_option("--data", data, "ground-truth scenario directory")->required();

  auto* bench = app.add_subcommand("bench-nfe", "analytic vs measured NFE for every planner");
  add_common(bench);
  std::vector<int> horizons = {10, 20, 40};
  bool toy = false;
  bench->add_option("--horizons", horizons, "rollout lengths")->delimiter(',');
  bench->add_flag("--toy", toy, "count with the untrained toy network instead of the oracle");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("UsageError", e.what(), 64);
  }

  try {
    const RunConfig cfg = resolve(common);
    if (*synth) return cmd_synth(cfg, count >= 0 ? count : cfg.world.count);
    if (*train) return cmd_train(cfg, data, limit);
    if (*sim) return cmd_simulate(cfg, checkpoint, data, skip, limit);
    if (*eval) return cmd_eval(cfg, reports, data);
    if (*bench) return cmd_bench_nfe(cfg, horizons, toy);
  } catch (const ConfigError& e) {
    return fail("ConfigError", e.what(), 2);
  } catch (const InputError& e) {
    return fail("InputError", e.what(), 3);
  } catch (const DomainError& e) {
    return fail("DomainError", e.what(), 4);
  } catch (const StateError& e) {
    return fail("StateError", e.what(), 5);
  } catch (const std::exception& e) {
    return fail("Error", e.what(), 1);
  }
  return 0;
}
