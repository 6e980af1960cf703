#include "roadsim/engine.hpp"
#include "roadsim/error.hpp"

#include "json.hpp"

#include <fstream>

namespace roadsim {

namespace {

using nlohmann::json;

constexpr int kReportFormatVersion = 1;

json scenario_json(const Scenario& sc) {
  json agents = json::array();
  for (Index a = 0; a < sc.num_agents(); ++a) {
    json states = json::array(), valid = json::array();
    for (Index t = 0; t < sc.num_frames(); ++t) {
      const auto s = sc.states.at(a, t);
      states.push_back({s(0), s(1), s(2)});
      valid.push_back(sc.valid(a, t) ? 1 : 0);
    }
    agents.push_back({{"track_id", sc.track_ids[a]},
                      {"agent_type", sc.agent_types[a]},
                      {"length", sc.dims[a].length},
                      {"width", sc.dims[a].width},
                      {"states", std::move(states)},
                      {"valid", std::move(valid)}});
  }
  json lines = json::array();
  for (const auto& line : sc.map.polylines) {
    json pts = json::array();
    for (Index i = 0; i < line.rows(); ++i) pts.push_back({line(i, 0), line(i, 1)});
    lines.push_back(std::move(pts));
  }
  return {{"id", sc.id},
          {"location", sc.location},
          {"frames", sc.num_frames()},
          {"agents", std::move(agents)},
          {"map",
           {{"points_per_polyline", sc.map.points_per_polyline},
            {"frame", {{"origin", {sc.map.frame.origin.x(), sc.map.frame.origin.y()}}, {"scale", sc.map.frame.scale}}},
            {"polylines", std::move(lines)}}}};
}

Scenario scenario_from_json(const json& j) {
  Scenario sc;
  sc.id = j.at("id").get<std::string>();
  sc.location = j.at("location").get<std::string>();
  const Index T = j.at("frames").get<Index>();
  const json& agents = j.at("agents");
  const Index A = static_cast<Index>(agents.size());
  sc.states = States(A, T);
  sc.valid = FrameMask::Constant(A, T, false);
  for (Index a = 0; a < A; ++a) {
    const json& ag = agents[a];
    sc.track_ids.push_back(ag.at("track_id").get<int>());
    sc.agent_types.push_back(ag.at("agent_type").get<std::string>());
    sc.dims.push_back({ag.at("length").get<double>(), ag.at("width").get<double>()});
    const json& states = ag.at("states");
    const json& valid = ag.at("valid");
    if (static_cast<Index>(states.size()) != T || static_cast<Index>(valid.size()) != T)
      throw InputError("report: agent " + std::to_string(a) + " has the wrong number of frames");
    for (Index t = 0; t < T; ++t) {
      for (int c = 0; c < 3; ++c) sc.states.at(a, t)(c) = states[t].at(c).get<double>();
      sc.valid(a, t) = valid[t].get<int>() != 0;
    }
  }
  const json& m = j.at("map");
  sc.map.points_per_polyline = m.at("points_per_polyline").get<int>();
  sc.map.frame.origin = {m.at("frame").at("origin").at(0).get<double>(), m.at("frame").at("origin").at(1).get<double>()};
  sc.map.frame.scale = m.at("frame").at("scale").get<double>();
  for (const json& pts : m.at("polylines")) {
    Polyline line(static_cast<Index>(pts.size()), 2);
    for (Index i = 0; i < line.rows(); ++i) line.row(i) << pts[i].at(0).get<double>(), pts[i].at(1).get<double>();
    sc.map.polylines.push_back(std::move(line));
  }
  sc.check_shapes();
  return sc;
}

} // namespace

void save_report(const RolloutReport& r, const std::filesystem::path& path) {
  json collisions = json::array();
  for (const auto& e : r.collisions) collisions.push_back({e.step, e.agent_a, e.agent_b});
  const json j = {{"format_version", kReportFormatVersion},
                  {"scenario_id", r.scenario_id},
                  {"planner", r.planner},
                  {"seed", r.seed},
                  {"obs_count", r.obs_count},
                  {"ego", r.ego},
                  {"step_nfe", r.step_nfe},
                  {"total_nfe", r.total_nfe},
                  {"collisions", std::move(collisions)},
                  {"wall_time_s", r.wall_time_s},
                  {"realized", scenario_json(r.realized)}};
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw InputError("cannot write " + path.string());
    out << j.dump() << "\n";
  }
  std::filesystem::rename(tmp, path);
}

RolloutReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
    if (j.at("format_version").get<int>() != kReportFormatVersion)
      throw InputError(path.string() + ": unsupported format_version");
    RolloutReport r;
    r.scenario_id = j.at("scenario_id").get<std::string>();
    r.planner = j.at("planner").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.obs_count = j.at("obs_count").get<int>();
    r.ego = j.at("ego").get<Index>();
    r.step_nfe = j.at("step_nfe").get<std::vector<std::int64_t>>();
    r.total_nfe = j.at("total_nfe").get<std::int64_t>();
    for (const json& e : j.at("collisions"))
      r.collisions.push_back({e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<int>()});
    r.wall_time_s = j.at("wall_time_s").get<double>();
    r.realized = scenario_from_json(j.at("realized"));
    return r;
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": malformed report: " + e.what());
  }
}

} // namespace roadsim
