#include "roadsim/error.hpp"
#include "roadsim/world.hpp"

#include "json.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string_view>

namespace roadsim {

namespace {

using nlohmann::json;

constexpr const char* kColumns[] = {"scenario_id", "track_id", "frame", "timestamp_ms", "agent_type",
                                    "x",           "y",        "psi_rad", "length",     "width"};

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view field, const char* column, std::size_t line_no) {
  T value{};
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw InputError("row " + std::to_string(line_no) + ": column '" + column + "' is not a number: '" +
                     std::string(field) + "'");
  return value;
}

} // namespace

std::filesystem::path map_path_for(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".map.json");
  return p;
}

void save_scenario(const Scenario& sc, const std::filesystem::path& csv_path) {
  sc.check_shapes();
  {
    std::ofstream out(csv_path, std::ios::trunc);
    if (!out) throw InputError("cannot write " + csv_path.string());
    out << "#format_version=" << kScenarioFormatVersion << "\n";
    for (std::size_t i = 0; i < std::size(kColumns); ++i) out << (i ? "," : "") << kColumns[i];
    out << "\n";
    for (Index a = 0; a < sc.num_agents(); ++a)
      for (Index t = 0; t < sc.num_frames(); ++t) {
        if (!sc.valid(a, t)) continue;
        const auto s = sc.states.at(a, t);
        out << sc.id << ',' << sc.track_ids[a] << ',' << t << ',' << t * 100 << ',' << sc.agent_types[a]
            << ',' << fmt(s(0)) << ',' << fmt(s(1)) << ',' << fmt(s(2)) << ',' << fmt(sc.dims[a].length)
            << ',' << fmt(sc.dims[a].width) << '\n';
      }
  }
  json m;
  m["format_version"] = kScenarioFormatVersion;
  m["scenario_id"] = sc.id;
  m["location"] = sc.location;
  m["points_per_polyline"] = sc.map.points_per_polyline;
  m["frame"] = {{"origin", {sc.map.frame.origin.x(), sc.map.frame.origin.y()}}, {"scale", sc.map.frame.scale}};
  json lines = json::array();
  for (const auto& line : sc.map.polylines) {
    json pts = json::array();
    for (Index i = 0; i < line.rows(); ++i) pts.push_back({line(i, 0), line(i, 1)});
    lines.push_back(std::move(pts));
  }
  m["polylines"] = std::move(lines);
  std::ofstream out(map_path_for(csv_path), std::ios::trunc);
  if (!out) throw InputError("cannot write " + map_path_for(csv_path).string());
  out << m.dump(1) << "\n";
}

Scenario load_scenario(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw InputError("cannot open " + csv_path.string());

  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line.rfind("#format_version=", 0) != 0)
    throw InputError(csv_path.string() + ": row 1: missing '#format_version=' header");
  const int version = parse_number<int>(std::string_view(line).substr(16), "format_version", line_no);
  if (version != kScenarioFormatVersion)
    throw InputError(csv_path.string() + ": unsupported format_version " + std::to_string(version));

  ++line_no;
  if (!std::getline(in, line)) throw InputError(csv_path.string() + ": row 2: missing column header");
  std::map<std::string, std::size_t> column;
  {
    const auto names = split(line);
    for (std::size_t i = 0; i < names.size(); ++i) column[std::string(names[i])] = i;
  }
  std::size_t idx[std::size(kColumns)];
  for (std::size_t c = 0; c < std::size(kColumns); ++c) {
    auto it = column.find(kColumns[c]);
    if (it == column.end()) throw InputError(csv_path.string() + ": missing column '" + kColumns[c] + "'");
    idx[c] = it->second;
  }

  struct Row {
    int track, frame;
    std::string type;
    double x, y, psi, length, width;
  };
  std::vector<Row> rows;
  std::string scenario_id;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != column.size())
      throw InputError(csv_path.string() + ": row " + std::to_string(line_no) + ": expected " +
                       std::to_string(column.size()) + " fields, got " + std::to_string(f.size()));
    const std::string id(f[idx[0]]);
    if (rows.empty()) scenario_id = id;
    else if (id != scenario_id)
      throw InputError(csv_path.string() + ": row " + std::to_string(line_no) + ": mixed scenario ids");
    Row r;
    r.track = parse_number<int>(f[idx[1]], kColumns[1], line_no);
    r.frame = parse_number<int>(f[idx[2]], kColumns[2], line_no);
    r.type = std::string(f[idx[4]]);
    r.x = parse_number<double>(f[idx[5]], kColumns[5], line_no);
    r.y = parse_number<double>(f[idx[6]], kColumns[6], line_no);
    r.psi = parse_number<double>(f[idx[7]], kColumns[7], line_no);
    r.length = parse_number<double>(f[idx[8]], kColumns[8], line_no);
    r.width = parse_number<double>(f[idx[9]], kColumns[9], line_no);
    if (r.frame < 0)
      throw InputError(csv_path.string() + ": row " + std::to_string(line_no) + ": negative frame");
    if (!(r.length > 0.0 && r.width > 0.0))
      throw InputError(csv_path.string() + ": row " + std::to_string(line_no) + ": non-positive dimensions");
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw InputError(csv_path.string() + ": empty scenario (no agents)");

  Scenario sc;
  sc.id = scenario_id;
  std::map<int, int> agent_of;
  int frames = 0;
  for (const Row& r : rows) {
    if (agent_of.emplace(r.track, static_cast<int>(sc.track_ids.size())).second) {
      sc.track_ids.push_back(r.track);
      sc.agent_types.push_back(r.type);
      sc.dims.push_back({r.length, r.width});
    }
    frames = std::max(frames, r.frame + 1);
  }
  sc.states = States(static_cast<Index>(sc.track_ids.size()), frames);
  sc.valid = FrameMask::Constant(sc.states.agents, frames, false);
  for (const Row& r : rows) {
    const int a = agent_of[r.track];
    sc.states.at(a, r.frame) << r.x, r.y, r.psi;
    sc.valid(a, r.frame) = true;
  }

  const auto mpath = map_path_for(csv_path);
  std::ifstream min(mpath);
  if (min) {
    json m;
    try {
      m = json::parse(min);
    } catch (const json::exception& e) {
      throw InputError(mpath.string() + ": " + e.what());
    }
    if (!m.contains("format_version") || m["format_version"].get<int>() != kScenarioFormatVersion)
      throw InputError(mpath.string() + ": missing or unsupported format_version");
    sc.location = m.value("location", "");
    sc.map.points_per_polyline = m.value("points_per_polyline", 0);
    if (m.contains("frame")) {
      sc.map.frame.origin << m["frame"]["origin"][0].get<double>(), m["frame"]["origin"][1].get<double>();
      sc.map.frame.scale = m["frame"]["scale"].get<double>();
    }
    for (const auto& pts : m.at("polylines")) {
      Polyline p(static_cast<Index>(pts.size()), 2);
      for (std::size_t i = 0; i < pts.size(); ++i) p.row(i) << pts[i][0].get<double>(), pts[i][1].get<double>();
      sc.map.polylines.push_back(std::move(p));
    }
  }
  return sc;
}

} // namespace roadsim
