#include "roadsim/metrics.hpp"

#include "roadsim/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <limits>

namespace roadsim {

namespace {

void check_samples(const std::vector<States>& samples, const Scenario& gt, Index first_frame, const char* what) {
  if (samples.empty()) throw InputError(std::string(what) + ": need at least one sample");
  if (first_frame < 0 || first_frame >= gt.num_frames())
    throw InputError(std::string(what) + ": first_frame outside the scenario");
  for (const States& s : samples)
    if (s.agents != gt.num_agents() || s.slots != gt.num_frames())
      throw InputError(std::string(what) + ": sample shape does not match the ground truth");
}

double displacement(const States& s, const Scenario& gt, Index a, Index t) {
  return (s.at(a, t).head<2>() - gt.states.at(a, t).head<2>()).norm();
}

// Last valid frame of agent a in [first, end), or -1.
Index final_frame(const Scenario& gt, Index a, Index first) {
  for (Index t = gt.num_frames() - 1; t >= first; --t)
    if (gt.valid(a, t)) return t;
  return -1;
}

double scene_ade(const States& s, const Scenario& gt, Index first, Index only_agent = -1) {
  double sum = 0.0;
  Index count = 0;
  for (Index a = 0; a < gt.num_agents(); ++a) {
    if (only_agent >= 0 && a != only_agent) continue;
    for (Index t = first; t < gt.num_frames(); ++t)
      if (gt.valid(a, t)) {
        sum += displacement(s, gt, a, t);
        ++count;
      }
  }
  if (count == 0) throw InputError("displacement metric undefined: no valid (agent, step) pairs");
  return sum / count;
}

double scene_fde(const States& s, const Scenario& gt, Index first) {
  double sum = 0.0;
  Index count = 0;
  for (Index a = 0; a < gt.num_agents(); ++a) {
    const Index t = final_frame(gt, a, first);
    if (t < 0) continue;
    sum += displacement(s, gt, a, t);
    ++count;
  }
  if (count == 0) throw InputError("displacement metric undefined: no valid agents");
  return sum / count;
}

} // namespace

double min_scene_ade(const std::vector<States>& samples, const Scenario& gt, Index first_frame) {
  check_samples(samples, gt, first_frame, "min_scene_ade");
  double best = std::numeric_limits<double>::infinity();
  for (const States& s : samples) best = std::min(best, scene_ade(s, gt, first_frame));
  return best;
}

double min_scene_fde(const std::vector<States>& samples, const Scenario& gt, Index first_frame) {
  check_samples(samples, gt, first_frame, "min_scene_fde");
  double best = std::numeric_limits<double>::infinity();
  for (const States& s : samples) best = std::min(best, scene_fde(s, gt, first_frame));
  return best;
}

double ego_min_ade(const std::vector<States>& samples, const Scenario& gt, Index ego, Index first_frame) {
  check_samples(samples, gt, first_frame, "ego_min_ade");
  if (ego < 0 || ego >= gt.num_agents()) throw InputError("ego_min_ade: invalid ego id " + std::to_string(ego));
  double best = std::numeric_limits<double>::infinity();
  for (const States& s : samples) best = std::min(best, scene_ade(s, gt, first_frame, ego));
  return best;
}

MissTally miss_tally(const std::vector<States>& candidates, const Scenario& gt, Index first_frame) {
  if (candidates.size() != kMissCandidates)
    throw InputError("miss_rate: expected exactly 6 candidates, got " + std::to_string(candidates.size()));
  check_samples(candidates, gt, first_frame, "miss_rate");
  MissTally tally;
  for (Index a = 0; a < gt.num_agents(); ++a) {
    const Index t = final_frame(gt, a, first_frame);
    if (t < 0) continue;
    ++tally.agents;
    const bool hit = std::any_of(candidates.begin(), candidates.end(),
                                 [&](const States& c) { return displacement(c, gt, a, t) < kMissThreshold; });
    if (!hit) ++tally.misses;
  }
  return tally;
}

double miss_rate(const std::vector<States>& candidates, const Scenario& gt, Index first_frame) {
  return miss_tally(candidates, gt, first_frame).rate();
}

double collision_rate(const std::vector<RolloutReport>& reports, const std::vector<Index>& adversaries) {
  if (reports.empty()) throw InputError("collision_rate: no reports");
  if (adversaries.size() != reports.size()) throw InputError("collision_rate: one adversary id per report required");
  int counted = 0;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const Index adv = adversaries[i];
    const auto& ev = reports[i].collisions;
    if (std::any_of(ev.begin(), ev.end(), [&](const CollisionEvent& e) {
          return adv < 0 || e.agent_a == adv || e.agent_b == adv;
        }))
      ++counted;
  }
  return static_cast<double>(counted) / static_cast<double>(reports.size());
}

std::string MetricReport::to_json() const {
  const nlohmann::json j = {{"min_scene_ade", min_scene_ade}, {"min_scene_fde", min_scene_fde},
                            {"miss_rate", miss_rate},         {"collision_rate", collision_rate},
                            {"ego_min_ade", ego_min_ade},     {"sample_count", sample_count},
                            {"scenes", scenes}};
  return j.dump(2);
}

} // namespace roadsim
