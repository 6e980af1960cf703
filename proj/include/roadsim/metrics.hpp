#pragma once

#include "roadsim/engine.hpp"
#include "roadsim/world.hpp"

#include <string>
#include <vector>

namespace roadsim {

// Displacement metrics compare positions only, over frames [first_frame, end)
// and the (agent, frame) pairs valid in the ground truth. Each sample is an
// A x T state tensor in the same units as `gt`.

double min_scene_ade(const std::vector<States>& samples, const Scenario& gt, Index first_frame = 0);
double min_scene_fde(const std::vector<States>& samples, const Scenario& gt, Index first_frame = 0);
double ego_min_ade(const std::vector<States>& samples, const Scenario& gt, Index ego, Index first_frame = 0);

inline constexpr int kMissCandidates = 6;
inline constexpr double kMissThreshold = 2.0;  // meters, strict "< 2 m" is a hit

struct MissTally {
  int misses = 0;
  int agents = 0;
  double rate() const { return agents ? static_cast<double>(misses) / agents : 0.0; }
  MissTally& operator+=(const MissTally& o) {
    misses += o.misses;
    agents += o.agents;
    return *this;
  }
};

// Exactly six candidates; an agent misses when every candidate's final
// displacement is >= 2 m. Tallies pool across scenes.
MissTally miss_tally(const std::vector<States>& candidates, const Scenario& gt, Index first_frame = 0);
double miss_rate(const std::vector<States>& candidates, const Scenario& gt, Index first_frame = 0);

// Fraction of reports with at least one collision involving that report's
// adversary (any collision when the adversary id is -1).
double collision_rate(const std::vector<RolloutReport>& reports, const std::vector<Index>& adversaries);

struct MetricReport {
  double min_scene_ade = 0.0;
  double min_scene_fde = 0.0;
  double miss_rate = 0.0;
  double collision_rate = 0.0;
  double ego_min_ade = 0.0;
  int sample_count = 0;
  int scenes = 0;

  std::string to_json() const;
};

} // namespace roadsim
