#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "heterogcn/common.hpp"

namespace heterogcn {

enum class AgentKind { kVehicle, kPedestrian, kCyclist, kOther };

std::string to_string(AgentKind k);
AgentKind agent_kind_from_string(const std::string& s);

struct AgentState {
  int t = 0;  // frame index at 10 Hz; 0 is the last historical frame
  double x = 0.0;
  double y = 0.0;
  std::optional<double> heading;  // radians
  bool observed = true;
};

struct AgentTrack {
  std::string id;
  AgentKind kind = AgentKind::kVehicle;
  std::vector<AgentState> states;  // strictly sorted by t

  // Observed state at frame t, or nullptr.
  const AgentState* observed_at(int t) const;
};

struct LanePolyline {
  std::string id;
  std::vector<std::array<double, 2>> centerline;  // >= 2 points, meters
  std::vector<std::string> successors;
  bool is_intersection = false;
};

struct Scenario {
  std::vector<AgentTrack> agents;
  std::vector<LanePolyline> lanes;
  std::string focal_agent_id;
  int t_hist = 0;    // T', frames t in {-T'+1, ..., 0}
  int t_future = 0;  // T, frames t in {1, ..., T}

  int focal_index() const;
  const AgentTrack& focal() const { return agents[focal_index()]; }
};

Scenario parse_scenario(const nlohmann::json& j);
Scenario load_scenario(const std::string& path);
nlohmann::json scenario_to_json(const Scenario& s);
void save_scenario(const Scenario& s, const std::string& path);

// Validates all Scenario invariants; throws ValidationError naming the
// offending field. Called by parse_scenario, exposed for tests.
void validate_scenario(const Scenario& s);

// Rigid transform into the scenario-wise frame: the focal agent's t=0
// position maps to the origin and its current direction to the +x axis.
// The focal t=0 heading is written as exactly 0 afterwards, which makes
// the operation idempotent bit-for-bit.
Scenario normalize_scenario(const Scenario& s);

// Heading used for normalization: the heading field at t=0 when present,
// otherwise the direction of the last two observed states.
double focal_heading_at_origin(const Scenario& s);

// Per-agent dense historical states over t = -T'+1 .. 0. Frames without an
// observed state are forward-filled (leading gaps take the first observed
// state) and flagged observed=false, which makes their displacements zero.
struct DenseHistory {
  std::vector<double> x, y, heading;
  std::vector<bool> observed;
  int size() const { return static_cast<int>(x.size()); }
};

std::vector<DenseHistory> fill_history(const Scenario& s);

struct SyntheticSpec {
  enum class Family { kStraight, kCurve, kTIntersection };
  Family family = Family::kStraight;
  int agent_count = 1;
  double noise = 0.05;  // bound of the uniform positional jitter, meters
  int t_hist = 20;
  int t_future = 30;
  double min_speed = 3.0;  // m/s
  double max_speed = 7.0;
};

SyntheticSpec::Family family_from_string(const std::string& s);

// Deterministic for a fixed seed. Agents follow lane centerlines at
// constant-ish speed; future ground truth is populated for every agent.
Scenario generate_synthetic_scenario(std::uint64_t seed, const SyntheticSpec& spec);

}  // namespace heterogcn
