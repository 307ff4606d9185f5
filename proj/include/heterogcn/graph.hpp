#pragma once

#include <array>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "heterogcn/scenario.hpp"

namespace heterogcn {

// Directed (source, target) index pairs within the endpoints' own index spaces.
using EdgeList = std::vector<std::pair<int, int>>;

struct GraphConfig {
  int tau = 5;                         // frames per snapshot group
  int num_snapshots = 4;               // P
  int knn = 6;                         // k nearest lane nodes per agent
  double delta_aa = 50.0;              // agent-agent l1 threshold, meters
  double segment_len = 5.0;            // lane resampling length, meters
  double opposing_angle_deg = 120.0;   // opposing-lane pruning threshold
  double frame_dt = 0.1;               // 10 Hz

  void validate() const;
};

// One resampled lane segment per node; edges follow successor topology.
struct LaneGraph {
  std::vector<std::array<double, 2>> node_coords;   // segment midpoints
  std::vector<std::array<double, 2>> node_dirs;     // unit (end - start)
  std::vector<std::array<double, 4>> raw_features;  // midpoint + displacement
  std::vector<bool> node_is_intersection;
  std::vector<int> node_lane;  // owning polyline index
  EdgeList edges;              // E^0, static across snapshots
  double avg_gap = 0.0;        // mean distance between connected nodes

  int size() const { return static_cast<int>(node_coords.size()); }
};

struct Snapshot {
  int index = 0;  // p, 1-based
  // Row per agent: [x, y, heading at the group's last frame; tau displacements].
  std::vector<std::vector<double>> agent_features;
  std::vector<std::array<double, 2>> agent_coords;  // position at t = tau*p - T'
  std::vector<double> agent_speeds;  // group-mean speed, m/s (used for DFS depth)
  EdgeList lane_agent;   // E^1_p: (agent, lane)
  EdgeList agent_lane;   // E^2_p: (lane, agent), exact reversal of E^1_p
  EdgeList agent_agent;  // E^3_p: symmetric, no self loops
};

struct DynamicHeteroGraph {
  LaneGraph lane_graph;
  std::vector<Snapshot> snapshots;  // size P
  int tau = 0;
  int focal_index = 0;

  int agent_count() const {
    return snapshots.empty() ? 0 : static_cast<int>(snapshots[0].agent_coords.size());
  }
};

LaneGraph build_lane_graph(const std::vector<LanePolyline>& lanes, double segment_len);

struct SnapshotSlices {
  // [P][n_agents][3 + 2*tau] and [P][n_agents][2]; speeds in m/s.
  std::vector<std::vector<std::vector<double>>> features;
  std::vector<std::vector<std::array<double, 2>>> coords;
  std::vector<std::vector<double>> speeds;
};

SnapshotSlices slice_snapshots(const std::vector<DenseHistory>& tracks, int tau, int num_snapshots,
                               double frame_dt = 0.1);

// Nodes reachable from any source via at most max_depth E^0 edges; sources are
// included at depth 0. Returned sorted ascending.
std::vector<int> dfs_reachable(const LaneGraph& g, const std::vector<int>& sources, int max_depth);

// Lane-agent candidate collection: k nearest lane nodes, opposing-lane pruning
// (kept on intersections), then DFS expansion with
// max_depth = ceil(mean_speed * forecast_horizon / avg_gap) + 1.
std::pair<EdgeList, EdgeList> build_lane_agent_edges(
    const std::vector<std::array<double, 2>>& agent_coords, const std::vector<double>& agent_headings,
    const std::vector<double>& agent_speeds, const LaneGraph& g, int k, double forecast_horizon_s,
    double opposing_angle_deg);

EdgeList build_agent_agent_edges(const std::vector<std::array<double, 2>>& agent_coords,
                                 double delta_aa);

// s must already be normalized; cfg must satisfy t_hist = tau * P.
DynamicHeteroGraph assemble_dynamic_graph(const Scenario& s, const GraphConfig& cfg);

nlohmann::json graph_to_json(const DynamicHeteroGraph& g);

}  // namespace heterogcn
