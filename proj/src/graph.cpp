#include "heterogcn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace heterogcn {

void GraphConfig::validate() const {
  if (tau < 1) throw ValidationError("graph config: tau must be >= 1");
  if (num_snapshots < 1) throw ValidationError("graph config: num_snapshots must be >= 1");
  if (knn < 1) throw ValidationError("graph config: knn must be >= 1");
  if (delta_aa <= 0.0) throw ValidationError("graph config: delta_aa must be > 0");
  if (segment_len <= 0.0) throw ValidationError("graph config: segment_len must be > 0");
  if (opposing_angle_deg <= 0.0 || opposing_angle_deg > 180.0) {
    throw ValidationError("graph config: opposing_angle_deg must be in (0, 180]");
  }
  if (frame_dt <= 0.0) throw ValidationError("graph config: frame_dt must be > 0");
}

namespace {

struct Polyline {
  std::vector<std::array<double, 2>> pts;
  std::vector<double> cum;

  double length() const { return cum.back(); }
  std::array<double, 2> at(double s) const {
    if (s <= 0.0) return pts.front();
    if (s >= length()) return pts.back();
    std::size_t i = 1;
    while (i < cum.size() && cum[i] < s) ++i;
    const double w = (s - cum[i - 1]) / (cum[i] - cum[i - 1]);
    return {pts[i - 1][0] + w * (pts[i][0] - pts[i - 1][0]),
            pts[i - 1][1] + w * (pts[i][1] - pts[i - 1][1])};
  }
};

}  // namespace

LaneGraph build_lane_graph(const std::vector<LanePolyline>& lanes, double segment_len) {
  if (lanes.empty()) throw ValidationError("build_lane_graph: empty lane list");
  if (segment_len <= 0.0) throw ValidationError("build_lane_graph: segment_len must be > 0");

  LaneGraph g;
  std::vector<int> first_node(lanes.size()), last_node(lanes.size());
  std::unordered_map<std::string, int> lane_index;
  for (std::size_t li = 0; li < lanes.size(); ++li) lane_index[lanes[li].id] = static_cast<int>(li);

  for (std::size_t li = 0; li < lanes.size(); ++li) {
    const LanePolyline& lane = lanes[li];
    Polyline poly;
    poly.pts = lane.centerline;
    poly.cum.assign(poly.pts.size(), 0.0);
    for (std::size_t i = 1; i < poly.pts.size(); ++i) {
      poly.cum[i] = poly.cum[i - 1] + std::hypot(poly.pts[i][0] - poly.pts[i - 1][0],
                                                 poly.pts[i][1] - poly.pts[i - 1][1]);
    }
    const double L = poly.length();
    const int n_seg = std::max(1, static_cast<int>(std::llround(L / segment_len)));

    first_node[li] = g.size();
    for (int i = 0; i < n_seg; ++i) {
      const double s0 = L * i / n_seg;
      const double s1 = L * (i + 1) / n_seg;
      const auto a = poly.at(s0);
      const auto b = poly.at(s1);
      const auto mid = poly.at(0.5 * (s0 + s1));
      const double dx = b[0] - a[0];
      const double dy = b[1] - a[1];
      const double norm = std::hypot(dx, dy);
      g.node_coords.push_back(mid);
      g.node_dirs.push_back({dx / norm, dy / norm});
      g.raw_features.push_back({mid[0], mid[1], dx, dy});
      g.node_is_intersection.push_back(lane.is_intersection);
      g.node_lane.push_back(static_cast<int>(li));
      if (i > 0) g.edges.emplace_back(g.size() - 2, g.size() - 1);
    }
    last_node[li] = g.size() - 1;
  }
  for (std::size_t li = 0; li < lanes.size(); ++li) {
    for (const auto& succ : lanes[li].successors) {
      g.edges.emplace_back(last_node[li], first_node[lane_index.at(succ)]);
    }
  }

  if (g.edges.empty()) {
    g.avg_gap = segment_len;
  } else {
    double total = 0.0;
    for (const auto& [i, j] : g.edges) {
      total += std::hypot(g.node_coords[i][0] - g.node_coords[j][0],
                          g.node_coords[i][1] - g.node_coords[j][1]);
    }
    g.avg_gap = total / static_cast<double>(g.edges.size());
  }
  return g;
}

SnapshotSlices slice_snapshots(const std::vector<DenseHistory>& tracks, int tau, int num_snapshots,
                               double frame_dt) {
  const int P = num_snapshots;
  if (tracks.empty()) throw ValidationError("slice_snapshots: no agent tracks");
  const int t_hist = tracks[0].size();
  if (t_hist != tau * P) {
    throw ValidationError("slice_snapshots: t_hist " + std::to_string(t_hist) +
                          " is not tau * P = " + std::to_string(tau) + " * " + std::to_string(P));
  }

  SnapshotSlices out;
  out.features.resize(P);
  out.coords.resize(P);
  out.speeds.resize(P);
  for (int p = 1; p <= P; ++p) {
    auto& feats = out.features[p - 1];
    auto& coords = out.coords[p - 1];
    auto& speeds = out.speeds[p - 1];
    for (const auto& track : tracks) {
      const int last = tau * p - 1;  // 0-based index of t = tau*p - T'
      std::vector<double> row;
      row.reserve(3 + 2 * tau);
      row.push_back(track.x[last]);
      row.push_back(track.y[last]);
      row.push_back(track.heading[last]);
      double disp_sum = 0.0;
      for (int j = 0; j < tau; ++j) {
        const int idx = tau * (p - 1) + j;
        // The group-entry displacement bridges from the previous group's
        // last frame; for p = 1 there is no earlier frame, so it is zero.
        const double dx = idx > 0 ? track.x[idx] - track.x[idx - 1] : 0.0;
        const double dy = idx > 0 ? track.y[idx] - track.y[idx - 1] : 0.0;
        row.push_back(dx);
        row.push_back(dy);
        disp_sum += std::hypot(dx, dy);
      }
      feats.push_back(std::move(row));
      coords.push_back({track.x[last], track.y[last]});
      speeds.push_back(disp_sum / static_cast<double>(tau) / frame_dt);
    }
  }
  return out;
}

std::vector<int> dfs_reachable(const LaneGraph& g, const std::vector<int>& sources, int max_depth) {
  const int n = g.size();
  std::vector<std::vector<int>> succ(n);
  for (const auto& [i, j] : g.edges) succ[i].push_back(j);

  std::vector<int> depth(n, -1);
  std::vector<int> frontier;
  for (int s : sources) {
    if (s < 0 || s >= n) throw ValidationError("dfs_reachable: source index out of range");
    if (depth[s] != 0) {
      depth[s] = 0;
      frontier.push_back(s);
    }
  }
  for (int d = 1; d <= max_depth && !frontier.empty(); ++d) {
    std::vector<int> next;
    for (int u : frontier) {
      for (int v : succ[u]) {
        if (depth[v] < 0) {
          depth[v] = d;
          next.push_back(v);
        }
      }
    }
    frontier = std::move(next);
  }
  std::vector<int> out;
  for (int i = 0; i < n; ++i) {
    if (depth[i] >= 0) out.push_back(i);
  }
  return out;
}

std::pair<EdgeList, EdgeList> build_lane_agent_edges(
    const std::vector<std::array<double, 2>>& agent_coords, const std::vector<double>& agent_headings,
    const std::vector<double>& agent_speeds, const LaneGraph& g, int k, double forecast_horizon_s,
    double opposing_angle_deg) {
  if (k < 1) throw ValidationError("build_lane_agent_edges: k must be >= 1");
  if (g.size() == 0) throw ValidationError("build_lane_agent_edges: empty lane graph");

  const double cos_threshold = std::cos(opposing_angle_deg * kPi / 180.0);
  EdgeList lane_agent, agent_lane;
  for (std::size_t ai = 0; ai < agent_coords.size(); ++ai) {
    // k nearest lane nodes, ties broken by lower node index.
    std::vector<std::pair<double, int>> by_dist;
    by_dist.reserve(g.size());
    for (int li = 0; li < g.size(); ++li) {
      const double dx = g.node_coords[li][0] - agent_coords[ai][0];
      const double dy = g.node_coords[li][1] - agent_coords[ai][1];
      by_dist.emplace_back(dx * dx + dy * dy, li);
    }
    const int keep = std::min<int>(k, g.size());
    std::partial_sort(by_dist.begin(), by_dist.begin() + keep, by_dist.end());

    const double hx = std::cos(agent_headings[ai]);
    const double hy = std::sin(agent_headings[ai]);
    std::vector<int> survivors;
    for (int c = 0; c < keep; ++c) {
      const int li = by_dist[c].second;
      const double cosang = g.node_dirs[li][0] * hx + g.node_dirs[li][1] * hy;
      // Angle > threshold means an opposing lane; intersections keep all k
      // candidates since the agent may turn around there.
      if (cosang < cos_threshold && !g.node_is_intersection[li]) continue;
      survivors.push_back(li);
    }
    if (survivors.empty()) survivors.push_back(by_dist[0].second);

    const double reach = agent_speeds[ai] * forecast_horizon_s / g.avg_gap;
    const int max_depth = static_cast<int>(std::ceil(reach - 1e-9)) + 1;
    const std::vector<int> explored = dfs_reachable(g, survivors, max_depth);
    for (int li : explored) {
      lane_agent.emplace_back(static_cast<int>(ai), li);
      agent_lane.emplace_back(li, static_cast<int>(ai));
    }
  }
  return {std::move(lane_agent), std::move(agent_lane)};
}

EdgeList build_agent_agent_edges(const std::vector<std::array<double, 2>>& agent_coords,
                                 double delta_aa) {
  if (delta_aa <= 0.0) throw ValidationError("build_agent_agent_edges: delta_aa must be > 0");
  EdgeList edges;
  const int n = static_cast<int>(agent_coords.size());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double d = std::abs(agent_coords[i][0] - agent_coords[j][0]) +
                       std::abs(agent_coords[i][1] - agent_coords[j][1]);
      if (d < delta_aa) edges.emplace_back(i, j);
    }
  }
  return edges;
}

DynamicHeteroGraph assemble_dynamic_graph(const Scenario& s, const GraphConfig& cfg) {
  cfg.validate();
  if (s.t_hist != cfg.tau * cfg.num_snapshots) {
    throw ValidationError("assemble_dynamic_graph: t_hist " + std::to_string(s.t_hist) +
                          " does not equal tau * P = " + std::to_string(cfg.tau) + " * " +
                          std::to_string(cfg.num_snapshots));
  }

  DynamicHeteroGraph g;
  g.tau = cfg.tau;
  g.focal_index = s.focal_index();
  g.lane_graph = build_lane_graph(s.lanes, cfg.segment_len);

  const std::vector<DenseHistory> tracks = fill_history(s);
  const SnapshotSlices slices = slice_snapshots(tracks, cfg.tau, cfg.num_snapshots, cfg.frame_dt);
  const double horizon = s.t_future * cfg.frame_dt;

  for (int p = 1; p <= cfg.num_snapshots; ++p) {
    Snapshot snap;
    snap.index = p;
    snap.agent_features = slices.features[p - 1];
    snap.agent_coords = slices.coords[p - 1];
    snap.agent_speeds = slices.speeds[p - 1];

    std::vector<double> headings;
    headings.reserve(tracks.size());
    for (const auto& track : tracks) headings.push_back(track.heading[cfg.tau * p - 1]);

    auto [e1, e2] = build_lane_agent_edges(snap.agent_coords, headings, snap.agent_speeds,
                                           g.lane_graph, cfg.knn, horizon, cfg.opposing_angle_deg);
    snap.lane_agent = std::move(e1);
    snap.agent_lane = std::move(e2);
    snap.agent_agent = build_agent_agent_edges(snap.agent_coords, cfg.delta_aa);
    g.snapshots.push_back(std::move(snap));
  }
  return g;
}

nlohmann::json graph_to_json(const DynamicHeteroGraph& g) {
  nlohmann::json j;
  nlohmann::json jl;
  jl["node_coords"] = g.lane_graph.node_coords;
  jl["node_dirs"] = g.lane_graph.node_dirs;
  jl["raw_features"] = g.lane_graph.raw_features;
  jl["is_intersection"] = g.lane_graph.node_is_intersection;
  jl["edges"] = nlohmann::json::array();
  for (const auto& [a, b] : g.lane_graph.edges) jl["edges"].push_back({a, b});
  jl["avg_gap"] = g.lane_graph.avg_gap;
  j["lane_graph"] = std::move(jl);
  j["tau"] = g.tau;
  j["focal_index"] = g.focal_index;

  auto edges_json = [](const EdgeList& e) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& [a, b] : e) out.push_back({a, b});
    return out;
  };
  j["snapshots"] = nlohmann::json::array();
  for (const auto& snap : g.snapshots) {
    nlohmann::json js;
    js["index"] = snap.index;
    js["agent_features"] = snap.agent_features;
    js["agent_coords"] = snap.agent_coords;
    js["edges_by_type"] = {{"lane_lane", edges_json(g.lane_graph.edges)},
                           {"lane_agent", edges_json(snap.lane_agent)},
                           {"agent_lane", edges_json(snap.agent_lane)},
                           {"agent_agent", edges_json(snap.agent_agent)}};
    j["snapshots"].push_back(std::move(js));
  }
  return j;
}

}  // namespace heterogcn
