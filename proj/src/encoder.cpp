#include "heterogcn/encoder.hpp"

#include <algorithm>
#include <set>
#include <utility>

namespace heterogcn {

namespace {

using ad::Tape;
using ad::Tensor;
using ad::Value;
using nn::ParamBinder;

std::string edge_prefix(const std::string& layer_prefix, int r, bool homo) {
  return homo ? layer_prefix + ".edge" : layer_prefix + ".edge" + std::to_string(r);
}

std::string node_prefix(const std::string& layer_prefix, int z, bool homo) {
  return homo ? layer_prefix + ".node" : layer_prefix + ".node" + std::to_string(z);
}

// Messages of one edge type, reduced target-wise by max. Rows without any
// incoming edge of this type stay zero.
Value edge_type_messages(Tape& tape, ParamBinder& bind, const std::string& prefix, Value h,
                         const EdgeList& edges, const std::vector<std::array<double, 2>>& coords,
                         int num_nodes) {
  std::vector<int> targets, sources;
  targets.reserve(edges.size());
  sources.reserve(edges.size());
  Tensor delta(static_cast<int>(edges.size()), 2);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto& [i, j] = edges[e];
    targets.push_back(i);
    sources.push_back(j);
    delta.at(static_cast<int>(e), 0) = coords[i][0] - coords[j][0];
    delta.at(static_cast<int>(e), 1) = coords[i][1] - coords[j][1];
  }
  Value h_i = tape.gather_rows(h, targets);
  Value h_j = tape.gather_rows(h, sources);
  Value sim = tape.hadamard(tape.matmul(h_i, bind(prefix + ".q")), h_j);
  Value rel = tape.relu(
      nn::linear(tape, bind, prefix + ".psi", tape.concat_cols({sim, tape.constant(delta)})));
  Value msg = nn::mlp2(tape, bind, prefix + ".f", tape.concat_cols({h_j, rel}));
  return tape.segment_max(msg, std::move(targets), num_nodes);
}

Value node_type_update(Tape& tape, ParamBinder& bind, const std::string& prefix, Value h_rows,
                       Value msg_rows) {
  Value nu = tape.relu(nn::linear(tape, bind, prefix + ".nu", h_rows));
  Value pre = tape.matmul(tape.concat_cols({nu, msg_rows}), bind(prefix + ".w"));
  return tape.relu(tape.add(pre, h_rows));
}

}  // namespace

Variant variant_from_string(const std::string& s) {
  if (s == "hetero_dynamic") return Variant::kHeteroDynamic;
  if (s == "homo_dynamic") return Variant::kHomoDynamic;
  if (s == "hetero_static") return Variant::kHeteroStatic;
  if (s == "homo_static") return Variant::kHomoStatic;
  throw ValidationError("unknown encoder variant '" + s +
                        "' (expected hetero_dynamic, homo_dynamic, hetero_static or homo_static)");
}

std::string variant_to_string(Variant v) {
  switch (v) {
    case Variant::kHeteroDynamic: return "hetero_dynamic";
    case Variant::kHomoDynamic: return "homo_dynamic";
    case Variant::kHeteroStatic: return "hetero_static";
    case Variant::kHomoStatic: return "homo_static";
  }
  throw ValidationError("unknown encoder variant value");
}

void EncoderConfig::validate() const {
  if (hidden < 1) throw ValidationError("encoder hidden width must be >= 1");
  if (gcm_layers < 1) throw ValidationError("encoder gcm_layers must be >= 1");
  if (tau < 1) throw ValidationError("encoder tau must be >= 1");
}

void build_encoder_params(nn::ParamStore& params, Rng& rng, const EncoderConfig& cfg) {
  cfg.validate();
  const int d = cfg.hidden;
  nn::init_mlp2(params, rng, "motion.mlp_pos", cfg.pos_dim(), d, d);
  nn::init_mlp2(params, rng, "motion.mlp_disp", cfg.disp_dim(), d, d);
  nn::init_gru(params, rng, "motion.gru_pos", d, d);
  nn::init_gru(params, rng, "motion.gru_disp", d, d);
  nn::init_linear(params, rng, "motion.fuse", 2 * d, d);

  int map_in = cfg.map_dim();
  for (int layer = 0; layer < 2; ++layer) {
    const std::string prefix = "map.layer" + std::to_string(layer);
    params.add(prefix + ".self", nn::uniform_fan_in(rng, map_in, map_in, d));
    params.add(prefix + ".neigh", nn::uniform_fan_in(rng, map_in, map_in, d));
    map_in = d;
  }

  const bool homo = is_homo(cfg.variant);
  for (int layer = 0; layer < cfg.gcm_layers; ++layer) {
    const std::string lp = "gcm.layer" + std::to_string(layer);
    const int edge_sets = homo ? 1 : 4;
    for (int r = 0; r < edge_sets; ++r) {
      const std::string ep = edge_prefix(lp, r, homo);
      params.add(ep + ".q", nn::uniform_fan_in(rng, d, d, d));
      nn::init_linear(params, rng, ep + ".psi", d + 2, d);
      nn::init_mlp2(params, rng, ep + ".f", 2 * d, d, d);
    }
    const int node_sets = homo ? 1 : 2;
    for (int z = 0; z < node_sets; ++z) {
      const std::string np = node_prefix(lp, z, homo);
      nn::init_linear(params, rng, np + ".nu", d, d);
      params.add(np + ".w", nn::uniform_fan_in(rng, 2 * d, 2 * d, d));
    }
  }
}

ConvEdges conv_edges_for_snapshot(const LaneGraph& lanes, const Snapshot& snap) {
  const int n = static_cast<int>(snap.agent_coords.size());
  ConvEdges out;
  // Lane-lane messages flow downstream: segment v hears from its predecessor u.
  for (const auto& [u, v] : lanes.edges) {
    out.by_type[0].emplace_back(n + v, n + u);
  }
  for (const auto& [agent, lane] : snap.lane_agent) {
    out.by_type[1].emplace_back(agent, n + lane);
  }
  for (const auto& [lane, agent] : snap.agent_lane) {
    out.by_type[2].emplace_back(n + lane, agent);
  }
  out.by_type[3] = snap.agent_agent;
  return out;
}

std::vector<std::array<double, 2>> stacked_coords(const LaneGraph& lanes, const Snapshot& snap) {
  std::vector<std::array<double, 2>> coords = snap.agent_coords;
  coords.insert(coords.end(), lanes.node_coords.begin(), lanes.node_coords.end());
  return coords;
}

ad::Value hetero_conv(Tape& tape, ParamBinder& bind, const std::string& layer_prefix, Value h,
                      const ConvEdges& edges, const std::vector<std::array<double, 2>>& coords,
                      int num_agents, bool homo) {
  const int num_nodes = tape.rows(h);
  if (static_cast<int>(coords.size()) != num_nodes) {
    throw ValidationError("hetero_conv: " + std::to_string(coords.size()) + " coords for " +
                          std::to_string(num_nodes) + " node rows");
  }
  Value msg{};
  for (int r = 0; r < 4; ++r) {
    if (edges.by_type[r].empty()) {
      continue;
    }
    Value part = edge_type_messages(tape, bind, edge_prefix(layer_prefix, r, homo), h,
                                    edges.by_type[r], coords, num_nodes);
    msg = msg.valid() ? tape.add(msg, part) : part;
  }
  if (!msg.valid()) {
    msg = tape.constant(Tensor(num_nodes, tape.cols(h)));
  }
  msg = tape.relu(msg);

  if (homo) {
    return node_type_update(tape, bind, node_prefix(layer_prefix, 0, true), h, msg);
  }
  if (num_agents == num_nodes) {
    return node_type_update(tape, bind, node_prefix(layer_prefix, 0, false), h, msg);
  }
  if (num_agents == 0) {
    return node_type_update(tape, bind, node_prefix(layer_prefix, 1, false), h, msg);
  }
  Value agents = node_type_update(tape, bind, node_prefix(layer_prefix, 0, false),
                                  tape.slice_rows(h, 0, num_agents),
                                  tape.slice_rows(msg, 0, num_agents));
  Value lanes = node_type_update(tape, bind, node_prefix(layer_prefix, 1, false),
                                 tape.slice_rows(h, num_agents, num_nodes),
                                 tape.slice_rows(msg, num_agents, num_nodes));
  return tape.concat_rows(agents, lanes);
}

std::vector<ad::Value> encode_motion(Tape& tape, ParamBinder& bind, const DynamicHeteroGraph& g,
                                     const EncoderConfig& cfg) {
  const int n = g.agent_count();
  const int d = cfg.hidden;
  std::vector<Value> out;
  out.reserve(g.snapshots.size());
  Value h_pos = tape.constant(Tensor(n, d));
  Value h_disp = tape.constant(Tensor(n, d));
  for (const Snapshot& snap : g.snapshots) {
    Tensor feats = Tensor::from_rows(snap.agent_features);
    if (feats.cols != cfg.pos_dim() + cfg.disp_dim()) {
      throw ValidationError("encode_motion: snapshot features are " + feats.shape_str() +
                            ", expected width " +
                            std::to_string(cfg.pos_dim() + cfg.disp_dim()));
    }
    Value x = tape.constant(std::move(feats));
    Value pos = tape.slice_cols(x, 0, cfg.pos_dim());
    Value disp = tape.slice_cols(x, cfg.pos_dim(), cfg.pos_dim() + cfg.disp_dim());
    h_pos = nn::gru_cell(tape, bind, "motion.gru_pos", nn::mlp2(tape, bind, "motion.mlp_pos", pos),
                         h_pos);
    h_disp = nn::gru_cell(tape, bind, "motion.gru_disp",
                          nn::mlp2(tape, bind, "motion.mlp_disp", disp), h_disp);
    out.push_back(nn::linear(tape, bind, "motion.fuse", tape.concat_cols({h_pos, h_disp})));
  }
  return out;
}

ad::Value encode_map(Tape& tape, ParamBinder& bind, const DynamicHeteroGraph& g,
                     const EncoderConfig& /*cfg*/) {
  const LaneGraph& lanes = g.lane_graph;
  const int m = lanes.size();
  if (m == 0) {
    throw ValidationError("encode_map: empty lane graph");
  }
  // Undirected, deduplicated adjacency for the neighbor mean.
  std::set<std::pair<int, int>> adj;
  for (const auto& [u, v] : lanes.edges) {
    adj.emplace(u, v);
    adj.emplace(v, u);
  }
  std::vector<int> targets, sources;
  std::vector<double> inv_degree(m, 0.0);
  targets.reserve(adj.size());
  sources.reserve(adj.size());
  for (const auto& [i, j] : adj) {
    targets.push_back(i);
    sources.push_back(j);
    inv_degree[i] += 1.0;
  }
  for (double& v : inv_degree) {
    if (v > 0.0) v = 1.0 / v;
  }

  std::vector<std::vector<double>> raw;
  raw.reserve(m);
  for (const auto& f : lanes.raw_features) {
    raw.emplace_back(f.begin(), f.end());
  }
  Value h = tape.constant(Tensor::from_rows(raw));
  for (int layer = 0; layer < 2; ++layer) {
    const std::string prefix = "map.layer" + std::to_string(layer);
    Value self_term = tape.matmul(h, bind(prefix + ".self"));
    Value mean = tape.row_scale(tape.segment_sum(tape.gather_rows(h, sources), targets, m),
                                inv_degree);
    h = tape.relu(tape.add(self_term, tape.matmul(mean, bind(prefix + ".neigh"))));
  }
  return h;
}

EncodeResult encode_scenario(Tape& tape, ParamBinder& bind, const DynamicHeteroGraph& g,
                             const EncoderConfig& cfg) {
  cfg.validate();
  if (g.snapshots.empty()) {
    throw ValidationError("encode_scenario: graph has no snapshots");
  }
  if (g.tau != cfg.tau) {
    throw ValidationError("encode_scenario: graph tau " + std::to_string(g.tau) +
                          " does not match encoder tau " + std::to_string(cfg.tau));
  }
  const int n = g.agent_count();
  const int num_snapshots = static_cast<int>(g.snapshots.size());
  const bool homo = is_homo(cfg.variant);

  const std::vector<Value> motion = encode_motion(tape, bind, g, cfg);
  Value lanes = encode_map(tape, bind, g, cfg);

  auto run_gcm = [&](Value h, const ConvEdges& edges,
                     const std::vector<std::array<double, 2>>& coords) {
    for (int layer = 0; layer < cfg.gcm_layers; ++layer) {
      h = hetero_conv(tape, bind, "gcm.layer" + std::to_string(layer), h, edges, coords, n, homo);
    }
    return h;
  };

  if (is_static(cfg.variant)) {
    // Static ablation: the last snapshot's topology stands in for the whole
    // history; the final motion state seeds the agents and the GCM is applied
    // as many times as there are snapshots, feeding on its own output.
    const Snapshot& last = g.snapshots.back();
    const ConvEdges edges = conv_edges_for_snapshot(g.lane_graph, last);
    const std::vector<std::array<double, 2>> coords = stacked_coords(g.lane_graph, last);
    Value h = tape.concat_rows(motion.back(), lanes);
    for (int p = 0; p < num_snapshots; ++p) {
      h = run_gcm(h, edges, coords);
    }
    return {tape.slice_rows(h, 0, n), tape.slice_rows(h, n, n + g.lane_graph.size())};
  }

  Value agents = tape.constant(Tensor(n, cfg.hidden));
  for (int p = 0; p < num_snapshots; ++p) {
    const Snapshot& snap = g.snapshots[p];
    // Spatio-temporal gate: the new motion summary joins the carried state.
    agents = tape.add(agents, motion[p]);
    const ConvEdges edges = conv_edges_for_snapshot(g.lane_graph, snap);
    const std::vector<std::array<double, 2>> coords = stacked_coords(g.lane_graph, snap);
    Value h = run_gcm(tape.concat_rows(agents, lanes), edges, coords);
    agents = tape.slice_rows(h, 0, n);
    lanes = tape.slice_rows(h, n, n + g.lane_graph.size());
  }
  return {agents, lanes};
}

}  // namespace heterogcn
