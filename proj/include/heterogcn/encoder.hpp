#pragma once

#include <array>
#include <string>
#include <vector>

#include "heterogcn/graph.hpp"
#include "heterogcn/nn.hpp"
#include "heterogcn/tensor.hpp"

namespace heterogcn {

// Ablation axes: heterogeneous vs type-shared parameters, and per-snapshot
// dynamic topology vs a single static topology.
enum class Variant { kHeteroDynamic, kHomoDynamic, kHeteroStatic, kHomoStatic };

Variant variant_from_string(const std::string& s);
std::string variant_to_string(Variant v);
inline bool is_homo(Variant v) { return v == Variant::kHomoDynamic || v == Variant::kHomoStatic; }
inline bool is_static(Variant v) {
  return v == Variant::kHeteroStatic || v == Variant::kHomoStatic;
}

struct EncoderConfig {
  int hidden = 128;     // d
  int gcm_layers = 2;   // L, graph conv layers chained per GCM application
  int tau = 5;          // frames per snapshot (fixes the displacement width)
  Variant variant = Variant::kHeteroDynamic;

  int pos_dim() const { return 3; }
  int disp_dim() const { return 2 * tau; }
  int map_dim() const { return 4; }
  void validate() const;
};

// Registers every encoder parameter (motion.*, map.*, gcm.*) drawing init
// values from rng in a fixed name order.
void build_encoder_params(nn::ParamStore& params, Rng& rng, const EncoderConfig& cfg);

// Edge lists in global stacked-row indices, each pair (target, source).
// Rows 0..n-1 are agents, rows n..n+m-1 are lane nodes.
struct ConvEdges {
  std::array<EdgeList, 4> by_type;  // r = 0: lane-lane, 1: lane->agent, 2: agent->lane, 3: agent-agent
};

ConvEdges conv_edges_for_snapshot(const LaneGraph& lanes, const Snapshot& snap);
std::vector<std::array<double, 2>> stacked_coords(const LaneGraph& lanes, const Snapshot& snap);

// One graph-convolution layer over the stacked node matrix (agents then
// lanes). Messages aggregate per edge type by elementwise max, sum across
// types, and feed a gated residual update per node type.
ad::Value hetero_conv(ad::Tape& tape, nn::ParamBinder& bind, const std::string& layer_prefix,
                      ad::Value h, const ConvEdges& edges,
                      const std::vector<std::array<double, 2>>& coords, int num_agents, bool homo);

// Snapshot-shared motion encoder: two MLPs embed pose and displacement parts,
// two GRUs carry them across snapshots, a linear layer fuses. Causal in p.
std::vector<ad::Value> encode_motion(ad::Tape& tape, nn::ParamBinder& bind,
                                     const DynamicHeteroGraph& g, const EncoderConfig& cfg);

// Two-layer neighbor-mean map encoder over the static lane topology.
ad::Value encode_map(ad::Tape& tape, nn::ParamBinder& bind, const DynamicHeteroGraph& g,
                     const EncoderConfig& cfg);

struct EncodeResult {
  ad::Value agents;  // H_P agent rows, [n x d]
  ad::Value lanes;   // H_P lane rows, [m x d]
};

EncodeResult encode_scenario(ad::Tape& tape, nn::ParamBinder& bind, const DynamicHeteroGraph& g,
                             const EncoderConfig& cfg);

}  // namespace heterogcn
