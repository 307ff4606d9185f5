#pragma once

#include <array>
#include <string>
#include <vector>

#include "heterogcn/nn.hpp"
#include "heterogcn/tensor.hpp"

namespace heterogcn {

struct DecoderConfig {
  int hidden = 128;  // d, must match the encoder output width
  int modes = 6;     // K
  int t_future = 30;  // T, predicted frames including the goal

  void validate() const;
};

void build_decoder_params(nn::ParamStore& params, Rng& rng, const DecoderConfig& cfg);

// Tape handles for one agent's decoded output; keeps gradients flowing for
// training. trajectories rows are the T-1 intermediate states, flattened
// (x1, y1, ..., x_{T-1}, y_{T-1}); the goal is the final state T.
struct DecodeValues {
  ad::Value goals;          // [K x 2]
  ad::Value trajectories;   // [K x 2(T-1)]
  ad::Value scores;         // [K x 1]
  ad::Value probabilities;  // [1 x K], softmax of scores
};

// Three-branch head: goals from the agent feature; trajectories conditioned
// on an embedding of each goal; scores from the agent feature plus a detached
// summary of the full predicted trajectory.
DecodeValues decode_agent(ad::Tape& tape, nn::ParamBinder& bind, ad::Value agent_row,
                          const DecoderConfig& cfg);

struct PredictionMode {
  std::array<double, 2> goal{};
  std::vector<std::array<double, 2>> trajectory;  // T-1 states before the goal
  double score = 0.0;
  double probability = 0.0;
};

struct Prediction {
  std::string agent_id;
  std::vector<PredictionMode> modes;
};

Prediction extract_prediction(const ad::Tape& tape, const DecodeValues& decoded,
                              const std::string& agent_id);

std::string prediction_to_json(const Prediction& pred);
Prediction prediction_from_json(const std::string& text);

struct LossConfig {
  double lambda1 = 1.0;  // goal term
  double lambda2 = 1.0;  // regression term
  double lambda3 = 1.0;  // score term
  double epsilon = 0.2;  // score margin

  void validate() const;
};

struct LossTerms {
  ad::Value total;
  ad::Value goal;
  ad::Value reg;
  ad::Value score;
  int best_mode = 0;  // k*, argmin of goal displacement (ties: lowest index)
};

// Loss for one agent. gt holds the future states s_1..s_T in order; the last
// entry is the goal. Smooth-l1 on 2-vectors sums the per-coordinate values.
LossTerms compute_loss(ad::Tape& tape, const DecodeValues& decoded,
                       const std::vector<std::array<double, 2>>& gt, const LossConfig& cfg);

}  // namespace heterogcn
