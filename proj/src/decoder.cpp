#include "heterogcn/decoder.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <utility>

namespace heterogcn {

namespace {

using ad::Tape;
using ad::Tensor;
using ad::Value;
using nn::ParamBinder;

}  // namespace

void DecoderConfig::validate() const {
  if (hidden < 1) throw ValidationError("decoder hidden width must be >= 1");
  if (modes < 1) throw ValidationError("decoder mode count must be >= 1");
  if (t_future < 2) throw ValidationError("decoder t_future must be >= 2");
}

void build_decoder_params(nn::ParamStore& params, Rng& rng, const DecoderConfig& cfg) {
  cfg.validate();
  const int d = cfg.hidden;
  nn::init_mlp2(params, rng, "dec.goal", d, d, 2 * cfg.modes);
  nn::init_mlp2(params, rng, "dec.goal_embed", 2, d, d);
  nn::init_mlp2(params, rng, "dec.reg", 2 * d, d, 2 * (cfg.t_future - 1));
  nn::init_mlp2(params, rng, "dec.score_embed", 2, d, d);
  nn::init_mlp2(params, rng, "dec.score", 2 * d, d, 1);
}

DecodeValues decode_agent(Tape& tape, ParamBinder& bind, Value agent_row,
                          const DecoderConfig& cfg) {
  cfg.validate();
  if (tape.rows(agent_row) != 1 || tape.cols(agent_row) != cfg.hidden) {
    throw ValidationError("decode_agent expects a [1 x " + std::to_string(cfg.hidden) +
                          "] agent row, got " + tape.val(agent_row).shape_str());
  }
  const int K = cfg.modes;
  const int T = cfg.t_future;

  Value goals = tape.reshape(nn::mlp2(tape, bind, "dec.goal", agent_row), K, 2);
  Value goal_emb = nn::mlp2(tape, bind, "dec.goal_embed", goals);
  Value h_rep = tape.gather_rows(agent_row, std::vector<int>(K, 0));
  Value traj = nn::mlp2(tape, bind, "dec.reg", tape.concat_cols({h_rep, goal_emb}));

  // Score the full trajectory (intermediate states then goal) through a
  // detached per-step embedding so score gradients stay off the regression.
  Value steps = tape.reshape(tape.detach(tape.concat_cols({traj, goals})), K * T, 2);
  Value step_emb = nn::mlp2(tape, bind, "dec.score_embed", steps);
  std::vector<int> mode_of_step(static_cast<std::size_t>(K) * T);
  for (int k = 0; k < K; ++k) {
    for (int t = 0; t < T; ++t) {
      mode_of_step[static_cast<std::size_t>(k) * T + t] = k;
    }
  }
  Value summary = tape.row_scale(tape.segment_sum(step_emb, std::move(mode_of_step), K),
                                 std::vector<double>(K, 1.0 / T));
  Value scores = nn::mlp2(tape, bind, "dec.score", tape.concat_cols({h_rep, summary}));
  Value probs = tape.softmax_rows(tape.reshape(scores, 1, K));
  return {goals, traj, scores, probs};
}

Prediction extract_prediction(const Tape& tape, const DecodeValues& decoded,
                              const std::string& agent_id) {
  const Tensor& goals = tape.val(decoded.goals);
  const Tensor& traj = tape.val(decoded.trajectories);
  const Tensor& scores = tape.val(decoded.scores);
  const Tensor& probs = tape.val(decoded.probabilities);
  Prediction out;
  out.agent_id = agent_id;
  out.modes.resize(goals.rows);
  for (int k = 0; k < goals.rows; ++k) {
    PredictionMode& mode = out.modes[k];
    mode.goal = {goals.at(k, 0), goals.at(k, 1)};
    mode.trajectory.resize(traj.cols / 2);
    for (int t = 0; t < traj.cols / 2; ++t) {
      mode.trajectory[t] = {traj.at(k, 2 * t), traj.at(k, 2 * t + 1)};
    }
    mode.score = scores.at(k, 0);
    mode.probability = probs.at(0, k);
  }
  return out;
}

std::string prediction_to_json(const Prediction& pred) {
  nlohmann::json modes = nlohmann::json::array();
  for (const PredictionMode& mode : pred.modes) {
    nlohmann::json traj = nlohmann::json::array();
    for (const auto& s : mode.trajectory) {
      traj.push_back({s[0], s[1]});
    }
    modes.push_back({{"goal", {mode.goal[0], mode.goal[1]}},
                     {"trajectory", std::move(traj)},
                     {"score", mode.score},
                     {"probability", mode.probability}});
  }
  nlohmann::json j{{"agent_id", pred.agent_id}, {"modes", std::move(modes)}};
  return j.dump(2);
}

Prediction prediction_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("prediction JSON is malformed: ") + e.what());
  }
  try {
    Prediction out;
    out.agent_id = j.at("agent_id").get<std::string>();
    for (const auto& jm : j.at("modes")) {
      PredictionMode mode;
      mode.goal = {jm.at("goal").at(0).get<double>(), jm.at("goal").at(1).get<double>()};
      for (const auto& js : jm.at("trajectory")) {
        mode.trajectory.push_back({js.at(0).get<double>(), js.at(1).get<double>()});
      }
      mode.score = jm.at("score").get<double>();
      mode.probability = jm.at("probability").get<double>();
      out.modes.push_back(std::move(mode));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("prediction JSON is missing fields: ") + e.what());
  }
}

void LossConfig::validate() const {
  if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0) {
    throw ValidationError("loss weights must be nonnegative");
  }
  if (lambda1 == 0.0 && lambda2 == 0.0 && lambda3 == 0.0) {
    throw ValidationError("at least one loss weight must be positive");
  }
}

LossTerms compute_loss(Tape& tape, const DecodeValues& decoded,
                       const std::vector<std::array<double, 2>>& gt, const LossConfig& cfg) {
  cfg.validate();
  const int K = tape.rows(decoded.goals);
  const int T = static_cast<int>(gt.size());
  if (T < 2) {
    throw ValidationError("compute_loss needs at least 2 future states, got " + std::to_string(T));
  }
  if (tape.cols(decoded.trajectories) != 2 * (T - 1)) {
    throw ValidationError("compute_loss: trajectories are " +
                          tape.val(decoded.trajectories).shape_str() + " but ground truth implies " +
                          std::to_string(2 * (T - 1)) + " columns");
  }

  // Goal term: smooth-l1 displacement per mode, minimum taken over modes.
  Tensor gt_goal(K, 2);
  for (int k = 0; k < K; ++k) {
    gt_goal.at(k, 0) = gt.back()[0];
    gt_goal.at(k, 1) = gt.back()[1];
  }
  Value goal_err = tape.smooth_l1(tape.sub(decoded.goals, tape.constant(std::move(gt_goal))));
  Value per_mode = tape.matmul(goal_err, tape.constant(Tensor(2, 1, 1.0)));  // [K x 1]
  const Tensor& per_mode_v = tape.val(per_mode);
  int best = 0;
  for (int k = 1; k < K; ++k) {
    if (per_mode_v.at(k, 0) < per_mode_v.at(best, 0)) {
      best = k;
    }
  }
  Value l_goal = tape.slice_rows(per_mode, best, best + 1);

  // Regression term: mean smooth-l1 over the T-1 intermediate states of k*.
  Tensor gt_flat(1, 2 * (T - 1));
  for (int t = 0; t < T - 1; ++t) {
    gt_flat.data[2 * t] = gt[t][0];
    gt_flat.data[2 * t + 1] = gt[t][1];
  }
  Value best_traj = tape.slice_rows(decoded.trajectories, best, best + 1);
  Value l_reg = tape.scale(
      tape.sum(tape.smooth_l1(tape.sub(best_traj, tape.constant(std::move(gt_flat))))),
      1.0 / (T - 1));

  // Score term: max-margin pushing k*'s score above every other by epsilon.
  Value l_score;
  if (K > 1) {
    Value best_score = tape.slice_rows(decoded.scores, best, best + 1);
    Value margins = tape.relu(tape.add_scalar(
        tape.sub(decoded.scores, tape.gather_rows(best_score, std::vector<int>(K, 0))),
        cfg.epsilon));
    std::vector<double> mask(K, 1.0);
    mask[best] = 0.0;
    l_score = tape.scale(tape.sum(tape.row_scale(margins, std::move(mask))), 1.0 / (K - 1));
  } else {
    l_score = tape.scalar(0.0);
  }

  Value total = tape.add(tape.add(tape.scale(l_goal, cfg.lambda1), tape.scale(l_reg, cfg.lambda2)),
                         tape.scale(l_score, cfg.lambda3));
  return {total, l_goal, l_reg, l_score, best};
}

}  // namespace heterogcn
