#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "heterogcn/checkpoint.hpp"
#include "heterogcn/config.hpp"
#include "heterogcn/metrics.hpp"
#include "heterogcn/scenario.hpp"

namespace heterogcn {

struct Dataset {
  std::vector<std::string> ids;  // parallel to scenarios, filename stems
  std::vector<Scenario> scenarios;
};

Dataset load_dataset(const std::vector<std::string>& paths);
// All *.json files in the directory, in sorted filename order.
Dataset load_dataset_dir(const std::string& dir);

// A scenario normalized to the focal frame with its graph built once so
// training epochs and every ablation variant reuse the same construction.
struct PreparedScenario {
  std::string id;
  std::string focal_id;
  DynamicHeteroGraph graph;
  FutureStates focal_future;  // empty when the future is incomplete
  // Agent row -> future, for the all-agent loss; includes the focal agent.
  std::vector<std::pair<int, FutureStates>> agent_futures;
};

PreparedScenario prepare_scenario(const std::string& id, const Scenario& raw,
                                  const RunConfig& cfg);

// Registers encoder then decoder parameters from one seeded stream.
void build_model_params(nn::ParamStore& params, Rng& rng, const RunConfig& cfg);
// Checks a loaded parameter set against the inventory the config implies.
void validate_params_for_config(const nn::ParamStore& params, const RunConfig& cfg);

struct EpochStats {
  double loss = 0.0;
  double l_goal = 0.0;
  double l_reg = 0.0;
  double l_score = 0.0;
};

struct TrainResult {
  EpochStats final_epoch;
  MetricsAtK train_metrics;  // at K = config modes, on the training set
  std::string final_checkpoint_stem;
};

// Mini-batch Adam training. Writes checkpoints under out_dir and one JSON
// line per epoch to log_stream (if given). Deterministic for a fixed seed.
TrainResult train(const Dataset& data, const RunConfig& cfg, const std::string& out_dir,
                  std::ostream* log_stream);

Prediction predict_prepared(const nn::ParamStore& params, const RunConfig& cfg,
                            const PreparedScenario& prepared);

}  // namespace heterogcn
