#pragma once

#include <array>
#include <string>
#include <vector>

#include "heterogcn/decoder.hpp"

namespace heterogcn {

// Future states s_1..s_T of the scored agent; the last entry is the goal.
using FutureStates = std::vector<std::array<double, 2>>;

struct ScenarioMetrics {
  std::string scenario_id;
  double min_ade = 0.0;
  double min_fde = 0.0;
  double b_min_fde = 0.0;
  bool missed = false;
};

struct MetricsAtK {
  int k = 0;
  double min_ade = 0.0;
  double min_fde = 0.0;
  double miss_rate = 0.0;
  double b_min_fde = 0.0;
  int scenario_count = 0;
};

inline constexpr double kMissThresholdMeters = 2.0;

// Per-scenario displacement metrics over the top-K modes by probability
// (ties broken by lower mode index). A scenario is a miss when its minFDE is
// strictly beyond 2 m.
ScenarioMetrics evaluate_scenario(const Prediction& pred, const FutureStates& gt, int k,
                                  const std::string& scenario_id);
std::vector<ScenarioMetrics> evaluate_scenarios(const std::vector<Prediction>& preds,
                                                const std::vector<FutureStates>& gts, int k,
                                                const std::vector<std::string>& scenario_ids);
MetricsAtK evaluate(const std::vector<Prediction>& preds, const std::vector<FutureStates>& gts,
                    int k);

std::string metrics_report_to_json(const std::vector<MetricsAtK>& reports);
std::string scenario_metrics_to_csv(const std::vector<ScenarioMetrics>& rows);

struct EnsembleOptions {
  int n_out = 6;
  bool goals_only = false;  // cluster on goals instead of full trajectories
};

struct EnsembleResult {
  Prediction prediction;
  // Set when fewer distinct pooled modes than n_out forced the fallback path
  // (distinct modes padded with copies of the highest-probability one).
  bool degenerate = false;
};

// Deterministic k-means self-ensemble over the pooled modes of all submodels.
// Cluster centers become the output modes; probabilities are the summed
// member probabilities, renormalized.
EnsembleResult ensemble(const std::vector<Prediction>& submodels, const EnsembleOptions& opts);

}  // namespace heterogcn
