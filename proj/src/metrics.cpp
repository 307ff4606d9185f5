#include "heterogcn/metrics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <utility>

namespace heterogcn {

namespace {

double l2(const std::array<double, 2>& a, const std::array<double, 2>& b) {
  return std::hypot(a[0] - b[0], a[1] - b[1]);
}

// Mode indices ranked by probability, highest first, ties by lower index.
std::vector<int> rank_by_probability(const Prediction& pred) {
  std::vector<int> order(pred.modes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return pred.modes[a].probability > pred.modes[b].probability;
  });
  return order;
}

std::vector<double> mode_features(const PredictionMode& mode, bool goals_only) {
  std::vector<double> f;
  if (!goals_only) {
    f.reserve(2 * mode.trajectory.size() + 2);
    for (const auto& s : mode.trajectory) {
      f.push_back(s[0]);
      f.push_back(s[1]);
    }
  }
  f.push_back(mode.goal[0]);
  f.push_back(mode.goal[1]);
  return f;
}

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    d += diff * diff;
  }
  return d;
}

}  // namespace

ScenarioMetrics evaluate_scenario(const Prediction& pred, const FutureStates& gt, int k,
                                  const std::string& scenario_id) {
  if (k < 1) {
    throw ValidationError("evaluate: K must be >= 1");
  }
  if (static_cast<int>(pred.modes.size()) < k) {
    throw ValidationError("evaluate: prediction for '" + pred.agent_id + "' has " +
                          std::to_string(pred.modes.size()) + " modes, need K = " +
                          std::to_string(k));
  }
  if (gt.empty()) {
    throw ValidationError("evaluate: empty ground-truth future");
  }
  const int T = static_cast<int>(gt.size());

  std::vector<int> order = rank_by_probability(pred);
  order.resize(k);

  ScenarioMetrics out;
  out.scenario_id = scenario_id;
  out.min_ade = std::numeric_limits<double>::infinity();
  out.min_fde = std::numeric_limits<double>::infinity();
  double best_fde_prob = 0.0;
  for (int idx : order) {
    const PredictionMode& mode = pred.modes[idx];
    if (static_cast<int>(mode.trajectory.size()) != T - 1) {
      throw ValidationError("evaluate: mode trajectory has " +
                            std::to_string(mode.trajectory.size()) + " states, ground truth has " +
                            std::to_string(T) + " (expected T-1 = " + std::to_string(T - 1) + ")");
    }
    double ade = 0.0;
    for (int t = 0; t < T - 1; ++t) {
      ade += l2(mode.trajectory[t], gt[t]);
    }
    const double fde = l2(mode.goal, gt.back());
    ade = (ade + fde) / T;
    out.min_ade = std::min(out.min_ade, ade);
    if (fde < out.min_fde) {
      out.min_fde = fde;
      best_fde_prob = mode.probability;
    }
  }
  out.missed = out.min_fde > kMissThresholdMeters;
  out.b_min_fde = out.min_fde + (1.0 - best_fde_prob) * (1.0 - best_fde_prob);
  return out;
}

std::vector<ScenarioMetrics> evaluate_scenarios(const std::vector<Prediction>& preds,
                                                const std::vector<FutureStates>& gts, int k,
                                                const std::vector<std::string>& scenario_ids) {
  if (preds.size() != gts.size() || preds.size() != scenario_ids.size()) {
    throw ValidationError("evaluate: " + std::to_string(preds.size()) + " predictions, " +
                          std::to_string(gts.size()) + " ground truths and " +
                          std::to_string(scenario_ids.size()) + " scenario ids must all agree");
  }
  if (preds.empty()) {
    throw ValidationError("evaluate: no scenarios");
  }
  std::vector<ScenarioMetrics> rows;
  rows.reserve(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    rows.push_back(evaluate_scenario(preds[i], gts[i], k, scenario_ids[i]));
  }
  return rows;
}

MetricsAtK evaluate(const std::vector<Prediction>& preds, const std::vector<FutureStates>& gts,
                    int k) {
  std::vector<std::string> ids(preds.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    ids[i] = std::to_string(i);
  }
  const std::vector<ScenarioMetrics> rows = evaluate_scenarios(preds, gts, k, ids);
  MetricsAtK out;
  out.k = k;
  out.scenario_count = static_cast<int>(rows.size());
  for (const ScenarioMetrics& r : rows) {
    out.min_ade += r.min_ade;
    out.min_fde += r.min_fde;
    out.b_min_fde += r.b_min_fde;
    out.miss_rate += r.missed ? 1.0 : 0.0;
  }
  out.min_ade /= out.scenario_count;
  out.min_fde /= out.scenario_count;
  out.b_min_fde /= out.scenario_count;
  out.miss_rate /= out.scenario_count;
  return out;
}

std::string metrics_report_to_json(const std::vector<MetricsAtK>& reports) {
  nlohmann::json by_k = nlohmann::json::array();
  for (const MetricsAtK& r : reports) {
    by_k.push_back({{"k", r.k},
                    {"min_ade", r.min_ade},
                    {"min_fde", r.min_fde},
                    {"miss_rate", r.miss_rate},
                    {"b_min_fde", r.b_min_fde},
                    {"scenario_count", r.scenario_count}});
  }
  return nlohmann::json{{"metrics", std::move(by_k)}}.dump(2);
}

std::string scenario_metrics_to_csv(const std::vector<ScenarioMetrics>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << "scenario_id,min_ade,min_fde,b_min_fde,missed\n";
  for (const ScenarioMetrics& r : rows) {
    os << r.scenario_id << "," << r.min_ade << "," << r.min_fde << "," << r.b_min_fde << ","
       << (r.missed ? 1 : 0) << "\n";
  }
  return os.str();
}

EnsembleResult ensemble(const std::vector<Prediction>& submodels, const EnsembleOptions& opts) {
  if (submodels.empty()) {
    throw ValidationError("ensemble: need at least one submodel");
  }
  if (opts.n_out < 1) {
    throw ValidationError("ensemble: n_out must be >= 1");
  }
  const std::size_t traj_len = submodels.front().modes.empty()
                                   ? 0
                                   : submodels.front().modes.front().trajectory.size();
  for (const Prediction& p : submodels) {
    if (p.modes.empty()) {
      throw ValidationError("ensemble: submodel for '" + p.agent_id + "' has no modes");
    }
    for (const PredictionMode& m : p.modes) {
      if (m.trajectory.size() != traj_len) {
        throw ValidationError("ensemble: submodels disagree on trajectory length (" +
                              std::to_string(m.trajectory.size()) + " vs " +
                              std::to_string(traj_len) + ")");
      }
    }
  }

  // Pool modes, merging exact duplicates. The canonical (lexicographic) order
  // of distinct feature vectors makes the result independent of submodel
  // supply order.
  struct Pooled {
    std::vector<double> feature;
    std::array<double, 2> goal;
    std::vector<std::array<double, 2>> trajectory;
    double weight = 0.0;  // summed member probabilities
    int count = 0;        // pooled members merged into this entry
  };
  std::map<std::vector<double>, Pooled> dedup;
  for (const Prediction& p : submodels) {
    for (const PredictionMode& m : p.modes) {
      std::vector<double> key = mode_features(m, opts.goals_only);
      Pooled& entry = dedup[key];
      if (entry.count == 0) {
        entry.feature = std::move(key);
        entry.goal = m.goal;
        entry.trajectory = m.trajectory;
      }
      entry.weight += m.probability;
      entry.count += 1;
    }
  }
  std::vector<Pooled> points;
  points.reserve(dedup.size());
  double total_weight = 0.0;
  for (auto& [key, entry] : dedup) {
    total_weight += entry.weight;
    points.push_back(std::move(entry));
  }
  if (total_weight <= 0.0) {
    throw ValidationError("ensemble: pooled mode probabilities sum to zero");
  }

  EnsembleResult result;
  result.prediction.agent_id = submodels.front().agent_id;

  const int distinct = static_cast<int>(points.size());
  if (distinct < opts.n_out) {
    // Fallback: keep every distinct mode and pad with copies of the most
    // probable one, splitting its probability evenly across the copies.
    result.degenerate = true;
    int top = 0;
    for (int i = 1; i < distinct; ++i) {
      if (points[i].weight > points[top].weight) {
        top = i;
      }
    }
    const int copies = opts.n_out - distinct + 1;
    for (int i = 0; i < distinct; ++i) {
      PredictionMode mode;
      mode.goal = points[i].goal;
      mode.trajectory = points[i].trajectory;
      mode.score = points[i].weight;
      mode.probability = points[i].weight / total_weight;
      if (i == top) {
        mode.probability /= copies;
        mode.score /= copies;
        for (int c = 0; c < copies; ++c) {
          result.prediction.modes.push_back(mode);
        }
      } else {
        result.prediction.modes.push_back(std::move(mode));
      }
    }
    return result;
  }

  // Farthest-point initialization from the canonically first point.
  const int k = opts.n_out;
  std::vector<int> center_idx{0};
  std::vector<double> nearest_sq(points.size(), std::numeric_limits<double>::infinity());
  while (static_cast<int>(center_idx.size()) < k) {
    const std::vector<double>& latest = points[center_idx.back()].feature;
    int far = 0;
    double far_d = -1.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      nearest_sq[i] = std::min(nearest_sq[i], sq_dist(points[i].feature, latest));
      if (nearest_sq[i] > far_d) {
        far_d = nearest_sq[i];
        far = static_cast<int>(i);
      }
    }
    center_idx.push_back(far);
  }
  std::vector<std::vector<double>> centers;
  centers.reserve(k);
  for (int idx : center_idx) {
    centers.push_back(points[idx].feature);
  }

  // Lloyd iterations with count-weighted means; assignments settle quickly on
  // desk-scale inputs.
  std::vector<int> assign(points.size(), -1);
  for (int iter = 0; iter < 50; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < points.size(); ++i) {
      int best = 0;
      double best_d = sq_dist(points[i].feature, centers[0]);
      for (int c = 1; c < k; ++c) {
        const double d = sq_dist(points[i].feature, centers[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (!changed) {
      break;
    }
    for (int c = 0; c < k; ++c) {
      std::vector<double> mean(centers[c].size(), 0.0);
      double count = 0.0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (assign[i] != c) {
          continue;
        }
        for (std::size_t f = 0; f < mean.size(); ++f) {
          mean[f] += points[i].count * points[i].feature[f];
        }
        count += points[i].count;
      }
      if (count > 0.0) {
        for (double& v : mean) {
          v /= count;
        }
        centers[c] = std::move(mean);
      }
    }
  }

  // Cluster centers become modes. Center = count-weighted mean trajectory of
  // members, probability = summed member weight renormalized.
  struct Out {
    std::vector<double> mean;
    double weight = 0.0;
    double count = 0.0;
  };
  std::vector<Out> clusters(k);
  const std::size_t full_len = 2 * traj_len + 2;
  for (auto& c : clusters) {
    c.mean.assign(full_len, 0.0);
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    Out& c = clusters[assign[i]];
    // Average the full trajectory even when clustering on goals only.
    for (std::size_t t = 0; t < traj_len; ++t) {
      c.mean[2 * t] += points[i].count * points[i].trajectory[t][0];
      c.mean[2 * t + 1] += points[i].count * points[i].trajectory[t][1];
    }
    c.mean[2 * traj_len] += points[i].count * points[i].goal[0];
    c.mean[2 * traj_len + 1] += points[i].count * points[i].goal[1];
    c.weight += points[i].weight;
    c.count += points[i].count;
  }
  std::vector<int> out_order;
  for (int c = 0; c < k; ++c) {
    if (clusters[c].count > 0.0) {
      for (double& v : clusters[c].mean) {
        v /= clusters[c].count;
      }
    } else {
      // A cluster that lost all members keeps its last center and zero
      // weight; goals-only centers land in the goal slots.
      const std::size_t offset = opts.goals_only ? 2 * traj_len : 0;
      for (std::size_t f = 0; f < centers[c].size() && offset + f < full_len; ++f) {
        clusters[c].mean[offset + f] = centers[c][f];
      }
    }
    out_order.push_back(c);
  }
  std::stable_sort(out_order.begin(), out_order.end(), [&](int a, int b) {
    if (clusters[a].weight != clusters[b].weight) {
      return clusters[a].weight > clusters[b].weight;
    }
    return clusters[a].mean < clusters[b].mean;
  });
  for (int c : out_order) {
    PredictionMode mode;
    mode.trajectory.resize(traj_len);
    for (std::size_t t = 0; t < traj_len; ++t) {
      mode.trajectory[t] = {clusters[c].mean[2 * t], clusters[c].mean[2 * t + 1]};
    }
    mode.goal = {clusters[c].mean[2 * traj_len], clusters[c].mean[2 * traj_len + 1]};
    mode.score = clusters[c].weight;
    mode.probability = clusters[c].weight / total_weight;
    result.prediction.modes.push_back(std::move(mode));
  }
  return result;
}

}  // namespace heterogcn
