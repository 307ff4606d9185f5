#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

#include "heterogcn/decoder.hpp"
#include "heterogcn/encoder.hpp"
#include "heterogcn/graph.hpp"
#include "heterogcn/nn.hpp"
#include "heterogcn/tensor.hpp"

namespace heterogcn {

// Flat run configuration; every field maps to one `key = value` config line
// and one CLI flag of the same name.
struct RunConfig {
  // Graph construction.
  int tau = 5;
  int num_snapshots = 4;
  int knn = 6;
  double delta_aa = 50.0;
  double segment_len = 5.0;
  double opposing_angle_deg = 120.0;
  double frame_dt = 0.1;
  // Model.
  int hidden = 128;
  int gcm_layers = 2;
  int modes = 6;
  int t_future = 30;
  std::string variant = "hetero_dynamic";
  // Loss.
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double lambda3 = 1.0;
  double epsilon = 0.2;
  bool loss_all_agents = false;
  // Optimizer.
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 128;
  int epochs = 40;
  int save_every = 0;  // 0: checkpoint only at the end
  // Run control.
  std::uint64_t seed = 0;
  std::string precision = "f64";  // or "f32"

  GraphConfig graph_config() const;
  EncoderConfig encoder_config() const;
  DecoderConfig decoder_config() const;
  LossConfig loss_config() const;
  nn::AdamConfig adam_config() const;
  ad::Precision precision_mode() const;
  void validate() const;
};

// Sets one field by key name; value syntax errors and unknown keys throw.
void apply_config_override(RunConfig& cfg, const std::string& key, const std::string& value);

// Every recognized config key, in declaration order (used to mirror keys as
// CLI flags).
const std::vector<std::string>& run_config_keys();

// `key = value` lines; '#' starts a comment, blank lines are skipped.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);

}  // namespace heterogcn
