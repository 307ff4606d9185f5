// Command-line surface for the motion-forecasting pipeline: synthetic data
// generation, graph inspection, training, prediction, evaluation and
// ensembling.
#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "heterogcn/checkpoint.hpp"
#include "heterogcn/config.hpp"
#include "heterogcn/decoder.hpp"
#include "heterogcn/graph.hpp"
#include "heterogcn/metrics.hpp"
#include "heterogcn/scenario.hpp"
#include "heterogcn/trainer.hpp"

namespace {

namespace fs = std::filesystem;
using heterogcn::RunConfig;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitValidation = 2;

struct ConfigArgs {
  std::string config_path;
  // Only keys the user passed explicitly; they win over the config file.
  std::shared_ptr<std::map<std::string, std::string>> overrides =
      std::make_shared<std::map<std::string, std::string>>();
};

// Mirrors every config key as a --key flag on the subcommand.
ConfigArgs add_config_options(CLI::App* cmd) {
  ConfigArgs args;
  cmd->add_option("--config", args.config_path, "Flat key = value config file");
  for (const std::string& key : heterogcn::run_config_keys()) {
    auto overrides = args.overrides;
    cmd->add_option_function<std::string>(
        "--" + key,
        [overrides, key](const std::string& value) { (*overrides)[key] = value; },
        "Config key '" + key + "'");
  }
  return args;
}

RunConfig resolve_config(const ConfigArgs& args) {
  RunConfig cfg;
  if (!args.config_path.empty()) {
    cfg = heterogcn::load_run_config(args.config_path);
  }
  for (const auto& [key, value] : *args.overrides) {
    heterogcn::apply_config_override(cfg, key, value);
  }
  cfg.validate();
  return cfg;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw heterogcn::ValidationError("cannot write '" + path + "'");
  }
  out << text;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw heterogcn::ValidationError("cannot open '" + path + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string scenario_file_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scenario_%04d.json", index);
  return buf;
}

int run_generate(const std::string& out_dir, int count, std::uint64_t seed,
                 const std::string& family, heterogcn::SyntheticSpec spec) {
  fs::create_directories(out_dir);
  for (int i = 0; i < count; ++i) {
    heterogcn::SyntheticSpec item = spec;
    if (family == "mix") {
      // Alternate the two families the training recipes lean on.
      item.family = (i % 2 == 0) ? heterogcn::SyntheticSpec::Family::kStraight
                                 : heterogcn::SyntheticSpec::Family::kTIntersection;
    } else {
      item.family = heterogcn::family_from_string(family);
    }
    const heterogcn::Scenario s = heterogcn::generate_synthetic_scenario(seed + i, item);
    heterogcn::save_scenario(s, out_dir + "/" + scenario_file_name(i));
  }
  std::cout << "wrote " << count << " scenarios to " << out_dir << "\n";
  return kExitOk;
}

int run_build_graph(const std::string& scenario_path, const std::string& out_path,
                    const ConfigArgs& cfg_args) {
  const RunConfig cfg = resolve_config(cfg_args);
  const heterogcn::Scenario raw = heterogcn::load_scenario(scenario_path);
  const heterogcn::Scenario normalized = heterogcn::normalize_scenario(raw);
  const heterogcn::DynamicHeteroGraph graph =
      heterogcn::assemble_dynamic_graph(normalized, cfg.graph_config());
  const std::string text = heterogcn::graph_to_json(graph).dump(2) + "\n";
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
  } else {
    write_text_file(out_path, text);
    std::cout << "wrote graph to " << out_path << "\n";
  }
  return kExitOk;
}

int run_train(const std::string& data_dir, const std::string& out_dir,
              const ConfigArgs& cfg_args) {
  const RunConfig cfg = resolve_config(cfg_args);
  const heterogcn::Dataset data = heterogcn::load_dataset_dir(data_dir);
  fs::create_directories(out_dir);
  std::ofstream log(out_dir + "/train_log.jsonl", std::ios::binary);
  if (!log) {
    throw heterogcn::ValidationError("cannot write '" + out_dir + "/train_log.jsonl'");
  }
  const heterogcn::TrainResult result = heterogcn::train(data, cfg, out_dir, &log);
  std::cout << "final loss " << result.final_epoch.loss << " (goal " << result.final_epoch.l_goal
            << ", reg " << result.final_epoch.l_reg << ", score " << result.final_epoch.l_score
            << ")\n"
            << "training minADE@" << result.train_metrics.k << " = "
            << result.train_metrics.min_ade << ", minFDE@" << result.train_metrics.k << " = "
            << result.train_metrics.min_fde << ", MR@" << result.train_metrics.k << " = "
            << result.train_metrics.miss_rate << "\n"
            << "checkpoint: " << result.final_checkpoint_stem << ".{json,bin}\n";
  return kExitOk;
}

int run_predict(const std::string& checkpoint_stem, const std::string& data_dir,
                const std::string& out_dir) {
  const heterogcn::Checkpoint ckpt = heterogcn::load_checkpoint(checkpoint_stem);
  heterogcn::validate_params_for_config(ckpt.params, ckpt.config);
  const heterogcn::Dataset data = heterogcn::load_dataset_dir(data_dir);
  fs::create_directories(out_dir);
  for (std::size_t i = 0; i < data.scenarios.size(); ++i) {
    const heterogcn::PreparedScenario prepared =
        heterogcn::prepare_scenario(data.ids[i], data.scenarios[i], ckpt.config);
    const heterogcn::Prediction pred =
        heterogcn::predict_prepared(ckpt.params, ckpt.config, prepared);
    write_text_file(out_dir + "/" + data.ids[i] + "_prediction.json",
                    heterogcn::prediction_to_json(pred) + "\n");
  }
  std::cout << "wrote " << data.scenarios.size() << " prediction files to " << out_dir << "\n";
  return kExitOk;
}

int run_evaluate(const std::string& predictions_dir, const std::string& data_dir,
                 const std::string& out_dir) {
  const heterogcn::Dataset data = heterogcn::load_dataset_dir(data_dir);
  std::vector<heterogcn::Prediction> preds;
  std::vector<heterogcn::FutureStates> gts;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < data.scenarios.size(); ++i) {
    const std::string pred_path = predictions_dir + "/" + data.ids[i] + "_prediction.json";
    preds.push_back(heterogcn::prediction_from_json(read_text_file(pred_path)));
    const heterogcn::Scenario normalized = heterogcn::normalize_scenario(data.scenarios[i]);
    const heterogcn::AgentTrack& focal = normalized.focal();
    heterogcn::FutureStates future;
    for (const heterogcn::AgentState& st : focal.states) {
      if (st.t >= 1 && st.t <= normalized.t_future) {
        future.push_back({st.x, st.y});
      }
    }
    if (static_cast<int>(future.size()) != normalized.t_future) {
      throw heterogcn::ValidationError("scenario '" + data.ids[i] +
                                       "' lacks a complete focal future to evaluate against");
    }
    gts.push_back(std::move(future));
    ids.push_back(data.ids[i]);
  }

  const int max_k = static_cast<int>(preds.front().modes.size());
  std::vector<heterogcn::MetricsAtK> reports;
  reports.push_back(heterogcn::evaluate(preds, gts, 1));
  if (max_k > 1) {
    reports.push_back(heterogcn::evaluate(preds, gts, std::min(6, max_k)));
  }
  const std::vector<heterogcn::ScenarioMetrics> rows =
      heterogcn::evaluate_scenarios(preds, gts, std::min(6, max_k), ids);

  const std::string report_json = heterogcn::metrics_report_to_json(reports);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text_file(out_dir + "/metrics.json", report_json + "\n");
    write_text_file(out_dir + "/per_scenario.csv", heterogcn::scenario_metrics_to_csv(rows));
  }
  std::cout << report_json << "\n";
  return kExitOk;
}

int run_ensemble(const std::vector<std::string>& inputs, const std::string& out_path, int n_out,
                 bool goals_only) {
  std::vector<heterogcn::Prediction> submodels;
  submodels.reserve(inputs.size());
  for (const std::string& path : inputs) {
    submodels.push_back(heterogcn::prediction_from_json(read_text_file(path)));
  }
  heterogcn::EnsembleOptions opts;
  opts.n_out = n_out;
  opts.goals_only = goals_only;
  const heterogcn::EnsembleResult result = heterogcn::ensemble(submodels, opts);
  if (result.degenerate) {
    std::cerr << "warning: fewer distinct modes than requested; output is padded\n";
  }
  const std::string text = heterogcn::prediction_to_json(result.prediction) + "\n";
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
  } else {
    write_text_file(out_path, text);
    std::cout << "wrote ensemble of " << inputs.size() << " submodels to " << out_path << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic heterogeneous-graph motion forecasting pipeline"};
  app.require_subcommand(1);
  bool deterministic = false;
  app.add_flag("--deterministic", deterministic,
               "Force single-threaded execution (always on in this build)");

  // generate
  auto* gen = app.add_subcommand("generate", "Write synthetic driving scenarios");
  std::string gen_out = "data";
  int gen_count = 16;
  std::uint64_t gen_seed = 0;
  std::string gen_family = "mix";
  heterogcn::SyntheticSpec gen_spec;
  gen->add_option("--out-dir", gen_out, "Output directory")->required();
  gen->add_option("--count", gen_count, "Number of scenarios")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "Base seed; scenario i uses seed + i");
  gen->add_option("--family", gen_family,
                  "straight | curve | t_intersection | mix (alternates straight and T)");
  gen->add_option("--agents", gen_spec.agent_count, "Agents per scenario")
      ->check(CLI::PositiveNumber);
  gen->add_option("--noise", gen_spec.noise, "Positional noise amplitude in meters");
  gen->add_option("--t-hist", gen_spec.t_hist, "History frames");
  gen->add_option("--t-future", gen_spec.t_future, "Future frames");
  gen->add_option("--min-speed", gen_spec.min_speed, "Minimum agent speed, m/s");
  gen->add_option("--max-speed", gen_spec.max_speed, "Maximum agent speed, m/s");

  // build-graph
  auto* bg = app.add_subcommand("build-graph", "Build and dump the dynamic graph of one scenario");
  std::string bg_scenario, bg_out;
  bg->add_option("scenario", bg_scenario, "Scenario JSON file")->required();
  bg->add_option("--out", bg_out, "Output JSON path ('-' for stdout)");
  ConfigArgs bg_cfg = add_config_options(bg);

  // train
  auto* tr = app.add_subcommand("train", "Train a model on a scenario directory");
  std::string tr_data, tr_out = "run";
  tr->add_option("--data", tr_data, "Scenario directory")->required();
  tr->add_option("--out-dir", tr_out, "Output directory for checkpoints and logs");
  ConfigArgs tr_cfg = add_config_options(tr);

  // predict
  auto* pr = app.add_subcommand("predict", "Predict with a trained checkpoint");
  std::string pr_ckpt, pr_data, pr_out = "predictions";
  pr->add_option("--checkpoint", pr_ckpt, "Checkpoint stem (without .json/.bin)")->required();
  pr->add_option("--data", pr_data, "Scenario directory")->required();
  pr->add_option("--out-dir", pr_out, "Output directory for prediction files");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score predictions against scenario futures");
  std::string ev_pred, ev_data, ev_out;
  ev->add_option("--predictions", ev_pred, "Directory with <id>_prediction.json files")
      ->required();
  ev->add_option("--data", ev_data, "Scenario directory")->required();
  ev->add_option("--out-dir", ev_out, "Directory for metrics.json and per_scenario.csv");

  // ensemble
  auto* en = app.add_subcommand("ensemble", "Merge submodel predictions by k-means");
  std::vector<std::string> en_inputs;
  std::string en_out;
  int en_n_out = 6;
  bool en_goals_only = false;
  en->add_option("inputs", en_inputs, "Prediction JSON files (one per submodel)")
      ->required()
      ->expected(-1);
  en->add_option("--out", en_out, "Merged prediction path ('-' for stdout)");
  en->add_option("--n-out", en_n_out, "Output mode count")->check(CLI::PositiveNumber);
  en->add_flag("--goals-only", en_goals_only, "Cluster on goals instead of full trajectories");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      return run_generate(gen_out, gen_count, gen_seed, gen_family, gen_spec);
    }
    if (bg->parsed()) {
      return run_build_graph(bg_scenario, bg_out, bg_cfg);
    }
    if (tr->parsed()) {
      return run_train(tr_data, tr_out, tr_cfg);
    }
    if (pr->parsed()) {
      return run_predict(pr_ckpt, pr_data, pr_out);
    }
    if (ev->parsed()) {
      return run_evaluate(ev_pred, ev_data, ev_out);
    }
    if (en->parsed()) {
      return run_ensemble(en_inputs, en_out, en_n_out, en_goals_only);
    }
  } catch (const heterogcn::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const heterogcn::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
