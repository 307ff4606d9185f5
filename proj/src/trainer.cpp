#include "heterogcn/trainer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <ostream>
#include <utility>

#include "heterogcn/decoder.hpp"
#include "heterogcn/encoder.hpp"

namespace heterogcn {

namespace {

// Future positions t = 1..t_future for one agent; empty if any frame lacks a
// state.
FutureStates future_of(const AgentTrack& track, int t_future) {
  FutureStates out;
  out.reserve(t_future);
  std::size_t cursor = 0;
  for (int t = 1; t <= t_future; ++t) {
    while (cursor < track.states.size() && track.states[cursor].t < t) {
      ++cursor;
    }
    if (cursor == track.states.size() || track.states[cursor].t != t) {
      return {};
    }
    out.push_back({track.states[cursor].x, track.states[cursor].y});
  }
  return out;
}

struct ElementLoss {
  ad::Value total;
  EpochStats stats;
};

ElementLoss scenario_loss(ad::Tape& tape, nn::ParamBinder& bind, const PreparedScenario& ps,
                          const RunConfig& cfg) {
  const EncodeResult enc = encode_scenario(tape, bind, ps.graph, cfg.encoder_config());
  const DecoderConfig dec_cfg = cfg.decoder_config();
  const LossConfig loss_cfg = cfg.loss_config();

  std::vector<std::pair<int, const FutureStates*>> targets;
  if (cfg.loss_all_agents) {
    for (const auto& [row, future] : ps.agent_futures) {
      targets.emplace_back(row, &future);
    }
  } else {
    targets.emplace_back(ps.graph.focal_index, &ps.focal_future);
  }
  if (targets.empty()) {
    throw ValidationError("scenario '" + ps.id + "' has no agent with a complete future");
  }

  ElementLoss out;
  ad::Value total{};
  for (const auto& [row, future] : targets) {
    ad::Value agent_row = tape.slice_rows(enc.agents, row, row + 1);
    DecodeValues decoded = decode_agent(tape, bind, agent_row, dec_cfg);
    LossTerms terms = compute_loss(tape, decoded, *future, loss_cfg);
    total = total.valid() ? tape.add(total, terms.total) : terms.total;
    out.stats.loss += tape.val(terms.total).data[0];
    out.stats.l_goal += tape.val(terms.goal).data[0];
    out.stats.l_reg += tape.val(terms.reg).data[0];
    out.stats.l_score += tape.val(terms.score).data[0];
  }
  const double inv = 1.0 / static_cast<double>(targets.size());
  out.total = tape.scale(total, inv);
  out.stats.loss *= inv;
  out.stats.l_goal *= inv;
  out.stats.l_reg *= inv;
  out.stats.l_score *= inv;
  return out;
}

}  // namespace

Dataset load_dataset(const std::vector<std::string>& paths) {
  if (paths.empty()) {
    throw ValidationError("no scenario files given");
  }
  Dataset data;
  for (const std::string& path : paths) {
    data.ids.push_back(std::filesystem::path(path).stem().string());
    data.scenarios.push_back(load_scenario(path));
  }
  return data;
}

Dataset load_dataset_dir(const std::string& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw ValidationError("'" + dir + "' is not a directory");
  }
  std::vector<std::string> paths;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      paths.push_back(entry.path().string());
    }
  }
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) {
    throw ValidationError("directory '" + dir + "' contains no .json scenarios");
  }
  return load_dataset(paths);
}

PreparedScenario prepare_scenario(const std::string& id, const Scenario& raw,
                                  const RunConfig& cfg) {
  PreparedScenario out;
  out.id = id;
  out.focal_id = raw.focal_agent_id;
  const Scenario normalized = normalize_scenario(raw);
  out.graph = assemble_dynamic_graph(normalized, cfg.graph_config());
  for (std::size_t a = 0; a < normalized.agents.size(); ++a) {
    FutureStates future = future_of(normalized.agents[a], normalized.t_future);
    if (future.empty()) {
      continue;
    }
    if (static_cast<int>(a) == out.graph.focal_index) {
      out.focal_future = future;
    }
    out.agent_futures.emplace_back(static_cast<int>(a), std::move(future));
  }
  return out;
}

void build_model_params(nn::ParamStore& params, Rng& rng, const RunConfig& cfg) {
  build_encoder_params(params, rng, cfg.encoder_config());
  build_decoder_params(params, rng, cfg.decoder_config());
}

void validate_params_for_config(const nn::ParamStore& params, const RunConfig& cfg) {
  nn::ParamStore reference;
  Rng rng(0);
  build_model_params(reference, rng, cfg);
  for (const std::string& name : reference.sorted_names()) {
    if (!params.has(name)) {
      throw ValidationError("checkpoint is missing parameter '" + name + "'");
    }
    const ad::Tensor& want = reference.get(name);
    const ad::Tensor& got = params.get(name);
    if (!want.same_shape(got)) {
      throw ValidationError("checkpoint parameter '" + name + "' has shape " + got.shape_str() +
                            ", config implies " + want.shape_str());
    }
  }
  if (params.size() != reference.size()) {
    for (const std::string& name : params.sorted_names()) {
      if (!reference.has(name)) {
        throw ValidationError("checkpoint carries unexpected parameter '" + name + "'");
      }
    }
  }
}

TrainResult train(const Dataset& data, const RunConfig& cfg, const std::string& out_dir,
                  std::ostream* log_stream) {
  cfg.validate();
  if (data.scenarios.empty()) {
    throw ValidationError("training dataset is empty");
  }

  // Surface dataset/config inconsistencies before any work happens.
  for (std::size_t i = 0; i < data.scenarios.size(); ++i) {
    const Scenario& s = data.scenarios[i];
    if (s.t_hist != cfg.tau * cfg.num_snapshots) {
      throw ValidationError("scenario '" + data.ids[i] + "' has t_hist " +
                            std::to_string(s.t_hist) + ", config implies tau * num_snapshots = " +
                            std::to_string(cfg.tau * cfg.num_snapshots));
    }
    if (s.t_future != cfg.t_future) {
      throw ValidationError("scenario '" + data.ids[i] + "' has t_future " +
                            std::to_string(s.t_future) + ", config expects " +
                            std::to_string(cfg.t_future));
    }
  }

  std::vector<PreparedScenario> prepared;
  prepared.reserve(data.scenarios.size());
  for (std::size_t i = 0; i < data.scenarios.size(); ++i) {
    prepared.push_back(prepare_scenario(data.ids[i], data.scenarios[i], cfg));
    if (!cfg.loss_all_agents && prepared.back().focal_future.empty()) {
      throw ValidationError("scenario '" + data.ids[i] +
                            "' lacks a complete focal future and cannot be trained on");
    }
  }

  std::filesystem::create_directories(out_dir);
  Rng rng(cfg.seed);
  nn::ParamStore params;
  build_model_params(params, rng, cfg);
  nn::Adam adam(cfg.adam_config());

  const int n = static_cast<int>(prepared.size());
  std::vector<int> order(n);
  TrainResult result;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (int i = 0; i < n; ++i) {
      order[i] = i;
    }
    // Seeded Fisher-Yates keeps the batch sequence reproducible.
    for (int i = n - 1; i > 0; --i) {
      std::swap(order[i], order[rng.uniform_int(i + 1)]);
    }

    EpochStats epoch_stats;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int end = std::min(n, start + cfg.batch_size);
      std::map<std::string, ad::Tensor> grad_accum;
      for (int b = start; b < end; ++b) {
        ad::Tape tape(cfg.precision_mode());
        nn::ParamBinder bind(tape, params);
        ElementLoss el = scenario_loss(tape, bind, prepared[order[b]], cfg);
        tape.backward(el.total);
        for (auto& [name, grad] : bind.grads()) {
          auto [it, inserted] = grad_accum.try_emplace(name, std::move(grad));
          if (!inserted) {
            for (int i = 0; i < it->second.size(); ++i) {
              it->second.data[i] += grad.data[i];
            }
          }
        }
        epoch_stats.loss += el.stats.loss;
        epoch_stats.l_goal += el.stats.l_goal;
        epoch_stats.l_reg += el.stats.l_reg;
        epoch_stats.l_score += el.stats.l_score;
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (auto& [name, grad] : grad_accum) {
        for (double& g : grad.data) {
          g *= inv;
        }
      }
      adam.step(params, grad_accum);
    }
    epoch_stats.loss /= n;
    epoch_stats.l_goal /= n;
    epoch_stats.l_reg /= n;
    epoch_stats.l_score /= n;
    result.final_epoch = epoch_stats;

    if (log_stream) {
      *log_stream << nlohmann::json{{"epoch", epoch},
                                    {"loss", epoch_stats.loss},
                                    {"l_goal", epoch_stats.l_goal},
                                    {"l_reg", epoch_stats.l_reg},
                                    {"l_score", epoch_stats.l_score}}
                         .dump()
                  << "\n";
    }
    if (cfg.save_every > 0 && epoch % cfg.save_every == 0 && epoch != cfg.epochs) {
      save_checkpoint(out_dir + "/checkpoint_epoch" + std::to_string(epoch), cfg, params);
    }
  }

  result.final_checkpoint_stem = out_dir + "/checkpoint_final";
  save_checkpoint(result.final_checkpoint_stem, cfg, params);

  // Training-set metrics close the loop for the log and the round-trip check
  // against `predict` + `evaluate`.
  std::vector<Prediction> preds;
  std::vector<FutureStates> gts;
  preds.reserve(prepared.size());
  for (const PreparedScenario& ps : prepared) {
    if (ps.focal_future.empty()) {
      continue;
    }
    preds.push_back(predict_prepared(params, cfg, ps));
    gts.push_back(ps.focal_future);
  }
  if (!preds.empty()) {
    result.train_metrics = evaluate(preds, gts, cfg.modes);
  }
  if (log_stream) {
    *log_stream << nlohmann::json{{"final", true},
                                  {"k", result.train_metrics.k},
                                  {"train_min_ade", result.train_metrics.min_ade},
                                  {"train_min_fde", result.train_metrics.min_fde},
                                  {"train_miss_rate", result.train_metrics.miss_rate},
                                  {"train_b_min_fde", result.train_metrics.b_min_fde}}
                       .dump()
                << "\n";
  }
  return result;
}

Prediction predict_prepared(const nn::ParamStore& params, const RunConfig& cfg,
                            const PreparedScenario& prepared) {
  ad::Tape tape(cfg.precision_mode());
  nn::ParamBinder bind(tape, params);
  const EncodeResult enc = encode_scenario(tape, bind, prepared.graph, cfg.encoder_config());
  ad::Value agent_row =
      tape.slice_rows(enc.agents, prepared.graph.focal_index, prepared.graph.focal_index + 1);
  DecodeValues decoded = decode_agent(tape, bind, agent_row, cfg.decoder_config());
  return extract_prediction(tape, decoded, prepared.focal_id);
}

}  // namespace heterogcn
