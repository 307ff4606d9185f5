#include "heterogcn/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace heterogcn {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) {
    return "";
  }
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "' expects an integer, got '" + value + "'");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "' expects a number, got '" + value + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "' expects an unsigned integer, got '" + value +
                          "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ValidationError("config key '" + key + "' expects true/false, got '" + value + "'");
}

}  // namespace

GraphConfig RunConfig::graph_config() const {
  GraphConfig g;
  g.tau = tau;
  g.num_snapshots = num_snapshots;
  g.knn = knn;
  g.delta_aa = delta_aa;
  g.segment_len = segment_len;
  g.opposing_angle_deg = opposing_angle_deg;
  g.frame_dt = frame_dt;
  return g;
}

EncoderConfig RunConfig::encoder_config() const {
  EncoderConfig e;
  e.hidden = hidden;
  e.gcm_layers = gcm_layers;
  e.tau = tau;
  e.variant = variant_from_string(variant);
  return e;
}

DecoderConfig RunConfig::decoder_config() const {
  DecoderConfig d;
  d.hidden = hidden;
  d.modes = modes;
  d.t_future = t_future;
  return d;
}

LossConfig RunConfig::loss_config() const {
  LossConfig l;
  l.lambda1 = lambda1;
  l.lambda2 = lambda2;
  l.lambda3 = lambda3;
  l.epsilon = epsilon;
  return l;
}

nn::AdamConfig RunConfig::adam_config() const {
  nn::AdamConfig a;
  a.lr = lr;
  a.beta1 = beta1;
  a.beta2 = beta2;
  a.eps = adam_eps;
  return a;
}

ad::Precision RunConfig::precision_mode() const {
  if (precision == "f64") return ad::Precision::kF64;
  if (precision == "f32") return ad::Precision::kF32;
  throw ValidationError("config key 'precision' expects f64 or f32, got '" + precision + "'");
}

void RunConfig::validate() const {
  graph_config().validate();
  encoder_config().validate();
  decoder_config().validate();
  loss_config().validate();
  precision_mode();
  if (lr < 0.0) throw ValidationError("config key 'lr' must be >= 0");
  if (beta1 < 0.0 || beta1 >= 1.0) throw ValidationError("config key 'beta1' must be in [0, 1)");
  if (beta2 < 0.0 || beta2 >= 1.0) throw ValidationError("config key 'beta2' must be in [0, 1)");
  if (adam_eps <= 0.0) throw ValidationError("config key 'adam_eps' must be > 0");
  if (batch_size < 1) throw ValidationError("config key 'batch_size' must be >= 1");
  if (epochs < 0) throw ValidationError("config key 'epochs' must be >= 0");
  if (save_every < 0) throw ValidationError("config key 'save_every' must be >= 0");
  if (t_future < 2) throw ValidationError("config key 't_future' must be >= 2");
}

void apply_config_override(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "tau") cfg.tau = parse_int(key, value);
  else if (key == "num_snapshots") cfg.num_snapshots = parse_int(key, value);
  else if (key == "knn") cfg.knn = parse_int(key, value);
  else if (key == "delta_aa") cfg.delta_aa = parse_double(key, value);
  else if (key == "segment_len") cfg.segment_len = parse_double(key, value);
  else if (key == "opposing_angle_deg") cfg.opposing_angle_deg = parse_double(key, value);
  else if (key == "frame_dt") cfg.frame_dt = parse_double(key, value);
  else if (key == "hidden") cfg.hidden = parse_int(key, value);
  else if (key == "gcm_layers") cfg.gcm_layers = parse_int(key, value);
  else if (key == "modes") cfg.modes = parse_int(key, value);
  else if (key == "t_future") cfg.t_future = parse_int(key, value);
  else if (key == "variant") cfg.variant = value;
  else if (key == "lambda1") cfg.lambda1 = parse_double(key, value);
  else if (key == "lambda2") cfg.lambda2 = parse_double(key, value);
  else if (key == "lambda3") cfg.lambda3 = parse_double(key, value);
  else if (key == "epsilon") cfg.epsilon = parse_double(key, value);
  else if (key == "loss_all_agents") cfg.loss_all_agents = parse_bool(key, value);
  else if (key == "lr") cfg.lr = parse_double(key, value);
  else if (key == "beta1") cfg.beta1 = parse_double(key, value);
  else if (key == "beta2") cfg.beta2 = parse_double(key, value);
  else if (key == "adam_eps") cfg.adam_eps = parse_double(key, value);
  else if (key == "batch_size") cfg.batch_size = parse_int(key, value);
  else if (key == "epochs") cfg.epochs = parse_int(key, value);
  else if (key == "save_every") cfg.save_every = parse_int(key, value);
  else if (key == "seed") cfg.seed = parse_u64(key, value);
  else if (key == "precision") cfg.precision = value;
  else throw ValidationError("unknown config key '" + key + "'");
}

const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys = {
      "tau",        "num_snapshots", "knn",     "delta_aa",   "segment_len",
      "opposing_angle_deg", "frame_dt", "hidden", "gcm_layers", "modes",
      "t_future",   "variant",       "lambda1", "lambda2",    "lambda3",
      "epsilon",    "loss_all_agents", "lr",    "beta1",      "beta2",
      "adam_eps",   "batch_size",    "epochs",  "save_every", "seed",
      "precision"};
  return keys;
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config line " + std::to_string(line_no) +
                            " is not 'key = value': '" + line + "'");
    }
    apply_config_override(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ValidationError("cannot open config file '" + path + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
  return nlohmann::json{{"tau", cfg.tau},
                        {"num_snapshots", cfg.num_snapshots},
                        {"knn", cfg.knn},
                        {"delta_aa", cfg.delta_aa},
                        {"segment_len", cfg.segment_len},
                        {"opposing_angle_deg", cfg.opposing_angle_deg},
                        {"frame_dt", cfg.frame_dt},
                        {"hidden", cfg.hidden},
                        {"gcm_layers", cfg.gcm_layers},
                        {"modes", cfg.modes},
                        {"t_future", cfg.t_future},
                        {"variant", cfg.variant},
                        {"lambda1", cfg.lambda1},
                        {"lambda2", cfg.lambda2},
                        {"lambda3", cfg.lambda3},
                        {"epsilon", cfg.epsilon},
                        {"loss_all_agents", cfg.loss_all_agents},
                        {"lr", cfg.lr},
                        {"beta1", cfg.beta1},
                        {"beta2", cfg.beta2},
                        {"adam_eps", cfg.adam_eps},
                        {"batch_size", cfg.batch_size},
                        {"epochs", cfg.epochs},
                        {"save_every", cfg.save_every},
                        {"seed", cfg.seed},
                        {"precision", cfg.precision}};
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig cfg;
  try {
    j.at("tau").get_to(cfg.tau);
    j.at("num_snapshots").get_to(cfg.num_snapshots);
    j.at("knn").get_to(cfg.knn);
    j.at("delta_aa").get_to(cfg.delta_aa);
    j.at("segment_len").get_to(cfg.segment_len);
    j.at("opposing_angle_deg").get_to(cfg.opposing_angle_deg);
    j.at("frame_dt").get_to(cfg.frame_dt);
    j.at("hidden").get_to(cfg.hidden);
    j.at("gcm_layers").get_to(cfg.gcm_layers);
    j.at("modes").get_to(cfg.modes);
    j.at("t_future").get_to(cfg.t_future);
    j.at("variant").get_to(cfg.variant);
    j.at("lambda1").get_to(cfg.lambda1);
    j.at("lambda2").get_to(cfg.lambda2);
    j.at("lambda3").get_to(cfg.lambda3);
    j.at("epsilon").get_to(cfg.epsilon);
    j.at("loss_all_agents").get_to(cfg.loss_all_agents);
    j.at("lr").get_to(cfg.lr);
    j.at("beta1").get_to(cfg.beta1);
    j.at("beta2").get_to(cfg.beta2);
    j.at("adam_eps").get_to(cfg.adam_eps);
    j.at("batch_size").get_to(cfg.batch_size);
    j.at("epochs").get_to(cfg.epochs);
    j.at("save_every").get_to(cfg.save_every);
    j.at("seed").get_to(cfg.seed);
    j.at("precision").get_to(cfg.precision);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("run config JSON is missing fields: ") + e.what());
  }
  return cfg;
}

}  // namespace heterogcn
