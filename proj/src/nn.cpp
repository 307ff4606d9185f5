#include "heterogcn/nn.hpp"

#include <cmath>
#include <utility>

namespace heterogcn::nn {

void ParamStore::add(const std::string& name, ad::Tensor t) {
  if (params_.count(name) > 0) {
    throw ValidationError("parameter '" + name + "' registered twice");
  }
  params_.emplace(name, std::move(t));
}

const ad::Tensor& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw ValidationError("unknown parameter '" + name + "'");
  }
  return it->second;
}

ad::Tensor& ParamStore::ref(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw ValidationError("unknown parameter '" + name + "'");
  }
  return it->second;
}

std::vector<std::string> ParamStore::sorted_names() const {
  std::vector<std::string> names;
  names.reserve(params_.size());
  for (const auto& [name, tensor] : params_) {
    names.push_back(name);
  }
  return names;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, tensor] : params_) {
    n += tensor.data.size();
  }
  return n;
}

ad::Tensor uniform_fan_in(Rng& rng, int fan_in, int rows, int cols) {
  const double bound = std::sqrt(1.0 / fan_in);
  ad::Tensor t(rows, cols);
  for (double& v : t.data) {
    v = rng.uniform(-bound, bound);
  }
  return t;
}

void init_linear(ParamStore& params, Rng& rng, const std::string& prefix, int in_dim, int out_dim) {
  params.add(prefix + ".weight", uniform_fan_in(rng, in_dim, in_dim, out_dim));
  params.add(prefix + ".bias", ad::Tensor(1, out_dim));
}

void init_mlp2(ParamStore& params, Rng& rng, const std::string& prefix, int in_dim, int hidden_dim,
               int out_dim) {
  init_linear(params, rng, prefix + ".fc0", in_dim, hidden_dim);
  init_linear(params, rng, prefix + ".fc1", hidden_dim, out_dim);
}

void init_gru(ParamStore& params, Rng& rng, const std::string& prefix, int in_dim, int hidden_dim) {
  params.add(prefix + ".w_ih", uniform_fan_in(rng, in_dim, in_dim, 3 * hidden_dim));
  params.add(prefix + ".b_ih", ad::Tensor(1, 3 * hidden_dim));
  params.add(prefix + ".w_hh", uniform_fan_in(rng, hidden_dim, hidden_dim, 3 * hidden_dim));
  params.add(prefix + ".b_hh", ad::Tensor(1, 3 * hidden_dim));
}

void Adam::step(ParamStore& params, const std::map<std::string, ad::Tensor>& grads) {
  ++steps_;
  const double bc1 = 1.0 - std::pow(config_.beta1, steps_);
  const double bc2 = 1.0 - std::pow(config_.beta2, steps_);
  for (const std::string& name : params.sorted_names()) {
    auto git = grads.find(name);
    if (git == grads.end()) {
      continue;
    }
    ad::Tensor& p = params.ref(name);
    const ad::Tensor& g = git->second;
    if (!p.same_shape(g)) {
      throw ValidationError("gradient for '" + name + "' has shape " + g.shape_str() +
                            ", parameter has " + p.shape_str());
    }
    ad::Tensor& m = m_.try_emplace(name, p.rows, p.cols).first->second;
    ad::Tensor& v = v_.try_emplace(name, p.rows, p.cols).first->second;
    for (int i = 0; i < p.size(); ++i) {
      m.data[i] = config_.beta1 * m.data[i] + (1.0 - config_.beta1) * g.data[i];
      v.data[i] = config_.beta2 * v.data[i] + (1.0 - config_.beta2) * g.data[i] * g.data[i];
      const double m_hat = m.data[i] / bc1;
      const double v_hat = v.data[i] / bc2;
      p.data[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

ad::Value ParamBinder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) {
    return it->second;
  }
  ad::Value v = tape_.leaf(params_.get(name), /*requires_grad=*/true);
  bound_.emplace(name, v);
  return v;
}

std::map<std::string, ad::Tensor> ParamBinder::grads() const {
  std::map<std::string, ad::Tensor> out;
  for (const auto& [name, value] : bound_) {
    out.emplace(name, tape_.grad(value));
  }
  return out;
}

ad::Value linear(ad::Tape& tape, ParamBinder& bind, const std::string& prefix, ad::Value x) {
  return tape.add_bias(tape.matmul(x, bind(prefix + ".weight")), bind(prefix + ".bias"));
}

ad::Value mlp2(ad::Tape& tape, ParamBinder& bind, const std::string& prefix, ad::Value x) {
  ad::Value h = tape.relu(linear(tape, bind, prefix + ".fc0", x));
  return linear(tape, bind, prefix + ".fc1", h);
}

ad::Value gru_cell(ad::Tape& tape, ParamBinder& bind, const std::string& prefix, ad::Value x,
                   ad::Value h) {
  const int hidden = tape.cols(h);
  ad::Value gi = tape.add_bias(tape.matmul(x, bind(prefix + ".w_ih")), bind(prefix + ".b_ih"));
  ad::Value gh = tape.add_bias(tape.matmul(h, bind(prefix + ".w_hh")), bind(prefix + ".b_hh"));
  ad::Value r = tape.sigmoid(tape.add(tape.slice_cols(gi, 0, hidden), tape.slice_cols(gh, 0, hidden)));
  ad::Value z = tape.sigmoid(
      tape.add(tape.slice_cols(gi, hidden, 2 * hidden), tape.slice_cols(gh, hidden, 2 * hidden)));
  ad::Value n = tape.tanh(tape.add(tape.slice_cols(gi, 2 * hidden, 3 * hidden),
                                   tape.hadamard(r, tape.slice_cols(gh, 2 * hidden, 3 * hidden))));
  // h' = (1 - z) .* n + z .* h, written as n + z .* (h - n).
  return tape.add(n, tape.hadamard(z, tape.sub(h, n)));
}

}  // namespace heterogcn::nn
