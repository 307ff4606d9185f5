#pragma once

#include <map>
#include <string>
#include <vector>

#include "heterogcn/common.hpp"
#include "heterogcn/tensor.hpp"

namespace heterogcn::nn {

// Named model parameters. Keys are globally unique dotted paths
// (e.g. "gcm.layer0.edge1.psi.weight"); iteration is always name-sorted so
// optimizer updates and checkpoints are order-stable.
class ParamStore {
 public:
  void add(const std::string& name, ad::Tensor t);
  bool has(const std::string& name) const { return params_.count(name) > 0; }
  const ad::Tensor& get(const std::string& name) const;
  ad::Tensor& ref(const std::string& name);
  std::vector<std::string> sorted_names() const;
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

 private:
  std::map<std::string, ad::Tensor> params_;
};

// Weight entries get U(-sqrt(1/fan_in), +sqrt(1/fan_in)), biases start at zero.
void init_linear(ParamStore& params, Rng& rng, const std::string& prefix, int in_dim, int out_dim);
void init_mlp2(ParamStore& params, Rng& rng, const std::string& prefix, int in_dim, int hidden_dim,
               int out_dim);
void init_gru(ParamStore& params, Rng& rng, const std::string& prefix, int in_dim, int hidden_dim);
ad::Tensor uniform_fan_in(Rng& rng, int fan_in, int rows, int cols);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam. Parameters without a gradient entry are left untouched
// (their moments do not advance either).
class Adam {
 public:
  explicit Adam(AdamConfig config) : config_(config) {}

  void step(ParamStore& params, const std::map<std::string, ad::Tensor>& grads);
  int steps_taken() const { return steps_; }

 private:
  AdamConfig config_;
  int steps_ = 0;
  std::map<std::string, ad::Tensor> m_;
  std::map<std::string, ad::Tensor> v_;
};

// Binds parameters onto a tape as gradient-tracked leaves, one leaf per name
// per tape, so repeated uses share a node and gradients accumulate naturally.
class ParamBinder {
 public:
  ParamBinder(ad::Tape& tape, const ParamStore& params) : tape_(tape), params_(params) {}

  ad::Value operator()(const std::string& name);
  // Gradient per bound parameter; call after Tape::backward.
  std::map<std::string, ad::Tensor> grads() const;

 private:
  ad::Tape& tape_;
  const ParamStore& params_;
  std::map<std::string, ad::Value> bound_;
};

// y = x * W + b with parameters prefix + ".weight" / ".bias".
ad::Value linear(ad::Tape& tape, ParamBinder& bind, const std::string& prefix, ad::Value x);
// Two-layer MLP: linear -> ReLU -> linear.
ad::Value mlp2(ad::Tape& tape, ParamBinder& bind, const std::string& prefix, ad::Value x);
// Standard GRU cell (reset/update/candidate gates); returns the next hidden state.
ad::Value gru_cell(ad::Tape& tape, ParamBinder& bind, const std::string& prefix, ad::Value x,
                   ad::Value h);

}  // namespace heterogcn::nn
