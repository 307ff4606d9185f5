#pragma once

// Shared helpers for the test binaries: finite-difference gradient harnesses
// and small input builders. Oracle logic lives in the individual test files.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "heterogcn/common.hpp"
#include "heterogcn/nn.hpp"
#include "heterogcn/tensor.hpp"

namespace testutil {

inline bool close(double a, double b, double rel_tol = 1e-4, double abs_floor = 1e-7) {
  const double diff = std::abs(a - b);
  return diff <= abs_floor || diff <= rel_tol * std::max(std::abs(a), std::abs(b));
}

inline heterogcn::ad::Tensor random_tensor(heterogcn::Rng& rng, int rows, int cols,
                                           double scale = 1.0) {
  heterogcn::ad::Tensor t(rows, cols);
  for (double& v : t.data) {
    v = scale * rng.uniform(-1.0, 1.0);
  }
  return t;
}

// Builds a scalar loss from gradient-tracked leaves.
using LeafLossFn = std::function<heterogcn::ad::Value(
    heterogcn::ad::Tape&, const std::vector<heterogcn::ad::Value>&)>;

struct GradCheckResult {
  bool ok = true;
  // Largest relative error among elements whose absolute difference exceeds
  // the floor; differences under the floor are finite-difference noise on
  // near-zero gradients and are tracked separately as max_abs_err.
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::string detail;
};

// Central finite differences against the tape gradient, every element of
// every input.
inline GradCheckResult gradcheck_leaves(const LeafLossFn& build,
                                        std::vector<heterogcn::ad::Tensor> inputs,
                                        double h = 1e-5, double rel_tol = 1e-4) {
  namespace ad = heterogcn::ad;
  auto eval = [&](const std::vector<ad::Tensor>& xs) {
    ad::Tape tape;
    std::vector<ad::Value> leaves;
    leaves.reserve(xs.size());
    for (const ad::Tensor& x : xs) {
      leaves.push_back(tape.leaf(x, false));
    }
    return tape.val(build(tape, leaves)).data[0];
  };

  ad::Tape tape;
  std::vector<ad::Value> leaves;
  leaves.reserve(inputs.size());
  for (const ad::Tensor& x : inputs) {
    leaves.push_back(tape.leaf(x, true));
  }
  ad::Value loss = build(tape, leaves);
  tape.backward(loss);

  GradCheckResult result;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const ad::Tensor analytic = tape.grad(leaves[i]);
    for (int e = 0; e < inputs[i].size(); ++e) {
      const double keep = inputs[i].data[e];
      inputs[i].data[e] = keep + h;
      const double up = eval(inputs);
      inputs[i].data[e] = keep - h;
      const double down = eval(inputs);
      inputs[i].data[e] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic.data[e];
      const double diff = std::abs(a - numeric);
      result.max_abs_err = std::max(result.max_abs_err, diff);
      if (diff > 1e-7) {
        result.max_rel_err =
            std::max(result.max_rel_err, diff / std::max(std::abs(a), std::abs(numeric)));
      }
      if (!close(a, numeric, rel_tol)) {
        result.ok = false;
        if (result.detail.empty()) {
          result.detail = "input " + std::to_string(i) + " element " + std::to_string(e) +
                          ": analytic " + std::to_string(a) + " vs numeric " +
                          std::to_string(numeric);
        }
      }
    }
  }
  return result;
}

// Builds a scalar loss from the given parameters.
using ParamLossFn = std::function<double(const heterogcn::nn::ParamStore&,
                                         std::map<std::string, heterogcn::ad::Tensor>*)>;

// Exhaustive per-parameter finite differences for a parameterized model.
// build(params, grads_out): runs forward (and backward when grads_out is
// non-null, filling it) and returns the loss value.
inline GradCheckResult gradcheck_params(const ParamLossFn& build,
                                        heterogcn::nn::ParamStore& params, double h = 1e-5,
                                        double rel_tol = 1e-4) {
  std::map<std::string, heterogcn::ad::Tensor> grads;
  build(params, &grads);

  GradCheckResult result;
  for (const std::string& name : params.sorted_names()) {
    heterogcn::ad::Tensor& p = params.ref(name);
    const heterogcn::ad::Tensor& g = grads.at(name);
    for (int e = 0; e < p.size(); ++e) {
      const double keep = p.data[e];
      p.data[e] = keep + h;
      const double up = build(params, nullptr);
      p.data[e] = keep - h;
      const double down = build(params, nullptr);
      p.data[e] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double a = g.data[e];
      const double diff = std::abs(a - numeric);
      result.max_abs_err = std::max(result.max_abs_err, diff);
      if (diff > 1e-7) {
        result.max_rel_err =
            std::max(result.max_rel_err, diff / std::max(std::abs(a), std::abs(numeric)));
      }
      if (!close(a, numeric, rel_tol)) {
        result.ok = false;
        if (result.detail.empty()) {
          result.detail = "param " + name + " element " + std::to_string(e) + ": analytic " +
                          std::to_string(a) + " vs numeric " + std::to_string(numeric);
        }
      }
    }
  }
  return result;
}

// Directional probe: compares the gradient-vector product against a central
// difference along a random parameter-space direction.
inline GradCheckResult dircheck_params(const ParamLossFn& build,
                                       heterogcn::nn::ParamStore& params, heterogcn::Rng& rng,
                                       int probes = 4, double h = 1e-5, double rel_tol = 1e-4) {
  std::map<std::string, heterogcn::ad::Tensor> grads;
  build(params, &grads);

  GradCheckResult result;
  for (int probe = 0; probe < probes; ++probe) {
    std::map<std::string, heterogcn::ad::Tensor> direction;
    double analytic = 0.0;
    for (const std::string& name : params.sorted_names()) {
      heterogcn::ad::Tensor d(params.get(name).rows, params.get(name).cols);
      for (int e = 0; e < d.size(); ++e) {
        d.data[e] = rng.uniform(-1.0, 1.0);
        analytic += grads.at(name).data[e] * d.data[e];
      }
      direction.emplace(name, std::move(d));
    }
    auto shift = [&](double step) {
      for (const std::string& name : params.sorted_names()) {
        heterogcn::ad::Tensor& p = params.ref(name);
        const heterogcn::ad::Tensor& d = direction.at(name);
        for (int e = 0; e < p.size(); ++e) {
          p.data[e] += step * d.data[e];
        }
      }
    };
    shift(h);
    const double up = build(params, nullptr);
    shift(-2.0 * h);
    const double down = build(params, nullptr);
    shift(h);
    const double numeric = (up - down) / (2.0 * h);
    const double diff = std::abs(analytic - numeric);
    result.max_abs_err = std::max(result.max_abs_err, diff);
    if (diff > 1e-6) {
      result.max_rel_err =
          std::max(result.max_rel_err, diff / std::max(std::abs(analytic), std::abs(numeric)));
    }
    if (!close(analytic, numeric, rel_tol, 1e-6)) {
      result.ok = false;
      if (result.detail.empty()) {
        result.detail = "probe " + std::to_string(probe) + ": analytic " +
                        std::to_string(analytic) + " vs numeric " + std::to_string(numeric);
      }
    }
  }
  return result;
}

}  // namespace testutil
