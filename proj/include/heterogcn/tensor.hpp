#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "heterogcn/common.hpp"

namespace heterogcn::ad {

enum class Precision { kF64, kF32 };

// Dense row-major 2-D tensor of doubles. Scalars are [1 x 1], row vectors
// [1 x n]. In fp32 mode the tape rounds every op output to float precision.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  static Tensor scalar(double v) {
    Tensor t(1, 1);
    t.data[0] = v;
    return t;
  }
  static Tensor row(const std::vector<double>& v) {
    Tensor t(1, static_cast<int>(v.size()));
    t.data = v;
    return t;
  }
  static Tensor from_rows(const std::vector<std::vector<double>>& rows_in);

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  int size() const { return rows * cols; }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
  std::string shape_str() const;
};

struct Value {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Records primitive ops during the forward pass and replays exact adjoint
// rules in reverse. One tape per forward/backward pass; single-threaded.
class Tape {
 public:
  explicit Tape(Precision precision = Precision::kF64) : precision_(precision) {}

  Value leaf(Tensor t, bool requires_grad = false);
  Value constant(Tensor t) { return leaf(std::move(t), false); }
  Value scalar(double v) { return leaf(Tensor::scalar(v), false); }

  Value matmul(Value a, Value b);
  Value add(Value a, Value b);          // same shape
  Value sub(Value a, Value b);          // same shape
  Value add_bias(Value x, Value bias);  // [n,c] + [1,c], broadcast over rows
  Value scale(Value x, double c);
  Value add_scalar(Value x, double c);
  Value relu(Value x);
  Value tanh(Value x);
  Value sigmoid(Value x);
  Value hadamard(Value a, Value b);
  Value concat_cols(const std::vector<Value>& xs);
  Value concat_rows(Value a, Value b);
  Value slice_rows(Value x, int begin, int end);
  Value slice_cols(Value x, int begin, int end);
  Value gather_rows(Value x, std::vector<int> indices);
  Value reshape(Value x, int rows, int cols);
  // Per-segment reductions over rows; empty segments yield zero rows. For
  // segment_max, gradient routes to the argmax row only (ties: lowest index).
  Value segment_sum(Value x, std::vector<int> segments, int num_segments);
  Value segment_max(Value x, std::vector<int> segments, int num_segments);
  Value row_scale(Value x, std::vector<double> factors);
  Value softmax_rows(Value x);
  Value smooth_l1(Value x);  // elementwise, quadratic below 1
  Value sum(Value x);        // -> [1,1]
  Value detach(Value x);

  // Accumulates d(loss)/d(node) for every node that the loss depends on.
  void backward(Value loss);

  const Tensor& val(Value v) const { return nodes_[check(v)].value; }
  // Zero tensor if the node never received gradient.
  Tensor grad(Value v) const;
  bool requires_grad(Value v) const { return nodes_[check(v)].requires_grad; }
  int rows(Value v) const { return nodes_[check(v)].value.rows; }
  int cols(Value v) const { return nodes_[check(v)].value.cols; }
  std::size_t node_count() const { return nodes_.size(); }
  Precision precision() const { return precision_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // empty until touched during backward
    bool requires_grad = false;
    std::function<void(Tape&)> backprop;  // null for leaves / detach
  };

  std::vector<Node> nodes_;
  Precision precision_;

  int check(Value v) const;
  Value push(Tensor value, bool requires_grad, std::function<void(Tape&)> backprop,
             const char* op);
  void round_to_precision(Tensor& t) const;
  void check_finite(const Tensor& t, const char* op) const;

  // Backward-side helpers.
  const Tensor* grad_of(int id) const {
    return nodes_[id].grad.data.empty() ? nullptr : &nodes_[id].grad;
  }
  Tensor& grad_buf(int id);
  void shapes_must_match(Value a, Value b, const char* op) const;
};

}  // namespace heterogcn::ad
