#include "heterogcn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <utility>

namespace heterogcn::ad {

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows_in) {
  if (rows_in.empty()) {
    return Tensor();
  }
  Tensor t(static_cast<int>(rows_in.size()), static_cast<int>(rows_in.front().size()));
  for (int r = 0; r < t.rows; ++r) {
    if (static_cast<int>(rows_in[r].size()) != t.cols) {
      throw ValidationError("tensor rows have inconsistent lengths: row 0 has " +
                            std::to_string(t.cols) + " entries, row " + std::to_string(r) +
                            " has " + std::to_string(rows_in[r].size()));
    }
    std::copy(rows_in[r].begin(), rows_in[r].end(),
              t.data.begin() + static_cast<std::size_t>(r) * t.cols);
  }
  return t;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[" << rows << " x " << cols << "]";
  return os.str();
}

int Tape::check(Value v) const {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
    throw ValidationError("tape value id " + std::to_string(v.id) +
                          " does not belong to this tape");
  }
  return v.id;
}

void Tape::round_to_precision(Tensor& t) const {
  if (precision_ == Precision::kF32) {
    for (double& v : t.data) {
      v = static_cast<double>(static_cast<float>(v));
    }
  }
}

void Tape::check_finite(const Tensor& t, const char* op) const {
  for (double v : t.data) {
    if (!std::isfinite(v)) {
      throw ValidationError(std::string(op) + " produced a non-finite value");
    }
  }
}

Value Tape::push(Tensor value, bool requires_grad, std::function<void(Tape&)> backprop,
                 const char* op) {
  round_to_precision(value);
  check_finite(value, op);
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) {
    node.backprop = std::move(backprop);
  }
  nodes_.push_back(std::move(node));
  return Value{static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_buf(int id) {
  Node& node = nodes_[id];
  if (node.grad.data.empty()) {
    node.grad = Tensor(node.value.rows, node.value.cols);
  }
  return node.grad;
}

Tensor Tape::grad(Value v) const {
  const Node& node = nodes_[check(v)];
  if (node.grad.data.empty()) {
    return Tensor(node.value.rows, node.value.cols);
  }
  return node.grad;
}

void Tape::shapes_must_match(Value a, Value b, const char* op) const {
  const Tensor& ta = nodes_[check(a)].value;
  const Tensor& tb = nodes_[check(b)].value;
  if (!ta.same_shape(tb)) {
    throw ValidationError(std::string(op) + " shape mismatch: " + ta.shape_str() + " vs " +
                          tb.shape_str());
  }
}

Value Tape::leaf(Tensor t, bool requires_grad) {
  check_finite(t, "leaf");
  Node node;
  node.value = std::move(t);
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return Value{static_cast<int>(nodes_.size()) - 1};
}

Value Tape::matmul(Value a, Value b) {
  const int ai = check(a);
  const int bi = check(b);
  const Tensor& ta = nodes_[ai].value;
  const Tensor& tb = nodes_[bi].value;
  if (ta.cols != tb.rows) {
    throw ValidationError("matmul shape mismatch: " + ta.shape_str() + " * " + tb.shape_str());
  }
  Tensor out(ta.rows, tb.cols);
  for (int i = 0; i < ta.rows; ++i) {
    const double* arow = &ta.data[static_cast<std::size_t>(i) * ta.cols];
    double* orow = &out.data[static_cast<std::size_t>(i) * out.cols];
    for (int k = 0; k < ta.cols; ++k) {
      const double av = arow[k];
      if (av == 0.0) {
        continue;
      }
      const double* brow = &tb.data[static_cast<std::size_t>(k) * tb.cols];
      for (int j = 0; j < tb.cols; ++j) {
        orow[j] += av * brow[j];
      }
    }
  }
  const bool needs = nodes_[ai].requires_grad || nodes_[bi].requires_grad;
  Value v = push(std::move(out), needs, nullptr, "matmul");
  if (needs) {
    const int oi = v.id;
    nodes_[oi].backprop = [oi, ai, bi](Tape& t) {
      const Tensor& g = t.nodes_[oi].grad;
      const Tensor& va = t.nodes_[ai].value;
      const Tensor& vb = t.nodes_[bi].value;
      if (t.nodes_[ai].requires_grad) {
        // dA = dC * B^T
        Tensor& ga = t.grad_buf(ai);
        for (int i = 0; i < va.rows; ++i) {
          const double* grow = &g.data[static_cast<std::size_t>(i) * g.cols];
          double* garow = &ga.data[static_cast<std::size_t>(i) * ga.cols];
          for (int j = 0; j < vb.cols; ++j) {
            const double gv = grow[j];
            if (gv == 0.0) {
              continue;
            }
            const double* bcol = &vb.data[j];
            for (int k = 0; k < va.cols; ++k) {
              garow[k] += gv * bcol[static_cast<std::size_t>(k) * vb.cols];
            }
          }
        }
      }
      if (t.nodes_[bi].requires_grad) {
        // dB = A^T * dC
        Tensor& gb = t.grad_buf(bi);
        for (int i = 0; i < va.rows; ++i) {
          const double* arow = &va.data[static_cast<std::size_t>(i) * va.cols];
          const double* grow = &g.data[static_cast<std::size_t>(i) * g.cols];
          for (int k = 0; k < va.cols; ++k) {
            const double av = arow[k];
            if (av == 0.0) {
              continue;
            }
            double* gbrow = &gb.data[static_cast<std::size_t>(k) * gb.cols];
            for (int j = 0; j < vb.cols; ++j) {
              gbrow[j] += av * grow[j];
            }
          }
        }
      }
    };
  }
  return v;
}

Value Tape::add(Value a, Value b) {
  shapes_must_match(a, b, "add");
  const int ai = check(a);
  const int bi = check(b);
  Tensor out = nodes_[ai].value;
  const Tensor& tb = nodes_[bi].value;
  for (int i = 0; i < out.size(); ++i) {
    out.data[i] += tb.data[i];
  }
  const bool needs = nodes_[ai].requires_grad || nodes_[bi].requires_grad;
  Value v = push(std::move(out), needs, nullptr, "add");
  if (needs) {
    const int oi = v.id;
    nodes_[oi].backprop = [oi, ai, bi](Tape& t) {
      const Tensor& g = t.nodes_[oi].grad;
      for (int which : {ai, bi}) {
        if (!t.nodes_[which].requires_grad) {
          continue;
        }
        Tensor& gi = t.grad_buf(which);
        for (int i = 0; i < g.size(); ++i) {
          gi.data[i] += g.data[i];
        }
      }
    };
  }
  return v;
}

Value Tape::sub(Value a, Value b) {
  shapes_must_match(a, b, "sub");
  const int ai = check(a);
  const int bi = check(b);
  Tensor out = nodes_[ai].value;
  const Tensor& tb = nodes_[bi].value;
  for (int i = 0; i < out.size(); ++i) {
    out.data[i] -= tb.data[i];
  }
  const bool needs = nodes_[ai].requires_grad || nodes_[bi].requires_grad;
  Value v = push(std::move(out), needs, nullptr, "sub");
  if (needs) {
    const int oi = v.id;
    nodes_[oi].backprop = [oi, ai, bi](Tape& t) {
      const Tensor& g = t.nodes_[oi].grad;
      if (t.nodes_[ai].requires_grad) {
        Tensor& ga = t.grad_buf(ai);
        for (int i = 0; i < g.size(); ++i) {
          ga.data[i] += g.data[i];
        }
      }
      if (t.nodes_[bi].requires_grad) {
        Tensor& gb = t.grad_buf(bi);
        for (int i = 0; i < g.size(); ++i) {
          gb.data[i] -= g.data[i];
        }
      }
    };
  }
  return v;
}

Value Tape::add_bias(Value x, Value bias) {
  const int xi = check(x);
  const int bi = check(bias);
  const Tensor& tx = nodes_[xi].value;
  const Tensor& tb = nodes_[bi].value;
  if (tb.rows != 1 || tb.cols != tx.cols) {
    throw ValidationError("add_bias shape mismatch: " + tx.shape_str() + " + " + tb.shape_str());
  }
  Tensor out = tx;
  for (int r = 0; r < out.rows; ++r) {
    for (int c = 0; c < out.cols; ++c) {
      out.at(r, c) += tb.data[c];
    }
  }
  const bool needs = nodes_[xi].requires_grad || nodes_[bi].requires_grad;
  Value v = push(std::move(out), needs, nullptr, "add_bias");
  if (needs) {
    const int oi = v.id;
    nodes_[oi].backprop = [oi, xi, bi](Tape& t) {
      const Tensor& g = t.nodes_[oi].grad;
      if (t.nodes_[xi].requires_grad) {
        Tensor& gx = t.grad_buf(xi);
        for (int i = 0; i < g.size(); ++i) {
          gx.data[i] += g.data[i];
        }
      }
      if (t.nodes_[bi].requires_grad) {
        Tensor& gb = t.grad_buf(bi);
        for (int r = 0; r < g.rows; ++r) {
          for (int c = 0; c < g.cols; ++c) {
            gb.data[c] += g.at(r, c);
          }
        }
      }
    };
  }
  return v;
}

Value Tape::scale(Value x, double c) {
  const int xi = check(x);
  Tensor out = nodes_[xi].value;
  for (double& v : out.data) {
    v *= c;
  }
  const bool needs = nodes_[xi].requires_grad;
  Value v = push(std::move(out), needs, nullptr, "scale");
  if (needs) {
    const int oi = v.id;
    nodes_[oi].backprop = [oi, xi, c](Tape& t) {
      const Tensor& g = t.nodes_[oi].grad;
      Tensor& gx = t.grad_buf(xi);
      for (int i = 0; i < g.size(); ++i) {
        gx.data[i] += c * g.data[i];
      }
    };
  }
  return v;
}

Value Tape::add_scalar(Value x, double c) {
  const int xi = check(x);
  Tensor out = nodes_[xi].value;
  for (double& v : out.data) {
    v += c;
  }
  const bool needs = nodes_[xi].requires_grad;
  Value v = push(std::move(out), needs, nullptr, "add_scalar");
  if (needs) {
    const int oi = v.id;
    nodes_[oi].backprop = [oi, xi](Tape& t) {
      const Tensor& g = t.nodes_[oi].grad;
      Tensor& gx = t.grad_buf(xi);
      for (int i = 0; i < g.size(); ++i) {
        gx.data[i] += g.data[i];
      }
    };
  }
  return v;
}

Value Tape::relu(Value x) {
  const int xi = check(x);
  Tensor out = nodes_[xi].value;
  for (double& v : out.data) {
    v = v > 0.0 ? v : 0.0;
  }
  const bool needs = nodes_[xi].requires_grad;
  Value v = push(std::move(out), needs, nullptr, "relu");
  if (needs) {
    const int oi = v.id;
    nodes_[oi].backprop = [oi, xi](Tape& t) {
      const Tensor& g = t.nodes_[oi].grad;
      const Tensor& in = t.nodes_[xi].value;
      Tensor& gx = t.grad_buf(xi);
      for (int i = 0; i < g.size(); ++i) {
        if (in.data[i] > 0.0) {
          gx.data[i] += g.data[i];
        }
      }
    };
  }
  return v;
}

Value Tape::tanh(Value x) {
  const int xi = check(x);
  Tensor out = nodes_[xi].value;
  for (double& v : out.data) {
    v = std::tanh(v);
  }
  const bool needs = nodes_[xi].requires_grad;
  Value v = push(std::move(out), needs, nullptr, "tanh");
  if (needs) {
    const int oi = v.id;
    nodes_[oi].backprop = [oi, xi](Tape& t) {
      const Tensor& g = t.nodes_[oi].grad;
      const Tensor& y = t.nodes_[oi].value;
      Tensor& gx = t.grad_buf(xi);
      for (int i = 0; i < g.size(); ++i) {
        gx.data[i] += (1.0 - y.data[i] * y.data[i]) * g.data[i];
      }
    };
  }
  return v;
}

Value Tape::sigmoid(Value x) {
  const int xi = check(x);
  Tensor out = nodes_[xi].value;
  for (double& v : out.data) {
    v = 1.0 / (1.0 + std::exp(-v));
  }
  const bool needs = nodes_[xi].requires_grad;
  Value v = push(std::move(out), needs, nullptr, "sigmoid");
  if (needs) {
    const int oi = v.id;
    nodes_[oi].backprop = [oi, xi](Tape& t) {
      const Tensor& g = t.nodes_[oi].grad;
      const Tensor& y = t.nodes_[oi].value;
      Tensor& gx = t.grad_buf(xi);
      for (int i = 0; i < g.size(); ++i) {
        gx.data[i] += y.data[i] * (1.0 - y.data[i]) * g.data[i];
      }
    };
  }
  return v;
}

Value Tape::hadamard(Value a, Value b) {
  shapes_must_match(a, b, "hadamard");
  const int ai = check(a);
  const int bi = check(b);
  Tensor out = nodes_[ai].value;
  const Tensor& tb = nodes_[bi].value;
  for (int i = 0; i < out.size(); ++i) {
    out.data[i] *= tb.data[i];
  }
  const bool needs = nodes_[ai].requires_grad || nodes_[bi].requires_grad;
  Value v = push(std::move(out), needs, nullptr, "hadamard");
  if (needs) {
    const int oi = v.id;
    nodes_[oi].backprop = [oi, ai, bi](Tape& t) {
      const Tensor& g = t.nodes_[oi].grad;
      const Tensor& va = t.nodes_[ai].value;
      const Tensor& vb = t.nodes_[bi].value;
      if (t.nodes_[ai].requires_grad) {
        Tensor& ga = t.grad_buf(ai);
        for (int i = 0; i < g.size(); ++i) {
          ga.data[i] += vb.data[i] * g.data[i];
        }
      }
      if (t.nodes_[bi].requires_grad) {
        Tensor& gb = t.grad_buf(bi);
        for (int i = 0; i < g.size(); ++i) {
          gb.data[i] += va.data[i] * g.data[i];
        }
      }
    };
  }
  return v;
}

Value Tape::concat_cols(const std::vector<Value>& xs) {
  if (xs.empty()) {
    throw ValidationError("concat_cols requires at least one input");
  }
  std::vector<int> ids;
  ids.reserve(xs.size());
  int total_cols = 0;
  const int rows = nodes_[check(xs.front())].value.rows;
  bool needs = false;
  for (Value x : xs) {
    const int id = check(x);
    const Tensor& tx = nodes_[id].value;
    if (tx.rows != rows) {
      throw ValidationError("concat_cols row mismatch: " + nodes_[ids.empty() ? id : ids[0]].value.shape_str() +
                            " vs " + tx.shape_str());
    }
    ids.push_back(id);
    total_cols += tx.cols;
    needs = needs || nodes_[id].requires_grad;
  }
  Tensor out(rows, total_cols);
  int offset = 0;
  for (int id : ids) {
    const Tensor& tx = nodes_[id].value;
    for (int r = 0; r < rows; ++r) {
      std::copy(tx.data.begin() + static_cast<std::size_t>(r) * tx.cols,
                tx.data.begin() + static_cast<std::size_t>(r + 1) * tx.cols,
                out.data.begin() + static_cast<std::size_t>(r) * total_cols + offset);
    }
    offset += tx.cols;
  }
  Value v = push(std::move(out), needs, nullptr, "concat_cols");
  if (needs) {
    const int oi = v.id;
    nodes_[oi].backprop = [oi, ids](Tape& t) {
      const Tensor& g = t.nodes_[oi].grad;
      int offset = 0;
      for (int id : ids) {
        const Tensor& tx = t.nodes_[id].value;
        if (t.nodes_[id].requires_grad) {
          Tensor& gx = t.grad_buf(id);
          for (int r = 0; r < g.rows; ++r) {
            for (int c = 0; c < tx.cols; ++c) {
              gx.at(r, c) += g.at(r, offset + c);
            }
          }
        }
        offset += tx.cols;
      }
    };
  }
  return v;
}

Value Tape::concat_rows(Value a, Value b) {
  const int ai = check(a);
  const int bi = check(b);
  const Tensor& ta = nodes_[ai].value;
  const Tensor& tb = nodes_[bi].value;
  if (ta.cols != tb.cols) {
    throw ValidationError("concat_rows column mismatch: " + ta.shape_str() + " vs " +
                          tb.shape_str());
  }
  Tensor out(ta.rows + tb.rows, ta.cols);
  std::copy(ta.data.begin(), ta.data.end(), out.data.begin());
  std::copy(tb.data.begin(), tb.data.end(), out.data.begin() + ta.data.size());
  const bool needs = nodes_[ai].requires_grad || nodes_[bi].requires_grad;
  Value v = push(std::move(out), needs, nullptr, "concat_rows");
  if (needs) {
    const int oi = v.id;
    nodes_[oi].backprop = [oi, ai, bi](Tape& t) {
      const Tensor& g = t.nodes_[oi].grad;
      const Tensor& ta = t.nodes_[ai].value;
      if (t.nodes_[ai].requires_grad) {
        Tensor& ga = t.grad_buf(ai);
        for (int i = 0; i < ta.size(); ++i) {
          ga.data[i] += g.data[i];
        }
      }
      if (t.nodes_[bi].requires_grad) {
        Tensor& gb = t.grad_buf(bi);
        const std::size_t shift = ta.data.size();
        for (int i = 0; i < gb.size(); ++i) {
          gb.data[i] += g.data[shift + i];
        }
      }
    };
  }
  return v;
}

Value Tape::slice_rows(Value x, int begin, int end) {
  const int xi = check(x);
  const Tensor& tx = nodes_[xi].value;
  if (begin < 0 || end > tx.rows || begin >= end) {
    throw ValidationError("slice_rows range [" + std::to_string(begin) + ", " +
                          std::to_string(end) + ") invalid for " + tx.shape_str());
  }
  Tensor out(end - begin, tx.cols);
  std::copy(tx.data.begin() + static_cast<std::size_t>(begin) * tx.cols,
            tx.data.begin() + static_cast<std::size_t>(end) * tx.cols, out.data.begin());
  const bool needs = nodes_[xi].requires_grad;
  Value v = push(std::move(out), needs, nullptr, "slice_rows");
  if (needs) {
    const int oi = v.id;
    nodes_[oi].backprop = [oi, xi, begin](Tape& t) {
      const Tensor& g = t.nodes_[oi].grad;
      Tensor& gx = t.grad_buf(xi);
      const std::size_t shift = static_cast<std::size_t>(begin) * gx.cols;
      for (int i = 0; i < g.size(); ++i) {
        gx.data[shift + i] += g.data[i];
      }
    };
  }
  return v;
}

Value Tape::slice_cols(Value x, int begin, int end) {
  const int xi = check(x);
  const Tensor& tx = nodes_[xi].value;
  if (begin < 0 || end > tx.cols || begin >= end) {
    throw ValidationError("slice_cols range [" + std::to_string(begin) + ", " +
                          std::to_string(end) + ") invalid for " + tx.shape_str());
  }
  Tensor out(tx.rows, end - begin);
  for (int r = 0; r < tx.rows; ++r) {
    std::copy(tx.data.begin() + static_cast<std::size_t>(r) * tx.cols + begin,
              tx.data.begin() + static_cast<std::size_t>(r) * tx.cols + end,
              out.data.begin() + static_cast<std::size_t>(r) * out.cols);
  }
  const bool needs = nodes_[xi].requires_grad;
  Value v = push(std::move(out), needs, nullptr, "slice_cols");
  if (needs) {
    const int oi = v.id;
    nodes_[oi].backprop = [oi, xi, begin](Tape& t) {
      const Tensor& g = t.nodes_[oi].grad;
      Tensor& gx = t.grad_buf(xi);
      for (int r = 0; r < g.rows; ++r) {
        for (int c = 0; c < g.cols; ++c) {
          gx.at(r, begin + c) += g.at(r, c);
        }
      }
    };
  }
  return v;
}

Value Tape::gather_rows(Value x, std::vector<int> indices) {
  const int xi = check(x);
  const Tensor& tx = nodes_[xi].value;
  for (int idx : indices) {
    if (idx < 0 || idx >= tx.rows) {
      throw ValidationError("gather_rows index " + std::to_string(idx) + " out of range for " +
                            tx.shape_str());
    }
  }
  Tensor out(static_cast<int>(indices.size()), tx.cols);
  for (int r = 0; r < out.rows; ++r) {
    std::copy(tx.data.begin() + static_cast<std::size_t>(indices[r]) * tx.cols,
              tx.data.begin() + static_cast<std::size_t>(indices[r] + 1) * tx.cols,
              out.data.begin() + static_cast<std::size_t>(r) * out.cols);
  }
  const bool needs = nodes_[xi].requires_grad;
  Value v = push(std::move(out), needs, nullptr, "gather_rows");
  if (needs) {
    const int oi = v.id;
    nodes_[oi].backprop = [oi, xi, indices = std::move(indices)](Tape& t) {
      const Tensor& g = t.nodes_[oi].grad;
      Tensor& gx = t.grad_buf(xi);
      for (int r = 0; r < g.rows; ++r) {
        double* dst = &gx.data[static_cast<std::size_t>(indices[r]) * gx.cols];
        const double* src = &g.data[static_cast<std::size_t>(r) * g.cols];
        for (int c = 0; c < g.cols; ++c) {
          dst[c] += src[c];
        }
      }
    };
  }
  return v;
}

Value Tape::reshape(Value x, int rows, int cols) {
  const int xi = check(x);
  const Tensor& tx = nodes_[xi].value;
  if (rows * cols != tx.size()) {
    throw ValidationError("reshape to [" + std::to_string(rows) + " x " + std::to_string(cols) +
                          "] does not preserve the " + std::to_string(tx.size()) + " elements of " +
                          tx.shape_str());
  }
  Tensor out(rows, cols);
  out.data = tx.data;
  const bool needs = nodes_[xi].requires_grad;
  Value v = push(std::move(out), needs, nullptr, "reshape");
  if (needs) {
    const int oi = v.id;
    nodes_[oi].backprop = [oi, xi](Tape& t) {
      const Tensor& g = t.nodes_[oi].grad;
      Tensor& gx = t.grad_buf(xi);
      for (int i = 0; i < g.size(); ++i) {
        gx.data[i] += g.data[i];
      }
    };
  }
  return v;
}

Value Tape::segment_sum(Value x, std::vector<int> segments, int num_segments) {
  const int xi = check(x);
  const Tensor& tx = nodes_[xi].value;
  if (static_cast<int>(segments.size()) != tx.rows) {
    throw ValidationError("segment_sum expects one segment id per row: got " +
                          std::to_string(segments.size()) + " ids for " + tx.shape_str());
  }
  for (int s : segments) {
    if (s < 0 || s >= num_segments) {
      throw ValidationError("segment_sum id " + std::to_string(s) + " outside [0, " +
                            std::to_string(num_segments) + ")");
    }
  }
  Tensor out(num_segments, tx.cols);
  for (int r = 0; r < tx.rows; ++r) {
    double* dst = &out.data[static_cast<std::size_t>(segments[r]) * out.cols];
    const double* src = &tx.data[static_cast<std::size_t>(r) * tx.cols];
    for (int c = 0; c < tx.cols; ++c) {
      dst[c] += src[c];
    }
  }
  const bool needs = nodes_[xi].requires_grad;
  Value v = push(std::move(out), needs, nullptr, "segment_sum");
  if (needs) {
    const int oi = v.id;
    nodes_[oi].backprop = [oi, xi, segments = std::move(segments)](Tape& t) {
      const Tensor& g = t.nodes_[oi].grad;
      Tensor& gx = t.grad_buf(xi);
      for (int r = 0; r < gx.rows; ++r) {
        const double* src = &g.data[static_cast<std::size_t>(segments[r]) * g.cols];
        double* dst = &gx.data[static_cast<std::size_t>(r) * gx.cols];
        for (int c = 0; c < g.cols; ++c) {
          dst[c] += src[c];
        }
      }
    };
  }
  return v;
}

Value Tape::segment_max(Value x, std::vector<int> segments, int num_segments) {
  const int xi = check(x);
  const Tensor& tx = nodes_[xi].value;
  if (static_cast<int>(segments.size()) != tx.rows) {
    throw ValidationError("segment_max expects one segment id per row: got " +
                          std::to_string(segments.size()) + " ids for " + tx.shape_str());
  }
  for (int s : segments) {
    if (s < 0 || s >= num_segments) {
      throw ValidationError("segment_max id " + std::to_string(s) + " outside [0, " +
                            std::to_string(num_segments) + ")");
    }
  }
  // Empty segments stay at zero; argmax == -1 blocks their gradient.
  Tensor out(num_segments, tx.cols);
  std::vector<int> argmax(static_cast<std::size_t>(num_segments) * tx.cols, -1);
  for (int r = 0; r < tx.rows; ++r) {
    const int s = segments[r];
    const double* src = &tx.data[static_cast<std::size_t>(r) * tx.cols];
    for (int c = 0; c < tx.cols; ++c) {
      int& am = argmax[static_cast<std::size_t>(s) * tx.cols + c];
      double& dst = out.data[static_cast<std::size_t>(s) * tx.cols + c];
      if (am < 0 || src[c] > dst) {
        am = r;
        dst = src[c];
      }
    }
  }
  const bool needs = nodes_[xi].requires_grad;
  Value v = push(std::move(out), needs, nullptr, "segment_max");
  if (needs) {
    const int oi = v.id;
    nodes_[oi].backprop = [oi, xi, argmax = std::move(argmax)](Tape& t) {
      const Tensor& g = t.nodes_[oi].grad;
      Tensor& gx = t.grad_buf(xi);
      for (int s = 0; s < g.rows; ++s) {
        for (int c = 0; c < g.cols; ++c) {
          const int r = argmax[static_cast<std::size_t>(s) * g.cols + c];
          if (r >= 0) {
            gx.at(r, c) += g.at(s, c);
          }
        }
      }
    };
  }
  return v;
}

Value Tape::row_scale(Value x, std::vector<double> factors) {
  const int xi = check(x);
  const Tensor& tx = nodes_[xi].value;
  if (static_cast<int>(factors.size()) != tx.rows) {
    throw ValidationError("row_scale expects one factor per row: got " +
                          std::to_string(factors.size()) + " for " + tx.shape_str());
  }
  Tensor out = tx;
  for (int r = 0; r < out.rows; ++r) {
    for (int c = 0; c < out.cols; ++c) {
      out.at(r, c) *= factors[r];
    }
  }
  const bool needs = nodes_[xi].requires_grad;
  Value v = push(std::move(out), needs, nullptr, "row_scale");
  if (needs) {
    const int oi = v.id;
    nodes_[oi].backprop = [oi, xi, factors = std::move(factors)](Tape& t) {
      const Tensor& g = t.nodes_[oi].grad;
      Tensor& gx = t.grad_buf(xi);
      for (int r = 0; r < g.rows; ++r) {
        for (int c = 0; c < g.cols; ++c) {
          gx.at(r, c) += factors[r] * g.at(r, c);
        }
      }
    };
  }
  return v;
}

Value Tape::softmax_rows(Value x) {
  const int xi = check(x);
  const Tensor& tx = nodes_[xi].value;
  Tensor out(tx.rows, tx.cols);
  for (int r = 0; r < tx.rows; ++r) {
    double max_v = tx.at(r, 0);
    for (int c = 1; c < tx.cols; ++c) {
      max_v = std::max(max_v, tx.at(r, c));
    }
    double denom = 0.0;
    for (int c = 0; c < tx.cols; ++c) {
      const double e = std::exp(tx.at(r, c) - max_v);
      out.at(r, c) = e;
      denom += e;
    }
    for (int c = 0; c < tx.cols; ++c) {
      out.at(r, c) /= denom;
    }
  }
  const bool needs = nodes_[xi].requires_grad;
  Value v = push(std::move(out), needs, nullptr, "softmax_rows");
  if (needs) {
    const int oi = v.id;
    nodes_[oi].backprop = [oi, xi](Tape& t) {
      const Tensor& g = t.nodes_[oi].grad;
      const Tensor& y = t.nodes_[oi].value;
      Tensor& gx = t.grad_buf(xi);
      for (int r = 0; r < g.rows; ++r) {
        double dot = 0.0;
        for (int c = 0; c < g.cols; ++c) {
          dot += g.at(r, c) * y.at(r, c);
        }
        for (int c = 0; c < g.cols; ++c) {
          gx.at(r, c) += y.at(r, c) * (g.at(r, c) - dot);
        }
      }
    };
  }
  return v;
}

Value Tape::smooth_l1(Value x) {
  const int xi = check(x);
  Tensor out = nodes_[xi].value;
  for (double& v : out.data) {
    const double a = std::abs(v);
    v = a < 1.0 ? 0.5 * v * v : a - 0.5;
  }
  const bool needs = nodes_[xi].requires_grad;
  Value v = push(std::move(out), needs, nullptr, "smooth_l1");
  if (needs) {
    const int oi = v.id;
    nodes_[oi].backprop = [oi, xi](Tape& t) {
      const Tensor& g = t.nodes_[oi].grad;
      const Tensor& in = t.nodes_[xi].value;
      Tensor& gx = t.grad_buf(xi);
      for (int i = 0; i < g.size(); ++i) {
        const double v = in.data[i];
        const double d = v < -1.0 ? -1.0 : (v > 1.0 ? 1.0 : v);
        gx.data[i] += d * g.data[i];
      }
    };
  }
  return v;
}

Value Tape::sum(Value x) {
  const int xi = check(x);
  const Tensor& tx = nodes_[xi].value;
  Tensor out = Tensor::scalar(std::accumulate(tx.data.begin(), tx.data.end(), 0.0));
  const bool needs = nodes_[xi].requires_grad;
  Value v = push(std::move(out), needs, nullptr, "sum");
  if (needs) {
    const int oi = v.id;
    nodes_[oi].backprop = [oi, xi](Tape& t) {
      const double g = t.nodes_[oi].grad.data[0];
      Tensor& gx = t.grad_buf(xi);
      for (double& gv : gx.data) {
        gv += g;
      }
    };
  }
  return v;
}

Value Tape::detach(Value x) {
  const int xi = check(x);
  Tensor out = nodes_[xi].value;
  return push(std::move(out), false, nullptr, "detach");
}

void Tape::backward(Value loss) {
  const int root = check(loss);
  if (nodes_[root].value.rows != 1 || nodes_[root].value.cols != 1) {
    throw ValidationError("backward expects a scalar loss, got " + nodes_[root].value.shape_str());
  }
  grad_buf(root).data[0] = 1.0;
  for (int id = root; id >= 0; --id) {
    Node& node = nodes_[id];
    if (node.backprop && !node.grad.data.empty()) {
      node.backprop(*this);
    }
  }
}

}  // namespace heterogcn::ad
