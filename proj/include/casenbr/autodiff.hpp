#pragma once

// Eager reverse-mode automatic differentiation over 2-D tensors.
//
// Every op evaluates immediately and, when the graph is recording and some
// input requires gradients, appends its output node to the graph's tape
// together with a backward rule. Graph::backward walks the tape once in
// reverse creation order, which is a reverse topological order.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "casenbr/rng.hpp"
#include "casenbr/tensor.hpp"

namespace casenbr::ad {

template <typename Real>
struct Node {
  Tensor<Real> value;
  Tensor<Real> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::function<void(Node&)> backward;

  Tensor<Real>& grad_buffer() {
    if (grad.empty() && !value.empty()) grad = Tensor<Real>(value.rows(), value.cols());
    return grad;
  }
  [[nodiscard]] bool has_grad() const noexcept { return !grad.empty(); }
};

template <typename Real>
using Var = std::shared_ptr<Node<Real>>;

/// Leaf that accumulates gradients across graphs (a learnable weight).
template <typename Real>
Var<Real> parameter(Tensor<Real> value) {
  auto n = std::make_shared<Node<Real>>();
  n->value = std::move(value);
  n->requires_grad = true;
  return n;
}

/// Leaf without gradient (data).
template <typename Real>
Var<Real> constant(Tensor<Real> value) {
  auto n = std::make_shared<Node<Real>>();
  n->value = std::move(value);
  return n;
}

template <typename Real>
class Graph {
 public:
  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  [[nodiscard]] bool recording() const noexcept { return record_; }
  [[nodiscard]] std::size_t size() const noexcept { return tape_.size(); }

  /// Wraps an op result. Throws NumericError if any value is not finite.
  Var<Real> record(const char* op, Tensor<Real> value, const std::vector<Var<Real>>& parents,
                   std::function<void(Node<Real>&)> backward);

  /// Seeds d(loss)/d(loss) = 1 and back-propagates; the tape is consumed.
  void backward(const Var<Real>& loss);

 private:
  bool record_;
  std::vector<Var<Real>> tape_;
};

/// Row offsets delimiting consecutive variable-size segments (one per
/// example); offsets.front() == 0 and offsets.back() == total rows.
using Offsets = std::vector<std::size_t>;

template <typename Real>
Var<Real> matmul(Graph<Real>& g, const Var<Real>& a, const Var<Real>& b);
template <typename Real>
Var<Real> transpose(Graph<Real>& g, const Var<Real>& x);
template <typename Real>
Var<Real> add(Graph<Real>& g, const Var<Real>& a, const Var<Real>& b);
/// x[N×d] + bias[1×d] broadcast over rows.
template <typename Real>
Var<Real> add_bias(Graph<Real>& g, const Var<Real>& x, const Var<Real>& bias);
template <typename Real>
Var<Real> mul(Graph<Real>& g, const Var<Real>& a, const Var<Real>& b);
template <typename Real>
Var<Real> scale(Graph<Real>& g, const Var<Real>& x, Real factor);
template <typename Real>
Var<Real> relu(Graph<Real>& g, const Var<Real>& x);
template <typename Real>
Var<Real> sum(Graph<Real>& g, const Var<Real>& x);
template <typename Real>
Var<Real> concat_cols(Graph<Real>& g, const std::vector<Var<Real>>& parts);
template <typename Real>
Var<Real> slice_cols(Graph<Real>& g, const Var<Real>& x, std::size_t begin, std::size_t width);

/// Row-wise strided convolution; see kernels::conv1d_strided for layout.
template <typename Real>
Var<Real> conv1d_strided(Graph<Real>& g, const Var<Real>& signal, const Var<Real>& kernel,
                         const Var<Real>& bias);

template <typename Real>
Var<Real> softmax_rows(Graph<Real>& g, const Var<Real>& x);

/// Per-row normalization with population variance, then gain/shift [1×d].
template <typename Real>
Var<Real> layer_norm(Graph<Real>& g, const Var<Real>& x, const Var<Real>& gain,
                     const Var<Real>& shift, Real eps = Real(1e-5));

/// Inverted dropout. Identity when !training or p == 0. Throws ConfigError for p ∉ [0,1).
template <typename Real>
Var<Real> dropout(Graph<Real>& g, const Var<Real>& x, double p, Rng& rng, bool training);

/// Embedding lookup: row r of the result is table row indices[r].
template <typename Real>
Var<Real> gather_rows(Graph<Real>& g, const Var<Real>& table,
                      std::span<const std::size_t> indices);

/// Stacks `times` copies of x vertically.
template <typename Real>
Var<Real> tile_rows(Graph<Real>& g, const Var<Real>& x, std::size_t times);

/// [B×d] mean of every segment's rows.
template <typename Real>
Var<Real> segment_mean(Graph<Real>& g, const Var<Real>& x, const Offsets& offsets);

/// Repeats row s of x[B×d] for every row of segment s.
template <typename Real>
Var<Real> segment_broadcast(Graph<Real>& g, const Var<Real>& x, const Offsets& offsets);

/// Multi-head attention restricted to matching query/key segments.
template <typename Real>
Var<Real> segment_attention(Graph<Real>& g, const Var<Real>& q, const Var<Real>& k,
                            const Var<Real>& v, const Offsets& q_offsets,
                            const Offsets& k_offsets, std::size_t heads);

/// Stable binary cross-entropy on logits [N×1]: mean within each segment,
/// then mean over segments. Returns a 1×1 scalar.
template <typename Real>
Var<Real> bce_with_logits(Graph<Real>& g, const Var<Real>& scores, std::span<const Real> labels,
                          const Offsets& offsets);

/// Single-segment convenience: plain mean over all n scores.
template <typename Real>
Var<Real> bce_with_logits(Graph<Real>& g, const Var<Real>& scores, std::span<const Real> labels);

}  // namespace casenbr::ad
