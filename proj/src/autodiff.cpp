#include "casenbr/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "casenbr/errors.hpp"
#include "casenbr/kernels.hpp"

namespace casenbr::ad {

namespace {

template <typename Real>
std::string shape_msg(const char* op, const Var<Real>& a, const Var<Real>& b) {
  return std::string(op) + ": incompatible shapes " + a->value.shape_string() + " and " +
         b->value.shape_string();
}

template <typename Real>
bool wants(const Var<Real>& v) {
  return v->requires_grad;
}

template <typename Real>
void accumulate(const Var<Real>& target, const Tensor<Real>& delta) {
  auto& g = target->grad_buffer();
  Real* dst = g.data();
  const Real* src = delta.data();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
}

}  // namespace

template <typename Real>
Var<Real> Graph<Real>::record(const char* op, Tensor<Real> value,
                              const std::vector<Var<Real>>& parents,
                              std::function<void(Node<Real>&)> backward) {
  for (Real x : value.values()) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string(op) + " produced a non-finite value");
    }
  }
  auto node = std::make_shared<Node<Real>>();
  node->value = std::move(value);
  const bool needs =
      record_ && std::any_of(parents.begin(), parents.end(), [](const Var<Real>& p) {
        return p->requires_grad;
      });
  if (needs) {
    node->requires_grad = true;
    node->backward = std::move(backward);
    tape_.push_back(node);
  }
  return node;
}

template <typename Real>
void Graph<Real>::backward(const Var<Real>& loss) {
  if (loss->value.size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " + loss->value.shape_string());
  }
  if (!std::isfinite(static_cast<double>(loss->value[0]))) {
    throw NumericError("backward: non-finite loss");
  }
  loss->grad_buffer()[0] += Real{1};
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
    Node<Real>& n = **it;
    if (n.has_grad() && n.backward) n.backward(n);
  }
  tape_.clear();
}

template <typename Real>
Var<Real> matmul(Graph<Real>& g, const Var<Real>& a, const Var<Real>& b) {
  if (a->value.cols() != b->value.rows()) throw ShapeError(shape_msg("matmul", a, b));
  Tensor<Real> out;
  kernels::matmul(a->value, b->value, out, false);
  return g.record("matmul", std::move(out), {a, b}, [a, b](Node<Real>& self) mutable {
    if (wants(a)) kernels::matmul_nt(self.grad, b->value, a->grad_buffer(), true);
    if (wants(b)) kernels::matmul_tn(a->value, self.grad, b->grad_buffer(), true);
  });
}

template <typename Real>
Var<Real> transpose(Graph<Real>& g, const Var<Real>& x) {
  const auto& v = x->value;
  Tensor<Real> out(v.cols(), v.rows());
  for (std::size_t r = 0; r < v.rows(); ++r)
    for (std::size_t c = 0; c < v.cols(); ++c) out(c, r) = v(r, c);
  return g.record("transpose", std::move(out), {x}, [x](Node<Real>& self) mutable {
    auto& gx = x->grad_buffer();
    for (std::size_t r = 0; r < gx.rows(); ++r)
      for (std::size_t c = 0; c < gx.cols(); ++c) gx(r, c) += self.grad(c, r);
  });
}

template <typename Real>
Var<Real> add(Graph<Real>& g, const Var<Real>& a, const Var<Real>& b) {
  if (!a->value.same_shape(b->value)) throw ShapeError(shape_msg("add", a, b));
  Tensor<Real> out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
  return g.record("add", std::move(out), {a, b}, [a, b](Node<Real>& self) mutable {
    if (wants(a)) accumulate(a, self.grad);
    if (wants(b)) accumulate(b, self.grad);
  });
}

template <typename Real>
Var<Real> add_bias(Graph<Real>& g, const Var<Real>& x, const Var<Real>& bias) {
  const std::size_t d = x->value.cols();
  if (bias->value.size() != d) throw ShapeError(shape_msg("add_bias", x, bias));
  Tensor<Real> out = x->value;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    Real* row = out.data() + r * d;
    for (std::size_t c = 0; c < d; ++c) row[c] += bias->value[c];
  }
  return g.record("add_bias", std::move(out), {x, bias}, [x, bias, d](Node<Real>& self) mutable {
    if (wants(x)) accumulate(x, self.grad);
    if (wants(bias)) {
      auto& gb = bias->grad_buffer();
      for (std::size_t r = 0; r < self.grad.rows(); ++r) {
        const Real* row = self.grad.data() + r * d;
        for (std::size_t c = 0; c < d; ++c) gb[c] += row[c];
      }
    }
  });
}

template <typename Real>
Var<Real> mul(Graph<Real>& g, const Var<Real>& a, const Var<Real>& b) {
  if (!a->value.same_shape(b->value)) throw ShapeError(shape_msg("mul", a, b));
  Tensor<Real> out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
  return g.record("mul", std::move(out), {a, b}, [a, b](Node<Real>& self) mutable {
    if (wants(a)) {
      auto& ga = a->grad_buffer();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * b->value[i];
    }
    if (wants(b)) {
      auto& gb = b->grad_buffer();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += self.grad[i] * a->value[i];
    }
  });
}

template <typename Real>
Var<Real> scale(Graph<Real>& g, const Var<Real>& x, Real factor) {
  Tensor<Real> out = x->value;
  for (auto& v : out.values()) v *= factor;
  return g.record("scale", std::move(out), {x}, [x, factor](Node<Real>& self) mutable {
    auto& gx = x->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * self.grad[i];
  });
}

template <typename Real>
Var<Real> relu(Graph<Real>& g, const Var<Real>& x) {
  Tensor<Real> out = x->value;
  for (auto& v : out.values()) v = v > Real{0} ? v : Real{0};
  return g.record("relu", std::move(out), {x}, [x](Node<Real>& self) mutable {
    auto& gx = x->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (self.value[i] > Real{0}) gx[i] += self.grad[i];
  });
}

template <typename Real>
Var<Real> sum(Graph<Real>& g, const Var<Real>& x) {
  Real s{0};
  for (Real v : x->value.values()) s += v;
  return g.record("sum", Tensor<Real>(1, 1, s), {x}, [x](Node<Real>& self) mutable {
    auto& gx = x->grad_buffer();
    const Real d = self.grad[0];
    for (auto& v : gx.values()) v += d;
  });
}

template <typename Real>
Var<Real> concat_cols(Graph<Real>& g, const std::vector<Var<Real>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts.front()->value.rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p->value.rows() != rows) throw ShapeError(shape_msg("concat_cols", parts.front(), p));
    cols += p->value.cols();
  }
  Tensor<Real> out(rows, cols);
  std::size_t at = 0;
  for (const auto& p : parts) {
    const std::size_t w = p->value.cols();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(p->value.data() + r * w, w, out.data() + r * cols + at);
    at += w;
  }
  return g.record("concat_cols", std::move(out), parts,
                  [parts_copy = parts, cols](Node<Real>& self) mutable {
                    std::size_t at = 0;
                    for (auto& p : parts_copy) {
                      const std::size_t w = p->value.cols();
                      if (wants(p)) {
                        auto& gp = p->grad_buffer();
                        for (std::size_t r = 0; r < gp.rows(); ++r) {
                          const Real* src = self.grad.data() + r * cols + at;
                          Real* dst = gp.data() + r * w;
                          for (std::size_t c = 0; c < w; ++c) dst[c] += src[c];
                        }
                      }
                      at += w;
                    }
                  });
}

template <typename Real>
Var<Real> slice_cols(Graph<Real>& g, const Var<Real>& x, std::size_t begin, std::size_t width) {
  const std::size_t cols = x->value.cols();
  if (begin + width > cols) throw ShapeError("slice_cols: range exceeds " + x->value.shape_string());
  Tensor<Real> out(x->value.rows(), width);
  for (std::size_t r = 0; r < out.rows(); ++r)
    std::copy_n(x->value.data() + r * cols + begin, width, out.data() + r * width);
  return g.record("slice_cols", std::move(out), {x}, [x, begin, width, cols](Node<Real>& self) mutable {
    auto& gx = x->grad_buffer();
    for (std::size_t r = 0; r < gx.rows(); ++r)
      for (std::size_t c = 0; c < width; ++c) gx(r, begin + c) += self.grad(r, c);
  });
}

template <typename Real>
Var<Real> conv1d_strided(Graph<Real>& g, const Var<Real>& signal, const Var<Real>& kernel,
                         const Var<Real>& bias) {
  Tensor<Real> out;
  kernels::conv1d_strided(signal->value, kernel->value, bias->value, out);
  return g.record("conv1d_strided", std::move(out), {signal, kernel, bias},
                  [signal, kernel, bias](Node<Real>& self) mutable {
                    kernels::conv1d_strided_backward(
                        signal->value, kernel->value, self.grad,
                        wants(signal) ? &signal->grad_buffer() : nullptr,
                        wants(kernel) ? &kernel->grad_buffer() : nullptr,
                        wants(bias) ? &bias->grad_buffer() : nullptr);
                  });
}

template <typename Real>
Var<Real> softmax_rows(Graph<Real>& g, const Var<Real>& x) {
  Tensor<Real> out = x->value;
  const std::size_t n = out.cols();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    Real* row = out.data() + r * n;
    const Real mx = *std::max_element(row, row + n);
    Real s{0};
    for (std::size_t c = 0; c < n; ++c) {
      row[c] = std::exp(row[c] - mx);
      s += row[c];
    }
    for (std::size_t c = 0; c < n; ++c) row[c] /= s;
  }
  return g.record("softmax_rows", std::move(out), {x}, [x, n](Node<Real>& self) mutable {
    auto& gx = x->grad_buffer();
    for (std::size_t r = 0; r < gx.rows(); ++r) {
      const Real* y = self.value.data() + r * n;
      const Real* dy = self.grad.data() + r * n;
      Real dot{0};
      for (std::size_t c = 0; c < n; ++c) dot += y[c] * dy[c];
      for (std::size_t c = 0; c < n; ++c) gx(r, c) += y[c] * (dy[c] - dot);
    }
  });
}

template <typename Real>
Var<Real> layer_norm(Graph<Real>& g, const Var<Real>& x, const Var<Real>& gain,
                     const Var<Real>& shift, Real eps) {
  const std::size_t d = x->value.cols();
  if (gain->value.size() != d || shift->value.size() != d)
    throw ShapeError(shape_msg("layer_norm", x, gain));
  const std::size_t rows = x->value.rows();
  Tensor<Real> xhat(rows, d);
  std::vector<Real> inv_std(rows);
  Tensor<Real> out(rows, d);
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* xr = x->value.data() + r * d;
    Real mean{0};
    for (std::size_t c = 0; c < d; ++c) mean += xr[c];
    mean /= static_cast<Real>(d);
    Real var{0};
    for (std::size_t c = 0; c < d; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<Real>(d);
    inv_std[r] = Real{1} / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      xhat(r, c) = (xr[c] - mean) * inv_std[r];
      out(r, c) = xhat(r, c) * gain->value[c] + shift->value[c];
    }
  }
  return g.record(
      "layer_norm", std::move(out), {x, gain, shift},
      [x, gain, shift, xhat = std::move(xhat), inv_std = std::move(inv_std), d](
          Node<Real>& self) mutable {
        const std::size_t rows = xhat.rows();
        if (wants(gain) || wants(shift)) {
          auto* gg = wants(gain) ? &gain->grad_buffer() : nullptr;
          auto* gs = wants(shift) ? &shift->grad_buffer() : nullptr;
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < d; ++c) {
              if (gg) (*gg)[c] += self.grad(r, c) * xhat(r, c);
              if (gs) (*gs)[c] += self.grad(r, c);
            }
        }
        if (wants(x)) {
          auto& gx = x->grad_buffer();
          const Real inv_d = Real{1} / static_cast<Real>(d);
          for (std::size_t r = 0; r < rows; ++r) {
            Real mean_g{0}, mean_gx{0};
            for (std::size_t c = 0; c < d; ++c) {
              const Real dxh = self.grad(r, c) * gain->value[c];
              mean_g += dxh;
              mean_gx += dxh * xhat(r, c);
            }
            mean_g *= inv_d;
            mean_gx *= inv_d;
            for (std::size_t c = 0; c < d; ++c) {
              const Real dxh = self.grad(r, c) * gain->value[c];
              gx(r, c) += inv_std[r] * (dxh - mean_g - xhat(r, c) * mean_gx);
            }
          }
        }
      });
}

template <typename Real>
Var<Real> dropout(Graph<Real>& g, const Var<Real>& x, double p, Rng& rng, bool training) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ConfigError("dropout probability must lie in [0, 1), got " + std::to_string(p));
  }
  if (!training || p == 0.0) return x;
  const Real keep_scale = static_cast<Real>(1.0 / (1.0 - p));
  std::vector<Real> mask(x->value.size());
  Tensor<Real> out = x->value;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = rng.uniform() < p ? Real{0} : keep_scale;
    out[i] *= mask[i];
  }
  return g.record("dropout", std::move(out), {x}, [x, mask = std::move(mask)](Node<Real>& self) mutable {
    auto& gx = x->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * mask[i];
  });
}

template <typename Real>
Var<Real> gather_rows(Graph<Real>& g, const Var<Real>& table,
                      std::span<const std::size_t> indices) {
  const std::size_t d = table->value.cols();
  Tensor<Real> out(indices.size(), d);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= table->value.rows())
      throw ShapeError("gather_rows: index " + std::to_string(indices[r]) + " outside table " +
                       table->value.shape_string());
    std::copy_n(table->value.data() + indices[r] * d, d, out.data() + r * d);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return g.record("gather_rows", std::move(out), {table},
                  [table, idx = std::move(idx), d](Node<Real>& self) mutable {
                    auto& gt = table->grad_buffer();
                    for (std::size_t r = 0; r < idx.size(); ++r) {
                      Real* dst = gt.data() + idx[r] * d;
                      const Real* src = self.grad.data() + r * d;
                      for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
                    }
                  });
}

template <typename Real>
Var<Real> tile_rows(Graph<Real>& g, const Var<Real>& x, std::size_t times) {
  const auto& v = x->value;
  Tensor<Real> out(v.rows() * times, v.cols());
  for (std::size_t t = 0; t < times; ++t)
    std::copy_n(v.data(), v.size(), out.data() + t * v.size());
  return g.record("tile_rows", std::move(out), {x}, [x, times](Node<Real>& self) mutable {
    auto& gx = x->grad_buffer();
    const std::size_t n = gx.size();
    for (std::size_t t = 0; t < times; ++t) {
      const Real* src = self.grad.data() + t * n;
      for (std::size_t i = 0; i < n; ++i) gx[i] += src[i];
    }
  });
}

namespace {
void check_offsets(const Offsets& offsets, std::size_t rows, const char* op) {
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != rows)
    throw ShapeError(std::string(op) + ": segment offsets do not cover " + std::to_string(rows) +
                     " rows");
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s)
    if (offsets[s + 1] <= offsets[s])
      throw ShapeError(std::string(op) + ": empty segment " + std::to_string(s));
}
}  // namespace

template <typename Real>
Var<Real> segment_mean(Graph<Real>& g, const Var<Real>& x, const Offsets& offsets) {
  check_offsets(offsets, x->value.rows(), "segment_mean");
  const std::size_t d = x->value.cols();
  const std::size_t segs = offsets.size() - 1;
  Tensor<Real> out(segs, d);
  for (std::size_t s = 0; s < segs; ++s) {
    Real* o = out.data() + s * d;
    for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) {
      const Real* xr = x->value.data() + r * d;
      for (std::size_t c = 0; c < d; ++c) o[c] += xr[c];
    }
    const Real inv = Real{1} / static_cast<Real>(offsets[s + 1] - offsets[s]);
    for (std::size_t c = 0; c < d; ++c) o[c] *= inv;
  }
  return g.record("segment_mean", std::move(out), {x}, [x, offsets, d](Node<Real>& self) mutable {
    auto& gx = x->grad_buffer();
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
      const Real inv = Real{1} / static_cast<Real>(offsets[s + 1] - offsets[s]);
      const Real* gs = self.grad.data() + s * d;
      for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r)
        for (std::size_t c = 0; c < d; ++c) gx(r, c) += gs[c] * inv;
    }
  });
}

template <typename Real>
Var<Real> segment_broadcast(Graph<Real>& g, const Var<Real>& x, const Offsets& offsets) {
  if (x->value.rows() + 1 != offsets.size())
    throw ShapeError("segment_broadcast: " + x->value.shape_string() + " rows vs " +
                     std::to_string(offsets.size() - 1) + " segments");
  check_offsets(offsets, offsets.back(), "segment_broadcast");
  const std::size_t d = x->value.cols();
  Tensor<Real> out(offsets.back(), d);
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s)
    for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r)
      std::copy_n(x->value.data() + s * d, d, out.data() + r * d);
  return g.record("segment_broadcast", std::move(out), {x}, [x, offsets, d](Node<Real>& self) mutable {
    auto& gx = x->grad_buffer();
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s)
      for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r)
        for (std::size_t c = 0; c < d; ++c) gx(s, c) += self.grad(r, c);
  });
}

template <typename Real>
Var<Real> segment_attention(Graph<Real>& g, const Var<Real>& q, const Var<Real>& k,
                            const Var<Real>& v, const Offsets& q_offsets,
                            const Offsets& k_offsets, std::size_t heads) {
  Tensor<Real> out;
  std::vector<Real> probs;
  kernels::segment_attention(q->value, k->value, v->value, q_offsets, k_offsets, heads, out, probs);
  return g.record("segment_attention", std::move(out), {q, k, v},
                  [q, k, v, q_offsets, k_offsets, heads, probs = std::move(probs)](
                      Node<Real>& self) mutable {
                    kernels::segment_attention_backward(
                        q->value, k->value, v->value, q_offsets, k_offsets, heads, probs,
                        self.grad, wants(q) ? &q->grad_buffer() : nullptr,
                        wants(k) ? &k->grad_buffer() : nullptr,
                        wants(v) ? &v->grad_buffer() : nullptr);
                  });
}

template <typename Real>
Var<Real> bce_with_logits(Graph<Real>& g, const Var<Real>& scores, std::span<const Real> labels,
                          const Offsets& offsets) {
  const std::size_t n = scores->value.size();
  if (labels.size() != n || scores->value.cols() != 1)
    throw ShapeError("bce_with_logits: " + scores->value.shape_string() + " scores vs " +
                     std::to_string(labels.size()) + " labels");
  check_offsets(offsets, n, "bce_with_logits");
  const std::size_t segs = offsets.size() - 1;
  // Per-row weight 1 / (n_segment · segments) realizes the mean of means.
  std::vector<Real> weight(n);
  for (std::size_t s = 0; s < segs; ++s) {
    const Real w = Real{1} / static_cast<Real>((offsets[s + 1] - offsets[s]) * segs);
    for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) weight[r] = w;
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = scores->value[i];
    const double y = labels[i];
    loss += weight[i] * (std::log1p(std::exp(-std::abs(s))) + std::max(s, 0.0) - s * y);
  }
  std::vector<Real> y(labels.begin(), labels.end());
  return g.record("bce_with_logits", Tensor<Real>(1, 1, static_cast<Real>(loss)), {scores},
                  [scores, y = std::move(y), weight = std::move(weight)](Node<Real>& self) mutable {
                    auto& gs = scores->grad_buffer();
                    const Real up = self.grad[0];
                    for (std::size_t i = 0; i < gs.size(); ++i) {
                      const Real s = scores->value[i];
                      const Real sig = s >= Real{0} ? Real{1} / (Real{1} + std::exp(-s))
                                                    : std::exp(s) / (Real{1} + std::exp(s));
                      gs[i] += up * weight[i] * (sig - y[i]);
                    }
                  });
}

template <typename Real>
Var<Real> bce_with_logits(Graph<Real>& g, const Var<Real>& scores, std::span<const Real> labels) {
  return bce_with_logits(g, scores, labels, Offsets{0, scores->value.size()});
}

#define CASENBR_AD_INSTANTIATE(Real)                                                           \
  template class Graph<Real>;                                                                  \
  template Var<Real> matmul(Graph<Real>&, const Var<Real>&, const Var<Real>&);                 \
  template Var<Real> transpose(Graph<Real>&, const Var<Real>&);                                \
  template Var<Real> add(Graph<Real>&, const Var<Real>&, const Var<Real>&);                    \
  template Var<Real> add_bias(Graph<Real>&, const Var<Real>&, const Var<Real>&);               \
  template Var<Real> mul(Graph<Real>&, const Var<Real>&, const Var<Real>&);                    \
  template Var<Real> scale(Graph<Real>&, const Var<Real>&, Real);                              \
  template Var<Real> relu(Graph<Real>&, const Var<Real>&);                                     \
  template Var<Real> sum(Graph<Real>&, const Var<Real>&);                                      \
  template Var<Real> concat_cols(Graph<Real>&, const std::vector<Var<Real>>&);                 \
  template Var<Real> slice_cols(Graph<Real>&, const Var<Real>&, std::size_t, std::size_t);     \
  template Var<Real> conv1d_strided(Graph<Real>&, const Var<Real>&, const Var<Real>&,          \
                                    const Var<Real>&);                                         \
  template Var<Real> softmax_rows(Graph<Real>&, const Var<Real>&);                             \
  template Var<Real> layer_norm(Graph<Real>&, const Var<Real>&, const Var<Real>&,              \
                                const Var<Real>&, Real);                                       \
  template Var<Real> dropout(Graph<Real>&, const Var<Real>&, double, Rng&, bool);              \
  template Var<Real> gather_rows(Graph<Real>&, const Var<Real>&, std::span<const std::size_t>); \
  template Var<Real> tile_rows(Graph<Real>&, const Var<Real>&, std::size_t);                   \
  template Var<Real> segment_mean(Graph<Real>&, const Var<Real>&, const Offsets&);             \
  template Var<Real> segment_broadcast(Graph<Real>&, const Var<Real>&, const Offsets&);        \
  template Var<Real> segment_attention(Graph<Real>&, const Var<Real>&, const Var<Real>&,       \
                                       const Var<Real>&, const Offsets&, const Offsets&,       \
                                       std::size_t);                                           \
  template Var<Real> bce_with_logits(Graph<Real>&, const Var<Real>&, std::span<const Real>,    \
                                     const Offsets&);                                          \
  template Var<Real> bce_with_logits(Graph<Real>&, const Var<Real>&, std::span<const Real>);

CASENBR_AD_INSTANTIATE(float)
CASENBR_AD_INSTANTIATE(double)

}  // namespace casenbr::ad
