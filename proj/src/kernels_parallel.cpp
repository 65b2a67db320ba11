#include <omp.h>

#include <algorithm>
#include <cmath>

#include "kernels_internal.hpp"

namespace casenbr::kernels::parallel {

using detail::prepare_output;
using detail::shapes;

namespace {

constexpr std::size_t kRowBlock = 16;   // rows of C per OpenMP work item
constexpr std::size_t kDepthBlock = 128;  // inner-dimension chunk kept hot in cache
constexpr std::size_t kConvChunk = 64;  // rows per partial reduction in conv backward

// c[i0:i1, :] += a[i0:i1, :]·b with a: m×k, b: k×p. Each element accumulates
// over the inner index in ascending order.
template <typename Real>
void gemm_rows(const Real* __restrict a, const Real* __restrict b, Real* __restrict c,
               std::size_t k, std::size_t p, std::size_t i0, std::size_t i1) {
  for (std::size_t k0 = 0; k0 < k; k0 += kDepthBlock) {
    const std::size_t k1 = std::min(k, k0 + kDepthBlock);
    std::size_t i = i0;
    for (; i + 4 <= i1; i += 4) {
      Real* __restrict c0 = c + i * p;
      Real* __restrict c1 = c0 + p;
      Real* __restrict c2 = c1 + p;
      Real* __restrict c3 = c2 + p;
      const Real* a0 = a + i * k;
      for (std::size_t kk = k0; kk < k1; ++kk) {
        const Real x0 = a0[kk], x1 = a0[k + kk], x2 = a0[2 * k + kk], x3 = a0[3 * k + kk];
        const Real* __restrict br = b + kk * p;
        for (std::size_t j = 0; j < p; ++j) {
          const Real bj = br[j];
          c0[j] += x0 * bj;
          c1[j] += x1 * bj;
          c2[j] += x2 * bj;
          c3[j] += x3 * bj;
        }
      }
    }
    for (; i < i1; ++i) {
      Real* __restrict ci = c + i * p;
      const Real* ai = a + i * k;
      for (std::size_t kk = k0; kk < k1; ++kk) {
        const Real x = ai[kk];
        const Real* __restrict br = b + kk * p;
        for (std::size_t j = 0; j < p; ++j) ci[j] += x * br[j];
      }
    }
  }
}

template <typename Real>
void gemm(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t p) {
  const auto blocks = static_cast<std::ptrdiff_t>((m + kRowBlock - 1) / kRowBlock);
#pragma omp parallel for schedule(static) if (m * k * p > 32768)
  for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) {
    const std::size_t i0 = static_cast<std::size_t>(blk) * kRowBlock;
    gemm_rows(a, b, c, k, p, i0, std::min(m, i0 + kRowBlock));
  }
}

template <typename Real>
Tensor<Real> transposed(const Tensor<Real>& x) {
  Tensor<Real> t(x.cols(), x.rows());
  constexpr std::size_t kTile = 32;
  const auto tiles = static_cast<std::ptrdiff_t>((x.rows() + kTile - 1) / kTile);
#pragma omp parallel for schedule(static) if (x.size() > 65536)
  for (std::ptrdiff_t tr = 0; tr < tiles; ++tr) {
    const std::size_t r0 = static_cast<std::size_t>(tr) * kTile;
    const std::size_t r1 = std::min(x.rows(), r0 + kTile);
    for (std::size_t c0 = 0; c0 < x.cols(); c0 += kTile) {
      const std::size_t c1 = std::min(x.cols(), c0 + kTile);
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) t(c, r) = x(r, c);
    }
  }
  return t;
}

}  // namespace

template <typename Real>
void matmul(const Tensor<Real>& a, const Tensor<Real>& b, Tensor<Real>& c, bool accumulate) {
  if (a.cols() != b.rows()) throw ShapeError(shapes("matmul", a.shape_string(), b.shape_string()));
  prepare_output(c, a.rows(), b.cols(), accumulate, "matmul");
  gemm(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
  add_flops(a.rows() * a.cols() * b.cols());
}

template <typename Real>
void matmul_tn(const Tensor<Real>& a, const Tensor<Real>& b, Tensor<Real>& c, bool accumulate) {
  if (a.rows() != b.rows())
    throw ShapeError(shapes("matmul_tn", a.shape_string(), b.shape_string()));
  prepare_output(c, a.cols(), b.cols(), accumulate, "matmul_tn");
  const Tensor<Real> at = transposed(a);
  gemm(at.data(), b.data(), c.data(), at.rows(), at.cols(), b.cols());
  add_flops(a.rows() * a.cols() * b.cols());
}

template <typename Real>
void matmul_nt(const Tensor<Real>& a, const Tensor<Real>& b, Tensor<Real>& c, bool accumulate) {
  if (a.cols() != b.cols())
    throw ShapeError(shapes("matmul_nt", a.shape_string(), b.shape_string()));
  prepare_output(c, a.rows(), b.rows(), accumulate, "matmul_nt");
  const Tensor<Real> bt = transposed(b);
  gemm(a.data(), bt.data(), c.data(), a.rows(), a.cols(), bt.cols());
  add_flops(a.rows() * a.cols() * b.rows());
}

template <typename Real>
void conv1d_strided(const Tensor<Real>& signal, const Tensor<Real>& kernel,
                    const Tensor<Real>& bias, Tensor<Real>& out) {
  const auto d = detail::conv_dims(signal, kernel, bias);
  out = Tensor<Real>(d.n, d.f * d.j);
#pragma omp parallel for schedule(static) if (d.n * d.t > 65536)
  for (std::ptrdiff_t ni = 0; ni < static_cast<std::ptrdiff_t>(d.n); ++ni) {
    const auto n = static_cast<std::size_t>(ni);
    const Real* x = signal.data() + n * d.t;
    Real* o = out.data() + n * d.f * d.j;
    for (std::size_t f = 0; f < d.f; ++f) {
      const Real* kf = kernel.data() + f * d.w;
      for (std::size_t j = 0; j < d.j; ++j) {
        Real s = bias[f];
        const Real* xw = x + j * d.w;
        for (std::size_t u = 0; u < d.w; ++u) s += kf[u] * xw[u];
        o[f * d.j + j] = s;
      }
    }
  }
  add_flops(d.n * d.f * d.j * d.w);
}

template <typename Real>
void conv1d_strided_backward(const Tensor<Real>& signal, const Tensor<Real>& kernel,
                             const Tensor<Real>& d_out, Tensor<Real>* d_signal,
                             Tensor<Real>* d_kernel, Tensor<Real>* d_bias) {
  const std::size_t n_rows = signal.rows(), t = signal.cols();
  const std::size_t w = kernel.cols(), nf = kernel.rows(), nj = t / w;
  if (d_signal) {
#pragma omp parallel for schedule(static) if (n_rows * t > 65536)
    for (std::ptrdiff_t ni = 0; ni < static_cast<std::ptrdiff_t>(n_rows); ++ni) {
      const auto n = static_cast<std::size_t>(ni);
      Real* dx = d_signal->data() + n * t;
      const Real* g = d_out.data() + n * nf * nj;
      for (std::size_t f = 0; f < nf; ++f)
        for (std::size_t j = 0; j < nj; ++j) {
          const Real gf = g[f * nj + j];
          for (std::size_t u = 0; u < w; ++u) dx[j * w + u] += gf * kernel(f, u);
        }
    }
  }
  if (d_kernel || d_bias) {
    // Fixed-size row chunks reduced in chunk order keep the sum order
    // independent of the thread count.
    const std::size_t chunks = (n_rows + kConvChunk - 1) / kConvChunk;
    const std::size_t width = nf * w + nf;
    std::vector<Real> partial(chunks * width, Real{0});
#pragma omp parallel for schedule(static) if (n_rows * t > 65536)
    for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(chunks); ++ci) {
      const auto c = static_cast<std::size_t>(ci);
      Real* pk = partial.data() + c * width;
      Real* pb = pk + nf * w;
      for (std::size_t n = c * kConvChunk; n < std::min(n_rows, (c + 1) * kConvChunk); ++n) {
        const Real* x = signal.data() + n * t;
        const Real* g = d_out.data() + n * nf * nj;
        for (std::size_t f = 0; f < nf; ++f)
          for (std::size_t j = 0; j < nj; ++j) {
            const Real gf = g[f * nj + j];
            pb[f] += gf;
            for (std::size_t u = 0; u < w; ++u) pk[f * w + u] += gf * x[j * w + u];
          }
      }
    }
    for (std::size_t c = 0; c < chunks; ++c) {
      const Real* pk = partial.data() + c * width;
      if (d_kernel)
        for (std::size_t i = 0; i < nf * w; ++i) (*d_kernel)[i] += pk[i];
      if (d_bias)
        for (std::size_t f = 0; f < nf; ++f) (*d_bias)[f] += pk[nf * w + f];
    }
  }
  add_flops(2 * n_rows * nf * nj * w);
}

namespace {

struct AttentionItem {
  std::size_t q0, nq, k0, nk, head, p_at;
};

std::vector<AttentionItem> attention_items(std::span<const std::size_t> q_offsets,
                                           std::span<const std::size_t> k_offsets,
                                           std::size_t heads) {
  std::vector<AttentionItem> items;
  items.reserve((q_offsets.size() - 1) * heads);
  std::size_t p_at = 0;
  for (std::size_t s = 0; s + 1 < q_offsets.size(); ++s) {
    const std::size_t nq = q_offsets[s + 1] - q_offsets[s];
    const std::size_t nk = k_offsets[s + 1] - k_offsets[s];
    for (std::size_t h = 0; h < heads; ++h) {
      items.push_back({q_offsets[s], nq, k_offsets[s], nk, h, p_at});
      p_at += nq * nk;
    }
  }
  return items;
}

// Copies the head-h column block of rows [r0, r0+n) into a dh×n buffer.
template <typename Real>
void gather_transposed(const Tensor<Real>& x, std::size_t r0, std::size_t n, std::size_t c0,
                       std::size_t dh, std::vector<Real>& buf) {
  buf.resize(dh * n);
  for (std::size_t r = 0; r < n; ++r) {
    const Real* src = x.data() + (r0 + r) * x.cols() + c0;
    for (std::size_t c = 0; c < dh; ++c) buf[c * n + r] = src[c];
  }
}

}  // namespace

template <typename Real>
void segment_attention(const Tensor<Real>& q, const Tensor<Real>& k, const Tensor<Real>& v,
                       std::span<const std::size_t> q_offsets,
                       std::span<const std::size_t> k_offsets, std::size_t heads,
                       Tensor<Real>& out, std::vector<Real>& probs) {
  detail::check_segments(q_offsets, k_offsets, q.rows(), k.rows());
  const std::size_t d = q.cols();
  if (k.cols() != d || v.cols() != d || v.rows() != k.rows() || heads == 0 || d % heads != 0)
    throw ShapeError(shapes("segment_attention", q.shape_string(), k.shape_string()));
  const std::size_t dh = d / heads;
  const Real scale = Real{1} / std::sqrt(static_cast<Real>(dh));
  out = Tensor<Real>(q.rows(), d);
  probs.assign(attention_probs_size(q_offsets, k_offsets, heads), Real{0});
  const auto items = attention_items(q_offsets, k_offsets, heads);
  std::uint64_t flops = 0;
  for (const auto& it : items) flops += 2 * it.nq * it.nk * dh;

#pragma omp parallel if (items.size() > 1 && flops > 65536)
  {
    std::vector<Real> kt;
#pragma omp for schedule(dynamic)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(items.size()); ++ii) {
      const auto& it = items[static_cast<std::size_t>(ii)];
      const std::size_t c0 = it.head * dh;
      gather_transposed(k, it.k0, it.nk, c0, dh, kt);
      Real* p = probs.data() + it.p_at;
      for (std::size_t i = 0; i < it.nq; ++i) {
        Real* __restrict row = p + i * it.nk;
        const Real* qi = q.data() + (it.q0 + i) * d + c0;
        for (std::size_t c = 0; c < dh; ++c) {
          const Real x = qi[c] * scale;
          const Real* __restrict kc = kt.data() + c * it.nk;
          for (std::size_t j = 0; j < it.nk; ++j) row[j] += x * kc[j];
        }
        Real mx = row[0];
        for (std::size_t j = 1; j < it.nk; ++j) mx = std::max(mx, row[j]);
        Real sum{0};
        for (std::size_t j = 0; j < it.nk; ++j) {
          row[j] = std::exp(row[j] - mx);
          sum += row[j];
        }
        const Real inv = Real{1} / sum;
        for (std::size_t j = 0; j < it.nk; ++j) row[j] *= inv;
        Real* __restrict oi = out.data() + (it.q0 + i) * d + c0;
        for (std::size_t j = 0; j < it.nk; ++j) {
          const Real pj = row[j];
          const Real* __restrict vj = v.data() + (it.k0 + j) * d + c0;
          for (std::size_t c = 0; c < dh; ++c) oi[c] += pj * vj[c];
        }
      }
    }
  }
  add_flops(flops);
}

template <typename Real>
void segment_attention_backward(const Tensor<Real>& q, const Tensor<Real>& k,
                                const Tensor<Real>& v, std::span<const std::size_t> q_offsets,
                                std::span<const std::size_t> k_offsets, std::size_t heads,
                                const std::vector<Real>& probs, const Tensor<Real>& d_out,
                                Tensor<Real>* d_q, Tensor<Real>* d_k, Tensor<Real>* d_v) {
  const std::size_t d = q.cols();
  const std::size_t dh = d / heads;
  const Real scale = Real{1} / std::sqrt(static_cast<Real>(dh));
  const auto items = attention_items(q_offsets, k_offsets, heads);
  std::uint64_t flops = 0;
  for (const auto& it : items) flops += 4 * it.nq * it.nk * dh;

#pragma omp parallel if (items.size() > 1 && flops > 65536)
  {
    std::vector<Real> vt, dp;
#pragma omp for schedule(dynamic)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(items.size()); ++ii) {
      const auto& it = items[static_cast<std::size_t>(ii)];
      const std::size_t c0 = it.head * dh;
      gather_transposed(v, it.k0, it.nk, c0, dh, vt);
      dp.resize(it.nk);
      const Real* p = probs.data() + it.p_at;
      for (std::size_t i = 0; i < it.nq; ++i) {
        const Real* row = p + i * it.nk;
        const Real* __restrict gi = d_out.data() + (it.q0 + i) * d + c0;
        std::fill(dp.begin(), dp.end(), Real{0});
        for (std::size_t c = 0; c < dh; ++c) {
          const Real g = gi[c];
          const Real* __restrict vc = vt.data() + c * it.nk;
          for (std::size_t j = 0; j < it.nk; ++j) dp[j] += g * vc[j];
        }
        Real dot{0};
        for (std::size_t j = 0; j < it.nk; ++j) dot += dp[j] * row[j];
        Real* dqi = d_q ? d_q->data() + (it.q0 + i) * d + c0 : nullptr;
        const Real* qi = q.data() + (it.q0 + i) * d + c0;
        for (std::size_t j = 0; j < it.nk; ++j) {
          const std::size_t kr = (it.k0 + j) * d + c0;
          if (d_v) {
            Real* __restrict dvj = d_v->data() + kr;
            const Real pj = row[j];
            for (std::size_t c = 0; c < dh; ++c) dvj[c] += pj * gi[c];
          }
          const Real ds = row[j] * (dp[j] - dot) * scale;
          if (dqi) {
            const Real* __restrict kj = k.data() + kr;
            for (std::size_t c = 0; c < dh; ++c) dqi[c] += ds * kj[c];
          }
          if (d_k) {
            Real* __restrict dkj = d_k->data() + kr;
            for (std::size_t c = 0; c < dh; ++c) dkj[c] += ds * qi[c];
          }
        }
      }
    }
  }
  add_flops(flops);
}

CASENBR_INSTANTIATE(float)
CASENBR_INSTANTIATE(double)

}  // namespace casenbr::kernels::parallel
