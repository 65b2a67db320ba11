#include <algorithm>
#include <cmath>

#include "kernels_internal.hpp"

namespace casenbr::kernels::reference {

using detail::prepare_output;
using detail::shapes;

template <typename Real>
void matmul(const Tensor<Real>& a, const Tensor<Real>& b, Tensor<Real>& c, bool accumulate) {
  if (a.cols() != b.rows()) throw ShapeError(shapes("matmul", a.shape_string(), b.shape_string()));
  prepare_output(c, a.rows(), b.cols(), accumulate, "matmul");
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      Real s{0};
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) += s;
    }
  add_flops(a.rows() * a.cols() * b.cols());
}

template <typename Real>
void matmul_tn(const Tensor<Real>& a, const Tensor<Real>& b, Tensor<Real>& c, bool accumulate) {
  if (a.rows() != b.rows())
    throw ShapeError(shapes("matmul_tn", a.shape_string(), b.shape_string()));
  prepare_output(c, a.cols(), b.cols(), accumulate, "matmul_tn");
  for (std::size_t i = 0; i < a.cols(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      Real s{0};
      for (std::size_t k = 0; k < a.rows(); ++k) s += a(k, i) * b(k, j);
      c(i, j) += s;
    }
  add_flops(a.rows() * a.cols() * b.cols());
}

template <typename Real>
void matmul_nt(const Tensor<Real>& a, const Tensor<Real>& b, Tensor<Real>& c, bool accumulate) {
  if (a.cols() != b.cols())
    throw ShapeError(shapes("matmul_nt", a.shape_string(), b.shape_string()));
  prepare_output(c, a.rows(), b.rows(), accumulate, "matmul_nt");
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) {
      Real s{0};
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(j, k);
      c(i, j) += s;
    }
  add_flops(a.rows() * a.cols() * b.rows());
}

template <typename Real>
void conv1d_strided(const Tensor<Real>& signal, const Tensor<Real>& kernel,
                    const Tensor<Real>& bias, Tensor<Real>& out) {
  const auto d = detail::conv_dims(signal, kernel, bias);
  out = Tensor<Real>(d.n, d.f * d.j);
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t f = 0; f < d.f; ++f)
      for (std::size_t j = 0; j < d.j; ++j) {
        Real s = bias[f];
        for (std::size_t u = 0; u < d.w; ++u) s += kernel(f, u) * signal(n, j * d.w + u);
        out(n, f * d.j + j) = s;
      }
  add_flops(d.n * d.f * d.j * d.w);
}

template <typename Real>
void conv1d_strided_backward(const Tensor<Real>& signal, const Tensor<Real>& kernel,
                             const Tensor<Real>& d_out, Tensor<Real>* d_signal,
                             Tensor<Real>* d_kernel, Tensor<Real>* d_bias) {
  const std::size_t w = kernel.cols();
  const std::size_t nf = kernel.rows();
  const std::size_t nj = signal.cols() / w;
  for (std::size_t n = 0; n < signal.rows(); ++n)
    for (std::size_t f = 0; f < nf; ++f)
      for (std::size_t j = 0; j < nj; ++j) {
        const Real g = d_out(n, f * nj + j);
        if (d_bias) (*d_bias)[f] += g;
        for (std::size_t u = 0; u < w; ++u) {
          if (d_kernel) (*d_kernel)(f, u) += g * signal(n, j * w + u);
          if (d_signal) (*d_signal)(n, j * w + u) += g * kernel(f, u);
        }
      }
  add_flops(2 * signal.rows() * nf * nj * w);
}

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
  std::size_t p_at = 0;
  std::uint64_t flops = 0;
  for (std::size_t s = 0; s + 1 < q_offsets.size(); ++s) {
    const std::size_t q0 = q_offsets[s], nq = q_offsets[s + 1] - q0;
    const std::size_t k0 = k_offsets[s], nk = k_offsets[s + 1] - k0;
    for (std::size_t h = 0; h < heads; ++h) {
      Real* p = probs.data() + p_at;
      for (std::size_t i = 0; i < nq; ++i) {
        Real* row = p + i * nk;
        for (std::size_t j = 0; j < nk; ++j) {
          Real s_ij{0};
          for (std::size_t c = 0; c < dh; ++c) s_ij += q(q0 + i, h * dh + c) * k(k0 + j, h * dh + c);
          row[j] = s_ij * scale;
        }
        Real mx = row[0];
        for (std::size_t j = 1; j < nk; ++j) mx = std::max(mx, row[j]);
        Real sum{0};
        for (std::size_t j = 0; j < nk; ++j) {
          row[j] = std::exp(row[j] - mx);
          sum += row[j];
        }
        for (std::size_t j = 0; j < nk; ++j) row[j] /= sum;
        for (std::size_t c = 0; c < dh; ++c) {
          Real o{0};
          for (std::size_t j = 0; j < nk; ++j) o += row[j] * v(k0 + j, h * dh + c);
          out(q0 + i, h * dh + c) = o;
        }
      }
      p_at += nq * nk;
      flops += 2 * nq * nk * dh;
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
  std::size_t p_at = 0;
  std::uint64_t flops = 0;
  std::vector<Real> dp;
  for (std::size_t s = 0; s + 1 < q_offsets.size(); ++s) {
    const std::size_t q0 = q_offsets[s], nq = q_offsets[s + 1] - q0;
    const std::size_t k0 = k_offsets[s], nk = k_offsets[s + 1] - k0;
    for (std::size_t h = 0; h < heads; ++h) {
      const Real* p = probs.data() + p_at;
      dp.assign(nk, Real{0});
      for (std::size_t i = 0; i < nq; ++i) {
        const Real* row = p + i * nk;
        Real dot{0};
        for (std::size_t j = 0; j < nk; ++j) {
          Real g{0};
          for (std::size_t c = 0; c < dh; ++c) g += d_out(q0 + i, h * dh + c) * v(k0 + j, h * dh + c);
          dp[j] = g;
          dot += g * row[j];
        }
        for (std::size_t j = 0; j < nk; ++j) {
          if (d_v)
            for (std::size_t c = 0; c < dh; ++c)
              (*d_v)(k0 + j, h * dh + c) += row[j] * d_out(q0 + i, h * dh + c);
          const Real ds = row[j] * (dp[j] - dot) * scale;
          for (std::size_t c = 0; c < dh; ++c) {
            if (d_q) (*d_q)(q0 + i, h * dh + c) += ds * k(k0 + j, h * dh + c);
            if (d_k) (*d_k)(k0 + j, h * dh + c) += ds * q(q0 + i, h * dh + c);
          }
        }
      }
      p_at += nq * nk;
      flops += 4 * nq * nk * dh;
    }
  }
  add_flops(flops);
}

CASENBR_INSTANTIATE(float)
CASENBR_INSTANTIATE(double)

}  // namespace casenbr::kernels::reference
