#pragma once

// Heavy numeric kernels behind the autodiff ops. Every kernel exists twice:
// `reference` is a plain serial loop nest kept as the test oracle, and
// `parallel` is the cache-blocked OpenMP version used for training. The
// un-namespaced entry points dispatch on the active backend.
//
// Parallel kernels partition work so that every output element is
// accumulated in a fixed order independent of the thread count; results are
// bit-reproducible for a given build.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "casenbr/tensor.hpp"

namespace casenbr::kernels {

enum class Backend { reference, parallel };

void set_backend(Backend b) noexcept;
Backend backend() noexcept;

/// Caps OpenMP worker count; values < 1 mean "runtime default".
void set_threads(int n) noexcept;
int threads() noexcept;

/// Running count of multiply-adds issued by every kernel (both backends).
std::uint64_t flop_count() noexcept;
void reset_flop_count() noexcept;
void add_flops(std::uint64_t n) noexcept;

/// Total size of the per-(segment, head) probability blocks.
std::size_t attention_probs_size(std::span<const std::size_t> q_offsets,
                                 std::span<const std::size_t> k_offsets, std::size_t heads);

#define CASENBR_KERNEL_DECLS                                                                    \
  /* c (+)= a·b */                                                                              \
  template <typename Real>                                                                      \
  void matmul(const Tensor<Real>& a, const Tensor<Real>& b, Tensor<Real>& c, bool accumulate);  \
  /* c (+)= aᵀ·b */                                                                             \
  template <typename Real>                                                                      \
  void matmul_tn(const Tensor<Real>& a, const Tensor<Real>& b, Tensor<Real>& c,                 \
                 bool accumulate);                                                              \
  /* c (+)= a·bᵀ */                                                                             \
  template <typename Real>                                                                      \
  void matmul_nt(const Tensor<Real>& a, const Tensor<Real>& b, Tensor<Real>& c,                 \
                 bool accumulate);                                                              \
  /* out(n, f·J + j) = bias(f) + Σ_u kernel(f,u)·signal(n, j·w + u), w = kernel.cols() */       \
  template <typename Real>                                                                      \
  void conv1d_strided(const Tensor<Real>& signal, const Tensor<Real>& kernel,                   \
                      const Tensor<Real>& bias, Tensor<Real>& out);                             \
  /* Accumulates into every non-null gradient. */                                               \
  template <typename Real>                                                                      \
  void conv1d_strided_backward(const Tensor<Real>& signal, const Tensor<Real>& kernel,          \
                               const Tensor<Real>& d_out, Tensor<Real>* d_signal,               \
                               Tensor<Real>* d_kernel, Tensor<Real>* d_bias);                   \
  /* Multi-head scaled dot-product attention where the queries of segment s  */                 \
  /* attend only to the keys of segment s. `probs` receives the softmax rows. */                \
  template <typename Real>                                                                      \
  void segment_attention(const Tensor<Real>& q, const Tensor<Real>& k, const Tensor<Real>& v,   \
                         std::span<const std::size_t> q_offsets,                                \
                         std::span<const std::size_t> k_offsets, std::size_t heads,             \
                         Tensor<Real>& out, std::vector<Real>& probs);                          \
  template <typename Real>                                                                      \
  void segment_attention_backward(                                                              \
      const Tensor<Real>& q, const Tensor<Real>& k, const Tensor<Real>& v,                      \
      std::span<const std::size_t> q_offsets, std::span<const std::size_t> k_offsets,           \
      std::size_t heads, const std::vector<Real>& probs, const Tensor<Real>& d_out,             \
      Tensor<Real>* d_q, Tensor<Real>* d_k, Tensor<Real>* d_v);

namespace reference {
CASENBR_KERNEL_DECLS
}  // namespace reference

namespace parallel {
CASENBR_KERNEL_DECLS
}  // namespace parallel

CASENBR_KERNEL_DECLS

#undef CASENBR_KERNEL_DECLS

}  // namespace casenbr::kernels
