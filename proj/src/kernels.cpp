#include <omp.h>

#include <atomic>

#include "kernels_internal.hpp"

namespace casenbr::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::parallel};
std::atomic<std::uint64_t> g_flops{0};
std::atomic<int> g_threads{0};
}  // namespace

void set_backend(Backend b) noexcept { g_backend.store(b); }
Backend backend() noexcept { return g_backend.load(); }

void set_threads(int n) noexcept {
  g_threads.store(n);
  if (n > 0) omp_set_num_threads(n);
}
int threads() noexcept {
  const int n = g_threads.load();
  return n > 0 ? n : omp_get_max_threads();
}

std::uint64_t flop_count() noexcept { return g_flops.load(std::memory_order_relaxed); }
void reset_flop_count() noexcept { g_flops.store(0); }
void add_flops(std::uint64_t n) noexcept { g_flops.fetch_add(n, std::memory_order_relaxed); }

std::size_t attention_probs_size(std::span<const std::size_t> q_offsets,
                                 std::span<const std::size_t> k_offsets, std::size_t heads) {
  std::size_t total = 0;
  for (std::size_t s = 0; s + 1 < q_offsets.size(); ++s)
    total += (q_offsets[s + 1] - q_offsets[s]) * (k_offsets[s + 1] - k_offsets[s]);
  return total * heads;
}

#define CASENBR_DISPATCH(name, ...)                                    \
  if (backend() == Backend::reference) return reference::name(__VA_ARGS__); \
  return parallel::name(__VA_ARGS__)

template <typename Real>
void matmul(const Tensor<Real>& a, const Tensor<Real>& b, Tensor<Real>& c, bool accumulate) {
  CASENBR_DISPATCH(matmul, a, b, c, accumulate);
}

template <typename Real>
void matmul_tn(const Tensor<Real>& a, const Tensor<Real>& b, Tensor<Real>& c, bool accumulate) {
  CASENBR_DISPATCH(matmul_tn, a, b, c, accumulate);
}

template <typename Real>
void matmul_nt(const Tensor<Real>& a, const Tensor<Real>& b, Tensor<Real>& c, bool accumulate) {
  CASENBR_DISPATCH(matmul_nt, a, b, c, accumulate);
}

template <typename Real>
void conv1d_strided(const Tensor<Real>& signal, const Tensor<Real>& kernel,
                    const Tensor<Real>& bias, Tensor<Real>& out) {
  CASENBR_DISPATCH(conv1d_strided, signal, kernel, bias, out);
}

template <typename Real>
void conv1d_strided_backward(const Tensor<Real>& signal, const Tensor<Real>& kernel,
                             const Tensor<Real>& d_out, Tensor<Real>* d_signal,
                             Tensor<Real>* d_kernel, Tensor<Real>* d_bias) {
  CASENBR_DISPATCH(conv1d_strided_backward, signal, kernel, d_out, d_signal, d_kernel, d_bias);
}

template <typename Real>
void segment_attention(const Tensor<Real>& q, const Tensor<Real>& k, const Tensor<Real>& v,
                       std::span<const std::size_t> q_offsets,
                       std::span<const std::size_t> k_offsets, std::size_t heads,
                       Tensor<Real>& out, std::vector<Real>& probs) {
  CASENBR_DISPATCH(segment_attention, q, k, v, q_offsets, k_offsets, heads, out, probs);
}

template <typename Real>
void segment_attention_backward(const Tensor<Real>& q, const Tensor<Real>& k,
                                const Tensor<Real>& v, std::span<const std::size_t> q_offsets,
                                std::span<const std::size_t> k_offsets, std::size_t heads,
                                const std::vector<Real>& probs, const Tensor<Real>& d_out,
                                Tensor<Real>* d_q, Tensor<Real>* d_k, Tensor<Real>* d_v) {
  CASENBR_DISPATCH(segment_attention_backward, q, k, v, q_offsets, k_offsets, heads, probs,
                   d_out, d_q, d_k, d_v);
}

#undef CASENBR_DISPATCH

CASENBR_INSTANTIATE(float)
CASENBR_INSTANTIATE(double)

}  // namespace casenbr::kernels
