#pragma once

#include <cmath>
#include <string>

#include "casenbr/kernels.hpp"

namespace casenbr::kernels::detail {

inline std::string shapes(const char* op, const std::string& a, const std::string& b) {
  return std::string(op) + ": incompatible shapes " + a + " and " + b;
}

template <typename Real>
void prepare_output(Tensor<Real>& c, std::size_t rows, std::size_t cols, bool accumulate,
                    const char* op) {
  if (accumulate) {
    if (c.rows() != rows || c.cols() != cols) {
      throw ShapeError(std::string(op) + ": accumulator has shape " + c.shape_string() +
                       ", expected [" + std::to_string(rows) + "x" + std::to_string(cols) + "]");
    }
  } else if (c.rows() != rows || c.cols() != cols) {
    c = Tensor<Real>(rows, cols);
  } else {
    c.fill(Real{0});
  }
}

inline void check_segments(std::span<const std::size_t> q_offsets,
                           std::span<const std::size_t> k_offsets, std::size_t q_rows,
                           std::size_t k_rows) {
  if (q_offsets.size() != k_offsets.size() || q_offsets.empty()) {
    throw ShapeError("segment_attention: query and key segment tables differ in length");
  }
  if (q_offsets.front() != 0 || k_offsets.front() != 0 || q_offsets.back() != q_rows ||
      k_offsets.back() != k_rows) {
    throw ShapeError("segment_attention: segment offsets do not cover the inputs");
  }
  for (std::size_t s = 0; s + 1 < k_offsets.size(); ++s) {
    if (k_offsets[s + 1] <= k_offsets[s] || q_offsets[s + 1] < q_offsets[s]) {
      throw ShapeError("segment_attention: segment " + std::to_string(s) + " has no keys");
    }
  }
}

struct ConvDims {
  std::size_t n, t, f, w, j;
};

template <typename Real>
ConvDims conv_dims(const Tensor<Real>& signal, const Tensor<Real>& kernel,
                   const Tensor<Real>& bias) {
  const std::size_t w = kernel.cols();
  if (w == 0 || w > signal.cols()) {
    throw ShapeError("conv1d_strided: kernel width " + std::to_string(w) +
                     " exceeds signal length " + std::to_string(signal.cols()));
  }
  if (bias.size() != kernel.rows()) {
    throw ShapeError(shapes("conv1d_strided", kernel.shape_string(), bias.shape_string()));
  }
  return {signal.rows(), signal.cols(), kernel.rows(), w, signal.cols() / w};
}

}  // namespace casenbr::kernels::detail

#define CASENBR_INSTANTIATE(Real)                                                               \
  template void matmul(const Tensor<Real>&, const Tensor<Real>&, Tensor<Real>&, bool);          \
  template void matmul_tn(const Tensor<Real>&, const Tensor<Real>&, Tensor<Real>&, bool);       \
  template void matmul_nt(const Tensor<Real>&, const Tensor<Real>&, Tensor<Real>&, bool);       \
  template void conv1d_strided(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&,   \
                               Tensor<Real>&);                                                  \
  template void conv1d_strided_backward(const Tensor<Real>&, const Tensor<Real>&,               \
                                        const Tensor<Real>&, Tensor<Real>*, Tensor<Real>*,      \
                                        Tensor<Real>*);                                         \
  template void segment_attention(const Tensor<Real>&, const Tensor<Real>&,                     \
                                  const Tensor<Real>&, std::span<const std::size_t>,            \
                                  std::span<const std::size_t>, std::size_t, Tensor<Real>&,     \
                                  std::vector<Real>&);                                          \
  template void segment_attention_backward(                                                     \
      const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&,                            \
      std::span<const std::size_t>, std::span<const std::size_t>, std::size_t,                  \
      const std::vector<Real>&, const Tensor<Real>&, Tensor<Real>*, Tensor<Real>*, Tensor<Real>*);
