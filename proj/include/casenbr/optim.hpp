#pragma once

#include <cstdint>
#include <vector>

#include "casenbr/params.hpp"

namespace casenbr {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  /// false: decay is added to the gradient before the moment updates (L2).
  /// true: decay is applied to the weights directly after the Adam step.
  bool decoupled_decay = false;
};

template <typename Real>
class Adam {
 public:
  Adam(const ParamSet<Real>& params, AdamConfig config);

  /// One update from the parameters' current gradients; parameters without
  /// a gradient buffer are treated as having zero gradient.
  void step();

  [[nodiscard]] std::int64_t steps() const noexcept { return t_; }
  [[nodiscard]] const AdamConfig& config() const noexcept { return config_; }

 private:
  std::vector<ad::Var<Real>> params_;
  std::vector<std::vector<Real>> m_, v_;
  AdamConfig config_;
  std::int64_t t_ = 0;
};

/// Rescales all gradients so their joint L2 norm is at most max_norm.
/// Returns the norm before clipping.
template <typename Real>
double clip_grad_norm(const ParamSet<Real>& params, double max_norm);

}  // namespace casenbr
