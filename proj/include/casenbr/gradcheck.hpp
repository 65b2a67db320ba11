#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "casenbr/params.hpp"

namespace casenbr {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t coordinates_checked = 0;
};

struct GradCheckOptions {
  double step = 1e-5;
  /// Coordinates per parameter tensor; smaller tensors are checked fully.
  std::size_t samples_per_tensor = 200;
  /// Relative error is |a − n| / max(|a|, |n|, floor), so gradients below
  /// the floor are compared on an absolute scale.
  double magnitude_floor = 1e-6;
  std::uint64_t seed = 7;
};

/// Compares reverse-mode gradients of a scalar loss against central finite
/// differences. `loss` must rebuild the same deterministic function on every
/// call (fixed dropout masks, eval mode, ...). Throws NumericError when the
/// loss is not finite.
GradCheckResult grad_check(const std::function<ad::Var<double>(ad::Graph<double>&)>& loss,
                           ParamSet<double>& params, const GradCheckOptions& options = {});

}  // namespace casenbr
