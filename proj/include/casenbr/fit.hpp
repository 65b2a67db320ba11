#pragma once

#include <span>

namespace casenbr {

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Ordinary least squares y ≈ intercept + slope·x.
LinearFit fit_linear(std::span<const double> x, std::span<const double> y);

/// R² of the least-squares quadratic y ≈ a + b·x + c·x².
double quadratic_r2(std::span<const double> x, std::span<const double> y);

}  // namespace casenbr
