#include "casenbr/fit.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

#include "casenbr/errors.hpp"

namespace casenbr {

namespace {

double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double total_sum_squares(std::span<const double> y) {
  const double m = mean(y);
  double s = 0.0;
  for (double v : y) s += (v - m) * (v - m);
  return s;
}

void check(std::span<const double> x, std::span<const double> y, std::size_t min_points) {
  if (x.size() != y.size()) throw ShapeError("fit: x and y differ in length");
  if (x.size() < min_points) throw ConfigError("fit: too few points");
}

}  // namespace

LinearFit fit_linear(std::span<const double> x, std::span<const double> y) {
  check(x, y, 2);
  const double mx = mean(x), my = mean(y);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw ConfigError("fit: x values are all equal");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    sse += r * r;
  }
  const double sst = total_sum_squares(y);
  f.r2 = sst == 0.0 ? 1.0 : 1.0 - sse / sst;
  return f;
}

double quadratic_r2(std::span<const double> x, std::span<const double> y) {
  check(x, y, 3);
  // Normal equations on centred, scaled x for conditioning.
  const double mx = mean(x);
  double scale = 0.0;
  for (double v : x) scale = std::max(scale, std::abs(v - mx));
  if (scale == 0.0) throw ConfigError("fit: x values are all equal");
  std::array<std::array<double, 4>, 3> a{};
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = (x[i] - mx) / scale;
    const double p[3] = {1.0, t, t * t};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) a[r][c] += p[r] * p[c];
      a[r][3] += p[r] * y[i];
    }
  }
  for (int col = 0; col < 3; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    std::swap(a[col], a[pivot]);
    if (a[col][col] == 0.0) throw ConfigError("fit: degenerate quadratic system");
    for (int r = 0; r < 3; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (int c = col; c < 4; ++c) a[r][c] -= f * a[col][c];
    }
  }
  const double coef[3] = {a[0][3] / a[0][0], a[1][3] / a[1][1], a[2][3] / a[2][2]};
  double sse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = (x[i] - mx) / scale;
    const double r = y[i] - (coef[0] + coef[1] * t + coef[2] * t * t);
    sse += r * r;
  }
  const double sst = total_sum_squares(y);
  return sst == 0.0 ? 1.0 : 1.0 - sse / sst;
}

}  // namespace casenbr
