#include "casenbr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace casenbr {

namespace {

double evaluate(const std::function<ad::Var<double>(ad::Graph<double>&)>& loss) {
  ad::Graph<double> g(false);
  const double v = loss(g)->value[0];
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss");
  return v;
}

}  // namespace

GradCheckResult grad_check(const std::function<ad::Var<double>(ad::Graph<double>&)>& loss,
                           ParamSet<double>& params, const GradCheckOptions& options) {
  params.zero_grad();
  {
    ad::Graph<double> g;
    auto l = loss(g);
    if (!std::isfinite(l->value[0])) throw NumericError("grad_check: non-finite loss");
    g.backward(l);
  }

  GradCheckResult result;
  Rng rng(options.seed);
  for (const auto& [name, var] : params) {
    const std::size_t n = var->value.size();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (n > options.samples_per_tensor) {
      rng.shuffle(std::span<std::size_t>(coords));
      coords.resize(options.samples_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t idx : coords) {
      const double analytic = var->has_grad() ? var->grad[idx] : 0.0;
      const double saved = var->value[idx];
      var->value[idx] = saved + options.step;
      const double plus = evaluate(loss);
      var->value[idx] = saved - options.step;
      const double minus = evaluate(loss);
      var->value[idx] = saved;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double denom =
          std::max({std::abs(analytic), std::abs(numeric), options.magnitude_floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++result.coordinates_checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = name;
        result.worst_index = idx;
      }
    }
  }
  return result;
}

}  // namespace casenbr
