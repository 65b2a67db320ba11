#include "casenbr/optim.hpp"

#include <cmath>

namespace casenbr {

template <typename Real>
Adam<Real>::Adam(const ParamSet<Real>& params, AdamConfig config) : config_(config) {
  for (const auto& [_, v] : params) {
    params_.push_back(v);
    m_.emplace_back(v->value.size(), Real{0});
    v_.emplace_back(v->value.size(), Real{0});
  }
}

template <typename Real>
void Adam<Real>::step() {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const Real lr = static_cast<Real>(config_.lr);
  const Real wd = static_cast<Real>(config_.weight_decay);
  const Real rb1 = static_cast<Real>(b1), rb2 = static_cast<Real>(b2);
  const Real inv_c1 = static_cast<Real>(1.0 / c1), inv_c2 = static_cast<Real>(1.0 / c2);
  const Real eps = static_cast<Real>(config_.eps);
  for (std::size_t p = 0; p < params_.size(); ++p) {
    auto& value = params_[p]->value;
    const Real* grad = params_[p]->has_grad() ? params_[p]->grad.data() : nullptr;
    Real* m = m_[p].data();
    Real* v = v_[p].data();
    Real* w = value.data();
    const std::size_t n = value.size();
    for (std::size_t i = 0; i < n; ++i) {
      Real g = grad ? grad[i] : Real{0};
      if (!config_.decoupled_decay) g += wd * w[i];
      m[i] = rb1 * m[i] + (Real{1} - rb1) * g;
      v[i] = rb2 * v[i] + (Real{1} - rb2) * g * g;
      const Real mhat = m[i] * inv_c1;
      const Real vhat = v[i] * inv_c2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      if (config_.decoupled_decay) w[i] -= lr * wd * w[i];
    }
  }
}

template <typename Real>
double clip_grad_norm(const ParamSet<Real>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [_, v] : params)
    if (v->has_grad())
      for (Real g : v->grad.values()) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const Real f = static_cast<Real>(max_norm / norm);
    for (const auto& [_, v] : params)
      if (v->has_grad())
        for (auto& g : v->grad.values()) g *= f;
  }
  return norm;
}

template class Adam<float>;
template class Adam<double>;
template double clip_grad_norm(const ParamSet<float>&, double);
template double clip_grad_norm(const ParamSet<double>&, double);

}  // namespace casenbr
