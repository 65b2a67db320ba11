#pragma once

#include <string>
#include <vector>

#include "casenbr/ingest.hpp"
#include "casenbr/rng.hpp"
#include "casenbr/signal.hpp"
#include "casenbr/tensor.hpp"

namespace testing {

template <typename Real>
casenbr::Tensor<Real> random_tensor(std::size_t r, std::size_t c, casenbr::Rng& rng,
                                    double sd = 1.0) {
  casenbr::Tensor<Real> t(r, c);
  for (auto& v : t.values()) v = static_cast<Real>(rng.normal(0.0, sd));
  return t;
}

inline casenbr::UserHistory history(
    std::string user, std::vector<std::pair<casenbr::Day, std::vector<std::string>>> baskets) {
  casenbr::UserHistory h{std::move(user), {}};
  for (auto& [day, items] : baskets) h.baskets.push_back({day, std::move(items)});
  return h;
}

/// Example with random sparse signals, used where only shapes and
/// structure matter.
inline casenbr::Example random_example(casenbr::Rng& rng, std::size_t n, std::size_t horizon,
                                       std::size_t vocab, double density = 0.1) {
  casenbr::Example e;
  e.user_id = "u" + std::to_string(rng.below(1000000));
  e.query_day = 1000;
  e.horizon = horizon;
  for (std::size_t i = 0; i < n; ++i) {
    e.candidates.push_back(rng.below(vocab));
    e.labels.push_back(rng.bernoulli(0.3) ? 1 : 0);
    e.purchase_counts.push_back(static_cast<std::uint32_t>(1 + rng.below(5)));
    e.last_purchase.push_back(static_cast<casenbr::Day>(rng.below(1000)));
  }
  e.signals.resize(n * horizon);
  for (auto& b : e.signals) b = rng.bernoulli(density) ? 1 : 0;
  return e;
}

/// Reorders candidates (and every aligned field) so that new position i
/// holds old position perm[i].
inline casenbr::Example permuted(const casenbr::Example& e, const std::vector<std::size_t>& perm) {
  casenbr::Example out = e;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out.candidates[i] = e.candidates[perm[i]];
    out.labels[i] = e.labels[perm[i]];
    out.purchase_counts[i] = e.purchase_counts[perm[i]];
    out.last_purchase[i] = e.last_purchase[perm[i]];
    for (std::size_t t = 0; t < e.horizon; ++t)
      out.signals[i * e.horizon + t] = e.signals[perm[i] * e.horizon + t];
  }
  return out;
}

}  // namespace testing
