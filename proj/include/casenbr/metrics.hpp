#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "casenbr/signal.hpp"

namespace casenbr {

// `ranked` holds distinct ids in rank order; `truth` is a set of ids in any order.
double precision_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> truth,
                      std::size_t k);
double recall_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> truth,
                   std::size_t k);
double ndcg_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> truth,
                 std::size_t k);

/// Produces, for each example, candidate positions in rank order (at most k).
class Ranker {
 public:
  virtual ~Ranker() = default;
  [[nodiscard]] virtual std::string name() const = 0;
  [[nodiscard]] virtual std::vector<std::vector<std::size_t>> rank(
      std::span<const Example> examples, std::size_t k) const = 0;
};

struct ExampleMetrics {
  std::size_t example = 0;  // index into the evaluated span
  std::vector<double> precision, recall, ndcg;  // aligned with EvalReport::ks
};

struct EvalReport {
  std::vector<std::size_t> ks;
  std::vector<double> precision, recall, ndcg;  // means over evaluated examples
  std::size_t evaluated = 0;
  std::size_t skipped = 0;  // no positive among the candidates
  std::vector<ExampleMetrics> per_example;

  [[nodiscard]] double value(const std::string& metric, std::size_t k) const;
};

/// Leave-one-out evaluation. Truth is the set of labelled candidates; examples
/// without one are skipped. With nothing evaluated every mean is NaN.
EvalReport evaluate(const Ranker& ranker, std::span<const Example> examples,
                    std::span<const std::size_t> ks);

/// Parses "recall@10" style names into (metric, k).
std::pair<std::string, std::size_t> parse_metric(const std::string& name);

/// `metric,k,value,n_evaluated`.
void write_report_csv(std::ostream& out, const EvalReport& report);

/// One row per method, Prec@k | Recall@k | NDCG@k column groups.
std::string format_table(std::span<const std::pair<std::string, EvalReport>> rows);

}  // namespace casenbr
