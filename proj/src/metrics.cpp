#include "casenbr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "casenbr/errors.hpp"
#include "casenbr/log.hpp"

namespace casenbr {

namespace {

bool contains(std::span<const std::size_t> truth, std::size_t id) {
  return std::find(truth.begin(), truth.end(), id) != truth.end();
}

void require_k(std::size_t k) {
  if (k == 0) throw ConfigError("metric cutoff k must be at least 1");
}

std::size_t hits(std::span<const std::size_t> ranked, std::span<const std::size_t> truth,
                 std::size_t k) {
  const std::size_t depth = std::min(k, ranked.size());
  std::size_t h = 0;
  for (std::size_t p = 0; p < depth; ++p) h += contains(truth, ranked[p]);
  return h;
}

}  // namespace

double precision_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> truth,
                      std::size_t k) {
  require_k(k);
  return static_cast<double>(hits(ranked, truth, k)) / static_cast<double>(k);
}

double recall_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> truth,
                   std::size_t k) {
  require_k(k);
  if (truth.empty()) throw DataError("recall is undefined for an empty truth set");
  return static_cast<double>(hits(ranked, truth, k)) / static_cast<double>(truth.size());
}

double ndcg_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> truth,
                 std::size_t k) {
  require_k(k);
  if (truth.empty()) throw DataError("NDCG is undefined for an empty truth set");
  double dcg = 0.0;
  const std::size_t depth = std::min(k, ranked.size());
  for (std::size_t p = 0; p < depth; ++p)
    if (contains(truth, ranked[p])) dcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  double idcg = 0.0;
  const std::size_t ideal = std::min(k, truth.size());
  for (std::size_t p = 0; p < ideal; ++p) idcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  return dcg / idcg;
}

double EvalReport::value(const std::string& metric, std::size_t k) const {
  const auto it = std::find(ks.begin(), ks.end(), k);
  if (it == ks.end()) throw ConfigError("cutoff " + std::to_string(k) + " was not evaluated");
  const auto i = static_cast<std::size_t>(it - ks.begin());
  if (metric == "precision") return precision[i];
  if (metric == "recall") return recall[i];
  if (metric == "ndcg") return ndcg[i];
  throw ConfigError("unknown metric '" + metric + "'");
}

EvalReport evaluate(const Ranker& ranker, std::span<const Example> examples,
                    std::span<const std::size_t> ks) {
  if (ks.empty()) throw ConfigError("no metric cutoffs given");
  for (auto k : ks) require_k(k);
  EvalReport report;
  report.ks.assign(ks.begin(), ks.end());
  const std::size_t nk = ks.size();
  report.precision.assign(nk, 0.0);
  report.recall.assign(nk, 0.0);
  report.ndcg.assign(nk, 0.0);

  const std::size_t depth = *std::max_element(ks.begin(), ks.end());
  const auto rankings = ranker.rank(examples, depth);
  if (rankings.size() != examples.size())
    throw ShapeError(ranker.name() + " returned " + std::to_string(rankings.size()) +
                     " rankings for " + std::to_string(examples.size()) + " examples");

  std::vector<std::size_t> truth;
  for (std::size_t e = 0; e < examples.size(); ++e) {
    const auto& ex = examples[e];
    truth.clear();
    for (std::size_t i = 0; i < ex.size(); ++i)
      if (ex.labels[i]) truth.push_back(i);
    if (truth.empty()) {
      ++report.skipped;
      continue;
    }
    ExampleMetrics m{e, {}, {}, {}};
    for (auto k : ks) {
      m.precision.push_back(precision_at_k(rankings[e], truth, k));
      m.recall.push_back(recall_at_k(rankings[e], truth, k));
      m.ndcg.push_back(ndcg_at_k(rankings[e], truth, k));
    }
    for (std::size_t i = 0; i < nk; ++i) {
      report.precision[i] += m.precision[i];
      report.recall[i] += m.recall[i];
      report.ndcg[i] += m.ndcg[i];
    }
    report.per_example.push_back(std::move(m));
    ++report.evaluated;
  }
  if (report.evaluated == 0) {
    log::warn("no example has a repeat item in its target; metrics are undefined");
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::fill(report.precision.begin(), report.precision.end(), nan);
    std::fill(report.recall.begin(), report.recall.end(), nan);
    std::fill(report.ndcg.begin(), report.ndcg.end(), nan);
    return report;
  }
  const double n = static_cast<double>(report.evaluated);
  for (std::size_t i = 0; i < nk; ++i) {
    report.precision[i] /= n;
    report.recall[i] /= n;
    report.ndcg[i] /= n;
  }
  return report;
}

std::pair<std::string, std::size_t> parse_metric(const std::string& name) {
  const auto at = name.find('@');
  if (at == std::string::npos || at + 1 >= name.size())
    throw ConfigError("metric '" + name + "' must look like recall@10");
  std::string metric = name.substr(0, at);
  std::transform(metric.begin(), metric.end(), metric.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (metric == "prec") metric = "precision";
  if (metric != "precision" && metric != "recall" && metric != "ndcg")
    throw ConfigError("unknown metric '" + metric + "'");
  std::size_t k = 0;
  try {
    std::size_t used = 0;
    k = std::stoul(name.substr(at + 1), &used);
    if (used != name.size() - at - 1) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw ConfigError("metric '" + name + "' has an invalid cutoff");
  }
  require_k(k);
  return {metric, k};
}

void write_report_csv(std::ostream& out, const EvalReport& report) {
  out << "metric,k,value,n_evaluated\n";
  const auto emit = [&](const char* name, const std::vector<double>& values) {
    for (std::size_t i = 0; i < report.ks.size(); ++i) {
      std::ostringstream v;
      v << std::setprecision(17) << values[i];
      out << name << ',' << report.ks[i] << ',' << v.str() << ',' << report.evaluated << '\n';
    }
  };
  emit("precision", report.precision);
  emit("recall", report.recall);
  emit("ndcg", report.ndcg);
}

std::string format_table(std::span<const std::pair<std::string, EvalReport>> rows) {
  if (rows.empty()) return {};
  const auto& ks = rows.front().second.ks;
  std::size_t name_width = 6;
  for (const auto& [name, _] : rows) name_width = std::max(name_width, name.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(name_width)) << "method";
  for (const char* group : {"Prec", "Recall", "NDCG"}) {
    out << " |";
    for (auto k : ks) out << ' ' << std::setw(9) << (std::string(group) + "@" + std::to_string(k));
  }
  out << '\n';
  for (const auto& [name, report] : rows) {
    if (report.ks != ks) throw ConfigError("table rows were evaluated at different cutoffs");
    out << std::left << std::setw(static_cast<int>(name_width)) << name;
    for (const auto* values : {&report.precision, &report.recall, &report.ndcg}) {
      out << " |";
      for (double v : *values) out << ' ' << std::fixed << std::setprecision(4) << std::setw(9) << v;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace casenbr
