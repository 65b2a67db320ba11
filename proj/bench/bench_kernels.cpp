// Serial reference kernels against the blocked OpenMP kernels on CASE-sized
// problems, plus the TIFUKNN neighbor scan. Prints one row per kernel.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>

#include "casenbr/baselines.hpp"
#include "casenbr/kernels.hpp"
#include "casenbr/rng.hpp"
#include "casenbr/synth.hpp"

using namespace casenbr;
namespace K = casenbr::kernels;

namespace {

Tensor<float> random_tensor(std::size_t r, std::size_t c, Rng& rng, double density = 1.0) {
  Tensor<float> t(r, c);
  for (auto& v : t.values())
    v = density >= 1.0 ? static_cast<float>(rng.normal(0.0, 1.0))
                       : static_cast<float>(rng.bernoulli(density));
  return t;
}

double best_of(std::size_t repeats, const std::function<void()>& fn) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

float max_abs_diff(const Tensor<float>& a, const Tensor<float>& b) {
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void row(const char* name, double serial, double parallel, std::uint64_t flops, float diff) {
  std::printf("%-28s %11.3f %11.3f %8.2fx %9.2f %10.2e\n", name, serial * 1e3, parallel * 1e3,
              serial / parallel, 2.0 * static_cast<double>(flops) / parallel * 1e-9, diff);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel benchmark: serial reference vs parallel"};
  std::size_t rows = 2048, repeats = 5, population = 20000;
  int threads = 0;
  app.add_option("--rows", rows, "Candidate rows per batch");
  app.add_option("--repeats", repeats, "Repetitions (best is kept)");
  app.add_option("--population", population, "TIFUKNN neighbor population");
  app.add_option("--threads", threads, "Worker threads (0: runtime default)");
  CLI11_PARSE(app, argc, argv);
  if (threads > 0) K::set_threads(threads);

  Rng rng(2024);
  std::printf("threads %d, rows %zu\n", K::threads(), rows);
  std::printf("%-28s %11s %11s %9s %9s %10s\n", "kernel", "serial_ms", "parallel_ms", "speedup",
              "GFLOP/s", "max_diff");

  {
    const auto a = random_tensor(rows, 256, rng), b = random_tensor(256, 256, rng);
    Tensor<float> c1, c2;
    K::reset_flop_count();
    K::reference::matmul(a, b, c1, false);
    const auto flops = K::flop_count();
    const double s = best_of(repeats, [&] { K::reference::matmul(a, b, c1, false); });
    const double p = best_of(repeats, [&] { K::parallel::matmul(a, b, c2, false); });
    row("matmul n x 256 x 256", s, p, flops, max_abs_diff(c1, c2));
    const auto d = random_tensor(rows, 256, rng);
    Tensor<float> g1, g2;
    const double st = best_of(repeats, [&] { K::reference::matmul_tn(a, d, g1, false); });
    const double pt = best_of(repeats, [&] { K::parallel::matmul_tn(a, d, g2, false); });
    row("matmul_tn 256 x n x 256", st, pt, flops, max_abs_diff(g1, g2));
    const double sn = best_of(repeats, [&] { K::reference::matmul_nt(d, b, g1, false); });
    const double pn = best_of(repeats, [&] { K::parallel::matmul_nt(d, b, g2, false); });
    row("matmul_nt n x 256 x 256", sn, pn, flops, max_abs_diff(g1, g2));
  }
  {
    const auto signal = random_tensor(rows, 364, rng, 0.05);
    const auto kernel = random_tensor(1, 7, rng), bias = random_tensor(1, 1, rng);
    Tensor<float> o1, o2;
    K::reset_flop_count();
    K::reference::conv1d_strided(signal, kernel, bias, o1);
    const auto flops = K::flop_count();
    const double s = best_of(repeats, [&] { K::reference::conv1d_strided(signal, kernel, bias, o1); });
    const double p = best_of(repeats, [&] { K::parallel::conv1d_strided(signal, kernel, bias, o2); });
    row("conv1d w=7 T=364", s, p, flops, max_abs_diff(o1, o2));
    const auto d_out = random_tensor(rows, 52, rng);
    Tensor<float> ds1(rows, 364), ds2(rows, 364), dk1(1, 7), dk2(1, 7), db1(1, 1), db2(1, 1);
    const double sb = best_of(repeats, [&] {
      K::reference::conv1d_strided_backward(signal, kernel, d_out, &ds1, &dk1, &db1);
    });
    const double pb = best_of(repeats, [&] {
      K::parallel::conv1d_strided_backward(signal, kernel, d_out, &ds2, &dk2, &db2);
    });
    row("conv1d backward", sb, pb, 2 * flops, max_abs_diff(ds1, ds2) / static_cast<float>(repeats));
  }
  {
    const std::size_t n = 32, segments = rows / n, induced = 32, heads = 4;
    std::vector<std::size_t> qo(segments + 1), ko(segments + 1);
    for (std::size_t s = 0; s <= segments; ++s) {
      qo[s] = s * n;
      ko[s] = s * induced;
    }
    const auto q = random_tensor(segments * n, 256, rng);
    const auto k = random_tensor(segments * induced, 256, rng);
    const auto v = random_tensor(segments * induced, 256, rng);
    Tensor<float> o1, o2;
    std::vector<float> p1, p2;
    K::reset_flop_count();
    K::reference::segment_attention(q, k, v, qo, ko, heads, o1, p1);
    const auto flops = K::flop_count();
    const double s = best_of(repeats, [&] { K::reference::segment_attention(q, k, v, qo, ko, heads, o1, p1); });
    const double p = best_of(repeats, [&] { K::parallel::segment_attention(q, k, v, qo, ko, heads, o2, p2); });
    row("attention n=32 K=32 H=4", s, p, flops, max_abs_diff(o1, o2));
    const auto d_out = random_tensor(q.rows(), 256, rng);
    Tensor<float> dq1(q.rows(), 256), dq2(q.rows(), 256), dk1(k.rows(), 256), dk2(k.rows(), 256),
        dv1(v.rows(), 256), dv2(v.rows(), 256);
    const double sb = best_of(repeats, [&] {
      K::reference::segment_attention_backward(q, k, v, qo, ko, heads, p1, d_out, &dq1, &dk1, &dv1);
    });
    const double pb = best_of(repeats, [&] {
      K::parallel::segment_attention_backward(q, k, v, qo, ko, heads, p2, d_out, &dq2, &dk2, &dv2);
    });
    row("attention backward", sb, pb, 2 * flops, max_abs_diff(dq1, dq2) / static_cast<float>(repeats));
  }
  {
    SynthSpec spec;
    spec.n_users = population + 50;
    const auto corpus = generate(spec);
    const auto vocab = build_vocabulary(corpus.histories);
    std::vector<std::size_t> pop(population), queries;
    for (std::size_t u = 0; u < population; ++u) pop[u] = u;
    for (std::size_t u = population; u < spec.n_users; ++u) queries.push_back(u);
    const TifuIndex index(corpus.histories, pop, vocab, TifuConfig{});
    const auto qs = build_example_set(corpus.histories, queries, vocab, ExampleOptions{});
    const TifuRanker ranker(index, corpus.histories, vocab);
    const double t = seconds_per_query(ranker, qs.examples, 10, repeats);
    std::printf("tifuknn scan, population %zu: %.3f ms/query\n", population, t * 1e3);
  }
  return 0;
}
