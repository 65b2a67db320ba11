#include "casenbr/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "casenbr/errors.hpp"

namespace casenbr {

void ModelConfig::validate() const {
  if (horizon == 0) throw ConfigError("model.horizon must be positive");
  if (use_cnn) {
    if (scales.empty()) throw ConfigError("model.scales must not be empty");
    for (auto w : scales)
      if (w == 0 || w > horizon)
        throw ConfigError("model.scales: width " + std::to_string(w) + " exceeds horizon " +
                          std::to_string(horizon));
    if (filters_per_scale == 0) throw ConfigError("model.filters_per_scale must be positive");
  }
  if (!use_cnn && !use_item_embedding)
    throw ConfigError("at least one of model.use_cnn / model.use_item_embedding must be true");
  if (cadence_dim == 0 || embedding_dim == 0 || hidden_dim == 0)
    throw ConfigError("model dimensions must be positive");
  if (heads == 0 || hidden_dim % heads != 0)
    throw ConfigError("model.hidden_dim must be divisible by model.heads");
  if (induced_points == 0) throw ConfigError("model.induced_points must be positive");
  if (set_layers == 0) throw ConfigError("model.set_layers must be positive");
  if (scorer_width() == 0) throw ConfigError("model.scorer_hidden must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model.dropout must lie in [0, 1)");
}

std::size_t ModelConfig::conv_features() const {
  std::size_t n = 0;
  for (auto w : scales) n += filters_per_scale * (horizon / w);
  return n;
}

nlohmann::json ModelConfig::to_json() const {
  return {{"horizon", horizon},
          {"scales", scales},
          {"filters_per_scale", filters_per_scale},
          {"cadence_dim", cadence_dim},
          {"embedding_dim", embedding_dim},
          {"hidden_dim", hidden_dim},
          {"induced_points", induced_points},
          {"heads", heads},
          {"set_layers", set_layers},
          {"scorer_hidden", scorer_hidden},
          {"dropout", dropout},
          {"use_cnn", use_cnn},
          {"use_set_encoder", use_set_encoder},
          {"use_item_embedding", use_item_embedding},
          {"set_encoder", set_encoder == SetEncoderKind::isab ? "isab" : "perm_eq_mean"}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.horizon = j.at("horizon").get<std::size_t>();
  c.scales = j.at("scales").get<std::vector<std::size_t>>();
  c.filters_per_scale = j.at("filters_per_scale").get<std::size_t>();
  c.cadence_dim = j.at("cadence_dim").get<std::size_t>();
  c.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.induced_points = j.at("induced_points").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.set_layers = j.at("set_layers").get<std::size_t>();
  c.scorer_hidden = j.at("scorer_hidden").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.use_cnn = j.at("use_cnn").get<bool>();
  c.use_set_encoder = j.at("use_set_encoder").get<bool>();
  c.use_item_embedding = j.at("use_item_embedding").get<bool>();
  const auto kind = j.at("set_encoder").get<std::string>();
  if (kind == "isab") {
    c.set_encoder = SetEncoderKind::isab;
  } else if (kind == "perm_eq_mean") {
    c.set_encoder = SetEncoderKind::perm_eq_mean;
  } else {
    throw ConfigError("unknown set encoder '" + kind + "'");
  }
  c.validate();
  return c;
}

template <typename Real>
std::size_t Batch<Real>::max_size() const {
  std::size_t m = 0;
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) m = std::max(m, offsets[s + 1] - offsets[s]);
  return m;
}

template <typename Real>
std::vector<std::vector<std::uint8_t>> Batch<Real>::mask() const {
  const std::size_t width = max_size();
  std::vector<std::vector<std::uint8_t>> m(segments(), std::vector<std::uint8_t>(width, 0));
  for (std::size_t s = 0; s < segments(); ++s)
    std::fill_n(m[s].begin(), offsets[s + 1] - offsets[s], std::uint8_t{1});
  return m;
}

template <typename Real>
Batch<Real> collate(std::span<const Example* const> examples) {
  if (examples.empty()) throw DataError("cannot collate an empty batch");
  const std::size_t horizon = examples.front()->horizon;
  Batch<Real> b;
  b.offsets.push_back(0);
  for (const auto* ex : examples) {
    if (ex->size() == 0) throw DataError("example for user " + ex->user_id + " has no candidates");
    if (ex->horizon != horizon) throw DataError("examples in one batch differ in horizon");
    b.offsets.push_back(b.offsets.back() + ex->size());
  }
  b.signals = Tensor<Real>(b.offsets.back(), horizon);
  b.items.reserve(b.offsets.back());
  b.labels.reserve(b.offsets.back());
  std::size_t row = 0;
  for (const auto* ex : examples) {
    for (std::size_t i = 0; i < ex->size(); ++i, ++row) {
      const auto bits = ex->signal(i);
      Real* dst = b.signals.data() + row * horizon;
      for (std::size_t t = 0; t < horizon; ++t) dst[t] = static_cast<Real>(bits[t]);
      b.items.push_back(ex->candidates[i]);
      b.labels.push_back(static_cast<Real>(ex->labels[i]));
    }
  }
  return b;
}

template <typename Real>
Batch<Real> collate(std::span<const Example> examples) {
  std::vector<const Example*> ptrs;
  ptrs.reserve(examples.size());
  for (const auto& e : examples) ptrs.push_back(&e);
  return collate<Real>(std::span<const Example* const>(ptrs));
}

template <typename Real>
ad::Var<Real> cadence_forward(ad::Graph<Real>& g, const CadenceEncoderParams<Real>& p,
                              const ad::Var<Real>& signals) {
  std::vector<ad::Var<Real>> per_scale;
  per_scale.reserve(p.kernels.size());
  for (std::size_t s = 0; s < p.kernels.size(); ++s)
    per_scale.push_back(ad::relu(g, ad::conv1d_strided(g, signals, p.kernels[s], p.biases[s])));
  const auto features = per_scale.size() == 1 ? per_scale.front() : ad::concat_cols(g, per_scale);
  return p.fc2(g, ad::relu(g, p.fc1(g, features)));
}

namespace {

template <typename Real>
ad::Var<Real> mab_tail(ad::Graph<Real>& g, const MabParams<Real>& p, const ad::Var<Real>& x,
                       const ad::Var<Real>& attended) {
  const auto a = ad::layer_norm(g, ad::add(g, x, p.output(g, attended)), p.ln0_gain, p.ln0_shift);
  const auto ff = ad::relu(g, p.feed_forward(g, a));
  return ad::layer_norm(g, ad::add(g, a, ff), p.ln1_gain, p.ln1_shift);
}

ad::Offsets uniform_offsets(std::size_t segments, std::size_t rows_each) {
  ad::Offsets o(segments + 1);
  for (std::size_t s = 0; s <= segments; ++s) o[s] = s * rows_each;
  return o;
}

}  // namespace

template <typename Real>
ad::Var<Real> mab(ad::Graph<Real>& g, const MabParams<Real>& p, const ad::Var<Real>& x,
                  const ad::Offsets& x_offsets, const ad::Var<Real>& y,
                  const ad::Offsets& y_offsets, std::size_t heads) {
  const auto q = p.query(g, x);
  const auto k = p.key(g, y);
  const auto v = p.value(g, y);
  const auto attended = ad::segment_attention(g, q, k, v, x_offsets, y_offsets, heads);
  return mab_tail(g, p, x, attended);
}

template <typename Real>
ad::Var<Real> mab_shared_query(ad::Graph<Real>& g, const MabParams<Real>& p,
                               const ad::Var<Real>& x, const ad::Var<Real>& y,
                               const ad::Offsets& y_offsets, std::size_t heads) {
  const std::size_t segments = y_offsets.size() - 1;
  const auto q = ad::tile_rows(g, p.query(g, x), segments);
  const auto k = p.key(g, y);
  const auto v = p.value(g, y);
  const auto x_offsets = uniform_offsets(segments, x->value.rows());
  const auto attended = ad::segment_attention(g, q, k, v, x_offsets, y_offsets, heads);
  return mab_tail(g, p, ad::tile_rows(g, x, segments), attended);
}

template <typename Real>
ad::Var<Real> isab_forward(ad::Graph<Real>& g, std::span<const IsabBlockParams<Real>> blocks,
                           const ad::Var<Real>& x, const ad::Offsets& offsets, std::size_t heads,
                           double dropout, Rng& rng, bool training) {
  auto h = x;
  for (const auto& block : blocks) {
    const std::size_t k = block.induced->value.rows();
    const auto summary = mab_shared_query(g, block.gather, block.induced, h, offsets, heads);
    const auto summary_offsets = uniform_offsets(offsets.size() - 1, k);
    h = mab(g, block.scatter, h, offsets, summary, summary_offsets, heads);
    h = ad::dropout(g, h, dropout, rng, training);
  }
  return h;
}

template <typename Real>
ad::Var<Real> perm_eq_mean_forward(ad::Graph<Real>& g,
                                   std::span<const PermEqLayerParams<Real>> layers,
                                   const ad::Var<Real>& x, const ad::Offsets& offsets) {
  auto h = x;
  for (const auto& layer : layers) {
    const auto pooled = ad::matmul(g, ad::segment_mean(g, h, offsets), layer.pooled);
    h = ad::relu(g, ad::add(g, layer.element(g, h), ad::segment_broadcast(g, pooled, offsets)));
  }
  return h;
}

namespace {

template <typename Real>
Tensor<Real> glorot(std::size_t rows, std::size_t cols, std::size_t fan_in, std::size_t fan_out,
                    Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor<Real> t(rows, cols);
  for (auto& v : t.values()) v = static_cast<Real>(rng.uniform(-a, a));
  return t;
}

template <typename Real>
Tensor<Real> gaussian(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  Tensor<Real> t(rows, cols);
  for (auto& v : t.values()) v = static_cast<Real>(rng.normal(0.0, stddev));
  return t;
}

}  // namespace

template <typename Real>
Linear<Real> CaseModel<Real>::make_linear(const std::string& name, std::size_t in,
                                          std::size_t out, Rng& rng) {
  return {params_.add(name + ".weight", glorot<Real>(in, out, in, out, rng)),
          params_.add(name + ".bias", Tensor<Real>(1, out))};
}

template <typename Real>
MabParams<Real> CaseModel<Real>::make_mab(const std::string& name, Rng& rng) {
  const std::size_t d = config_.hidden_dim;
  MabParams<Real> p;
  p.query = make_linear(name + ".query", d, d, rng);
  p.key = make_linear(name + ".key", d, d, rng);
  p.value = make_linear(name + ".value", d, d, rng);
  p.output = make_linear(name + ".output", d, d, rng);
  p.feed_forward = make_linear(name + ".ffn", d, d, rng);
  p.ln0_gain = params_.add(name + ".ln0.gain", Tensor<Real>(1, d, Real{1}));
  p.ln0_shift = params_.add(name + ".ln0.shift", Tensor<Real>(1, d));
  p.ln1_gain = params_.add(name + ".ln1.gain", Tensor<Real>(1, d, Real{1}));
  p.ln1_shift = params_.add(name + ".ln1.shift", Tensor<Real>(1, d));
  return p;
}

template <typename Real>
CaseModel<Real>::CaseModel(ModelConfig config, std::size_t vocab_size, std::uint64_t seed)
    : config_(std::move(config)), vocab_size_(vocab_size) {
  config_.validate();
  Rng rng(seed);
  const auto& c = config_;
  if (c.use_cnn) {
    for (auto w : c.scales) {
      const std::string name = "cadence.conv" + std::to_string(w);
      cadence_.kernels.push_back(params_.add(
          name + ".kernel",
          glorot<Real>(c.filters_per_scale, w, w, c.filters_per_scale * w, rng)));
      cadence_.biases.push_back(params_.add(name + ".bias", Tensor<Real>(1, c.filters_per_scale)));
    }
    cadence_.fc1 = make_linear("cadence.fc1", c.conv_features(), c.cadence_dim, rng);
    cadence_.fc2 = make_linear("cadence.fc2", c.cadence_dim, c.cadence_dim, rng);
  }
  if (c.use_item_embedding) {
    if (vocab_size_ == 0) throw ConfigError("item embedding requires a non-empty vocabulary");
    embedding_ = params_.add("embedding", gaussian<Real>(vocab_size_, c.embedding_dim, 0.02, rng));
  }
  if (c.needs_adapter())
    adapter_ = make_linear("adapter", c.cadence_dim + c.embedding_dim, c.hidden_dim, rng);
  if (c.use_set_encoder) {
    for (std::size_t l = 0; l < c.set_layers; ++l) {
      const std::string name = (c.set_encoder == SetEncoderKind::isab ? "isab." : "permeq.") +
                               std::to_string(l);
      if (c.set_encoder == SetEncoderKind::isab) {
        IsabBlockParams<Real> block;
        block.induced = params_.add(name + ".induced",
                                    gaussian<Real>(c.induced_points, c.hidden_dim, 0.02, rng));
        block.gather = make_mab(name + ".gather", rng);
        block.scatter = make_mab(name + ".scatter", rng);
        isab_.push_back(std::move(block));
      } else {
        PermEqLayerParams<Real> layer;
        layer.element = make_linear(name + ".element", c.hidden_dim, c.hidden_dim, rng);
        layer.pooled = params_.add(name + ".pooled",
                                   glorot<Real>(c.hidden_dim, c.hidden_dim, c.hidden_dim,
                                                c.hidden_dim, rng));
        perm_eq_.push_back(std::move(layer));
      }
    }
  }
  scorer1_ = make_linear("scorer.fc1", c.hidden_dim, c.scorer_width(), rng);
  scorer2_ = make_linear("scorer.fc2", c.scorer_width(), 1, rng);
}

template <typename Real>
typename CaseModel<Real>::Output CaseModel<Real>::forward(ad::Graph<Real>& g,
                                                          const Batch<Real>& batch, Rng& rng,
                                                          bool training) const {
  const auto& c = config_;
  const std::size_t n = batch.rows();
  if (batch.signals.cols() != c.horizon)
    throw DataError("batch horizon " + std::to_string(batch.signals.cols()) +
                    " does not match model horizon " + std::to_string(c.horizon));
  Output out;
  if (c.use_cnn) {
    out.cadence = cadence_forward(g, cadence_, ad::constant(batch.signals));
  } else {
    out.cadence = ad::constant(Tensor<Real>(n, c.cadence_dim));
  }
  ad::Var<Real> embedded;
  if (c.use_item_embedding) {
    for (auto idx : batch.items)
      if (idx >= vocab_size_)
        throw DataError("candidate index " + std::to_string(idx) + " outside the vocabulary");
    embedded = ad::gather_rows(g, embedding_, batch.items);
  } else {
    embedded = ad::constant(Tensor<Real>(n, c.embedding_dim));
  }
  auto x = ad::concat_cols(g, {out.cadence, embedded});
  if (c.needs_adapter()) x = adapter_(g, x);

  if (!c.use_set_encoder) {
    out.encoded = x;
  } else if (c.set_encoder == SetEncoderKind::isab) {
    out.encoded = isab_forward(g, std::span<const IsabBlockParams<Real>>(isab_), x,
                               batch.offsets, c.heads, c.dropout, rng, training);
  } else {
    out.encoded =
        perm_eq_mean_forward(g, std::span<const PermEqLayerParams<Real>>(perm_eq_), x, batch.offsets);
  }
  auto h = ad::relu(g, scorer1_(g, out.encoded));
  h = ad::dropout(g, h, c.dropout, rng, training);
  out.scores = scorer2_(g, h);
  return out;
}

template <typename Real>
std::vector<std::vector<double>> CaseModel<Real>::score(std::span<const Example> examples,
                                                        std::size_t batch_size) const {
  std::vector<std::vector<double>> out;
  out.reserve(examples.size());
  Rng unused(0);
  for (std::size_t at = 0; at < examples.size(); at += batch_size) {
    const auto chunk = examples.subspan(at, std::min(batch_size, examples.size() - at));
    const auto batch = collate<Real>(chunk);
    ad::Graph<Real> g(false);
    const auto result = forward(g, batch, unused, false);
    for (std::size_t s = 0; s < batch.segments(); ++s) {
      std::vector<double> scores;
      for (std::size_t r = batch.offsets[s]; r < batch.offsets[s + 1]; ++r)
        scores.push_back(static_cast<double>(result.scores->value[r]));
      out.push_back(std::move(scores));
    }
  }
  return out;
}

std::vector<std::size_t> rank_candidates(std::span<const double> scores, const Example& example,
                                         std::size_t k) {
  if (scores.size() != example.size())
    throw ShapeError("rank_candidates: " + std::to_string(scores.size()) + " scores for " +
                     std::to_string(example.size()) + " candidates");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    if (example.purchase_counts[a] != example.purchase_counts[b])
      return example.purchase_counts[a] > example.purchase_counts[b];
    return example.candidates[a] < example.candidates[b];
  });
  order.resize(std::min(k, order.size()));
  return order;
}

#define CASENBR_MODEL_INSTANTIATE(Real)                                                        \
  template struct Batch<Real>;                                                                 \
  template Batch<Real> collate(std::span<const Example* const>);                              \
  template Batch<Real> collate(std::span<const Example>);                                     \
  template ad::Var<Real> cadence_forward(ad::Graph<Real>&, const CadenceEncoderParams<Real>&, \
                                         const ad::Var<Real>&);                                \
  template ad::Var<Real> mab(ad::Graph<Real>&, const MabParams<Real>&, const ad::Var<Real>&,  \
                             const ad::Offsets&, const ad::Var<Real>&, const ad::Offsets&,     \
                             std::size_t);                                                     \
  template ad::Var<Real> mab_shared_query(ad::Graph<Real>&, const MabParams<Real>&,           \
                                          const ad::Var<Real>&, const ad::Var<Real>&,          \
                                          const ad::Offsets&, std::size_t);                    \
  template ad::Var<Real> isab_forward(ad::Graph<Real>&, std::span<const IsabBlockParams<Real>>, \
                                      const ad::Var<Real>&, const ad::Offsets&, std::size_t,   \
                                      double, Rng&, bool);                                     \
  template ad::Var<Real> perm_eq_mean_forward(ad::Graph<Real>&,                               \
                                              std::span<const PermEqLayerParams<Real>>,        \
                                              const ad::Var<Real>&, const ad::Offsets&);       \
  template class CaseModel<Real>;

CASENBR_MODEL_INSTANTIATE(float)
CASENBR_MODEL_INSTANTIATE(double)

}  // namespace casenbr
