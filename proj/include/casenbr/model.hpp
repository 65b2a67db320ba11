#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "casenbr/autodiff.hpp"
#include "casenbr/params.hpp"
#include "casenbr/signal.hpp"

namespace casenbr {

enum class SetEncoderKind { isab, perm_eq_mean };

struct ModelConfig {
  std::size_t horizon = 364;
  std::vector<std::size_t> scales = {7, 14, 28, 91, 182};
  std::size_t filters_per_scale = 1;
  std::size_t cadence_dim = 128;    // d_c
  std::size_t embedding_dim = 128;  // d_e
  std::size_t hidden_dim = 256;     // d_h
  std::size_t induced_points = 32;  // K
  std::size_t heads = 4;            // H
  std::size_t set_layers = 2;
  std::size_t scorer_hidden = 0;  // 0 selects hidden_dim / 2
  double dropout = 0.1;
  bool use_cnn = true;
  bool use_set_encoder = true;
  bool use_item_embedding = true;
  SetEncoderKind set_encoder = SetEncoderKind::isab;

  /// Throws ConfigError on inconsistent settings.
  void validate() const;
  [[nodiscard]] std::size_t conv_features() const;
  [[nodiscard]] std::size_t scorer_width() const {
    return scorer_hidden ? scorer_hidden : hidden_dim / 2;
  }
  [[nodiscard]] bool needs_adapter() const { return cadence_dim + embedding_dim != hidden_dim; }

  [[nodiscard]] nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Variable-size candidate sets packed row-wise: segment s occupies rows
/// [offsets[s], offsets[s+1]). Attention never crosses segments, which is
/// the packed equivalent of padding every set to max_size() with masked,
/// zero-weight slots.
template <typename Real>
struct Batch {
  Tensor<Real> signals;            // rows × horizon
  std::vector<std::size_t> items;  // vocabulary index per row
  std::vector<Real> labels;        // per row
  ad::Offsets offsets;

  [[nodiscard]] std::size_t segments() const { return offsets.size() - 1; }
  [[nodiscard]] std::size_t rows() const { return offsets.back(); }
  [[nodiscard]] std::size_t max_size() const;
  /// Padded view: mask[s][j] == 1 iff slot j of segment s holds a candidate.
  [[nodiscard]] std::vector<std::vector<std::uint8_t>> mask() const;
};

template <typename Real>
Batch<Real> collate(std::span<const Example* const> examples);

template <typename Real>
Batch<Real> collate(std::span<const Example> examples);

template <typename Real>
struct Linear {
  ad::Var<Real> weight;  // in × out
  ad::Var<Real> bias;    // 1 × out

  ad::Var<Real> operator()(ad::Graph<Real>& g, const ad::Var<Real>& x) const {
    return ad::add_bias(g, ad::matmul(g, x, weight), bias);
  }
};

template <typename Real>
struct CadenceEncoderParams {
  std::vector<ad::Var<Real>> kernels;  // F × w per scale
  std::vector<ad::Var<Real>> biases;   // 1 × F per scale
  Linear<Real> fc1, fc2;
};

/// Attention block: A = LN(x + Wo·MHA(x, y, y)), out = LN(A + ReLU(A·Wf + bf)).
template <typename Real>
struct MabParams {
  Linear<Real> query, key, value, output, feed_forward;
  ad::Var<Real> ln0_gain, ln0_shift, ln1_gain, ln1_shift;
};

template <typename Real>
struct IsabBlockParams {
  ad::Var<Real> induced;   // K × d_h
  MabParams<Real> gather;  // induced points attend to the set
  MabParams<Real> scatter; // set attends back to the induced summary
};

template <typename Real>
struct PermEqLayerParams {
  Linear<Real> element;  // W1, b
  ad::Var<Real> pooled;  // W2 applied to the segment mean
};

/// Per-scale strided conv + ReLU, concatenation in scale order, fc1 + ReLU, fc2.
template <typename Real>
ad::Var<Real> cadence_forward(ad::Graph<Real>& g, const CadenceEncoderParams<Real>& p,
                              const ad::Var<Real>& signals);

template <typename Real>
ad::Var<Real> mab(ad::Graph<Real>& g, const MabParams<Real>& p, const ad::Var<Real>& x,
                  const ad::Offsets& x_offsets, const ad::Var<Real>& y,
                  const ad::Offsets& y_offsets, std::size_t heads);

/// mab() with one query block `x` shared by every segment of `y`; equal to
/// mab(tile_rows(x, segments), ...) but projects the queries once.
template <typename Real>
ad::Var<Real> mab_shared_query(ad::Graph<Real>& g, const MabParams<Real>& p,
                               const ad::Var<Real>& x, const ad::Var<Real>& y,
                               const ad::Offsets& y_offsets, std::size_t heads);

template <typename Real>
ad::Var<Real> isab_forward(ad::Graph<Real>& g, std::span<const IsabBlockParams<Real>> blocks,
                           const ad::Var<Real>& x, const ad::Offsets& offsets, std::size_t heads,
                           double dropout, Rng& rng, bool training);

template <typename Real>
ad::Var<Real> perm_eq_mean_forward(ad::Graph<Real>& g,
                                   std::span<const PermEqLayerParams<Real>> layers,
                                   const ad::Var<Real>& x, const ad::Offsets& offsets);

template <typename Real>
class CaseModel {
 public:
  struct Output {
    ad::Var<Real> cadence;  // N × d_c (zeros when the CNN is ablated)
    ad::Var<Real> encoded;  // N × d_h after the set encoder
    ad::Var<Real> scores;   // N × 1 logits
  };

  /// Fresh model with seeded initialization.
  CaseModel(ModelConfig config, std::size_t vocab_size, std::uint64_t seed);

  [[nodiscard]] const ModelConfig& config() const noexcept { return config_; }
  [[nodiscard]] std::size_t vocab_size() const noexcept { return vocab_size_; }
  [[nodiscard]] ParamSet<Real>& params() noexcept { return params_; }
  [[nodiscard]] const ParamSet<Real>& params() const noexcept { return params_; }

  Output forward(ad::Graph<Real>& g, const Batch<Real>& batch, Rng& rng, bool training) const;

  /// Eval-mode logits per example, computed in batches without recording.
  [[nodiscard]] std::vector<std::vector<double>> score(std::span<const Example> examples,
                                                       std::size_t batch_size = 64) const;

 private:
  Linear<Real> make_linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng);
  MabParams<Real> make_mab(const std::string& name, Rng& rng);

  ModelConfig config_;
  std::size_t vocab_size_;
  ParamSet<Real> params_;
  CadenceEncoderParams<Real> cadence_;
  ad::Var<Real> embedding_;
  Linear<Real> adapter_;
  std::vector<IsabBlockParams<Real>> isab_;
  std::vector<PermEqLayerParams<Real>> perm_eq_;
  Linear<Real> scorer1_, scorer2_;
};

/// Candidate positions by descending score; ties go to the higher purchase
/// count, then the smaller vocabulary index (lexicographic item id).
/// Truncated to min(k, n).
std::vector<std::size_t> rank_candidates(std::span<const double> scores, const Example& example,
                                         std::size_t k);

}  // namespace casenbr
