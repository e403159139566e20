#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "bnrhn/cells.hpp"
#include "bnrhn/dataset.hpp"
#include "bnrhn/matrix.hpp"
#include "bnrhn/vocab.hpp"

namespace bnrhn {

struct ModelSpec {
  CellKind kind = CellKind::bn_rhn;
  std::size_t vocab_size = 0;
  std::size_t embed = 64;
  std::size_t hidden = 64;
  std::size_t feature_width = 32;
  std::size_t depth = 3;
  bool bn_every_depth = true;
  double bn_gamma = 0.1;
  /// Running-statistics slots per batch-norm site: 1 shares them over time,
  /// n > 1 keeps one per time step (steps >= n use the last slot).
  std::size_t bn_stat_slots = 1;

  [[nodiscard]] CellSpec cell_spec() const;
};

/// Caption decoder: the image feature sets the initial state, embedded tokens
/// drive the recurrent cell, and a linear map of the state gives the logits.
struct ModelParams {
  ModelSpec spec;
  Matrix embedding;  // V x E
  Matrix feat_w;     // F_img x F
  Matrix feat_b;     // 1 x F
  CellParams cell;
  Matrix out_w;  // F x V
  Matrix out_b;  // 1 x V
};

ModelParams init_model(const ModelSpec& spec, const InitOptions& init);
ModelParams zeros_like(const ModelParams& p);

template <class P, class F>
  requires std::is_same_v<std::remove_const_t<P>, ModelParams>
void for_each_tensor(P& p, F&& f) {
  f(std::string("embedding"), p.embedding);
  f(std::string("feat_w"), p.feat_w);
  f(std::string("feat_b"), p.feat_b);
  std::visit([&](auto& cell) { for_each_tensor(cell, [&](const std::string& n, auto& m) { f("cell." + n, m); }); },
             p.cell);
  f(std::string("out_w"), p.out_w);
  f(std::string("out_b"), p.out_b);
}

std::vector<Matrix> flatten(const ModelParams& p);
/// Overwrites every trainable tensor of `p` in for_each_tensor order.
void assign(ModelParams& p, std::span<const Matrix> tensors);
std::vector<std::string> tensor_names(const ModelParams& p);

/// Time-major token batch. Step t feeds inputs[t] and predicts targets[t];
/// mask[t][b] is 0 on padding.
struct Batch {
  std::vector<std::string> ids;
  Matrix features;  // B x F_img
  std::vector<std::vector<TokenId>> inputs;
  std::vector<std::vector<TokenId>> targets;
  std::vector<std::vector<double>> mask;

  [[nodiscard]] std::size_t size() const noexcept { return ids.size(); }
  [[nodiscard]] std::size_t steps() const noexcept { return inputs.size(); }
};

/// Wraps the first reference of each selected sample as START … END, pads to
/// the longest sequence in the batch and truncates to max_len steps.
Batch make_batch(std::span<const CaptionSample> samples, std::span<const std::size_t> indices, const Vocab& vocab,
                 std::size_t max_len);

struct XentResult {
  double loss = 0.0;
  Matrix dlogits;
  bool all_masked = false;
};

/// Σ over unmasked rows of −log softmax(logits)[target], divided by
/// `normalizer` (Σmask when not given). dlogits is the exact gradient.
XentResult softmax_xent(const Matrix& logits, std::span<const TokenId> targets, std::span<const double> mask,
                        std::optional<double> normalizer = std::nullopt);

struct UnrollCache {
  std::vector<std::vector<TokenId>> inputs;
  Matrix features;
  Matrix s0;
  std::vector<Matrix> states;  // s_1..s_T (h_t for the LSTM)
  std::vector<Matrix> dlogits;
  std::vector<RhnStepCache> rhn;
  std::vector<LstmCache> lstm;
};

struct UnrollResult {
  double loss = 0.0;
  std::size_t tokens = 0;  // unmasked positions
  UnrollCache cache;
  /// Batch-norm sites after this forward's running-statistic updates.
  std::vector<BnLayer> state_bn;
  std::optional<BnLayer> input_bn;
};

/// Masked mean cross-entropy over every unmasked (sample, step) position.
UnrollResult forward_unroll(const Batch& batch, const ModelParams& params, Mode mode);

/// Gradients for every trainable tensor, summed over time. When
/// `state_grad_norms` is given it receives ‖∂L/∂s_t‖ for t = T … 1.
ModelParams backward_unroll(const UnrollCache& cache, const ModelParams& params,
                            std::vector<double>* state_grad_norms = nullptr);

/// Copies the running statistics produced by a training forward into params.
/// A training forward makes one update per statistics slot: the batch
/// statistics of every time step mapped to the slot are pooled first.
void commit_bn_statistics(ModelParams& params, const UnrollResult& forward);

/// Replaces the running statistics with the exact average, over `batches`, of
/// the pooled batch statistics at the current weights. No-op without batch
/// norm.
void recalibrate_bn_statistics(ModelParams& params, std::span<const Batch> batches);

/// θ − lr·g for every trainable tensor.
ModelParams sgd_update(const ModelParams& params, const ModelParams& grads, double lr);

/// Greedy decoding with inference-mode batch norm. Ties go to the lowest id.
/// Returns the ids strictly between START and END (or max_len tokens).
std::vector<TokenId> greedy_decode_ids(std::span<const double> feature, const ModelParams& params,
                                       std::size_t max_len);
metrics::TokenSeq greedy_decode(std::span<const double> feature, const ModelParams& params, const Vocab& vocab,
                                std::size_t max_len);

}  // namespace bnrhn
