#include "bnrhn/model.hpp"

#include <algorithm>
#include <cmath>

#include "bnrhn/errors.hpp"
#include "bnrhn/rng.hpp"

namespace bnrhn {

CellSpec ModelSpec::cell_spec() const {
  CellSpec c;
  c.kind = kind;
  c.input_width = embed;
  c.hidden_width = hidden;
  c.depth = depth;
  c.bn_every_depth = bn_every_depth;
  c.bn_gamma = bn_gamma;
  c.bn_stat_slots = bn_stat_slots;
  return c;
}

namespace {

Matrix uniform_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(-scale, scale);
  return m;
}

// Cell weights draw from their own stream so that changing the embedding or
// output widths does not reshuffle them.
constexpr std::uint64_t kCellStream = 0x9E3779B97F4A7C15ULL;

}  // namespace

ModelParams init_model(const ModelSpec& spec, const InitOptions& init) {
  if (spec.vocab_size < Vocab::kReserved || spec.embed == 0 || spec.hidden == 0 || spec.feature_width == 0 ||
      spec.depth == 0) {
    throw ConfigError("init_model: vocab_size must be >= 4 and every width and the depth positive");
  }
  Rng rng(init.seed);
  ModelParams p;
  p.spec = spec;
  p.embedding = uniform_matrix(rng, spec.vocab_size, spec.embed, init.init_scale);
  p.feat_w = uniform_matrix(rng, spec.feature_width, spec.hidden, init.init_scale);
  p.feat_b = Matrix(1, spec.hidden);
  p.out_w = uniform_matrix(rng, spec.hidden, spec.vocab_size, init.init_scale);
  p.out_b = Matrix(1, spec.vocab_size);
  InitOptions cell_init = init;
  cell_init.seed = init.seed ^ kCellStream;
  p.cell = init_params(spec.cell_spec(), cell_init);
  return p;
}

ModelParams zeros_like(const ModelParams& p) {
  ModelParams z = p;
  z.embedding = zeros_like(p.embedding);
  z.feat_w = zeros_like(p.feat_w);
  z.feat_b = zeros_like(p.feat_b);
  z.out_w = zeros_like(p.out_w);
  z.out_b = zeros_like(p.out_b);
  z.cell = zeros_like(p.cell);
  return z;
}

std::vector<Matrix> flatten(const ModelParams& p) {
  std::vector<Matrix> out;
  for_each_tensor(p, [&](const std::string&, const Matrix& m) { out.push_back(m); });
  return out;
}

void assign(ModelParams& p, std::span<const Matrix> tensors) {
  std::size_t i = 0;
  for_each_tensor(p, [&](const std::string& name, Matrix& m) {
    if (i >= tensors.size()) throw ShapeError("assign: too few tensors, missing " + name);
    if (!m.same_shape(tensors[i])) {
      throw ShapeError("assign: " + name + " is " + m.shape_str() + ", got " + tensors[i].shape_str());
    }
    m = tensors[i++];
  });
  if (i != tensors.size()) throw ShapeError("assign: too many tensors");
}

std::vector<std::string> tensor_names(const ModelParams& p) {
  std::vector<std::string> out;
  for_each_tensor(p, [&](const std::string& name, const Matrix&) { out.push_back(name); });
  return out;
}

Batch make_batch(std::span<const CaptionSample> samples, std::span<const std::size_t> indices, const Vocab& vocab,
                 std::size_t max_len) {
  if (indices.empty()) throw DataError("make_batch: empty batch");
  if (max_len == 0) throw ConfigError("make_batch: max_len must be positive");
  const std::size_t b = indices.size();
  const std::size_t width = samples[indices.front()].feature.size();

  std::vector<std::vector<TokenId>> seqs;  // START w1 … wn END
  std::size_t steps = 0;
  Batch batch;
  batch.features = Matrix(b, width);
  for (std::size_t r = 0; r < b; ++r) {
    const auto& s = samples[indices[r]];
    if (s.references.empty()) throw DataError("make_batch: sample '" + s.id + "' has no reference");
    if (s.feature.size() != width) throw DataError("make_batch: sample '" + s.id + "' has a different feature width");
    batch.ids.push_back(s.id);
    std::copy(s.feature.begin(), s.feature.end(), batch.features.row(r).begin());
    std::vector<TokenId> seq{Vocab::kStart};
    for (const auto& tok : s.references.front()) seq.push_back(vocab.id(tok));
    seq.push_back(Vocab::kEnd);
    steps = std::max(steps, std::min(seq.size() - 1, max_len));
    seqs.push_back(std::move(seq));
  }

  batch.inputs.assign(steps, std::vector<TokenId>(b, Vocab::kPad));
  batch.targets.assign(steps, std::vector<TokenId>(b, Vocab::kPad));
  batch.mask.assign(steps, std::vector<double>(b, 0.0));
  for (std::size_t r = 0; r < b; ++r) {
    const auto& seq = seqs[r];
    for (std::size_t t = 0; t < steps && t + 1 < seq.size(); ++t) {
      batch.inputs[t][r] = seq[t];
      batch.targets[t][r] = seq[t + 1];
      batch.mask[t][r] = 1.0;
    }
  }
  return batch;
}

XentResult softmax_xent(const Matrix& logits, std::span<const TokenId> targets, std::span<const double> mask,
                        std::optional<double> normalizer) {
  const std::size_t b = logits.rows();
  const std::size_t v = logits.cols();
  if (targets.size() != b || mask.size() != b) {
    throw ShapeError("softmax_xent: " + std::to_string(targets.size()) + " targets and " +
                     std::to_string(mask.size()) + " mask entries for logits " + logits.shape_str());
  }
  double mask_sum = 0.0;
  for (double m : mask) mask_sum += m;
  const double norm = normalizer.value_or(mask_sum);

  XentResult out;
  out.dlogits = Matrix(b, v);
  if (mask_sum == 0.0 || norm <= 0.0) {
    out.all_masked = true;
    return out;
  }
  for (std::size_t r = 0; r < b; ++r) {
    if (mask[r] == 0.0) continue;
    if (targets[r] >= v) {
      throw DataError("softmax_xent: target id " + std::to_string(targets[r]) + " out of range for " +
                      std::to_string(v) + " classes");
    }
    const auto row = logits.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double x : row) z += std::exp(x - mx);
    const double lse = mx + std::log(z);
    out.loss += mask[r] * (lse - row[targets[r]]);
    auto d = out.dlogits.row(r);
    const double k = mask[r] / norm;
    for (std::size_t c = 0; c < v; ++c) d[c] = k * std::exp(row[c] - lse);
    d[targets[r]] -= k;
  }
  out.loss /= norm;
  return out;
}

namespace {

Matrix gather_rows(const Matrix& table, std::span<const TokenId> ids) {
  Matrix out(ids.size(), table.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const auto src = table.row(ids[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

Matrix initial_state(const Matrix& features, const ModelParams& p) {
  return map(MapOp::tanh, add_row(matmul(features, p.feat_w), p.feat_b));
}

Matrix logits_of(const Matrix& s, const ModelParams& p) { return add_row(matmul(s, p.out_w), p.out_b); }

void check_batch(const Batch& batch, const ModelParams& params) {
  if (batch.features.rows() != batch.size() || batch.features.cols() != params.spec.feature_width) {
    throw DataError("forward_unroll: features " + batch.features.shape_str() + " do not match batch size " +
                    std::to_string(batch.size()) + " and feature width " + std::to_string(params.spec.feature_width));
  }
  const std::size_t v = params.spec.vocab_size;
  for (std::size_t t = 0; t < batch.steps(); ++t) {
    if (batch.inputs[t].size() != batch.size() || batch.targets[t].size() != batch.size() ||
        batch.mask[t].size() != batch.size()) {
      throw DataError("forward_unroll: step " + std::to_string(t) + " has ragged token lists");
    }
    for (std::size_t r = 0; r < batch.size(); ++r) {
      if (batch.inputs[t][r] >= v || (batch.mask[t][r] != 0.0 && batch.targets[t][r] >= v)) {
        throw DataError("forward_unroll: token id out of range for vocabulary of size " + std::to_string(v) +
                        " in sample '" + batch.ids[r] + "' at step " + std::to_string(t));
      }
    }
  }
}

// Statistics of the union of rows over the time steps mapped to `slot`
// (mean of means; mean of variances plus variance of means).
template <class Pick>
std::optional<ColStats> pooled_slot_stats(const BnLayer& layer, const std::vector<RhnStepCache>& steps, Pick pick,
                                          std::size_t slot) {
  std::vector<const BnCache*> group;
  for (std::size_t t = 0; t < steps.size(); ++t) {
    if (std::min(t, layer.slots() - 1) == slot) group.push_back(pick(steps[t]));
  }
  if (group.empty()) return std::nullopt;
  const double k = 1.0 / static_cast<double>(group.size());
  ColStats out{zeros_like(layer.gamma), zeros_like(layer.gamma)};
  for (const BnCache* c : group) axpy(out.mean, k, c->mean);
  for (const BnCache* c : group) {
    for (std::size_t j = 0; j < out.var.cols(); ++j) {
      const double dm = c->mean(0, j) - out.mean(0, j);
      out.var(0, j) += k * (c->var(0, j) + dm * dm);
    }
  }
  return out;
}

// One update per slot. With `cumulative`, the slot's momentum is
// 1/(updates+1) so that repeated calls give an exact running average.
template <class Pick>
void fold_statistics(BnLayer& layer, const std::vector<RhnStepCache>& steps, Pick pick, bool cumulative = false) {
  for (std::size_t slot = 0; slot < layer.slots(); ++slot) {
    const auto stats = pooled_slot_stats(layer, steps, pick, slot);
    if (!stats) continue;
    if (!cumulative) {
      layer = bn_update_running(layer, slot, stats->mean, stats->var);
      continue;
    }
    const double momentum = layer.momentum;
    layer.momentum = 1.0 / static_cast<double>(layer.slot_updates[slot] + 1);
    layer = bn_update_running(layer, slot, stats->mean, stats->var);
    layer.momentum = momentum;
  }
}

template <class Sites>
void fold_all_sites(Sites& state_bn, std::optional<BnLayer>& input_bn, const std::vector<RhnStepCache>& steps,
                    bool cumulative) {
  for (std::size_t d = 0; d < state_bn.size(); ++d) {
    fold_statistics(
        state_bn[d], steps, [d](const RhnStepCache& c) { return &*c.depths[d].state_bn; }, cumulative);
  }
  if (input_bn) {
    fold_statistics(
        *input_bn, steps, [](const RhnStepCache& c) { return &*c.depths[0].input_bn; }, cumulative);
  }
}

}  // namespace

UnrollResult forward_unroll(const Batch& batch, const ModelParams& params, Mode mode) {
  check_batch(batch, params);
  UnrollResult out;
  auto& cache = out.cache;
  cache.inputs = batch.inputs;
  cache.features = batch.features;
  cache.s0 = initial_state(batch.features, params);

  double total = 0.0;
  for (const auto& m : batch.mask) {
    for (double v : m) total += v;
  }
  out.tokens = static_cast<std::size_t>(total);

  const std::size_t steps = batch.steps();
  cache.states.reserve(steps);
  cache.dlogits.reserve(steps);

  auto emit = [&](const Matrix& s, std::size_t t) {
    auto x = softmax_xent(logits_of(s, params), batch.targets[t], batch.mask[t], total);
    out.loss += x.loss;
    cache.dlogits.push_back(std::move(x.dlogits));
  };

  if (const auto* lstm = std::get_if<LstmParams>(&params.cell)) {
    Matrix h = cache.s0;
    Matrix c(h.rows(), h.cols());
    for (std::size_t t = 0; t < steps; ++t) {
      auto r = lstm_step(h, c, gather_rows(params.embedding, batch.inputs[t]), *lstm);
      h = std::move(r.h);
      c = std::move(r.c);
      cache.lstm.push_back(std::move(r.cache));
      emit(h, t);
      cache.states.push_back(h);
    }
    return out;
  }

  const RhnParams& cell = std::get<RhnParams>(params.cell);
  Matrix s = cache.s0;
  for (std::size_t t = 0; t < steps; ++t) {
    auto r = rhn_time_step(s, gather_rows(params.embedding, batch.inputs[t]), cell, mode, t);
    s = std::move(r.s);
    cache.rhn.push_back(std::move(r.cache));
    emit(s, t);
    cache.states.push_back(s);
  }
  out.state_bn = cell.state_bn;
  out.input_bn = cell.input_bn;
  if (mode == Mode::train) fold_all_sites(out.state_bn, out.input_bn, cache.rhn, false);
  return out;
}

ModelParams backward_unroll(const UnrollCache& cache, const ModelParams& params,
                            std::vector<double>* state_grad_norms) {
  ModelParams g = zeros_like(params);
  const std::size_t steps = cache.states.size();
  const bool is_lstm = std::holds_alternative<LstmParams>(params.cell);
  if (cache.dlogits.size() != steps || (is_lstm ? cache.lstm.size() : cache.rhn.size()) != steps) {
    throw InternalError("backward_unroll: cache is incomplete for this model");
  }
  if (state_grad_norms != nullptr) state_grad_norms->clear();

  Matrix ds_next = zeros_like(cache.s0);
  Matrix dc_next = zeros_like(cache.s0);
  for (std::size_t t = steps; t-- > 0;) {
    const Matrix& dlog = cache.dlogits[t];
    axpy(g.out_w, 1.0, matmul_tn(cache.states[t], dlog));
    axpy(g.out_b, 1.0, col_sum(dlog));
    Matrix ds = ew(EwOp::add, ds_next, matmul_nt(dlog, params.out_w));
    if (state_grad_norms != nullptr) state_grad_norms->push_back(std::sqrt(sum_squares(ds)));

    Matrix dx;
    if (is_lstm) {
      auto r = lstm_step_backward(ds, dc_next, cache.lstm[t], std::get<LstmParams>(params.cell));
      accumulate(std::get<LstmParams>(g.cell), r.grads);
      ds_next = std::move(r.dh_prev);
      dc_next = std::move(r.dc_prev);
      dx = std::move(r.dx);
    } else {
      auto r = rhn_step_backward(ds, cache.rhn[t], std::get<RhnParams>(params.cell));
      accumulate(std::get<RhnParams>(g.cell), r.grads);
      ds_next = std::move(r.ds_prev);
      dx = std::move(r.dx);
    }
    const auto& ids = cache.inputs[t];
    for (std::size_t r = 0; r < ids.size(); ++r) {
      auto dst = g.embedding.row(ids[r]);
      const auto src = dx.row(r);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
  }
  const Matrix da = ew(EwOp::mul, ds_next, map(MapOp::tanh_prime_from_y, cache.s0));
  axpy(g.feat_w, 1.0, matmul_tn(cache.features, da));
  axpy(g.feat_b, 1.0, col_sum(da));
  return g;
}

void commit_bn_statistics(ModelParams& params, const UnrollResult& forward) {
  auto* rhn = std::get_if<RhnParams>(&params.cell);
  if (rhn == nullptr || rhn->variant != Variant::decoupled_bn) return;
  if (forward.state_bn.size() != rhn->state_bn.size()) {
    throw InternalError("commit_bn_statistics: forward result has a different number of sites");
  }
  for (std::size_t i = 0; i < rhn->state_bn.size(); ++i) {
    rhn->state_bn[i].running_mean = forward.state_bn[i].running_mean;
    rhn->state_bn[i].running_var = forward.state_bn[i].running_var;
    rhn->state_bn[i].updates = forward.state_bn[i].updates;
    rhn->state_bn[i].slot_updates = forward.state_bn[i].slot_updates;
  }
  if (rhn->input_bn && forward.input_bn) {
    rhn->input_bn->running_mean = forward.input_bn->running_mean;
    rhn->input_bn->running_var = forward.input_bn->running_var;
    rhn->input_bn->updates = forward.input_bn->updates;
    rhn->input_bn->slot_updates = forward.input_bn->slot_updates;
  }
}

void recalibrate_bn_statistics(ModelParams& params, std::span<const Batch> batches) {
  auto* rhn = std::get_if<RhnParams>(&params.cell);
  if (rhn == nullptr || rhn->variant != Variant::decoupled_bn) return;
  if (batches.empty()) throw DataError("recalibrate_bn_statistics: no batches");
  auto reset = [](BnLayer& l) {
    l.running_mean = zeros_like(l.running_mean);
    l.running_var = zeros_like(l.running_var);
    l.slot_updates.assign(l.slots(), 0);
  };
  std::vector<BnLayer> state_bn = rhn->state_bn;
  std::optional<BnLayer> input_bn = rhn->input_bn;
  for (auto& l : state_bn) reset(l);
  if (input_bn) reset(*input_bn);
  for (const Batch& b : batches) {
    const UnrollResult fwd = forward_unroll(b, params, Mode::train);
    fold_all_sites(state_bn, input_bn, fwd.cache.rhn, true);
  }
  rhn->state_bn = std::move(state_bn);
  rhn->input_bn = std::move(input_bn);
}

ModelParams sgd_update(const ModelParams& params, const ModelParams& grads, double lr) {
  ModelParams out = params;
  std::vector<const Matrix*> gs;
  for_each_tensor(grads, [&](const std::string&, const Matrix& m) { gs.push_back(&m); });
  std::size_t i = 0;
  for_each_tensor(out, [&](const std::string& name, Matrix& m) {
    if (i >= gs.size() || !m.same_shape(*gs[i])) throw InternalError("sgd_update: gradient mismatch at " + name);
    axpy(m, -lr, *gs[i++]);
  });
  if (i != gs.size()) throw InternalError("sgd_update: gradient has extra tensors");
  return out;
}

std::vector<TokenId> greedy_decode_ids(std::span<const double> feature, const ModelParams& params,
                                       std::size_t max_len) {
  if (feature.size() != params.spec.feature_width) {
    throw DataError("greedy_decode: feature width " + std::to_string(feature.size()) + " does not match model width " +
                    std::to_string(params.spec.feature_width));
  }
  const Matrix f(1, feature.size(), std::vector<double>(feature.begin(), feature.end()));
  Matrix s = initial_state(f, params);
  Matrix c(1, s.cols());
  std::vector<TokenId> out;
  TokenId token = Vocab::kStart;
  for (std::size_t step = 0; step < max_len; ++step) {
    const TokenId in[] = {token};
    const Matrix x = gather_rows(params.embedding, in);
    if (const auto* lstm = std::get_if<LstmParams>(&params.cell)) {
      auto r = lstm_step(s, c, x, *lstm);
      s = std::move(r.h);
      c = std::move(r.c);
    } else {
      s = rhn_time_step(s, x, std::get<RhnParams>(params.cell), Mode::infer, step).s;
    }
    const Matrix logits = logits_of(s, params);
    const auto row = logits.row(0);
    // max_element keeps the first maximum: lowest id wins ties.
    token = static_cast<TokenId>(std::max_element(row.begin(), row.end()) - row.begin());
    if (token == Vocab::kEnd) break;
    out.push_back(token);
  }
  return out;
}

metrics::TokenSeq greedy_decode(std::span<const double> feature, const ModelParams& params, const Vocab& vocab,
                                std::size_t max_len) {
  metrics::TokenSeq out;
  for (const TokenId id : greedy_decode_ids(feature, params, max_len)) out.push_back(vocab.token(id));
  return out;
}

}  // namespace bnrhn
