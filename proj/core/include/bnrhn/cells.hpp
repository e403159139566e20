#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <variant>
#include <vector>

#include "bnrhn/batchnorm.hpp"
#include "bnrhn/matrix.hpp"

namespace bnrhn {

/// coupled: carry gate is 1 - transform gate.
/// decoupled_bn: independent carry gate, batch-normalized loop inputs.
enum class Variant { coupled, decoupled_bn };
enum class Mode { train, infer };

/// The three recurrent cells the framework compares.
enum class CellKind { lstm, rhn, bn_rhn };

std::string_view to_string(CellKind kind) noexcept;
/// Accepts "lstm", "rhn", "bn_rhn"; throws ConfigError otherwise.
CellKind parse_cell_kind(std::string_view name);

/// Weights for one highway layer inside the recurrence. Input projections
/// exist only at depth 1; carry-gate fields exist only when decoupled.
struct HighwayDepthParams {
  std::optional<Matrix> w_h, w_t, w_c;  // F_in x F
  Matrix r_h, r_t;                      // F x F
  std::optional<Matrix> r_c;            // F x F
  Matrix b_h, b_t;                      // 1 x F
  std::optional<Matrix> b_c;            // 1 x F

  [[nodiscard]] bool has_input() const noexcept { return w_h.has_value(); }
  [[nodiscard]] bool has_carry() const noexcept { return r_c.has_value(); }
};

/// A single RHN layer of recurrence depth D. Gradients are stored in the
/// same structure; for those, only trainable fields carry meaning.
struct RhnParams {
  Variant variant = Variant::coupled;
  std::vector<HighwayDepthParams> per_depth;
  /// decoupled_bn only: one site per depth (or just depth 1 when
  /// bn_every_depth is off) normalizing the state entering the gates.
  std::vector<BnLayer> state_bn;
  /// decoupled_bn only: normalizes x at depth 1.
  std::optional<BnLayer> input_bn;

  [[nodiscard]] std::size_t depth() const noexcept { return per_depth.size(); }
  [[nodiscard]] std::size_t hidden_width() const noexcept { return per_depth.front().r_h.cols(); }
  [[nodiscard]] std::size_t input_width() const noexcept { return per_depth.front().w_h->rows(); }
  /// Returns the state batch-norm site for depth index d (0-based), or null.
  [[nodiscard]] const BnLayer* state_bn_at(std::size_t d) const noexcept {
    return d < state_bn.size() ? &state_bn[d] : nullptr;
  }
  /// Throws ConfigError if structural invariants are violated.
  void validate() const;
};

struct LstmParams {
  Matrix w_i, w_f, w_o, w_g;  // F_in x F
  Matrix r_i, r_f, r_o, r_g;  // F x F
  Matrix b_i, b_f, b_o, b_g;  // 1 x F

  [[nodiscard]] std::size_t hidden_width() const noexcept { return r_i.cols(); }
  [[nodiscard]] std::size_t input_width() const noexcept { return w_i.rows(); }
};

using CellParams = std::variant<RhnParams, LstmParams>;

// ---------------------------------------------------------------------------
// Highway step (one depth)

struct HighwayBn {
  const BnLayer* state = nullptr;
  const BnLayer* input = nullptr;
  std::size_t slot = 0;  // time step, selects the running-statistics slot
};

struct HighwayCache {
  Variant variant = Variant::coupled;
  Mode mode = Mode::train;
  Matrix s_in;   // raw state, used on the carry path
  Matrix s_hat;  // state as seen by the gate pre-activations
  std::optional<Matrix> x_hat;
  std::optional<BnCache> state_bn, input_bn;
  Matrix h, t, c;
};

struct HighwayStepResult {
  Matrix s_out;
  HighwayCache cache;
  /// Layers with advanced running statistics (train mode) or copies (infer).
  std::optional<BnLayer> state_bn, input_bn;
};

/// s_out = h ⊙ t + s_in ⊙ c, with h = tanh(x̂W_H + ŝR_H + b_H),
/// t = σ(x̂W_T + ŝR_T + b_T) and c = 1 − t (coupled) or
/// c = σ(x̂W_C + ŝR_C + b_C) (decoupled). ŝ and x̂ are the batch-normalized
/// state and input when the corresponding site is supplied.
HighwayStepResult highway_step(const Matrix& s_in, const Matrix* x, const HighwayDepthParams& p, Variant variant,
                               HighwayBn bn, Mode mode);

struct HighwayBackResult {
  Matrix ds_in;
  std::optional<Matrix> dx;
  HighwayDepthParams grads;
  std::optional<BnGrads> state_bn, input_bn;  // dgamma/dbeta of the sites used
};

HighwayBackResult highway_step_backward(const Matrix& ds_out, const HighwayCache& cache, const HighwayDepthParams& p,
                                        HighwayBn bn);

// ---------------------------------------------------------------------------
// Full RHN time step (depth 1..D)

struct RhnStepCache {
  std::vector<HighwayCache> depths;
};

struct RhnStepResult {
  Matrix s;
  RhnStepCache cache;
  std::vector<BnLayer> state_bn;
  std::optional<BnLayer> input_bn;
};

/// `t` is the 0-based time step, used only to pick batch-norm statistics
/// slots when they are kept per time step.
RhnStepResult rhn_time_step(const Matrix& s_prev, const Matrix& x_t, const RhnParams& params, Mode mode,
                            std::size_t t = 0);

struct RhnStepGrads {
  Matrix ds_prev;
  Matrix dx;
  RhnParams grads;  // trainable fields only
};

RhnStepGrads rhn_step_backward(const Matrix& ds, const RhnStepCache& cache, const RhnParams& params);

// ---------------------------------------------------------------------------
// LSTM baseline

struct LstmCache {
  Matrix x, h_prev, c_prev;
  Matrix i, f, o, g, tanh_c;
};

struct LstmStepResult {
  Matrix h, c;
  LstmCache cache;
};

LstmStepResult lstm_step(const Matrix& h_prev, const Matrix& c_prev, const Matrix& x_t, const LstmParams& p);

struct LstmStepGrads {
  Matrix dh_prev, dc_prev, dx;
  LstmParams grads;
};

LstmStepGrads lstm_step_backward(const Matrix& dh, const Matrix& dc, const LstmCache& cache, const LstmParams& p);

// ---------------------------------------------------------------------------
// Initialization and tensor traversal

struct CellSpec {
  CellKind kind = CellKind::bn_rhn;
  std::size_t input_width = 512;
  std::size_t hidden_width = 512;
  std::size_t depth = 3;
  bool bn_every_depth = true;
  double bn_gamma = 0.1;
  /// 1 shares running statistics over time; n > 1 keeps n per-step slots.
  std::size_t bn_stat_slots = 1;
};

struct InitOptions {
  std::uint64_t seed = 0;
  double init_scale = 0.04;
  double transform_bias = -2.0;
  double carry_bias = 2.0;
};

/// Weights ~ U(−init_scale, init_scale) from the seeded generator; b_T is
/// set to transform_bias, b_C to carry_bias, every other bias to 0.
CellParams init_params(const CellSpec& spec, const InitOptions& init);

RhnParams zeros_like(const RhnParams& p);
LstmParams zeros_like(const LstmParams& p);
CellParams zeros_like(const CellParams& p);

/// Calls f(name, matrix) for every trainable tensor in a fixed order.
/// Batch-norm running statistics are not trainable and are skipped.
template <class P, class F>
  requires std::is_same_v<std::remove_const_t<P>, RhnParams>
void for_each_tensor(P& p, F&& f) {
  for (std::size_t d = 0; d < p.per_depth.size(); ++d) {
    auto& hp = p.per_depth[d];
    const std::string pre = "depth" + std::to_string(d) + ".";
    if (hp.w_h) f(pre + "w_h", *hp.w_h);
    if (hp.w_t) f(pre + "w_t", *hp.w_t);
    if (hp.w_c) f(pre + "w_c", *hp.w_c);
    f(pre + "r_h", hp.r_h);
    f(pre + "r_t", hp.r_t);
    if (hp.r_c) f(pre + "r_c", *hp.r_c);
    f(pre + "b_h", hp.b_h);
    f(pre + "b_t", hp.b_t);
    if (hp.b_c) f(pre + "b_c", *hp.b_c);
  }
  for (std::size_t d = 0; d < p.state_bn.size(); ++d) {
    const std::string pre = "bn_state" + std::to_string(d) + ".";
    f(pre + "gamma", p.state_bn[d].gamma);
    f(pre + "beta", p.state_bn[d].beta);
  }
  if (p.input_bn) {
    f(std::string("bn_input.gamma"), p.input_bn->gamma);
    f(std::string("bn_input.beta"), p.input_bn->beta);
  }
}

template <class P, class F>
  requires std::is_same_v<std::remove_const_t<P>, LstmParams>
void for_each_tensor(P& p, F&& f) {
  f(std::string("w_i"), p.w_i);
  f(std::string("w_f"), p.w_f);
  f(std::string("w_o"), p.w_o);
  f(std::string("w_g"), p.w_g);
  f(std::string("r_i"), p.r_i);
  f(std::string("r_f"), p.r_f);
  f(std::string("r_o"), p.r_o);
  f(std::string("r_g"), p.r_g);
  f(std::string("b_i"), p.b_i);
  f(std::string("b_f"), p.b_f);
  f(std::string("b_o"), p.b_o);
  f(std::string("b_g"), p.b_g);
}

/// Adds every trainable tensor of `g` into `acc` (same structure).
void accumulate(RhnParams& acc, const RhnParams& g);
void accumulate(LstmParams& acc, const LstmParams& g);

}  // namespace bnrhn
