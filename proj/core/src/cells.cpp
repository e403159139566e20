#include "bnrhn/cells.hpp"

#include <string>

#include "bnrhn/errors.hpp"
#include "bnrhn/rng.hpp"

namespace bnrhn {

std::string_view to_string(CellKind kind) noexcept {
  switch (kind) {
    case CellKind::lstm:
      return "lstm";
    case CellKind::rhn:
      return "rhn";
    case CellKind::bn_rhn:
      return "bn_rhn";
  }
  return "?";
}

CellKind parse_cell_kind(std::string_view name) {
  if (name == "lstm") return CellKind::lstm;
  if (name == "rhn") return CellKind::rhn;
  if (name == "bn_rhn") return CellKind::bn_rhn;
  throw ConfigError("unknown model kind '" + std::string(name) + "' (expected lstm, rhn or bn_rhn)");
}

void RhnParams::validate() const {
  if (per_depth.empty()) throw ConfigError("RHN depth must be at least 1");
  const std::size_t f = per_depth.front().r_h.cols();
  for (std::size_t d = 0; d < per_depth.size(); ++d) {
    const auto& p = per_depth[d];
    const std::string where = "depth " + std::to_string(d + 1);
    if ((d == 0) != p.has_input()) {
      throw ConfigError(where + (d == 0 ? ": input weights missing" : ": input weights present beyond depth 1"));
    }
    if (p.has_carry() != (variant == Variant::decoupled_bn)) {
      throw ConfigError(where + ": carry-gate weights must exist exactly in the decoupled variant");
    }
    if (p.r_h.rows() != f || p.r_h.cols() != f || !p.r_t.same_shape(p.r_h) || p.b_h.cols() != f ||
        p.b_t.cols() != f) {
      throw ConfigError(where + ": recurrent shapes inconsistent with hidden width " + std::to_string(f));
    }
  }
  if (variant == Variant::coupled && (!state_bn.empty() || input_bn)) {
    throw ConfigError("batch-norm sites supplied to the coupled variant");
  }
  if (variant == Variant::decoupled_bn && (state_bn.empty() || !input_bn)) {
    throw ConfigError("decoupled variant requires batch-norm sites on the depth-1 loop inputs");
  }
  if (state_bn.size() > per_depth.size()) throw ConfigError("more state batch-norm sites than depths");
}

namespace {

Matrix preact(const Matrix* x_hat, const std::optional<Matrix>& w, const Matrix& s_hat, const Matrix& r,
              const Matrix& b) {
  Matrix a = matmul(s_hat, r);
  if (x_hat != nullptr) a = ew(EwOp::add, a, matmul(*x_hat, *w));
  return add_row(a, b);
}

struct Normalized {
  Matrix value;
  std::optional<BnCache> cache;
  std::optional<BnLayer> layer;
};

Normalized maybe_normalize(const Matrix& v, const BnLayer* bn, Mode mode, std::size_t slot) {
  if (bn == nullptr) return {v, std::nullopt, std::nullopt};
  if (mode == Mode::train) {
    auto r = bn_forward_train(v, *bn, slot);
    return {std::move(r.y), std::move(r.cache), std::move(r.layer)};
  }
  auto r = bn_forward_infer_cached(v, *bn, slot);
  return {std::move(r.y), std::move(r.cache), *bn};
}

void check_step_config(const Matrix* x, const HighwayDepthParams& p, Variant variant, HighwayBn bn) {
  if (variant == Variant::coupled && (bn.state != nullptr || bn.input != nullptr)) {
    throw ConfigError("highway_step: batch norm supplied to the coupled variant");
  }
  if (p.has_input() && x == nullptr) throw ConfigError("highway_step: missing input x at depth 1");
  if (!p.has_input() && x != nullptr) throw ConfigError("highway_step: input x supplied to a depth without W");
  if (p.has_carry() != (variant == Variant::decoupled_bn)) {
    throw ConfigError("highway_step: carry-gate weights must exist exactly in the decoupled variant");
  }
  if (variant == Variant::decoupled_bn && x != nullptr && (bn.state == nullptr || bn.input == nullptr)) {
    throw ConfigError("highway_step: decoupled variant needs batch norm on both depth-1 loop inputs");
  }
  if (bn.input != nullptr && x == nullptr) throw ConfigError("highway_step: input batch norm without input");
}

}  // namespace

HighwayStepResult highway_step(const Matrix& s_in, const Matrix* x, const HighwayDepthParams& p, Variant variant,
                               HighwayBn bn, Mode mode) {
  check_step_config(x, p, variant, bn);
  if (s_in.cols() != p.r_h.rows()) {
    throw ShapeError("highway_step: state " + s_in.shape_str() + " vs R_H " + p.r_h.shape_str());
  }

  HighwayStepResult out;
  auto& cache = out.cache;
  cache.variant = variant;
  cache.mode = mode;
  cache.s_in = s_in;

  auto sn = maybe_normalize(s_in, bn.state, mode, bn.slot);
  cache.s_hat = std::move(sn.value);
  cache.state_bn = std::move(sn.cache);
  out.state_bn = std::move(sn.layer);

  const Matrix* x_hat = nullptr;
  if (x != nullptr) {
    auto xn = maybe_normalize(*x, bn.input, mode, bn.slot);
    cache.x_hat = std::move(xn.value);
    cache.input_bn = std::move(xn.cache);
    out.input_bn = std::move(xn.layer);
    x_hat = &*cache.x_hat;
  }

  cache.h = map(MapOp::tanh, preact(x_hat, p.w_h, cache.s_hat, p.r_h, p.b_h));
  cache.t = map(MapOp::sigmoid, preact(x_hat, p.w_t, cache.s_hat, p.r_t, p.b_t));
  if (variant == Variant::coupled) {
    cache.c = ones_like(cache.t);
    axpy(cache.c, -1.0, cache.t);
  } else {
    cache.c = map(MapOp::sigmoid, preact(x_hat, p.w_c, cache.s_hat, *p.r_c, *p.b_c));
  }

  out.s_out = ew(EwOp::add, ew(EwOp::mul, cache.h, cache.t), ew(EwOp::mul, s_in, cache.c));
  return out;
}

HighwayBackResult highway_step_backward(const Matrix& ds_out, const HighwayCache& cache, const HighwayDepthParams& p,
                                        HighwayBn bn) {
  if (!ds_out.same_shape(cache.s_in)) {
    throw InternalError("highway_step_backward: gradient " + ds_out.shape_str() + " vs cached state " +
                        cache.s_in.shape_str());
  }
  if (cache.state_bn.has_value() != (bn.state != nullptr) || cache.x_hat.has_value() != p.has_input()) {
    throw InternalError("highway_step_backward: cache does not match parameters");
  }

  const bool coupled = cache.variant == Variant::coupled;
  const Matrix dh = ew(EwOp::mul, ds_out, cache.t);
  Matrix dt = ew(EwOp::mul, ds_out, cache.h);
  const Matrix dc = ew(EwOp::mul, ds_out, cache.s_in);
  if (coupled) axpy(dt, -1.0, dc);  // c = 1 − t

  const Matrix da_h = ew(EwOp::mul, dh, map(MapOp::tanh_prime_from_y, cache.h));
  const Matrix da_t = ew(EwOp::mul, dt, map(MapOp::sigmoid_prime_from_y, cache.t));
  std::optional<Matrix> da_c;
  if (!coupled) da_c = ew(EwOp::mul, dc, map(MapOp::sigmoid_prime_from_y, cache.c));

  HighwayBackResult out;
  auto& g = out.grads;
  g.r_h = matmul_tn(cache.s_hat, da_h);
  g.r_t = matmul_tn(cache.s_hat, da_t);
  g.b_h = col_sum(da_h);
  g.b_t = col_sum(da_t);
  Matrix ds_hat = ew(EwOp::add, matmul_nt(da_h, p.r_h), matmul_nt(da_t, p.r_t));
  if (da_c) {
    g.r_c = matmul_tn(cache.s_hat, *da_c);
    g.b_c = col_sum(*da_c);
    ds_hat = ew(EwOp::add, ds_hat, matmul_nt(*da_c, *p.r_c));
  }

  out.ds_in = ew(EwOp::mul, ds_out, cache.c);
  if (cache.state_bn) {
    auto bg = bn_backward(ds_hat, *cache.state_bn, *bn.state);
    out.ds_in = ew(EwOp::add, out.ds_in, bg.dx);
    out.state_bn = std::move(bg);
  } else {
    out.ds_in = ew(EwOp::add, out.ds_in, ds_hat);
  }

  if (cache.x_hat) {
    const Matrix& xh = *cache.x_hat;
    g.w_h = matmul_tn(xh, da_h);
    g.w_t = matmul_tn(xh, da_t);
    Matrix dx_hat = ew(EwOp::add, matmul_nt(da_h, *p.w_h), matmul_nt(da_t, *p.w_t));
    if (da_c) {
      g.w_c = matmul_tn(xh, *da_c);
      dx_hat = ew(EwOp::add, dx_hat, matmul_nt(*da_c, *p.w_c));
    }
    if (cache.input_bn) {
      if (bn.input == nullptr) throw InternalError("highway_step_backward: input batch-norm layer missing");
      auto bg = bn_backward(dx_hat, *cache.input_bn, *bn.input);
      out.dx = bg.dx;
      out.input_bn = std::move(bg);
    } else {
      out.dx = std::move(dx_hat);
    }
  }
  return out;
}

namespace {

HighwayBn bn_for_depth(const RhnParams& params, std::size_t d, std::size_t t = 0) {
  if (params.variant == Variant::coupled) return {};
  HighwayBn bn;
  bn.slot = t;
  bn.state = params.state_bn_at(d);
  if (d == 0 && params.input_bn) bn.input = &*params.input_bn;
  return bn;
}

}  // namespace

RhnStepResult rhn_time_step(const Matrix& s_prev, const Matrix& x_t, const RhnParams& params, Mode mode,
                            std::size_t t) {
  RhnStepResult out;
  out.state_bn = params.state_bn;
  out.input_bn = params.input_bn;
  out.cache.depths.reserve(params.depth());

  Matrix s = s_prev;
  for (std::size_t d = 0; d < params.depth(); ++d) {
    auto r = highway_step(s, d == 0 ? &x_t : nullptr, params.per_depth[d], params.variant, bn_for_depth(params, d, t),
                          mode);
    if (r.state_bn) out.state_bn[d] = std::move(*r.state_bn);
    if (r.input_bn) out.input_bn = std::move(r.input_bn);
    s = std::move(r.s_out);
    out.cache.depths.push_back(std::move(r.cache));
  }
  out.s = std::move(s);
  return out;
}

RhnStepGrads rhn_step_backward(const Matrix& ds, const RhnStepCache& cache, const RhnParams& params) {
  if (cache.depths.size() != params.depth()) {
    throw InternalError("rhn_step_backward: cache depth " + std::to_string(cache.depths.size()) +
                        " vs parameter depth " + std::to_string(params.depth()));
  }
  RhnStepGrads out;
  out.grads = zeros_like(params);
  Matrix g = ds;
  for (std::size_t k = params.depth(); k-- > 0;) {
    const HighwayBn bn = bn_for_depth(params, k);
    auto r = highway_step_backward(g, cache.depths[k], params.per_depth[k], bn);
    out.grads.per_depth[k] = std::move(r.grads);
    if (r.state_bn) {
      out.grads.state_bn[k].gamma = std::move(r.state_bn->dgamma);
      out.grads.state_bn[k].beta = std::move(r.state_bn->dbeta);
    }
    if (r.input_bn) {
      out.grads.input_bn->gamma = std::move(r.input_bn->dgamma);
      out.grads.input_bn->beta = std::move(r.input_bn->dbeta);
    }
    if (r.dx) out.dx = std::move(*r.dx);
    g = std::move(r.ds_in);
  }
  out.ds_prev = std::move(g);
  return out;
}

LstmStepResult lstm_step(const Matrix& h_prev, const Matrix& c_prev, const Matrix& x_t, const LstmParams& p) {
  if (!h_prev.same_shape(c_prev) || h_prev.rows() != x_t.rows()) {
    throw ShapeError("lstm_step: h " + h_prev.shape_str() + ", c " + c_prev.shape_str() + ", x " + x_t.shape_str());
  }
  auto gate = [&](const Matrix& w, const Matrix& r, const Matrix& b) {
    return add_row(ew(EwOp::add, matmul(x_t, w), matmul(h_prev, r)), b);
  };
  LstmStepResult out;
  auto& k = out.cache;
  k.x = x_t;
  k.h_prev = h_prev;
  k.c_prev = c_prev;
  k.i = map(MapOp::sigmoid, gate(p.w_i, p.r_i, p.b_i));
  k.f = map(MapOp::sigmoid, gate(p.w_f, p.r_f, p.b_f));
  k.o = map(MapOp::sigmoid, gate(p.w_o, p.r_o, p.b_o));
  k.g = map(MapOp::tanh, gate(p.w_g, p.r_g, p.b_g));
  out.c = ew(EwOp::add, ew(EwOp::mul, k.f, c_prev), ew(EwOp::mul, k.i, k.g));
  k.tanh_c = map(MapOp::tanh, out.c);
  out.h = ew(EwOp::mul, k.o, k.tanh_c);
  return out;
}

LstmStepGrads lstm_step_backward(const Matrix& dh, const Matrix& dc, const LstmCache& k, const LstmParams& p) {
  if (!dh.same_shape(k.h_prev) || !dc.same_shape(k.c_prev)) {
    throw InternalError("lstm_step_backward: gradient shapes do not match cache");
  }
  const Matrix d_o = ew(EwOp::mul, dh, k.tanh_c);
  Matrix dc_total = ew(EwOp::mul, ew(EwOp::mul, dh, k.o), map(MapOp::tanh_prime_from_y, k.tanh_c));
  dc_total = ew(EwOp::add, dc_total, dc);

  const Matrix da_i = ew(EwOp::mul, ew(EwOp::mul, dc_total, k.g), map(MapOp::sigmoid_prime_from_y, k.i));
  const Matrix da_f = ew(EwOp::mul, ew(EwOp::mul, dc_total, k.c_prev), map(MapOp::sigmoid_prime_from_y, k.f));
  const Matrix da_o = ew(EwOp::mul, d_o, map(MapOp::sigmoid_prime_from_y, k.o));
  const Matrix da_g = ew(EwOp::mul, ew(EwOp::mul, dc_total, k.i), map(MapOp::tanh_prime_from_y, k.g));

  LstmStepGrads out;
  auto& g = out.grads;
  g.w_i = matmul_tn(k.x, da_i);
  g.w_f = matmul_tn(k.x, da_f);
  g.w_o = matmul_tn(k.x, da_o);
  g.w_g = matmul_tn(k.x, da_g);
  g.r_i = matmul_tn(k.h_prev, da_i);
  g.r_f = matmul_tn(k.h_prev, da_f);
  g.r_o = matmul_tn(k.h_prev, da_o);
  g.r_g = matmul_tn(k.h_prev, da_g);
  g.b_i = col_sum(da_i);
  g.b_f = col_sum(da_f);
  g.b_o = col_sum(da_o);
  g.b_g = col_sum(da_g);

  out.dx = matmul_nt(da_i, p.w_i);
  axpy(out.dx, 1.0, matmul_nt(da_f, p.w_f));
  axpy(out.dx, 1.0, matmul_nt(da_o, p.w_o));
  axpy(out.dx, 1.0, matmul_nt(da_g, p.w_g));
  out.dh_prev = matmul_nt(da_i, p.r_i);
  axpy(out.dh_prev, 1.0, matmul_nt(da_f, p.r_f));
  axpy(out.dh_prev, 1.0, matmul_nt(da_o, p.r_o));
  axpy(out.dh_prev, 1.0, matmul_nt(da_g, p.r_g));
  out.dc_prev = ew(EwOp::mul, dc_total, k.f);
  return out;
}

namespace {

Matrix uniform_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(-scale, scale);
  return m;
}

}  // namespace

CellParams init_params(const CellSpec& spec, const InitOptions& init) {
  if (spec.input_width == 0 || spec.hidden_width == 0 || spec.depth == 0) {
    throw ConfigError("init_params: dimensions must be positive (input " + std::to_string(spec.input_width) +
                      ", hidden " + std::to_string(spec.hidden_width) + ", depth " + std::to_string(spec.depth) + ")");
  }
  if (init.init_scale < 0.0) throw ConfigError("init_params: init_scale must be non-negative");
  Rng rng(init.seed);
  const std::size_t fi = spec.input_width;
  const std::size_t f = spec.hidden_width;
  const double s = init.init_scale;

  if (spec.kind == CellKind::lstm) {
    LstmParams p;
    p.w_i = uniform_matrix(rng, fi, f, s);
    p.w_f = uniform_matrix(rng, fi, f, s);
    p.w_o = uniform_matrix(rng, fi, f, s);
    p.w_g = uniform_matrix(rng, fi, f, s);
    p.r_i = uniform_matrix(rng, f, f, s);
    p.r_f = uniform_matrix(rng, f, f, s);
    p.r_o = uniform_matrix(rng, f, f, s);
    p.r_g = uniform_matrix(rng, f, f, s);
    p.b_i = Matrix(1, f);
    p.b_f = Matrix(1, f);
    p.b_o = Matrix(1, f);
    p.b_g = Matrix(1, f);
    return p;
  }

  RhnParams p;
  p.variant = spec.kind == CellKind::rhn ? Variant::coupled : Variant::decoupled_bn;
  const bool decoupled = p.variant == Variant::decoupled_bn;
  for (std::size_t d = 0; d < spec.depth; ++d) {
    HighwayDepthParams hp;
    if (d == 0) {
      hp.w_h = uniform_matrix(rng, fi, f, s);
      hp.w_t = uniform_matrix(rng, fi, f, s);
      if (decoupled) hp.w_c = uniform_matrix(rng, fi, f, s);
    }
    hp.r_h = uniform_matrix(rng, f, f, s);
    hp.r_t = uniform_matrix(rng, f, f, s);
    if (decoupled) hp.r_c = uniform_matrix(rng, f, f, s);
    hp.b_h = Matrix(1, f);
    hp.b_t = Matrix(1, f, init.transform_bias);
    if (decoupled) hp.b_c = Matrix(1, f, init.carry_bias);
    p.per_depth.push_back(std::move(hp));
  }
  if (decoupled) {
    const std::size_t sites = spec.bn_every_depth ? spec.depth : 1;
    for (std::size_t d = 0; d < sites; ++d) p.state_bn.push_back(make_bn_layer(f, spec.bn_gamma, 1e-5, 0.1, spec.bn_stat_slots));
    p.input_bn = make_bn_layer(fi, spec.bn_gamma, 1e-5, 0.1, spec.bn_stat_slots);
  }
  p.validate();
  return p;
}

RhnParams zeros_like(const RhnParams& p) {
  RhnParams z = p;
  for_each_tensor(z, [](const std::string&, Matrix& m) { m = zeros_like(m); });
  for (auto& bn : z.state_bn) {
    bn.updates = 0;
    bn.slot_updates.assign(bn.slot_updates.size(), 0);
  }
  if (z.input_bn) {
    z.input_bn->updates = 0;
    z.input_bn->slot_updates.assign(z.input_bn->slot_updates.size(), 0);
  }
  return z;
}

LstmParams zeros_like(const LstmParams& p) {
  LstmParams z = p;
  for_each_tensor(z, [](const std::string&, Matrix& m) { m = zeros_like(m); });
  return z;
}

CellParams zeros_like(const CellParams& p) {
  return std::visit([](const auto& v) -> CellParams { return zeros_like(v); }, p);
}

namespace {

template <class P>
void accumulate_impl(P& acc, const P& g) {
  std::vector<const Matrix*> src;
  for_each_tensor(g, [&](const std::string&, const Matrix& m) { src.push_back(&m); });
  std::size_t i = 0;
  for_each_tensor(acc, [&](const std::string& name, Matrix& m) {
    if (i >= src.size()) throw InternalError("accumulate: structure mismatch at " + name);
    axpy(m, 1.0, *src[i++]);
  });
  if (i != src.size()) throw InternalError("accumulate: structure mismatch");
}

}  // namespace

void accumulate(RhnParams& acc, const RhnParams& g) { accumulate_impl(acc, g); }
void accumulate(LstmParams& acc, const LstmParams& g) { accumulate_impl(acc, g); }

}  // namespace bnrhn
