#include "bnrhn/batchnorm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bnrhn/errors.hpp"

namespace bnrhn {

namespace {

void check_layer(const Matrix& x, const BnLayer& layer, const char* what) {
  const auto f = layer.gamma.cols();
  if (layer.gamma.rows() != 1 || !layer.beta.same_shape(layer.gamma) || layer.running_mean.cols() != f ||
      !layer.running_var.same_shape(layer.running_mean) || layer.slot_updates.size() != layer.running_mean.rows()) {
    throw ShapeError(std::string(what) + ": inconsistent batch-norm layer, gamma " + layer.gamma.shape_str() +
                     " beta " + layer.beta.shape_str() + " running stats " + layer.running_mean.shape_str());
  }
  if (x.cols() != f) {
    throw ShapeError(std::string(what) + ": input " + x.shape_str() + " does not match gamma " +
                     layer.gamma.shape_str());
  }
  if (!(layer.eps > 0.0)) throw ConfigError(std::string(what) + ": eps must be positive");
}

Matrix stat_row(const Matrix& stats, std::size_t r) {
  const auto src = stats.row(r);
  return Matrix(1, stats.cols(), std::vector<double>(src.begin(), src.end()));
}

Matrix normalize(const Matrix& x, const Matrix& mean, const Matrix& std) {
  Matrix out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto o = out.row(r);
    for (std::size_t c = 0; c < o.size(); ++c) o[c] = (o[c] - mean(0, c)) / std(0, c);
  }
  return out;
}

Matrix affine(const Matrix& x_hat, const BnLayer& layer) { return add_row(mul_row(x_hat, layer.gamma), layer.beta); }

}  // namespace

BnLayer make_bn_layer(std::size_t width, double gamma_init, double eps, double momentum, std::size_t slots) {
  if (!(eps > 0.0)) throw ConfigError("batch norm eps must be positive");
  if (slots == 0) throw ConfigError("batch norm needs at least one statistics slot");
  if (!(momentum > 0.0 && momentum < 1.0)) throw ConfigError("batch norm momentum must lie in (0,1)");
  BnLayer layer;
  layer.gamma = Matrix(1, width, gamma_init);
  layer.beta = Matrix(1, width, 0.0);
  layer.running_mean = Matrix(slots, width, 0.0);
  layer.running_var = Matrix(slots, width, 1.0);
  layer.slot_updates.assign(slots, 0);
  layer.eps = eps;
  layer.momentum = momentum;
  return layer;
}

BnTrainResult bn_forward_train(const Matrix& x, const BnLayer& layer, std::size_t slot) {
  check_layer(x, layer, "bn_forward_train");
  auto [mean, var] = col_stats(x);

  Matrix std(1, x.cols());
  for (std::size_t c = 0; c < x.cols(); ++c) std(0, c) = std::sqrt(var(0, c) + layer.eps);

  BnTrainResult out;
  out.cache.x_hat = normalize(x, mean, std);
  out.cache.std = std::move(std);
  out.cache.inference = false;
  out.y = affine(out.cache.x_hat, layer);
  out.layer = bn_update_running(layer, slot, mean, var);
  out.cache.mean = std::move(mean);
  out.cache.var = std::move(var);
  return out;
}

BnLayer bn_update_running(const BnLayer& layer, std::size_t slot, const Matrix& mean, const Matrix& var) {
  if (mean.rows() != 1 || mean.cols() != layer.width() || !var.same_shape(mean)) {
    throw ShapeError("bn_update_running: statistics " + mean.shape_str() + " for a layer of width " +
                     std::to_string(layer.width()));
  }
  BnLayer out = layer;
  const std::size_t r = std::min(slot, layer.slots() - 1);
  const double m = layer.momentum;
  for (std::size_t c = 0; c < layer.width(); ++c) {
    out.running_mean(r, c) = (1.0 - m) * layer.running_mean(r, c) + m * mean(0, c);
    out.running_var(r, c) = (1.0 - m) * layer.running_var(r, c) + m * var(0, c);
  }
  ++out.updates;
  ++out.slot_updates[r];
  return out;
}

BnInferResult bn_forward_infer_cached(const Matrix& x, const BnLayer& layer, std::size_t slot) {
  check_layer(x, layer, "bn_forward_infer");
  std::size_t r = std::min(slot, layer.slots() - 1);
  while (r > 0 && layer.slot_updates[r] == 0) --r;
  if (layer.slot_updates[r] == 0) {
    throw UninitializedStatisticsError("bn_forward_infer: running statistics are uninitialized (no training update)");
  }
  BnInferResult out;
  out.cache.mean = stat_row(layer.running_mean, r);
  out.cache.var = stat_row(layer.running_var, r);
  Matrix std(1, x.cols());
  for (std::size_t c = 0; c < x.cols(); ++c) std(0, c) = std::sqrt(out.cache.var(0, c) + layer.eps);

  out.cache.x_hat = normalize(x, out.cache.mean, std);
  out.cache.std = std::move(std);
  out.cache.inference = true;
  out.y = affine(out.cache.x_hat, layer);
  return out;
}

Matrix bn_forward_infer(const Matrix& x, const BnLayer& layer, std::size_t slot) {
  return bn_forward_infer_cached(x, layer, slot).y;
}

BnGrads bn_backward(const Matrix& dy, const BnCache& cache, const BnLayer& layer) {
  if (!dy.same_shape(cache.x_hat)) {
    throw ShapeError("bn_backward: dy " + dy.shape_str() + " does not match cached input " + cache.x_hat.shape_str());
  }
  if (layer.gamma.cols() != dy.cols()) {
    throw ShapeError("bn_backward: dy " + dy.shape_str() + " does not match gamma " + layer.gamma.shape_str());
  }
  const std::size_t b = dy.rows();
  const std::size_t f = dy.cols();

  BnGrads g;
  g.dbeta = col_sum(dy);
  g.dgamma = col_sum(ew(EwOp::mul, dy, cache.x_hat));
  g.dx = Matrix(b, f);

  if (cache.inference) {
    // Running statistics are constants: the map is affine in x.
    for (std::size_t r = 0; r < b; ++r) {
      for (std::size_t c = 0; c < f; ++c) g.dx(r, c) = dy(r, c) * layer.gamma(0, c) / cache.std(0, c);
    }
    return g;
  }

  // dx = gamma/(B·std) · (B·dy − Σdy − x̂·Σ(dy⊙x̂)), per column.
  const double n = static_cast<double>(b);
  for (std::size_t c = 0; c < f; ++c) {
    const double k = layer.gamma(0, c) / (n * cache.std(0, c));
    const double sum_dy = g.dbeta(0, c);
    const double sum_dy_xhat = g.dgamma(0, c);
    for (std::size_t r = 0; r < b; ++r) {
      g.dx(r, c) = k * (n * dy(r, c) - sum_dy - cache.x_hat(r, c) * sum_dy_xhat);
    }
  }
  return g;
}

}  // namespace bnrhn
