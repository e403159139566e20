#pragma once

#include <cstddef>
#include <vector>

#include "bnrhn/matrix.hpp"

namespace bnrhn {

/// One batch-normalization site. Running statistics live in S rows ("slots"):
/// S = 1 shares them across every time step through the site; S > 1 keeps one
/// row per time step, with steps past the last row folded into it.
struct BnLayer {
  Matrix gamma;         // 1xF scale
  Matrix beta;          // 1xF shift
  Matrix running_mean;  // SxF
  Matrix running_var;   // SxF, entries >= 0
  double eps = 1e-5;
  double momentum = 0.1;
  /// Number of training-mode updates folded into the running statistics.
  std::size_t updates = 0;
  /// Per-slot update counts (size S).
  std::vector<std::size_t> slot_updates;

  [[nodiscard]] std::size_t width() const noexcept { return gamma.cols(); }
  [[nodiscard]] std::size_t slots() const noexcept { return running_mean.rows(); }
};

struct BnCache {
  Matrix x_hat;  // BxF normalized input
  Matrix std;    // 1xF, sqrt(var + eps) of whichever statistics were used
  Matrix mean;   // 1xF, the statistics used (batch or running)
  Matrix var;    // 1xF
  bool inference = false;
};

struct BnTrainResult {
  Matrix y;
  BnCache cache;
  BnLayer layer;  // running statistics advanced by one update
};

struct BnGrads {
  Matrix dx;
  Matrix dgamma;
  Matrix dbeta;
};

/// gamma = gamma_init, beta = 0, running mean 0, running var 1, no updates.
BnLayer make_bn_layer(std::size_t width, double gamma_init = 0.1, double eps = 1e-5, double momentum = 0.1,
                      std::size_t slots = 1);

/// Normalizes with the batch statistics and returns the layer with slot
/// min(slot, S-1) moved toward them by `momentum`.
BnTrainResult bn_forward_train(const Matrix& x, const BnLayer& layer, std::size_t slot = 0);

/// r <- (1-momentum)·r + momentum·stat on slot min(slot, S-1).
BnLayer bn_update_running(const BnLayer& layer, std::size_t slot, const Matrix& mean, const Matrix& var);

/// Uses the running statistics of slot min(slot, S-1), falling back to the
/// nearest earlier slot that has been updated. Throws
/// UninitializedStatisticsError when no such slot exists.
Matrix bn_forward_infer(const Matrix& x, const BnLayer& layer, std::size_t slot = 0);

struct BnInferResult {
  Matrix y;
  BnCache cache;
};
/// Inference forward that also keeps what the backward pass needs (used for
/// temporal Jacobians under running statistics).
BnInferResult bn_forward_infer_cached(const Matrix& x, const BnLayer& layer, std::size_t slot = 0);

/// Exact gradient of whichever forward produced `cache`. In training mode
/// this includes the dependence of the batch mean and variance on x.
BnGrads bn_backward(const Matrix& dy, const BnCache& cache, const BnLayer& layer);

}  // namespace bnrhn
