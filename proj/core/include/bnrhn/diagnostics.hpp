#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bnrhn/cells.hpp"
#include "bnrhn/matrix.hpp"

namespace bnrhn {

/// A state transition s_{t-1} -> s_t for one sample (1xF), plus its
/// vector-Jacobian product. `vjp(s, u)` returns uᵀ·∂step(s)/∂s.
struct StateTransition {
  std::function<Matrix(const Matrix& s)> step;
  std::function<Matrix(const Matrix& s, const Matrix& cotangent)> vjp;
};

/// RHN time step with the given input bound, batch norm in inference mode
/// using the statistics of time step `t`.
StateTransition rhn_transition(const RhnParams& params, Matrix x, std::size_t t = 0);

enum class JacobianMethod { analytic, finite_diff };

/// J[i][j] = ∂s_t[i]/∂s_{t−1}[j] at state `s` (must be 1xF). The analytic
/// route pulls back unit covectors; finite_diff uses central differences.
Matrix temporal_jacobian(const StateTransition& cell, const Matrix& s, JacobianMethod method, double h = 1e-6);

struct GershDisc {
  double center = 0.0;
  double radius = 0.0;
};

std::vector<GershDisc> gershgorin_discs(const Matrix& j);

struct ClipResult {
  std::vector<Matrix> grads;
  double pre_norm = 0.0;
  bool clipped = false;
};

/// Rescales all gradients by threshold/norm when their global norm exceeds
/// the threshold.
ClipResult clip_by_global_norm(std::vector<Matrix> grads, double threshold);

struct GradCheckOptions {
  double h = 1e-5;
  double tol = 1e-4;
  /// 0 checks every coordinate; otherwise at most this many per tensor,
  /// chosen by a seeded generator.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  bool pass = true;
};

using ScalarFn = std::function<double(std::span<const Matrix>)>;

/// Compares `analytic` against central differences of `f` at `params`.
/// Relative error is |a−n| / max(|a|, |n|, 1e−8). Throws NumericalError if f
/// is non-finite at a perturbed point, naming the coordinate.
GradCheckReport grad_check(const ScalarFn& f, std::span<const Matrix> params, std::span<const Matrix> analytic,
                           const GradCheckOptions& opts = {});

struct GradTrace {
  /// ‖∂L/∂s_t‖₂ for t = T, T−1, …, 1 (index 0 is the loss time step).
  std::vector<double> step_norms;
  std::vector<double> pre_clip;
  std::vector<double> post_clip;
};

/// Runs the RHN over `inputs` from `s0` (inference-mode batch norm), puts the
/// loss covector `dl_ds_final` on the last state, back-propagates through
/// time and records the per-step state-gradient norms.
GradTrace grad_norm_trace(const RhnParams& params, const Matrix& s0, std::span<const Matrix> inputs,
                          const Matrix& dl_ds_final);

void write_discs_csv(std::ostream& os, std::span<const GershDisc> discs);
void write_trace_csv(std::ostream& os, const GradTrace& trace);

}  // namespace bnrhn
