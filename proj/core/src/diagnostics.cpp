#include "bnrhn/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "bnrhn/errors.hpp"
#include "bnrhn/format.hpp"
#include "bnrhn/rng.hpp"

namespace bnrhn {

StateTransition rhn_transition(const RhnParams& params, Matrix x, std::size_t t) {
  params.validate();
  if (x.rows() != 1) throw ShapeError("rhn_transition: input must be a single row, got " + x.shape_str());
  StateTransition tr;
  tr.step = [params, x, t](const Matrix& s) { return rhn_time_step(s, x, params, Mode::infer, t).s; };
  tr.vjp = [params, x, t](const Matrix& s, const Matrix& u) {
    auto fwd = rhn_time_step(s, x, params, Mode::infer, t);
    return rhn_step_backward(u, fwd.cache, params).ds_prev;
  };
  return tr;
}

Matrix temporal_jacobian(const StateTransition& cell, const Matrix& s, JacobianMethod method, double h) {
  if (s.rows() != 1) throw ShapeError("temporal_jacobian: state must have batch size 1, got " + s.shape_str());
  const std::size_t f = s.cols();
  Matrix j(f, f);
  if (method == JacobianMethod::analytic) {
    for (std::size_t i = 0; i < f; ++i) {
      Matrix e(1, f);
      e(0, i) = 1.0;
      const Matrix row = cell.vjp(s, e);
      for (std::size_t k = 0; k < f; ++k) j(i, k) = row(0, k);
    }
    return j;
  }
  for (std::size_t k = 0; k < f; ++k) {
    Matrix plus = s;
    Matrix minus = s;
    plus(0, k) += h;
    minus(0, k) -= h;
    const Matrix fp = cell.step(plus);
    const Matrix fm = cell.step(minus);
    for (std::size_t i = 0; i < f; ++i) j(i, k) = (fp(0, i) - fm(0, i)) / (2.0 * h);
  }
  return j;
}

std::vector<GershDisc> gershgorin_discs(const Matrix& j) {
  if (j.rows() != j.cols()) throw ShapeError("gershgorin_discs: matrix must be square, got " + j.shape_str());
  std::vector<GershDisc> discs(j.rows());
  for (std::size_t i = 0; i < j.rows(); ++i) {
    discs[i].center = j(i, i);
    for (std::size_t k = 0; k < j.cols(); ++k) {
      if (k != i) discs[i].radius += std::abs(j(i, k));
    }
  }
  return discs;
}

ClipResult clip_by_global_norm(std::vector<Matrix> grads, double threshold) {
  if (!(threshold > 0.0)) throw ConfigError("clip_by_global_norm: threshold must be positive");
  ClipResult out;
  out.pre_norm = global_norm(grads);
  if (out.pre_norm > threshold) {
    const double k = threshold / out.pre_norm;
    for (auto& g : grads) {
      for (double& v : g.data()) v *= k;
    }
    out.clipped = true;
  }
  out.grads = std::move(grads);
  return out;
}

GradCheckReport grad_check(const ScalarFn& f, std::span<const Matrix> params, std::span<const Matrix> analytic,
                           const GradCheckOptions& opts) {
  if (params.size() != analytic.size()) throw ShapeError("grad_check: parameter and gradient lists differ in length");
  std::vector<Matrix> theta(params.begin(), params.end());
  Rng rng(opts.seed);
  GradCheckReport rep;

  for (std::size_t ti = 0; ti < theta.size(); ++ti) {
    if (!theta[ti].same_shape(analytic[ti])) {
      throw ShapeError("grad_check: tensor " + std::to_string(ti) + " is " + theta[ti].shape_str() +
                       " but its gradient is " + analytic[ti].shape_str());
    }
    const std::size_t n = theta[ti].size();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (opts.max_coords_per_tensor != 0 && n > opts.max_coords_per_tensor) {
      rng.shuffle(coords);
      coords.resize(opts.max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    for (const std::size_t idx : coords) {
      double& slot = theta[ti].data()[idx];
      const double orig = slot;
      slot = orig + opts.h;
      const double fp = f(theta);
      slot = orig - opts.h;
      const double fm = f(theta);
      slot = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw NumericalError("grad_check: non-finite objective when perturbing tensor " + std::to_string(ti) +
                             " coordinate " + std::to_string(idx));
      }
      const double num = (fp - fm) / (2.0 * opts.h);
      const double ana = analytic[ti].data()[idx];
      const double rel = std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-8});
      ++rep.checked;
      if (rep.checked == 1 || rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_tensor = ti;
        rep.worst_index = idx;
        rep.worst_analytic = ana;
        rep.worst_numeric = num;
      }
    }
  }
  rep.pass = rep.max_rel_err < opts.tol;
  return rep;
}

GradTrace grad_norm_trace(const RhnParams& params, const Matrix& s0, std::span<const Matrix> inputs,
                          const Matrix& dl_ds_final) {
  params.validate();
  if (!dl_ds_final.same_shape(s0)) {
    throw ShapeError("grad_norm_trace: loss covector " + dl_ds_final.shape_str() + " vs state " + s0.shape_str());
  }
  std::vector<RhnStepCache> caches;
  caches.reserve(inputs.size());
  Matrix s = s0;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto r = rhn_time_step(s, inputs[t], params, Mode::infer, t);
    s = std::move(r.s);
    caches.push_back(std::move(r.cache));
  }
  GradTrace trace;
  Matrix g = dl_ds_final;
  for (std::size_t t = caches.size(); t-- > 0;) {
    trace.step_norms.push_back(std::sqrt(sum_squares(g)));
    g = rhn_step_backward(g, caches[t], params).ds_prev;
  }
  return trace;
}

void write_discs_csv(std::ostream& os, std::span<const GershDisc> discs) {
  os << "row,center,radius\n";
  for (std::size_t i = 0; i < discs.size(); ++i) {
    os << i << ',' << format_double(discs[i].center) << ',' << format_double(discs[i].radius) << '\n';
  }
}

void write_trace_csv(std::ostream& os, const GradTrace& trace) {
  os << "t,grad_norm\n";
  const std::size_t n = trace.step_norms.size();
  for (std::size_t k = 0; k < n; ++k) os << (n - k) << ',' << format_double(trace.step_norms[k]) << '\n';
}

}  // namespace bnrhn
