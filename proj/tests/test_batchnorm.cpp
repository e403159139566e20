#include <doctest.h>

#include <cmath>
#include <functional>

#include "bnrhn/batchnorm.hpp"
#include "bnrhn/errors.hpp"
#include "support.hpp"

using namespace bnrhn;
using bnrhn::test::Gen;
using bnrhn::test::rel_err;

namespace {

double weighted_sum(const Matrix& y, const Matrix& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y.data()[i] * w.data()[i];
  return s;
}

/// Central difference of sum(dy ⊙ bn_train(x)) with respect to every entry of
/// `target`, which aliases x, gamma or beta.
Matrix numeric_grad(Matrix& target, const std::function<double()>& f, double h = 1e-5) {
  Matrix g = zeros_like(target);
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double orig = target.data()[i];
    target.data()[i] = orig + h;
    const double up = f();
    target.data()[i] = orig - h;
    const double down = f();
    target.data()[i] = orig;
    g.data()[i] = (up - down) / (2 * h);
  }
  return g;
}

/// Training-mode batch norm evaluated in long double: an independent
/// reimplementation whose finite differences resolve gradients far below the
/// double-precision noise floor (B = 2 gives dx of order eps).
long double bn_objective_ld(const Matrix& x, const Matrix& gamma, const Matrix& beta, double eps, const Matrix& dy) {
  long double total = 0.0L;
  const std::size_t b = x.rows();
  for (std::size_t c = 0; c < x.cols(); ++c) {
    long double mean = 0.0L;
    for (std::size_t r = 0; r < b; ++r) mean += x(r, c);
    mean /= static_cast<long double>(b);
    long double var = 0.0L;
    for (std::size_t r = 0; r < b; ++r) var += (x(r, c) - mean) * (x(r, c) - mean);
    var /= static_cast<long double>(b);
    const long double sd = std::sqrt(var + static_cast<long double>(eps));
    for (std::size_t r = 0; r < b; ++r) {
      total += dy(r, c) * (static_cast<long double>(gamma(0, c)) * (x(r, c) - mean) / sd + beta(0, c));
    }
  }
  return total;
}

Matrix numeric_grad_ld(Matrix& target, const std::function<long double()>& f, double h = 1e-5) {
  Matrix g = zeros_like(target);
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double orig = target.data()[i];
    target.data()[i] = orig + h;
    const long double up = f();
    target.data()[i] = orig - h;
    const long double down = f();
    target.data()[i] = orig;
    g.data()[i] = static_cast<double>((up - down) / (2.0L * ((orig + h) - (orig - h)) / 2.0L));
  }
  return g;
}

double worst(const Matrix& a, const Matrix& n) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, rel_err(a.data()[i], n.data()[i]));
  return m;
}

}  // namespace

TEST_CASE("make_bn_layer defaults") {
  const BnLayer l = make_bn_layer(3);
  CHECK(l.eps == 1e-5);
  CHECK(l.momentum == 0.1);
  CHECK(l.gamma == Matrix(1, 3, 0.1));
  CHECK(l.beta == Matrix(1, 3, 0.0));
  CHECK(l.running_mean == Matrix(1, 3, 0.0));
  CHECK(l.running_var == Matrix(1, 3, 1.0));
  CHECK(l.updates == 0);
  CHECK(l.slots() == 1);
}

TEST_CASE("training forward examples") {
  BnLayer l = make_bn_layer(2, 1.0);
  l.beta = Matrix::from_rows({{0.25, -3.0}});
  auto r = bn_forward_train(Matrix::from_rows({{5, 1}, {5, 1}, {5, 1}}), l);
  CHECK(r.y == Matrix::from_rows({{0.25, -3.0}, {0.25, -3.0}, {0.25, -3.0}}));

  BnLayer tiny = make_bn_layer(1, 1.0, 1e-14);
  r = bn_forward_train(Matrix::from_rows({{1}, {3}}), tiny);
  CHECK(r.y(0, 0) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(r.y(1, 0) == doctest::Approx(1.0).epsilon(1e-12));

  BnLayer zero = make_bn_layer(2, 0.0);
  zero.beta = Matrix::from_rows({{1.5, 2.5}});
  Gen g(21);
  r = bn_forward_train(g.matrix(4, 2, -10, 10), zero);
  for (std::size_t b = 0; b < 4; ++b) CHECK(r.y(b, 0) == 1.5);
}

TEST_CASE("running statistics move by momentum") {
  const BnLayer l = make_bn_layer(1, 1.0);
  const auto r = bn_forward_train(Matrix::from_rows({{1}, {3}}), l);
  CHECK(r.layer.running_mean(0, 0) == doctest::Approx(0.9 * 0.0 + 0.1 * 2.0));
  CHECK(r.layer.running_var(0, 0) == doctest::Approx(0.9 * 1.0 + 0.1 * 1.0));
  CHECK(r.layer.updates == 1);
  CHECK(l.updates == 0);  // input layer untouched
}

TEST_CASE("normalized columns have zero mean and shrunken unit variance") {
  for (const std::size_t b : {2u, 4u, 8u}) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      Gen g(seed * 100 + b);
      const std::size_t f = g.range(1, 16);
      const Matrix x = g.matrix(b, f, -3, 3);
      const BnLayer l = make_bn_layer(f, 1.0);
      const auto r = bn_forward_train(x, l);
      const auto in = col_stats(x);
      const auto out = col_stats(r.y);
      for (std::size_t c = 0; c < f; ++c) {
        CHECK(std::abs(out.mean(0, c)) < 1e-10);
        const double s2 = in.var(0, c);
        CHECK(std::abs(out.var(0, c) - s2 / (s2 + l.eps)) < 1e-6);
      }
    }
  }
}

TEST_CASE("training output ignores the running statistics") {
  Gen g(22);
  const Matrix x = g.matrix(4, 3);
  const BnLayer l = make_bn_layer(3, 0.7);
  const auto first = bn_forward_train(x, l);
  const auto second = bn_forward_train(x, first.layer);
  CHECK(first.y == second.y);
}

TEST_CASE("inference forward") {
  BnLayer l = make_bn_layer(2, 1.0, 1e-5);
  CHECK_THROWS_AS((void)bn_forward_infer(Matrix(1, 2), l), UninitializedStatisticsError);

  l.running_mean = Matrix::from_rows({{0.3, -0.7}});
  l.running_var = Matrix::from_rows({{2.0, 0.5}});
  l.updates = 1;
  l.slot_updates = {1};
  const Matrix y = bn_forward_infer(Matrix::from_rows({{0.3, -0.7}}), l);
  CHECK(y == Matrix::from_rows({{0.0, 0.0}}));

  // gamma 2, beta 1, normalized value 0.5 -> 2.0
  BnLayer a = make_bn_layer(1, 2.0, 1e-12);
  a.beta = Matrix::from_rows({{1.0}});
  a.running_mean = Matrix::from_rows({{1.0}});
  a.running_var = Matrix::from_rows({{4.0}});
  a.updates = 1;
  a.slot_updates = {1};
  CHECK(bn_forward_infer(Matrix::from_rows({{2.0}}), a)(0, 0) == doctest::Approx(2.0).epsilon(1e-10));

  // Batch independence: each row is normalized on its own.
  Gen g(23);
  const Matrix x = g.matrix(5, 1);
  const Matrix full = bn_forward_infer(x, a);
  for (std::size_t b = 0; b < 5; ++b) {
    const Matrix row = Matrix::from_rows({{x(b, 0)}});
    CHECK(bn_forward_infer(row, a)(0, 0) == full(b, 0));
  }
}

TEST_CASE("per-step statistics slots") {
  BnLayer l = make_bn_layer(1, 1.0, 1e-5, 0.5, 3);
  CHECK(l.slots() == 3);
  l = bn_update_running(l, 1, Matrix::from_rows({{4.0}}), Matrix::from_rows({{3.0}}));
  CHECK(l.running_mean(1, 0) == 2.0);
  CHECK(l.running_var(1, 0) == 2.0);
  CHECK(l.running_mean(0, 0) == 0.0);
  CHECK(l.slot_updates == std::vector<std::size_t>{0, 1, 0});

  // Slot 0 has never been updated and has no earlier slot to fall back on.
  CHECK_THROWS_AS((void)bn_forward_infer(Matrix(1, 1), l, 0), UninitializedStatisticsError);
  // Slot 2 falls back to slot 1; steps past the end fold into the last slot.
  const Matrix x = Matrix::from_rows({{2.0}});
  CHECK(bn_forward_infer(x, l, 2) == bn_forward_infer(x, l, 1));
  CHECK(bn_forward_infer(x, l, 9) == bn_forward_infer(x, l, 1));
}

TEST_CASE("backward examples") {
  Gen g(24);
  const Matrix x = g.matrix(4, 3);
  const BnLayer l = make_bn_layer(3, 0.8);
  const auto r = bn_forward_train(x, l);
  const auto zero = bn_backward(Matrix(4, 3), r.cache, l);
  CHECK(zero.dx == Matrix(4, 3));
  CHECK(zero.dgamma == Matrix(1, 3));
  CHECK(zero.dbeta == Matrix(1, 3));

  const Matrix dy = g.matrix(4, 3);
  CHECK(bn_backward(dy, r.cache, l).dbeta == col_sum(dy));
}

TEST_CASE("backward matches finite differences") {
  for (const std::size_t b : {2u, 4u, 8u}) {
    for (const std::size_t f : {1u, 3u, 16u}) {
      for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        Gen g(seed * 1000 + b * 10 + f);
        Matrix x = g.matrix(b, f, -2, 2);
        BnLayer l = make_bn_layer(f);
        l.gamma = g.matrix(1, f, 0.5, 1.5);
        l.beta = g.matrix(1, f);
        const Matrix dy = g.matrix(b, f);
        const auto r = bn_forward_train(x, l);
        const auto grads = bn_backward(dy, r.cache, l);
        const auto f_ld = [&] { return bn_objective_ld(x, l.gamma, l.beta, l.eps, dy); };
        // The oracle computes the same map as the library forward.
        CHECK(std::abs(static_cast<double>(f_ld()) - weighted_sum(r.y, dy)) < 1e-12);
        INFO("B=" << b << " F=" << f << " seed=" << seed);
        CHECK(worst(grads.dx, numeric_grad_ld(x, f_ld)) < 1e-4);
        CHECK(worst(grads.dgamma, numeric_grad_ld(l.gamma, f_ld)) < 1e-4);
        CHECK(worst(grads.dbeta, numeric_grad_ld(l.beta, f_ld)) < 1e-4);
      }
    }
  }
}

TEST_CASE("inference backward matches finite differences") {
  Gen g(25);
  Matrix x = g.matrix(3, 4);
  BnLayer l = make_bn_layer(4, 1.3);
  l = bn_update_running(l, 0, g.matrix(1, 4), g.matrix(1, 4, 0.2, 2.0));
  const Matrix dy = g.matrix(3, 4);
  const auto r = bn_forward_infer_cached(x, l);
  const auto grads = bn_backward(dy, r.cache, l);
  const auto f_val = [&] { return weighted_sum(bn_forward_infer(x, l), dy); };
  CHECK(worst(grads.dx, numeric_grad(x, f_val)) < 1e-4);
}

TEST_CASE("shape mismatch") {
  const BnLayer l = make_bn_layer(3);
  CHECK_THROWS_AS((void)bn_forward_train(Matrix(2, 2), l), ShapeError);
}
