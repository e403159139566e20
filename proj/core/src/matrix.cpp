#include "bnrhn/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bnrhn/errors.hpp"

namespace bnrhn {

namespace {

void require_positive(std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) {
    throw ShapeError("matrix dimensions must be positive, got " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

void require_same(const Matrix& a, const Matrix& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
}

void require_row(const Matrix& a, const Matrix& row, const char* what) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ShapeError(std::string(what) + ": expected 1x" + std::to_string(a.cols()) + " row, got " +
                     row.shape_str());
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill) : rows_(rows), cols_(cols) {
  require_positive(rows, cols);
  data_.assign(rows * cols, fill);
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require_positive(rows, cols);
  if (data_.size() != rows * cols) {
    throw ShapeError("matrix data length " + std::to_string(data_.size()) + " does not match " + shape_str());
  }
  if (!all_finite()) throw NumericalError("matrix constructed with non-finite entry");
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Matrix::shape_str() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: cannot multiply " + a.shape_str() + " by " + b.shape_str());
  Matrix out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* o = out.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* br = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) o[j] += aik * br[j];
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: cannot multiply transpose of " + a.shape_str() + " by " + b.shape_str());
  }
  Matrix out(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* br = b.row(k).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      double* o = out.row(i).data();
      for (std::size_t j = 0; j < n; ++j) o[j] += aki * br[j];
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: cannot multiply " + a.shape_str() + " by transpose of " + b.shape_str());
  }
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto ar = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const auto br = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < ar.size(); ++k) acc += ar[k] * br[k];
      out(i, j) = acc;
    }
  }
  return out;
}

Matrix ew(EwOp op, const Matrix& a, const Matrix& b) {
  require_same(a, b, "ew");
  Matrix out = a;
  auto o = out.data();
  const auto bd = b.data();
  switch (op) {
    case EwOp::add:
      for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[i];
      break;
    case EwOp::sub:
      for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bd[i];
      break;
    case EwOp::mul:
      for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bd[i];
      break;
  }
  return out;
}

namespace {

// Largest double below 1. Saturated activations are kept strictly inside
// their open ranges.
constexpr double kBelowOne = 1.0 - 0x1.0p-53;

}  // namespace

double sigmoid(double x) noexcept {
  double y;
  if (x >= 0.0) {
    y = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    y = e / (1.0 + e);
  }
  return std::clamp(y, std::numeric_limits<double>::min(), kBelowOne);
}

Matrix map(MapOp op, const Matrix& a) {
  Matrix out = a;
  for (double& v : out.data()) {
    switch (op) {
      case MapOp::tanh:
        v = std::clamp(std::tanh(v), -kBelowOne, kBelowOne);
        break;
      case MapOp::sigmoid:
        v = sigmoid(v);
        break;
      case MapOp::tanh_prime_from_y:
        v = 1.0 - v * v;
        break;
      case MapOp::sigmoid_prime_from_y:
        v = v * (1.0 - v);
        break;
    }
  }
  return out;
}

ColStats col_stats(const Matrix& a) {
  if (a.empty()) throw ShapeError("col_stats: empty matrix");
  const double n = static_cast<double>(a.rows());
  // Shifted by the first row so a constant column yields its value and a
  // variance of exactly zero.
  const auto pivot = a.row(0);
  Matrix mean(1, a.cols());
  Matrix var(1, a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) mean(0, c) += a(r, c) - pivot[c];
  }
  for (std::size_t c = 0; c < a.cols(); ++c) mean(0, c) = pivot[c] + mean(0, c) / n;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) {
      const double d = a(r, c) - mean(0, c);
      var(0, c) += d * d;
    }
  }
  for (double& v : var.data()) v /= n;
  return {std::move(mean), std::move(var)};
}

double global_norm(std::span<const Matrix> ms) {
  double acc = 0.0;
  for (const auto& m : ms) acc += sum_squares(m);
  return std::sqrt(acc);
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
  }
  return out;
}

Matrix zeros_like(const Matrix& a) { return a.empty() ? Matrix{} : Matrix(a.rows(), a.cols(), 0.0); }

Matrix ones_like(const Matrix& a) { return Matrix(a.rows(), a.cols(), 1.0); }

Matrix scale(const Matrix& a, double s) {
  Matrix out = a;
  for (double& v : out.data()) v *= s;
  return out;
}

Matrix add_row(const Matrix& a, const Matrix& row) {
  require_row(a, row, "add_row");
  Matrix out = a;
  const auto rd = row.data();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto o = out.row(r);
    for (std::size_t c = 0; c < o.size(); ++c) o[c] += rd[c];
  }
  return out;
}

Matrix mul_row(const Matrix& a, const Matrix& row) {
  require_row(a, row, "mul_row");
  Matrix out = a;
  const auto rd = row.data();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto o = out.row(r);
    for (std::size_t c = 0; c < o.size(); ++c) o[c] *= rd[c];
  }
  return out;
}

Matrix col_sum(const Matrix& a) {
  Matrix out(1, a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto ar = a.row(r);
    for (std::size_t c = 0; c < ar.size(); ++c) out(0, c) += ar[c];
  }
  return out;
}

void axpy(Matrix& y, double alpha, const Matrix& x) {
  require_same(y, x, "axpy");
  auto yd = y.data();
  const auto xd = x.data();
  for (std::size_t i = 0; i < yd.size(); ++i) yd[i] += alpha * xd[i];
}

double sum_squares(const Matrix& a) noexcept {
  double acc = 0.0;
  for (double v : a.data()) acc += v * v;
  return acc;
}

}  // namespace bnrhn
