#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace bnrhn {

/// Dense row-major matrix of doubles. Rows are batch samples, columns are
/// features. A default-constructed Matrix is an empty placeholder; every
/// sized constructor requires rows >= 1 and cols >= 1.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  /// Takes ownership of `data`; throws ShapeError on a length mismatch and
  /// NumericalError if any entry is not finite.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }

  [[nodiscard]] std::span<const double> data() const noexcept { return data_; }
  [[nodiscard]] std::span<double> data() noexcept { return data_; }
  [[nodiscard]] std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }
  [[nodiscard]] std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }

  [[nodiscard]] bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }
  [[nodiscard]] bool all_finite() const noexcept;
  /// "RxC", used in error messages.
  [[nodiscard]] std::string shape_str() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class EwOp { add, sub, mul };
enum class MapOp { tanh, sigmoid, tanh_prime_from_y, sigmoid_prime_from_y };

struct ColStats {
  Matrix mean;  // 1xF
  Matrix var;   // 1xF, population variance
};

Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ·b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a·bᵀ without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

Matrix ew(EwOp op, const Matrix& a, const Matrix& b);
Matrix map(MapOp op, const Matrix& a);
ColStats col_stats(const Matrix& a);
double global_norm(std::span<const Matrix> ms);

double sigmoid(double x) noexcept;

Matrix transpose(const Matrix& a);
Matrix zeros_like(const Matrix& a);
Matrix ones_like(const Matrix& a);
Matrix scale(const Matrix& a, double s);
/// a + row broadcast over every row of a; row must be 1 x a.cols().
Matrix add_row(const Matrix& a, const Matrix& row);
/// a ⊙ row broadcast over rows.
Matrix mul_row(const Matrix& a, const Matrix& row);
/// 1 x cols sum over rows.
Matrix col_sum(const Matrix& a);
/// y += alpha * x
void axpy(Matrix& y, double alpha, const Matrix& x);
double sum_squares(const Matrix& a) noexcept;

}  // namespace bnrhn
