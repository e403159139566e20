#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "bnrhn/matrix.hpp"

namespace bnrhn::test {

/// splitmix64; independent of the library's own generator so property
/// inputs do not share a stream with anything under test.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  double uniform(double lo = 0.0, double hi = 1.0) {
    return lo + (hi - lo) * static_cast<double>(next() >> 11) * 0x1.0p-53;
  }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(next() % n); }
  std::size_t range(std::size_t lo, std::size_t hi) { return lo + below(hi - lo + 1); }

  Matrix matrix(std::size_t rows, std::size_t cols, double lo = -1.0, double hi = 1.0) {
    Matrix m(rows, cols);
    for (auto& v : m.data()) v = uniform(lo, hi);
    return m;
  }

  /// Tokens drawn from a small alphabet so repeats are common.
  std::vector<std::string> tokens(std::size_t len, std::size_t alphabet = 4) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < len; ++i) out.push_back(std::string(1, static_cast<char>('a' + below(alphabet))));
    return out;
  }

 private:
  std::uint64_t state_;
};

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

inline double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
}

}  // namespace bnrhn::test
