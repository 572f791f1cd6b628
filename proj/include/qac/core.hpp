#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace qac {

// Dense types. Rows index batch elements throughout the library.

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using RowVector = RowVectorX<double>;
using Index = Eigen::Index;

using Rng = std::mt19937_64;

/// Raised when tensor dimensions do not line up.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a caller breaks a documented precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

/// Uniform on [0, 1).
inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

/// Uniform on the open interval (lo, hi).
inline double uniform_open(Rng& rng, double lo, double hi) {
  for (;;) {
    const double u = std::uniform_real_distribution<double>(lo, hi)(rng);
    if (u > lo) return u;
  }
}

inline double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

inline Matrix standard_normal(Rng& rng, Index rows, Index cols) {
  Matrix out(rows, cols);
  // Row-major fill so that draws are consumed batch element by batch element.
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) out(r, c) = standard_normal(rng);
  return out;
}

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ContractError(what);
}

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace qac
