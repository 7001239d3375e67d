#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace cmps {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

/// Raised when a numerically meaningful quantity (norm, fixed point, spectrum)
/// is non-positive, NaN or otherwise corrupted.
class NumericalBreakdown : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Raised when a Taylor recursion hits its order cap before the requested
/// relative cutoff. Carries the offending segment so callers can refine there.
class TruncationError : public std::runtime_error {
public:
  TruncationError(std::size_t segment, double residual, int order)
      : std::runtime_error("Taylor recursion did not converge on segment " +
                           std::to_string(segment) + " (order " + std::to_string(order) +
                           ", residual " + std::to_string(residual) + ")"),
        segment_(segment), residual_(residual), order_(order) {}

  std::size_t segment() const noexcept { return segment_; }
  double residual() const noexcept { return residual_; }
  int order() const noexcept { return order_; }

  TruncationError with_segment(std::size_t segment) const {
    return TruncationError(segment, residual_, order_);
  }

private:
  std::size_t segment_;
  double residual_;
  int order_;
};

inline Matrix zeros(Eigen::Index dim) { return Matrix::Zero(dim, dim); }

inline Matrix identity(Eigen::Index dim) { return Matrix::Identity(dim, dim); }

inline Vector basis_vector(Eigen::Index dim, Eigen::Index index = 0) {
  Vector v = Vector::Zero(dim);
  v(index) = 1.0;
  return v;
}

inline Matrix commutator(const Matrix& a, const Matrix& b) { return a * b - b * a; }

/// tr(a * b) without forming the product.
inline Complex trace_product(const Matrix& a, const Matrix& b) {
  return (a.transpose().array() * b.array()).sum();
}

/// Relative difference |a - b| / max(|a|, |b|, floor).
inline double relative_difference(double a, double b, double floor = 1e-300) {
  const double scale = std::max({std::abs(a), std::abs(b), floor});
  return std::abs(a - b) / scale;
}

}  // namespace cmps
