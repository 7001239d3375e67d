#pragma once

// Translation-invariant cMPS in the thermodynamic limit. Used to initialize
// the finite-box solver and to supply the bulk energy density e_inf.
//
// Transfer generators act on D x D matrices as
//   T(X)     = Q^dag X + X Q + R^dag X R     (left fixed point l)
//   T^*(X)   = Q X + X Q^dag + R X R^dag     (right fixed point r)
// and are handled as dense D^2 x D^2 matrices on column-major vec(X), where
// vec(A X B) = (B^T (x) A) vec(X).

#include "cmps/lbfgs.hpp"
#include "cmps/mesh.hpp"

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/KroneckerProduct>

#include <algorithm>
#include <random>
#include <tuple>

namespace cmps {

namespace detail {

inline Matrix left_superoperator(const Matrix& q, const Matrix& r) {
  const Matrix id = identity(q.rows());
  return Eigen::kroneckerProduct(id, q.adjoint()).eval() + Eigen::kroneckerProduct(q.transpose(), id).eval() +
         Eigen::kroneckerProduct(r.transpose(), r.adjoint()).eval();
}

inline Matrix right_superoperator(const Matrix& q, const Matrix& r) {
  const Matrix id = identity(q.rows());
  return Eigen::kroneckerProduct(id, q).eval() + Eigen::kroneckerProduct(q.conjugate(), id).eval() +
         Eigen::kroneckerProduct(r.conjugate(), r).eval();
}

inline Matrix unvec(const Vector& v, Eigen::Index dim) { return Eigen::Map<const Matrix>(v.data(), dim, dim); }

inline Vector vec(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

// Eigenvector of the eigenvalue with largest real part, plus that eigenvalue and the gap.
inline std::tuple<Vector, Complex, double> leading_eigenpair(const Matrix& super) {
  Eigen::ComplexEigenSolver<Matrix> solver(super);
  if (solver.info() != Eigen::Success) throw NumericalBreakdown("transfer generator eigensolver failed");
  const auto& values = solver.eigenvalues();
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < values.size(); ++i)
    if (values(i).real() > values(best).real()) best = i;
  double gap = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < values.size(); ++i)
    if (i != best) gap = std::min(gap, values(best).real() - values(i).real());
  return {solver.eigenvectors().col(best), values(best), gap};
}

// Hermitian, positive-trace representative of a fixed point.
inline Matrix fix_phase(Matrix m) {
  const Complex tr = m.trace();
  if (std::abs(tr) == 0.0) throw NumericalBreakdown("fixed point has vanishing trace");
  m /= tr / std::abs(tr);
  return 0.5 * (m + m.adjoint());
}

}  // namespace detail

struct FixedPoints {
  Matrix left;
  Matrix right;
  /// Leading eigenvalue; Q - shift / 2 has leading eigenvalue 0.
  double shift = 0.0;
};

/// Leading left/right fixed points of the transfer generator, normalized to
/// tr(l r) = 1. Throws NumericalBreakdown for a degenerate leading eigenvalue.
inline FixedPoints fixed_points(const Matrix& q, const Matrix& r) {
  const Eigen::Index dim = q.rows();
  if (dim < 1 || q.cols() != dim || r.rows() != dim || r.cols() != dim)
    throw std::invalid_argument("fixed points need square Q and R of equal size");
  auto [lv, lambda, gap_l] = detail::leading_eigenpair(detail::left_superoperator(q, r));
  auto [rv, lambda_r, gap_r] = detail::leading_eigenpair(detail::right_superoperator(q, r));
  const double scale = std::max(1.0, std::abs(lambda));
  if (std::min(gap_l, gap_r) < 1e-10 * scale)
    throw NumericalBreakdown("degenerate leading eigenvalue of the transfer generator (non-injective state)");
  Matrix l = detail::fix_phase(detail::unvec(lv, dim));
  Matrix rr = detail::fix_phase(detail::unvec(rv, dim));
  const double overlap = trace_product(l, rr).real();
  if (!(overlap > 0.0)) throw NumericalBreakdown("fixed points have non-positive overlap");
  l /= std::sqrt(overlap);
  rr /= std::sqrt(overlap);
  return {l, rr, lambda.real()};
}

/// Uniform cMPS with leading eigenvalue shifted to zero and cached fixed points.
struct UniformCmps {
  Matrix q;
  Matrix r;
  Matrix left;
  Matrix right;

  static UniformCmps from(const Matrix& q, const Matrix& r) {
    const auto fp = fixed_points(q, r);
    Matrix shifted = q;
    shifted.diagonal().array() -= 0.5 * fp.shift;
    return {shifted, r, fp.left, fp.right};
  }

  Eigen::Index dimension() const { return q.rows(); }
};

struct UniformEnergy {
  double energy_density = 0.0;
  double density = 0.0;
};

/// e = tr(l [DR r DR^dag - mu R r R^dag + g R^2 r (R^2)^dag]) with DR = [Q, R]
/// and density tr(l R r R^dag), for tr(l r) = 1.
inline UniformEnergy uniform_energy_density(const UniformCmps& u, double mu, double g) {
  const Matrix dr = commutator(u.q, u.r);
  const Matrix r2 = u.r * u.r;
  const Complex kinetic = trace_product(u.left, dr * u.right * dr.adjoint());
  const Complex field = trace_product(u.left, u.r * u.right * u.r.adjoint());
  const Complex pair = trace_product(u.left, r2 * u.right * r2.adjoint());
  const Complex e = kinetic - mu * field + g * pair;
  return {e.real(), field.real()};
}

/// Order parameter |tr(l R r)| of a uniform state.
inline double uniform_order_parameter(const UniformCmps& u) { return std::abs(trace_product(u.left, u.r * u.right)); }

struct UniformOptions {
  int max_iterations = 3000;
  double gradient_tolerance = 1e-9;
  std::size_t memory = 20;
  double initial_scale = 0.0;  // 0: chosen from mu and g
  std::uint64_t seed = 0;
  int restarts = 1;
};

namespace detail {

// Left-canonical parameterization Q = i K - R^dag R / 2 with K = (M + M^dag) / 2,
// where l = 1 exactly. Parameters: R then M, interleaved real/imaginary parts.
struct CanonicalUniform {
  Eigen::Index dim;

  Eigen::Index size() const { return 4 * dim * dim; }

  std::pair<Matrix, Matrix> unpack(const Eigen::VectorXd& x) const {
    Matrix r(dim, dim), m(dim, dim);
    const Eigen::Index n = dim * dim;
    for (Eigen::Index i = 0; i < n; ++i) {
      r(i) = Complex(x(2 * i), x(2 * i + 1));
      m(i) = Complex(x(2 * n + 2 * i), x(2 * n + 2 * i + 1));
    }
    return {r, m};
  }

  Eigen::VectorXd pack(const Matrix& r, const Matrix& m) const {
    Eigen::VectorXd x(size());
    const Eigen::Index n = dim * dim;
    for (Eigen::Index i = 0; i < n; ++i) {
      x(2 * i) = r(i).real();
      x(2 * i + 1) = r(i).imag();
      x(2 * n + 2 * i) = m(i).real();
      x(2 * n + 2 * i + 1) = m(i).imag();
    }
    return x;
  }

  static Matrix q_of(const Matrix& r, const Matrix& m) {
    const Matrix k = 0.5 * (m + m.adjoint());
    return Complex(0.0, 1.0) * k - 0.5 * r.adjoint() * r;
  }

  // Right fixed point with tr r = 1 for l = 1.
  static Matrix right_fixed_point(const Matrix& q, const Matrix& r) {
    const Eigen::Index d = q.rows();
    const Vector id = vec(identity(d));
    Matrix system = right_superoperator(q, r);
    system += id * id.adjoint();
    Eigen::PartialPivLU<Matrix> lu(system);
    return 0.5 * (unvec(lu.solve(id), d) + unvec(lu.solve(id), d).adjoint());
  }

  // Energy density and its gradient with respect to the packed parameters.
  std::pair<UniformEnergy, Eigen::VectorXd> evaluate(const Eigen::VectorXd& x, double mu, double g) const {
    auto [r, m] = unpack(x);
    const Matrix q = q_of(r, m);
    const Eigen::Index d = dim;
    const Vector id = vec(identity(d));
    const Matrix rho = right_fixed_point(q, r);
    const Matrix dr = commutator(q, r);
    const Matrix r2 = r * r;
    const Matrix h = dr.adjoint() * dr - mu * r.adjoint() * r + g * r2.adjoint() * r2;
    const double e = trace_product(h, rho).real();
    const double density = trace_product(r.adjoint() * r, rho).real();

    // Multiplier x with T(x) = h - e 1 and tr(r x) = 0.
    Matrix system = left_superoperator(q, r);
    system += id * vec(rho).adjoint();
    const Matrix mult = unvec(Eigen::PartialPivLU<Matrix>(system).solve(vec(h - e * identity(d))), d);

    // Adjoints (dE = Re tr(Xbar^dag dX)) of F = tr(H(r)) - tr(x L(r)) at fixed r, x.
    const Matrix sym = rho + rho.adjoint();
    const Matrix dr_bar = dr * sym;
    const Matrix r2_bar = g * r2 * sym;
    Matrix q_bar = dr_bar * r.adjoint() - r.adjoint() * dr_bar;
    Matrix r_bar = q.adjoint() * dr_bar - dr_bar * q.adjoint();
    r_bar += -mu * r * sym;
    r_bar += r2_bar * r.adjoint() + r.adjoint() * r2_bar;
    q_bar += -mult.adjoint() * rho.adjoint() - mult * rho;
    r_bar += -mult.adjoint() * r * rho.adjoint() - mult * r * rho;
    // Q = i K - R^dag R / 2, K = (M + M^dag) / 2
    const Matrix k_bar = Complex(0.0, -1.0) * q_bar;
    const Matrix m_bar = 0.5 * (k_bar + k_bar.adjoint());
    r_bar += -0.5 * r * (q_bar + q_bar.adjoint());

    Eigen::VectorXd grad(size());
    const Eigen::Index n = d * d;
    for (Eigen::Index i = 0; i < n; ++i) {
      grad(2 * i) = r_bar(i).real();
      grad(2 * i + 1) = r_bar(i).imag();
      grad(2 * n + 2 * i) = m_bar(i).real();
      grad(2 * n + 2 * i + 1) = m_bar(i).imag();
    }
    return {{e, density}, grad};
  }
};

}  // namespace detail

/// Energy density and packed gradient of the left-canonical uniform ansatz.
/// Exposed for gradient checks.
inline std::pair<UniformEnergy, Eigen::VectorXd> canonical_uniform_energy(const Eigen::VectorXd& x, Eigen::Index dim,
                                                                          double mu, double g) {
  return detail::CanonicalUniform{dim}.evaluate(x, mu, g);
}

/// Symmetric gauge (l = r) representative of a left-canonical uniform state.
inline UniformCmps symmetric_gauge(const Matrix& q, const Matrix& r, const Matrix& right_fixed_point) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (right_fixed_point + right_fixed_point.adjoint()));
  RealVector values = eig.eigenvalues();
  const double floor = 1e-14 * std::max(values.maxCoeff(), 1e-300);
  values = values.cwiseMax(floor);
  const Matrix& v = eig.eigenvectors();
  // G = r^{1/4}: l' = G^dag G = r^{1/2}, r' = G^{-1} r G^{-dag} = r^{1/2}.
  const Matrix g = v * values.array().pow(0.25).matrix().cast<Complex>().asDiagonal() * v.adjoint();
  const Matrix g_inv = v * values.array().pow(-0.25).matrix().cast<Complex>().asDiagonal() * v.adjoint();
  const Matrix sqrt_r = v * values.array().sqrt().matrix().cast<Complex>().asDiagonal() * v.adjoint();
  const double norm = sqrt_r.squaredNorm();
  return {g_inv * q * g, g_inv * r * g, sqrt_r / std::sqrt(norm), sqrt_r / std::sqrt(norm)};
}

/// Minimizes the energy density e(Q, R) = <H>/L of a uniform cMPS of bond
/// dimension `dim` by L-BFGS with implicit fixed-point gradients. The result
/// is returned in the symmetric gauge.
inline UniformCmps uniform_optimize(Eigen::Index dim, double mu, double g, const UniformOptions& options = {}) {
  if (dim < 1) throw std::invalid_argument("bond dimension must be positive");
  if (!(g >= 0.0)) throw std::invalid_argument("interaction g must be >= 0");
  const detail::CanonicalUniform param{dim};
  const Objective objective = [&](const Eigen::VectorXd& x) -> std::optional<Evaluation> {
    auto [e, grad] = param.evaluate(x, mu, g);
    if (!std::isfinite(e.energy_density) || !grad.allFinite()) return std::nullopt;
    return Evaluation{e.energy_density, std::move(grad)};
  };
  MinimizeOptions mo;
  mo.max_iterations = options.max_iterations;
  mo.gradient_tolerance = options.gradient_tolerance;
  mo.memory = options.memory;

  double scale = options.initial_scale;
  if (scale <= 0.0) {
    const double density = g > 0.0 ? std::max(mu, 0.0) / (2.0 * g) : std::max(mu, 1.0);
    scale = std::sqrt(std::clamp(density, 1e-2, 1e4) / static_cast<double>(dim));
  }
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(2.0));
  std::optional<MinimizeResult> best;
  for (int attempt = 0; attempt < std::max(1, options.restarts); ++attempt) {
    Eigen::VectorXd x0(param.size());
    for (Eigen::Index i = 0; i < x0.size(); ++i) x0(i) = scale * normal(rng);
    auto res = minimize(objective, x0, mo);
    if (!best || res.at_x.value < best->at_x.value) best = std::move(res);
  }
  auto [r, m] = param.unpack(best->x);
  const Matrix q = detail::CanonicalUniform::q_of(r, m);
  return symmetric_gauge(q, r, detail::CanonicalUniform::right_fixed_point(q, r));
}

}  // namespace cmps
