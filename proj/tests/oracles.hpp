#pragma once

// Independent reference computations used by the tests. None of them share
// code paths with the library's Taylor machinery.

#include "cmps/mesh.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/numeric/odeint.hpp>

#include <functional>
#include <random>

namespace oracle {

using cmps::Complex;
using cmps::Matrix;

using OdeState = std::vector<double>;

inline OdeState flatten(const Matrix& m) {
  OdeState v(2 * static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    v[2 * i] = m(i).real();
    v[2 * i + 1] = m(i).imag();
  }
  return v;
}

inline Matrix unflatten(const OdeState& v, Eigen::Index dim) {
  Matrix m(dim, dim);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = Complex(v[2 * i], v[2 * i + 1]);
  return m;
}

/// Integrates dX/dx = f(x, X) from a to b with adaptive Dormand-Prince 5(4).
inline Matrix integrate(const std::function<Matrix(double, const Matrix&)>& f, const Matrix& x0, double a, double b,
                        double tolerance = 1e-13) {
  namespace ode = boost::numeric::odeint;
  const Eigen::Index dim = x0.rows();
  OdeState y = flatten(x0);
  auto rhs = [&](const OdeState& s, OdeState& dsdx, double x) { dsdx = flatten(f(x, unflatten(s, dim))); };
  auto stepper = ode::make_controlled(tolerance, tolerance, ode::runge_kutta_dopri5<OdeState>());
  ode::integrate_adaptive(stepper, rhs, y, a, b, (b - a) / 64.0);
  return unflatten(y, dim);
}

/// rho at every node of the state by direct integration of
/// rho' = Q^dag rho + rho Q + R^dag rho R with piecewise-linear Q, R.
inline std::vector<Matrix> left_nodes(const cmps::CmpsState& s, double tolerance = 1e-13) {
  const auto& l = s.left_boundary();
  std::vector<Matrix> out{l * l.adjoint()};
  for (std::size_t k = 0; k < s.num_segments(); ++k) {
    const double a = s.mesh()[k], b = s.mesh()[k + 1];
    auto f = [&](double x, const Matrix& rho) -> Matrix {
      const double t = (x - a) / (b - a);
      const Matrix q = s.q().on_segment(k, t), r = s.r().on_segment(k, t);
      return q.adjoint() * rho + rho * q + r.adjoint() * rho * r;
    };
    out.push_back(integrate(f, out.back(), a, b, tolerance));
  }
  return out;
}

/// sigma at every node from -sigma' = Q sigma + sigma Q^dag + R sigma R^dag, sigma(L) = B B^dag.
inline std::vector<Matrix> right_nodes(const cmps::CmpsState& s, double tolerance = 1e-13) {
  const auto& b = s.right_boundary();
  std::vector<Matrix> out(s.num_nodes());
  out.back() = b * b.adjoint();
  for (std::size_t k = s.num_segments(); k-- > 0;) {
    const double lo = s.mesh()[k], hi = s.mesh()[k + 1];
    // Integrate in y = hi - x so that the independent variable increases.
    auto f = [&](double y, const Matrix& sigma) -> Matrix {
      const double t = (hi - y - lo) / (hi - lo);
      const Matrix q = s.q().on_segment(k, t), r = s.r().on_segment(k, t);
      return q * sigma + sigma * q.adjoint() + r * sigma * r.adjoint();
    };
    out[k] = integrate(f, out[k + 1], 0.0, hi - lo, tolerance);
  }
  return out;
}

/// 30-point Gauss-Legendre rule on [a, b], exact for polynomials of degree <= 59.
template <typename F>
double gauss(F&& f, double a, double b) {
  return boost::math::quadrature::gauss<double, 30>::integrate(std::forward<F>(f), a, b);
}

/// int_0^1 t^m (1 - t)^n dt by quadrature.
inline double beta_by_quadrature(int m, int n) {
  return gauss([&](double t) { return std::pow(t, m) * std::pow(1.0 - t, n); }, 0.0, 1.0);
}

/// Energy of a D = 1 state, sum over segments of
/// int |r'|^2 + (V - mu) |r|^2 + g |r|^4 dx (the Gross-Pitaevskii functional of
/// the coherent state with amplitude r(x)).
inline double gross_pitaevskii(const cmps::CmpsState& s, double mu, double g,
                               const std::function<double(double)>& potential) {
  double total = 0.0;
  for (std::size_t k = 0; k < s.num_segments(); ++k) {
    const double a = s.mesh()[k], b = s.mesh()[k + 1];
    const Complex r0 = s.r_node(k)(0, 0), r1 = s.r_node(k + 1)(0, 0);
    const double slope = std::norm((r1 - r0) / (b - a));
    total += gauss(
        [&](double x) {
          const double n = std::norm(r0 + (x - a) / (b - a) * (r1 - r0));
          return slope + (potential(x) - mu) * n + g * n * n;
        },
        a, b);
  }
  return total;
}

/// Ground state of the Lieb-Liniger gas H = int dpsi^dag dpsi + c psi^dag psi^dag psi psi
/// from the Bethe-ansatz integral equation
///   2 pi rho(k) = 1 + int_{-q}^{q} 2c / (c^2 + (k - k')^2) rho(k') dk',
/// solved by Gauss-Legendre Nystrom discretization.
struct LiebLiniger {
  double density = 0.0;
  double energy_density = 0.0;  // kinetic + interaction, per length
};

inline LiebLiniger lieb_liniger(double c, double q, int nodes = 400) {
  // Gauss-Legendre nodes on [-q, q] by Newton iteration on P_n.
  std::vector<double> k(nodes), w(nodes);
  for (int i = 0; i < nodes; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (nodes + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int j = 2; j <= nodes; ++j) {
        const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      dp = nodes * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    k[i] = q * x;
    w[i] = q * 2.0 / ((1.0 - x * x) * dp * dp);
  }
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(nodes, nodes) * 2.0 * std::numbers::pi;
  for (int i = 0; i < nodes; ++i)
    for (int j = 0; j < nodes; ++j) a(i, j) -= 2.0 * c / (c * c + (k[i] - k[j]) * (k[i] - k[j])) * w[j];
  const Eigen::VectorXd rho = a.partialPivLu().solve(Eigen::VectorXd::Ones(nodes));
  LiebLiniger out;
  for (int i = 0; i < nodes; ++i) {
    out.density += w[i] * rho(i);
    out.energy_density += w[i] * k[i] * k[i] * rho(i);
  }
  return out;
}

/// Grand-canonical minimum of e(q) - mu n(q) over the Fermi rapidity q.
inline LiebLiniger lieb_liniger_grand(double c, double mu) {
  auto omega = [&](double q) {
    const auto s = lieb_liniger(c, q);
    return s.energy_density - mu * s.density;
  };
  double lo = 0.0, hi = 2.0 * std::sqrt(std::max(mu, 1e-12)) + 1.0;
  const double golden = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - golden * (hi - lo), x2 = lo + golden * (hi - lo);
  double f1 = omega(x1), f2 = omega(x2);
  while (hi - lo > 1e-10) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - golden * (hi - lo);
      f1 = omega(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + golden * (hi - lo);
      f2 = omega(x2);
    }
  }
  return lieb_liniger(c, 0.5 * (lo + hi));
}

/// Random finite-box state with Gaussian node entries; Dirichlet walls get R = 0.
inline cmps::CmpsState random_state(const cmps::Mesh& mesh, Eigen::Index dim, std::uint64_t seed, double scale = 0.7,
                                    bool dirichlet = true) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  auto gaussian = [&] {
    Matrix m(dim, dim);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = Complex(normal(rng), normal(rng));
    return m;
  };
  std::vector<Matrix> q, r;
  for (std::size_t k = 0; k < mesh.size(); ++k) {
    Matrix rk = gaussian();
    if (dirichlet && (k == 0 || k + 1 == mesh.size())) rk.setZero();
    q.push_back(gaussian() - 0.5 * rk.adjoint() * rk);
    r.push_back(rk);
  }
  cmps::Vector l(dim), b(dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    l(i) = Complex(normal(rng), normal(rng));
    b(i) = Complex(normal(rng), normal(rng));
  }
  return {cmps::PiecewiseLinearMatrixFunction(mesh, std::move(q)),
          cmps::PiecewiseLinearMatrixFunction(mesh, std::move(r)), l, b, dirichlet};
}

/// Random mesh of `segments` segments on [0, length] with widths in [0.5, 1.5] times the mean.
inline cmps::Mesh random_mesh(double length, std::size_t segments, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  std::vector<double> widths(segments);
  double total = 0.0;
  for (auto& w : widths) total += (w = u(rng));
  std::vector<double> pts{0.0};
  for (std::size_t i = 0; i + 1 < segments; ++i) pts.push_back(pts.back() + widths[i] * length / total);
  pts.push_back(length);
  return cmps::Mesh(std::move(pts));
}

}  // namespace oracle
