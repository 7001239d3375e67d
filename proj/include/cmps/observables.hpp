#pragma once

// Physical profiles, particle-number statistics, density correlations and
// entanglement data of a finite-box state. All quantities are normalized by
// the state norm tr(rho sigma).

#include "cmps/energy.hpp"

#include <Eigen/Eigenvalues>

#include <iomanip>
#include <ostream>

namespace cmps {

struct Profile {
  std::vector<double> x;
  std::vector<double> density;
  std::vector<double> kinetic;
  std::vector<double> potential;
  std::vector<double> interaction;
  std::vector<double> order_parameter;

  std::size_t size() const { return x.size(); }
};

struct EntanglementData {
  std::vector<double> cuts;
  /// Per cut, descending Schmidt weights summing to one.
  std::vector<std::vector<double>> weights;
  std::vector<double> entropy;
};

namespace detail {

inline void check_positions(const Mesh& mesh, const std::vector<double>& positions, bool open) {
  for (double x : positions) {
    const bool inside = open ? (x > 0.0 && x < mesh.length()) : (x >= 0.0 && x <= mesh.length());
    if (!inside) throw std::invalid_argument("sample position " + std::to_string(x) + " outside the box");
  }
}

}  // namespace detail

/// |<psi(x)>| = |tr(rho R sigma)| / norm at each position.
inline std::vector<double> order_parameter(const CmpsState& state, const StateEnvelopes& env,
                                           const std::vector<double>& positions) {
  detail::check_positions(state.mesh(), positions, false);
  const double z = norm(env);
  std::vector<double> out;
  out.reserve(positions.size());
  for (double x : positions) {
    const Matrix rho = env.left.evaluate(state.mesh(), x);
    const Matrix sigma = env.right.evaluate(state.mesh(), x);
    out.push_back(std::abs(trace_product(rho, state.r().evaluate(x) * sigma)) / z);
  }
  return out;
}

inline std::vector<double> order_parameter(const CmpsState& state, const std::vector<double>& positions,
                                           const TaylorTolerance& tol = {}) {
  return order_parameter(state, compute_envelopes(state, tol), positions);
}

/// Density and energy channels at the given positions:
/// n = tr(rho R sigma R^dag), kinetic = tr(rho DR sigma DR^dag), potential = (V - mu) n,
/// interaction = g tr(rho R^2 sigma (R^2)^dag), all divided by the norm.
inline Profile profiles(const CmpsState& state, const HamiltonianSpec& spec, const StateEnvelopes& env,
                        const std::vector<double>& positions) {
  spec.validate();
  const Mesh& mesh = state.mesh();
  detail::check_positions(mesh, positions, false);
  const auto potential = spec.potential.on(mesh);
  const double z = norm(env);
  Profile p;
  p.x = positions;
  for (double x : positions) {
    const auto [k, t] = mesh.locate(x);
    const Matrix rho = env.left.evaluate(mesh, x);
    const Matrix sigma = env.right.evaluate(mesh, x);
    const Matrix r = state.r().evaluate(x);
    const Matrix dr = covariant_derivative_segment(k, state).evaluate(t);
    const Matrix r2 = r * r;
    const double n = trace_product(rho, r * sigma * r.adjoint()).real() / z;
    p.density.push_back(n);
    p.kinetic.push_back(trace_product(rho, dr * sigma * dr.adjoint()).real() / z);
    p.potential.push_back((potential.evaluate(mesh, x) - spec.mu) * n);
    p.interaction.push_back(spec.g * trace_product(rho, r2 * sigma * r2.adjoint()).real() / z);
    p.order_parameter.push_back(std::abs(trace_product(rho, r * sigma)) / z);
  }
  return p;
}

inline Profile profiles(const CmpsState& state, const HamiltonianSpec& spec, const std::vector<double>& positions,
                        const TaylorTolerance& tol = {}) {
  return profiles(state, spec, compute_envelopes(state, tol), positions);
}

/// Mean and variance of the particle number. <N^2> = <N> + 2 int_{x<y} G(x, y)
/// where the inner integral is carried by the sourced flow
/// N_L' = Q^dag N_L + N_L Q + R^dag N_L R + R^dag rho R, N_L(0) = 0.
inline std::pair<double, double> particle_number(const CmpsState& state, const StateEnvelopes& env,
                                                 const TaylorTolerance& tol = {}) {
  const std::size_t segments = state.num_segments();
  const double z = norm(env);
  const std::vector<double> unit{1.0};
  BetaTable beta;
  std::vector<std::vector<Matrix>> sources(segments);
  Complex mean = 0.0;
  for (std::size_t k = 0; k < segments; ++k) {
    const Matrix r0 = state.r_node(k), r1 = state.r_node(k + 1) - state.r_node(k);
    const std::array<Matrix, 2> f{r0, r1};
    const auto& rho = env.left.segments[k].coefficients;
    mean += state.mesh().width(k) * detail::contract_family(rho, env.right.segments[k].coefficients, f, unit, beta);
    auto& src = sources[k];
    src.assign(rho.size() + 2, zeros(state.dimension()));
    for (std::size_t n = 0; n < rho.size(); ++n)
      for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t b = 0; b < 2; ++b) src[n + a + b] += f[a].adjoint() * rho[n] * f[b];
  }
  const TaylorEnvelope inner =
      propagate_with_source(Orientation::left, state, zeros(state.dimension()), &sources, tol);
  Complex pairs = 0.0;
  for (std::size_t k = 0; k < segments; ++k) {
    const std::array<Matrix, 2> f{state.r_node(k), state.r_node(k + 1) - state.r_node(k)};
    pairs += state.mesh().width(k) * detail::contract_family(inner.segments[k].coefficients,
                                                             env.right.segments[k].coefficients, f, unit, beta);
  }
  const double n = mean.real() / z;
  const double second = n + 2.0 * pairs.real() / z;
  return {n, second - n * n};
}

inline std::pair<double, double> particle_number(const CmpsState& state, const TaylorTolerance& tol = {}) {
  return particle_number(state, compute_envelopes(state, tol), tol);
}

/// <psi^dag(x) psi^dag(y) psi(y) psi(x)> / norm for x < y. The insertion
/// R(y) sigma(y) R(y)^dag is carried from y back to x by the sigma flow on the
/// partial segments in between.
inline double density_correlator(const CmpsState& state, const StateEnvelopes& env, double x, double y,
                                 const TaylorTolerance& tol = {}) {
  const Mesh& mesh = state.mesh();
  if (!(x >= 0.0 && x < y && y <= mesh.length())) throw std::invalid_argument("density correlator needs 0 <= x < y <= L");
  const Matrix ry = state.r().evaluate(y);
  Matrix carried = ry * env.right.evaluate(mesh, y) * ry.adjoint();
  double upper = y;
  while (upper > x) {
    const auto [k, t] = mesh.locate(upper);
    // Segment containing the open interval just below `upper`.
    const std::size_t seg = (t == 0.0 && k > 0) ? k - 1 : k;
    const double lower = std::max(x, mesh[seg]);
    const Matrix qa = state.q().on_segment(seg, (lower - mesh[seg]) / mesh.width(seg));
    const Matrix qb = state.q().on_segment(seg, (upper - mesh[seg]) / mesh.width(seg));
    const Matrix ra = state.r().on_segment(seg, (lower - mesh[seg]) / mesh.width(seg));
    const Matrix rb = state.r().on_segment(seg, (upper - mesh[seg]) / mesh.width(seg));
    try {
      const auto coeffs = taylor_propagate(right_generator(qa, qb, ra, rb, upper - lower), carried, tol);
      carried = SegmentPolynomial{coeffs, Orientation::right}.far_end();
    } catch (const TruncationError& e) {
      throw e.with_segment(seg);
    }
    upper = lower;
  }
  const Matrix rx = state.r().evaluate(x);
  return trace_product(env.left.evaluate(mesh, x), rx * carried * rx.adjoint()).real() / norm(env);
}

inline double density_correlator(const CmpsState& state, double x, double y, const TaylorTolerance& tol = {}) {
  return density_correlator(state, compute_envelopes(state, tol), x, y, tol);
}

/// Schmidt weights at each cut from the eigenvalues of rho sigma / tr(rho sigma).
inline EntanglementData entanglement(const CmpsState& state, const StateEnvelopes& env,
                                     const std::vector<double>& cuts) {
  detail::check_positions(state.mesh(), cuts, true);
  EntanglementData out;
  out.cuts = cuts;
  for (double x : cuts) {
    const Matrix m = env.left.evaluate(state.mesh(), x) * env.right.evaluate(state.mesh(), x);
    const Complex tr = m.trace();
    Eigen::ComplexEigenSolver<Matrix> solver(m / tr, false);
    if (solver.info() != Eigen::Success) throw NumericalBreakdown("entanglement eigensolver failed");
    std::vector<double> weights;
    for (const Complex& v : solver.eigenvalues()) {
      if (std::abs(v.imag()) > 1e-8)
        throw NumericalBreakdown("complex Schmidt weight at x = " + std::to_string(x) + " (envelope corruption)");
      weights.push_back(v.real() < 1e-16 ? 0.0 : v.real());
    }
    std::sort(weights.begin(), weights.end(), std::greater<>());
    double total = 0.0;
    for (double w : weights) total += w;
    double entropy = 0.0;
    for (double& w : weights) {
      w /= total;
      if (w > 0.0) entropy -= w * std::log(w);
    }
    out.weights.push_back(std::move(weights));
    out.entropy.push_back(entropy);
  }
  return out;
}

inline EntanglementData entanglement(const CmpsState& state, const std::vector<double>& cuts,
                                     const TaylorTolerance& tol = {}) {
  return entanglement(state, compute_envelopes(state, tol), cuts);
}

/// n equidistant positions covering [a, b] including both ends.
inline std::vector<double> linspace(double a, double b, std::size_t n) {
  if (n == 0) return {};
  if (n == 1) return {a};
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  v.back() = b;
  return v;
}

/// Chebyshev-Lobatto points x_i = L (1 - cos(pi i / n)) / 2 strictly inside (0, L), i = 1..n-1.
inline std::vector<double> chebyshev_cuts(double length, std::size_t n) {
  std::vector<double> v;
  for (std::size_t i = 1; i < n; ++i)
    v.push_back(0.5 * length * (1.0 - std::cos(std::numbers::pi * static_cast<double>(i) / static_cast<double>(n))));
  return v;
}

inline void write_profile_csv(std::ostream& out, const Profile& p) {
  out << "x,density,kinetic,potential,interaction,orderParameter\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < p.size(); ++i)
    out << p.x[i] << ',' << p.density[i] << ',' << p.kinetic[i] << ',' << p.potential[i] + 0.0 << ',' << p.interaction[i]
        << ',' << p.order_parameter[i] << '\n';
}

inline void write_entanglement_csv(std::ostream& out, const EntanglementData& e) {
  std::size_t columns = 0;
  for (const auto& w : e.weights) columns = std::max(columns, w.size());
  out << "x,entropy";
  for (std::size_t j = 1; j <= columns; ++j) out << ",lambda_" << j;
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < e.cuts.size(); ++i) {
    out << e.cuts[i] << ',' << e.entropy[i];
    for (std::size_t j = 0; j < columns; ++j) out << ',' << (j < e.weights[i].size() ? e.weights[i][j] : 0.0);
    out << '\n';
  }
}

}  // namespace cmps
