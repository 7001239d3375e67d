#pragma once

// Left/right reduced density matrices as per-segment Taylor polynomials.
//
// On a segment the flows
//     d rho / dx   = Q^dag rho + rho Q + R^dag rho R
//   - d sigma / dx = Q sigma + sigma Q^dag + R sigma R^dag
// have linear coefficients, so substituting a power series in the local
// coordinate gives a triangular recursion for its coefficients. Both flows are
// instances of one generator
//     G_t(X) = A(t)^dag X + X A(t) + B(t)^dag X B(t),  A(t) = a0 + t a1, B(t) = b0 + t b1
// with (A, B) = (Q, R) in t for rho and (A, B) = (Q^dag, R^dag) in s = 1 - t for
// sigma.

#include "cmps/mesh.hpp"

#include <future>

namespace cmps {

struct TaylorTolerance {
  double relative_cutoff = 1e-14;
  int max_order = 128;

  void validate() const {
    if (!(relative_cutoff > 0.0)) throw std::invalid_argument("Taylor cutoff must be positive");
    if (max_order < 2) throw std::invalid_argument("Taylor order cap must be at least 2");
  }
};

/// Linear-in-t generator of one segment flow, see the header comment.
struct SegmentGenerator {
  Matrix a0, a1, b0, b1;
  double width = 1.0;
};

/// Generator of the rho flow on [xa, xb] given Q, R at both ends.
inline SegmentGenerator left_generator(const Matrix& qa, const Matrix& qb, const Matrix& ra,
                                       const Matrix& rb, double width) {
  return {qa, qb - qa, ra, rb - ra, width};
}

/// Generator of the sigma flow on [xa, xb] in the variable s = (xb - x) / width.
inline SegmentGenerator right_generator(const Matrix& qa, const Matrix& qb, const Matrix& ra,
                                        const Matrix& rb, double width) {
  return {qb.adjoint(), (qa - qb).adjoint(), rb.adjoint(), (ra - rb).adjoint(), width};
}

inline SegmentGenerator left_generator(const CmpsState& state, std::size_t k) {
  return left_generator(state.q_node(k), state.q_node(k + 1), state.r_node(k), state.r_node(k + 1),
                        state.mesh().width(k));
}

inline SegmentGenerator right_generator(const CmpsState& state, std::size_t k) {
  return right_generator(state.q_node(k), state.q_node(k + 1), state.r_node(k), state.r_node(k + 1),
                         state.mesh().width(k));
}

namespace detail {

inline double frobenius(const Matrix& m) { return m.norm(); }

// t^n coefficient of G_t(X) for X = sum_j x_j t^j.
inline Matrix generator_coefficient(const SegmentGenerator& g, const std::vector<Matrix>& x, std::size_t n,
                                    const Matrix& a0h, const Matrix& a1h, const Matrix& b0h,
                                    const Matrix& b1h) {
  Matrix out = a0h * x[n] + x[n] * g.a0;
  Matrix inner = x[n] * g.b0;
  if (n >= 1) {
    out.noalias() += a1h * x[n - 1];
    out.noalias() += x[n - 1] * g.a1;
    inner.noalias() += x[n - 1] * g.b1;
  }
  out.noalias() += b0h * inner;
  if (n >= 1) {
    Matrix inner1 = x[n - 1] * g.b0;
    if (n >= 2) inner1.noalias() += x[n - 2] * g.b1;
    out.noalias() += b1h * inner1;
  }
  return out;
}

}  // namespace detail

/// Taylor coefficients of X' = width * (G_t(X) + h(t)) with X(0) = seed, where
/// h is an optional polynomial source. Stops once three consecutive coefficients
/// fall below cutoff times the largest coefficient norm seen (the recursion
/// reaches back three orders, so fewer zeros do not end the series); throws
/// TruncationError (segment index 0) when the order cap is hit first.
inline std::vector<Matrix> taylor_propagate(const SegmentGenerator& g, const Matrix& seed,
                                            const TaylorTolerance& tol,
                                            const std::vector<Matrix>* source = nullptr) {
  const Matrix a0h = g.a0.adjoint(), a1h = g.a1.adjoint();
  const Matrix b0h = g.b0.adjoint(), b1h = g.b1.adjoint();
  const std::size_t source_terms = source ? source->size() : 0;
  std::vector<Matrix> coeffs;
  coeffs.reserve(static_cast<std::size_t>(tol.max_order) + 1);
  coeffs.push_back(seed);
  double scale = detail::frobenius(seed);
  double previous = scale, before_previous = scale;
  for (std::size_t n = 0;; ++n) {
    Matrix next = detail::generator_coefficient(g, coeffs, n, a0h, a1h, b0h, b1h);
    if (n < source_terms) next += (*source)[n];
    next *= g.width / static_cast<double>(n + 1);
    const double norm = detail::frobenius(next);
    coeffs.push_back(std::move(next));
    scale = std::max(scale, norm);
    const bool sources_done = n + 1 >= source_terms;
    const double bound = tol.relative_cutoff * scale;
    if (sources_done && n >= 2 && before_previous <= bound && previous <= bound && norm <= bound) break;
    if (sources_done && scale == 0.0) break;
    if (static_cast<int>(n + 1) >= tol.max_order) {
      throw TruncationError(0, scale > 0.0 ? norm / scale : 0.0, tol.max_order);
    }
    before_previous = previous;
    previous = norm;
  }
  return coeffs;
}

/// Adjoint accumulators of a generator's four matrices.
struct GeneratorAdjoint {
  Matrix a0, a1, b0, b1;

  explicit GeneratorAdjoint(Eigen::Index dim)
      : a0(zeros(dim)), a1(zeros(dim)), b0(zeros(dim)), b1(zeros(dim)) {}
};

/// Reverse pass of taylor_propagate. On entry `coeff_adjoints[n]` holds the
/// adjoint of coefficient n; on exit entry 0 holds the seed adjoint, the
/// generator adjoints are accumulated into `gen_adjoint` and, if requested,
/// source adjoints are written to `source_adjoints`. Adjoints follow the
/// convention dE = Re tr(Xbar^dag dX).
inline void taylor_propagate_adjoint(const SegmentGenerator& g, const std::vector<Matrix>& coeffs,
                                     std::vector<Matrix>& coeff_adjoints, GeneratorAdjoint& gen_adjoint,
                                     std::vector<Matrix>* source_adjoints = nullptr) {
  const std::size_t count = coeffs.size();
  const Eigen::Index dim = g.a0.rows();
  if (source_adjoints) source_adjoints->assign(count, zeros(dim));
  if (count < 2) return;
  const Matrix a0h = g.a0.adjoint(), a1h = g.a1.adjoint();
  const Matrix b0h = g.b0.adjoint(), b1h = g.b1.adjoint();
  // Every term of G_n has the form U^dag X W; its adjoint rules are
  //   Xbar += U Ybar W^dag,  Ubar += X W Ybar^dag,  Wbar += X^dag U Ybar.
  for (std::size_t n = count - 1; n-- > 0;) {
    const Matrix ybar = (g.width / static_cast<double>(n + 1)) * coeff_adjoints[n + 1];
    if (source_adjoints) (*source_adjoints)[n] = ybar;
    const Matrix ybar_h = ybar.adjoint();
    const Matrix ybar_b0h = ybar * b0h;
    const Matrix ybar_b1h = ybar * b1h;
    const Matrix& xn = coeffs[n];

    coeff_adjoints[n].noalias() += g.a0 * ybar;
    coeff_adjoints[n].noalias() += ybar * a0h;
    coeff_adjoints[n].noalias() += g.b0 * ybar_b0h;
    gen_adjoint.a0.noalias() += xn * ybar_h;
    gen_adjoint.a0.noalias() += xn.adjoint() * ybar;

    Matrix u_side0 = xn * g.b0;            // x_n b0 + x_{n-1} b1
    Matrix w_side0 = xn.adjoint() * g.b0;  // x_n^dag b0 + x_{n-1}^dag b1
    if (n >= 1) {
      const Matrix& xm = coeffs[n - 1];
      coeff_adjoints[n - 1].noalias() += g.a1 * ybar;
      coeff_adjoints[n - 1].noalias() += ybar * a1h;
      coeff_adjoints[n - 1].noalias() += g.b0 * ybar_b1h;
      coeff_adjoints[n - 1].noalias() += g.b1 * ybar_b0h;
      gen_adjoint.a1.noalias() += xm * ybar_h;
      gen_adjoint.a1.noalias() += xm.adjoint() * ybar;
      u_side0.noalias() += xm * g.b1;
      w_side0.noalias() += xm.adjoint() * g.b1;

      Matrix u_side1 = xm * g.b0;            // x_{n-1} b0 + x_{n-2} b1
      Matrix w_side1 = xm.adjoint() * g.b0;  // x_{n-1}^dag b0 + x_{n-2}^dag b1
      if (n >= 2) {
        const Matrix& xl = coeffs[n - 2];
        coeff_adjoints[n - 2].noalias() += g.b1 * ybar_b1h;
        u_side1.noalias() += xl * g.b1;
        w_side1.noalias() += xl.adjoint() * g.b1;
      }
      gen_adjoint.b1.noalias() += u_side1 * ybar_h;
      gen_adjoint.b1.noalias() += w_side1 * ybar;
    }
    gen_adjoint.b0.noalias() += u_side0 * ybar_h;
    gen_adjoint.b0.noalias() += w_side0 * ybar;
  }
}

/// Single-segment rho polynomial in t seeded with rho0 at the left node.
inline SegmentPolynomial propagate_left_segment(const Matrix& qk, const Matrix& qk1, const Matrix& rk,
                                                const Matrix& rk1, double width, const Matrix& rho0,
                                                const TaylorTolerance& tol = {}) {
  if (!(width > 0.0)) throw std::invalid_argument("segment width must be positive");
  return {taylor_propagate(left_generator(qk, qk1, rk, rk1, width), rho0, tol), Orientation::left};
}

/// Single-segment sigma polynomial in 1 - t seeded with sigma1 at the right node.
inline SegmentPolynomial propagate_right_segment(const Matrix& qk, const Matrix& qk1, const Matrix& rk,
                                                 const Matrix& rk1, double width, const Matrix& sigma1,
                                                 const TaylorTolerance& tol = {}) {
  if (!(width > 0.0)) throw std::invalid_argument("segment width must be positive");
  return {taylor_propagate(right_generator(qk, qk1, rk, rk1, width), sigma1, tol), Orientation::right};
}

/// Per-segment Taylor representation of rho(x) (left) or sigma(x) (right).
struct TaylorEnvelope {
  Orientation direction = Orientation::left;
  std::vector<SegmentPolynomial> segments;

  std::size_t num_segments() const { return segments.size(); }

  int order(std::size_t k) const { return segments[k].degree(); }

  int max_order() const {
    int m = 0;
    for (const auto& s : segments) m = std::max(m, s.degree());
    return m;
  }

  /// Value at mesh node k (0..K).
  Matrix node_value(std::size_t k) const {
    const std::size_t last = segments.size();
    if (direction == Orientation::left)
      return k < last ? segments[k].coefficients.front() : segments[last - 1].far_end();
    return k == 0 ? segments[0].far_end() : segments[k - 1].coefficients.front();
  }

  Matrix evaluate(const Mesh& mesh, double x) const {
    if (auto node = mesh.node_index(x)) return node_value(*node);
    const auto [k, t] = mesh.locate(x);
    return segments[k].evaluate(t);
  }
};

/// Left and right envelopes of one state.
struct StateEnvelopes {
  TaylorEnvelope left;
  TaylorEnvelope right;
};

inline Matrix hermitian_part(const Matrix& m) { return 0.5 * (m + m.adjoint()); }

/// Envelope of the homogeneous or sourced flow over the whole mesh.
/// `sources`, if given, holds one polynomial per segment in the propagation
/// variable (t for left, 1 - t for right). Truncation errors carry the
/// offending segment index.
inline TaylorEnvelope propagate_with_source(Orientation direction, const CmpsState& state,
                                            const Matrix& boundary_value,
                                            const std::vector<std::vector<Matrix>>* sources,
                                            const TaylorTolerance& tol = {}) {
  tol.validate();
  const std::size_t segments = state.num_segments();
  if (sources && sources->size() != segments)
    throw std::invalid_argument("source needs one polynomial per segment");
  TaylorEnvelope env;
  env.direction = direction;
  env.segments.resize(segments);
  Matrix seed = boundary_value;
  auto run = [&](std::size_t k) {
    const auto g = direction == Orientation::left ? left_generator(state, k) : right_generator(state, k);
    try {
      env.segments[k] = {taylor_propagate(g, seed, tol, sources ? &(*sources)[k] : nullptr), direction};
    } catch (const TruncationError& e) {
      throw e.with_segment(k);
    }
    seed = env.segments[k].far_end();
  };
  if (direction == Orientation::left) {
    for (std::size_t k = 0; k < segments; ++k) run(k);
  } else {
    for (std::size_t k = segments; k-- > 0;) run(k);
  }
  return env;
}

/// rho(x) seeded with rho(0) = |l><l| for the left boundary vector l.
inline TaylorEnvelope sweep_left(const CmpsState& state, const TaylorTolerance& tol = {}) {
  const Vector& l = state.left_boundary();
  return propagate_with_source(Orientation::left, state, hermitian_part(l * l.adjoint()), nullptr, tol);
}

/// sigma(x) seeded with sigma(L) = |B><B|.
inline TaylorEnvelope sweep_right(const CmpsState& state, const TaylorTolerance& tol = {}) {
  const Vector& b = state.right_boundary();
  return propagate_with_source(Orientation::right, state, hermitian_part(b * b.adjoint()), nullptr, tol);
}

/// Number of threads the library may use for independent work.
inline int& thread_budget() {
  static int threads = 1;
  return threads;
}

inline StateEnvelopes compute_envelopes(const CmpsState& state, const TaylorTolerance& tol = {}) {
  if (thread_budget() > 1) {
    auto right = std::async(std::launch::async, [&] { return sweep_right(state, tol); });
    TaylorEnvelope left = sweep_left(state, tol);
    return {std::move(left), right.get()};
  }
  return {sweep_left(state, tol), sweep_right(state, tol)};
}

/// tr(rho(0) sigma(0)).
inline double norm(const StateEnvelopes& env) {
  const Complex z = trace_product(env.left.node_value(0), env.right.node_value(0));
  if (!std::isfinite(z.real()) || !(z.real() > 0.0))
    throw NumericalBreakdown("state norm is not positive (" + std::to_string(z.real()) + ")");
  return z.real();
}

/// Largest relative deviation of tr(rho(x_k) sigma(x_k)) from the norm over all nodes.
inline double norm_deviation(const StateEnvelopes& env, double reference) {
  double worst = 0.0;
  for (std::size_t k = 0; k <= env.left.num_segments(); ++k) {
    const double value = trace_product(env.left.node_value(k), env.right.node_value(k)).real();
    worst = std::max(worst, std::abs(value - reference) / reference);
  }
  return worst;
}

}  // namespace cmps
