#pragma once

// Mesh, piecewise-linear matrix functions, segment polynomials, potentials and
// the variational state built on top of them.

#include "cmps/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <numbers>
#include <optional>
#include <random>
#include <utility>

namespace cmps {

/// Strictly increasing grid x_0 = 0 < x_1 < ... < x_K = L.
class Mesh {
public:
  Mesh() = default;

  explicit Mesh(std::vector<double> points) : points_(std::move(points)) {
    if (points_.size() < 2) throw std::invalid_argument("mesh needs at least two points");
    if (points_.front() != 0.0) throw std::invalid_argument("mesh must start at x = 0");
    for (std::size_t k = 0; k + 1 < points_.size(); ++k) {
      if (!(points_[k + 1] > points_[k]) || !std::isfinite(points_[k + 1]))
        throw std::invalid_argument("mesh points must be finite and strictly increasing (index " +
                                    std::to_string(k + 1) + ")");
    }
  }

  static Mesh uniform(double length, std::size_t num_points) {
    if (num_points < 2) throw std::invalid_argument("mesh needs at least two points");
    if (!(length > 0.0)) throw std::invalid_argument("box length must be positive");
    std::vector<double> pts(num_points);
    const auto segments = static_cast<double>(num_points - 1);
    for (std::size_t k = 0; k < num_points; ++k) pts[k] = length * static_cast<double>(k) / segments;
    pts.back() = length;
    return Mesh(std::move(pts));
  }

  /// x_k = (1 - cos(pi k / K)) L / 2 for k = 0..K; denser near the walls.
  static Mesh chebyshev(double length, std::size_t num_segments) {
    if (num_segments < 1) throw std::invalid_argument("chebyshev mesh needs at least one segment");
    if (!(length > 0.0)) throw std::invalid_argument("box length must be positive");
    std::vector<double> pts(num_segments + 1);
    const auto segments = static_cast<double>(num_segments);
    for (std::size_t k = 0; k <= num_segments; ++k)
      pts[k] = 0.5 * length * (1.0 - std::cos(std::numbers::pi * static_cast<double>(k) / segments));
    pts.front() = 0.0;
    pts.back() = length;
    return Mesh(std::move(pts));
  }

  const std::vector<double>& points() const noexcept { return points_; }
  std::size_t size() const noexcept { return points_.size(); }
  std::size_t num_segments() const noexcept { return points_.size() - 1; }
  double length() const noexcept { return points_.back(); }
  double operator[](std::size_t k) const { return points_[k]; }
  double width(std::size_t segment) const { return points_[segment + 1] - points_[segment]; }

  /// Segment index and local coordinate t in [0, 1]. Interior mesh points map
  /// to t = 0 of the segment on their right; x = L maps to t = 1 of the last.
  std::pair<std::size_t, double> locate(double x) const {
    if (!(x >= 0.0 && x <= length()))
      throw std::domain_error("position " + std::to_string(x) + " outside [0, " +
                              std::to_string(length()) + "]");
    auto it = std::upper_bound(points_.begin(), points_.end(), x);
    std::size_t k = static_cast<std::size_t>(std::distance(points_.begin(), it));
    k = (k == 0) ? 0 : k - 1;
    if (k >= num_segments()) k = num_segments() - 1;
    const double t = (x - points_[k]) / width(k);
    return {k, std::clamp(t, 0.0, 1.0)};
  }

  /// Index of a mesh point equal to x, if any.
  std::optional<std::size_t> node_index(double x) const {
    auto it = std::lower_bound(points_.begin(), points_.end(), x);
    if (it != points_.end() && *it == x) return static_cast<std::size_t>(std::distance(points_.begin(), it));
    return std::nullopt;
  }

  friend bool operator==(const Mesh&, const Mesh&) = default;

private:
  std::vector<double> points_;
};

/// Matrix-valued function given by its node values, linearly interpolated.
class PiecewiseLinearMatrixFunction {
public:
  PiecewiseLinearMatrixFunction() = default;

  PiecewiseLinearMatrixFunction(Mesh mesh, std::vector<Matrix> nodes)
      : mesh_(std::move(mesh)), nodes_(std::move(nodes)) {
    if (nodes_.size() != mesh_.size())
      throw std::invalid_argument("node count " + std::to_string(nodes_.size()) +
                                  " does not match mesh size " + std::to_string(mesh_.size()));
    const auto dim = nodes_.front().rows();
    if (dim < 1) throw std::invalid_argument("node matrices must be at least 1x1");
    for (const auto& m : nodes_)
      if (m.rows() != dim || m.cols() != dim)
        throw std::invalid_argument("node matrices must be square with a common dimension");
  }

  static PiecewiseLinearMatrixFunction constant(const Mesh& mesh, const Matrix& value) {
    return {mesh, std::vector<Matrix>(mesh.size(), value)};
  }

  const Mesh& mesh() const noexcept { return mesh_; }
  const std::vector<Matrix>& nodes() const noexcept { return nodes_; }
  std::vector<Matrix>& nodes() noexcept { return nodes_; }
  const Matrix& node(std::size_t k) const { return nodes_[k]; }
  Eigen::Index dimension() const { return nodes_.front().rows(); }

  /// Value on segment k at local coordinate t.
  Matrix on_segment(std::size_t k, double t) const {
    return nodes_[k] + t * (nodes_[k + 1] - nodes_[k]);
  }

  Matrix evaluate(double x) const {
    if (auto node = mesh_.node_index(x)) return nodes_[*node];
    const auto [k, t] = mesh_.locate(x);
    return on_segment(k, t);
  }

private:
  Mesh mesh_;
  std::vector<Matrix> nodes_;
};

inline Matrix evaluate(const PiecewiseLinearMatrixFunction& f, double x) { return f.evaluate(x); }

enum class Orientation { left, right };

/// Matrix polynomial on one segment: coefficients of t^n (left) or (1-t)^n (right).
struct SegmentPolynomial {
  std::vector<Matrix> coefficients;
  Orientation orientation = Orientation::left;

  int degree() const { return static_cast<int>(coefficients.size()) - 1; }

  /// Value at local coordinate t; the variable is 1-t for right orientation.
  Matrix evaluate(double t) const {
    const double u = orientation == Orientation::left ? t : 1.0 - t;
    Matrix acc = coefficients.back();
    for (auto it = std::next(coefficients.rbegin()); it != coefficients.rend(); ++it)
      acc = (acc * u + *it).eval();
    return acc;
  }

  /// Sum of all coefficients, i.e. the value at the far end of the segment.
  Matrix far_end() const {
    Matrix acc = zeros(coefficients.front().rows());
    for (const auto& c : coefficients) acc += c;
    return acc;
  }
};

/// Real polynomial in t: sum_p coefficients[p] t^p.
inline double evaluate_polynomial(const std::vector<double>& coefficients, double t) {
  double acc = 0.0;
  for (auto it = coefficients.rbegin(); it != coefficients.rend(); ++it) acc = acc * t + *it;
  return acc;
}

/// External potential V(x) as one real polynomial in t per segment.
class PotentialSpec {
public:
  static constexpr int default_degree = 16;

  PotentialSpec() = default;

  PotentialSpec(const Mesh& mesh, std::vector<std::vector<double>> coefficients,
                double continuity_tolerance = 1e-10)
      : coefficients_(std::move(coefficients)) {
    if (coefficients_.size() != mesh.num_segments())
      throw std::invalid_argument("potential needs one polynomial per segment");
    for (auto& c : coefficients_)
      if (c.empty()) c.push_back(0.0);
    for (std::size_t k = 0; k + 1 < coefficients_.size(); ++k) {
      const double left = evaluate_polynomial(coefficients_[k], 1.0);
      const double right = evaluate_polynomial(coefficients_[k + 1], 0.0);
      const double scale = std::max({1.0, std::abs(left), std::abs(right)});
      if (std::abs(left - right) > continuity_tolerance * scale)
        throw std::invalid_argument("potential discontinuous at mesh point " + std::to_string(k + 1));
    }
  }

  static PotentialSpec constant(const Mesh& mesh, double value) {
    return {mesh, std::vector<std::vector<double>>(mesh.num_segments(), {value})};
  }

  /// V(x) = amplitude * sin(wavenumber * pi * x), Taylor-expanded about each
  /// segment midpoint to the given degree and re-expressed in t.
  static PotentialSpec sine(const Mesh& mesh, double amplitude, double wavenumber,
                            int degree = default_degree) {
    const double a = wavenumber * std::numbers::pi;
    std::vector<std::vector<double>> all;
    all.reserve(mesh.num_segments());
    for (std::size_t k = 0; k < mesh.num_segments(); ++k) {
      const double mid = 0.5 * (mesh[k] + mesh[k + 1]);
      const double width = mesh.width(k);
      // Coefficients in u = x - mid of amplitude * sin(a mid + a u).
      std::vector<double> in_u(static_cast<std::size_t>(degree) + 1);
      double factorial = 1.0;
      for (int j = 0; j <= degree; ++j) {
        if (j > 0) factorial *= j;
        in_u[static_cast<std::size_t>(j)] =
            amplitude * std::pow(a, j) * std::sin(a * mid + j * std::numbers::pi / 2) / factorial;
      }
      all.push_back(recenter(in_u, width));
    }
    return {mesh, std::move(all), 1e-8};
  }

  /// V(x) = 0.5 * omega^2 * (x - center)^2, exact per segment.
  static PotentialSpec harmonic(const Mesh& mesh, double omega, double center) {
    std::vector<std::vector<double>> all;
    for (std::size_t k = 0; k < mesh.num_segments(); ++k) {
      const double x0 = mesh[k] - center;
      const double w = mesh.width(k);
      const double c = 0.5 * omega * omega;
      all.push_back({c * x0 * x0, 2.0 * c * x0 * w, c * w * w});
    }
    return {mesh, std::move(all)};
  }

  const std::vector<std::vector<double>>& coefficients() const noexcept { return coefficients_; }
  const std::vector<double>& segment(std::size_t k) const { return coefficients_[k]; }
  std::size_t num_segments() const noexcept { return coefficients_.size(); }

  double evaluate(const Mesh& mesh, double x) const {
    const auto [k, t] = mesh.locate(x);
    return evaluate_polynomial(coefficients_[k], t);
  }

  /// Potential on the mesh refined by splitting segments; each child segment
  /// gets the parent polynomial re-expressed in its own local coordinate.
  PotentialSpec restricted_to(const Mesh& coarse, const Mesh& fine) const {
    std::vector<std::vector<double>> all;
    for (std::size_t j = 0; j < fine.num_segments(); ++j) {
      const auto [k, t0] = coarse.locate(fine[j]);
      const double scale = fine.width(j) / coarse.width(k);
      all.push_back(affine_substitute(coefficients_[k], t0, scale));
    }
    return {fine, std::move(all), 1e-8};
  }

private:
  // p(u) with u = width * (t - 1/2)  ->  coefficients in t.
  static std::vector<double> recenter(const std::vector<double>& in_u, double width) {
    std::vector<double> scaled(in_u.size());
    for (std::size_t j = 0; j < in_u.size(); ++j) scaled[j] = in_u[j] * std::pow(width, static_cast<double>(j));
    return affine_substitute(scaled, -0.5, 1.0);
  }

  // q(t) = p(offset + scale * t).
  static std::vector<double> affine_substitute(const std::vector<double>& p, double offset, double scale) {
    std::vector<double> out(p.size(), 0.0);
    // Horner in polynomial arithmetic.
    for (auto it = p.rbegin(); it != p.rend(); ++it) {
      std::vector<double> next(p.size(), 0.0);
      for (std::size_t j = 0; j < out.size(); ++j) {
        next[j] += out[j] * offset;
        if (j + 1 < next.size()) next[j + 1] += out[j] * scale;
      }
      next[0] += *it;
      out = std::move(next);
    }
    return out;
  }

  std::vector<std::vector<double>> coefficients_;
};

/// Full variational object: mesh, Q and R node matrices and boundary vectors.
class CmpsState {
public:
  CmpsState() = default;

  CmpsState(PiecewiseLinearMatrixFunction q, PiecewiseLinearMatrixFunction r, Vector left_boundary,
            Vector right_boundary, bool dirichlet = true)
      : q_(std::move(q)), r_(std::move(r)), left_(std::move(left_boundary)),
        right_(std::move(right_boundary)), dirichlet_(dirichlet) {
    if (!(q_.mesh() == r_.mesh())) throw std::invalid_argument("Q and R must share a mesh");
    if (q_.dimension() != r_.dimension()) throw std::invalid_argument("Q and R dimensions differ");
    if (left_.size() != dimension() || right_.size() != dimension())
      throw std::invalid_argument("boundary vectors must have length D");
    if (dirichlet_ && (r_.nodes().front().norm() != 0.0 || r_.nodes().back().norm() != 0.0))
      throw std::invalid_argument("Dirichlet state requires R = 0 at both walls");
  }

  /// Q = R = 0 on the mesh, boundary vectors |0>.
  static CmpsState zero(const Mesh& mesh, Eigen::Index dim, bool dirichlet = true) {
    auto z = PiecewiseLinearMatrixFunction::constant(mesh, zeros(dim));
    return {z, z, basis_vector(dim), basis_vector(dim), dirichlet};
  }

  const Mesh& mesh() const noexcept { return q_.mesh(); }
  const PiecewiseLinearMatrixFunction& q() const noexcept { return q_; }
  const PiecewiseLinearMatrixFunction& r() const noexcept { return r_; }
  const Matrix& q_node(std::size_t k) const { return q_.node(k); }
  const Matrix& r_node(std::size_t k) const { return r_.node(k); }
  const Vector& left_boundary() const noexcept { return left_; }
  const Vector& right_boundary() const noexcept { return right_; }
  bool dirichlet() const noexcept { return dirichlet_; }
  Eigen::Index dimension() const { return q_.dimension(); }
  std::size_t num_nodes() const { return mesh().size(); }
  std::size_t num_segments() const { return mesh().num_segments(); }

  /// Copy with replaced node matrices (same mesh, boundaries and constraint).
  CmpsState with_nodes(std::vector<Matrix> q_nodes, std::vector<Matrix> r_nodes) const {
    return {PiecewiseLinearMatrixFunction(mesh(), std::move(q_nodes)),
            PiecewiseLinearMatrixFunction(mesh(), std::move(r_nodes)), left_, right_, dirichlet_};
  }

private:
  PiecewiseLinearMatrixFunction q_;
  PiecewiseLinearMatrixFunction r_;
  Vector left_;
  Vector right_;
  bool dirichlet_ = true;
};

/// State on the union mesh with new nodes set by linear interpolation, so Q(x)
/// and R(x) are unchanged as functions.
inline CmpsState refine(const CmpsState& state, std::vector<double> new_points) {
  if (new_points.empty()) return state;
  std::sort(new_points.begin(), new_points.end());
  const Mesh& mesh = state.mesh();
  for (std::size_t i = 0; i < new_points.size(); ++i) {
    const double x = new_points[i];
    if (!(x > 0.0 && x < mesh.length()))
      throw std::invalid_argument("refinement point " + std::to_string(x) + " not strictly inside the box");
    if (mesh.node_index(x)) throw std::invalid_argument("refinement point " + std::to_string(x) + " already a mesh point");
    if (i > 0 && new_points[i] == new_points[i - 1])
      throw std::invalid_argument("duplicate refinement point " + std::to_string(x));
  }
  std::vector<double> merged;
  merged.reserve(mesh.size() + new_points.size());
  std::merge(mesh.points().begin(), mesh.points().end(), new_points.begin(), new_points.end(),
             std::back_inserter(merged));
  Mesh fine(merged);
  std::vector<Matrix> q_nodes, r_nodes;
  q_nodes.reserve(fine.size());
  r_nodes.reserve(fine.size());
  for (double x : merged) {
    q_nodes.push_back(state.q().evaluate(x));
    r_nodes.push_back(state.r().evaluate(x));
  }
  return {PiecewiseLinearMatrixFunction(fine, std::move(q_nodes)),
          PiecewiseLinearMatrixFunction(fine, std::move(r_nodes)), state.left_boundary(),
          state.right_boundary(), state.dirichlet()};
}

/// State whose nodes are Q(x) and R(x) sampled on another mesh of the same
/// box; exact when the new mesh contains the old one.
inline CmpsState resample(const CmpsState& state, const Mesh& mesh) {
  if (std::abs(mesh.length() - state.mesh().length()) > 1e-12 * state.mesh().length())
    throw std::invalid_argument("resampling needs a mesh of the same length");
  std::vector<Matrix> q_nodes, r_nodes;
  for (double x : mesh.points()) {
    const double clamped = std::min(x, state.mesh().length());
    q_nodes.push_back(state.q().evaluate(clamped));
    r_nodes.push_back(state.r().evaluate(clamped));
  }
  if (state.dirichlet()) {
    r_nodes.front().setZero();
    r_nodes.back().setZero();
  }
  return {PiecewiseLinearMatrixFunction(mesh, std::move(q_nodes)), PiecewiseLinearMatrixFunction(mesh, std::move(r_nodes)),
          state.left_boundary(), state.right_boundary(), state.dirichlet()};
}

/// Midpoints of the given segments, the usual argument to refine().
inline std::vector<double> segment_midpoints(const Mesh& mesh, const std::vector<std::size_t>& segments) {
  std::vector<double> pts;
  for (auto k : segments) pts.push_back(0.5 * (mesh[k] + mesh[k + 1]));
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return pts;
}

/// Embed every node as the top-left block of a larger matrix. Off-block
/// entries receive complex Gaussian noise of the given scale (Dirichlet wall
/// nodes of R stay exactly zero).
inline CmpsState expand_bond(const CmpsState& state, Eigen::Index new_dim, double noise_scale,
                             std::uint64_t seed = 0) {
  const Eigen::Index dim = state.dimension();
  if (new_dim <= dim)
    throw std::invalid_argument("new bond dimension " + std::to_string(new_dim) +
                                " must exceed current " + std::to_string(dim));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, noise_scale / std::sqrt(2.0));
  auto embed = [&](const Matrix& m, bool noisy) {
    Matrix out = zeros(new_dim);
    out.topLeftCorner(dim, dim) = m;
    if (noisy && noise_scale > 0.0) {
      for (Eigen::Index j = 0; j < new_dim; ++j)
        for (Eigen::Index i = 0; i < new_dim; ++i)
          if (i >= dim || j >= dim) out(i, j) = Complex(normal(rng), normal(rng));
    }
    return out;
  };
  std::vector<Matrix> q_nodes, r_nodes;
  const std::size_t last = state.num_nodes() - 1;
  for (std::size_t k = 0; k <= last; ++k) {
    q_nodes.push_back(embed(state.q_node(k), true));
    const bool wall = state.dirichlet() && (k == 0 || k == last);
    r_nodes.push_back(embed(state.r_node(k), !wall));
  }
  Vector left = Vector::Zero(new_dim), right = Vector::Zero(new_dim);
  left.head(dim) = state.left_boundary();
  right.head(dim) = state.right_boundary();
  return {PiecewiseLinearMatrixFunction(state.mesh(), std::move(q_nodes)),
          PiecewiseLinearMatrixFunction(state.mesh(), std::move(r_nodes)), left, right,
          state.dirichlet()};
}

}  // namespace cmps
