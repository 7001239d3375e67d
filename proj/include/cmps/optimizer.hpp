#pragma once

// Global L-BFGS optimization of all node matrices at once.

#include "cmps/gradient.hpp"
#include "cmps/lbfgs.hpp"
#include "cmps/uniform.hpp"

#include <chrono>
#include <map>
#include <ostream>

namespace cmps {

/// Number of free real parameters: Q at every node, R at every node not
/// pinned by the Dirichlet condition; real and imaginary parts separately.
inline std::size_t parameter_count(const CmpsState& state) {
  const auto d2 = static_cast<std::size_t>(state.dimension() * state.dimension());
  const std::size_t nodes = state.num_nodes();
  const std::size_t r_nodes = state.dirichlet() ? nodes - 2 : nodes;
  return 2 * d2 * (nodes + r_nodes);
}

namespace detail {

inline bool r_node_free(const CmpsState& state, std::size_t k) {
  return !state.dirichlet() || (k != 0 && k + 1 != state.num_nodes());
}

template <typename Visit>
void for_each_free_node(const CmpsState& state, Visit&& visit) {
  for (std::size_t k = 0; k < state.num_nodes(); ++k) visit(true, k);
  for (std::size_t k = 0; k < state.num_nodes(); ++k)
    if (r_node_free(state, k)) visit(false, k);
}

}  // namespace detail

/// Flat real vector of the free parameters (Q nodes, then free R nodes; each
/// matrix column-major as interleaved real/imaginary parts).
inline Eigen::VectorXd pack(const CmpsState& state) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(parameter_count(state)));
  Eigen::Index pos = 0;
  detail::for_each_free_node(state, [&](bool is_q, std::size_t k) {
    const Matrix& m = is_q ? state.q_node(k) : state.r_node(k);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      x(pos++) = m(i).real();
      x(pos++) = m(i).imag();
    }
  });
  return x;
}

/// Inverse of pack; masked Dirichlet nodes are taken from the template (zero).
inline CmpsState unpack(const Eigen::VectorXd& x, const CmpsState& layout) {
  if (static_cast<std::size_t>(x.size()) != parameter_count(layout))
    throw std::invalid_argument("parameter vector has length " + std::to_string(x.size()) + ", expected " +
                                std::to_string(parameter_count(layout)));
  std::vector<Matrix> q = layout.q().nodes(), r = layout.r().nodes();
  Eigen::Index pos = 0;
  detail::for_each_free_node(layout, [&](bool is_q, std::size_t k) {
    Matrix& m = is_q ? q[k] : r[k];
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      m(i) = Complex(x(pos), x(pos + 1));
      pos += 2;
    }
  });
  return layout.with_nodes(std::move(q), std::move(r));
}

/// Gradient of the energy with respect to the packed real parameters.
inline Eigen::VectorXd pack_gradient(const GradientReport& grad, const CmpsState& layout) {
  Eigen::VectorXd g(static_cast<Eigen::Index>(parameter_count(layout)));
  Eigen::Index pos = 0;
  detail::for_each_free_node(layout, [&](bool is_q, std::size_t k) {
    const Matrix& m = is_q ? grad.q[k] : grad.r[k];
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      g(pos++) = 2.0 * m(i).real();
      g(pos++) = 2.0 * m(i).imag();
    }
  });
  return g;
}

/// Complex Gaussian nodes of the given scale; Q additionally carries
/// -R^dag R / 2 so the norm stays moderate.
inline CmpsState random_state(const Mesh& mesh, Eigen::Index dim, double scale, std::uint64_t seed,
                              bool dirichlet = true) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale / std::sqrt(2.0));
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
    r.push_back(std::move(rk));
  }
  return {PiecewiseLinearMatrixFunction(mesh, std::move(q)), PiecewiseLinearMatrixFunction(mesh, std::move(r)),
          basis_vector(dim), basis_vector(dim), dirichlet};
}

/// Random start whose density is of the order of the mean-field value mu / g.
inline CmpsState mean_field_random_state(const Mesh& mesh, Eigen::Index dim, const HamiltonianSpec& spec,
                                         std::uint64_t seed, bool dirichlet = true) {
  double density = spec.g > 0.0 ? std::max(spec.mu, 0.0) / spec.g : std::max(spec.mu, 1.0);
  density = std::clamp(density, 1e-2, 1e3);
  return random_state(mesh, dim, std::sqrt(density / static_cast<double>(dim)), seed, dirichlet);
}

/// Finite-box start from a uniform state: Q is copied to every node and R is
/// multiplied by sin^2(pi d / (2 w)) within a distance d < w of either wall.
/// Both boundary vectors are the dominant eigenvector of the fixed point.
inline CmpsState initialize_from_uniform(const UniformCmps& uniform, const Mesh& mesh, double taper_width,
                                         bool dirichlet = true) {
  if (!(taper_width >= 0.0) || 2.0 * taper_width > mesh.length())
    throw std::invalid_argument("taper width must lie in [0, L/2]");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (uniform.right + uniform.right.adjoint()));
  const Vector boundary = eig.eigenvectors().col(uniform.dimension() - 1);
  std::vector<Matrix> q(mesh.size(), uniform.q), r;
  for (std::size_t k = 0; k < mesh.size(); ++k) {
    const double distance = std::min(mesh[k], mesh.length() - mesh[k]);
    double factor = 1.0;
    if (distance < taper_width) factor = std::pow(std::sin(0.5 * std::numbers::pi * distance / taper_width), 2);
    if (dirichlet && (k == 0 || k + 1 == mesh.size())) factor = 0.0;
    r.push_back(factor * uniform.r);
  }
  return {PiecewiseLinearMatrixFunction(mesh, std::move(q)), PiecewiseLinearMatrixFunction(mesh, std::move(r)),
          boundary, boundary, dirichlet};
}

/// Q -> Q - (lambda / 2) 1 with lambda = log(norm) / L rescales the norm to 1
/// without changing the physical state.
inline CmpsState normalize_norm(const CmpsState& state, double norm) {
  const double lambda = std::log(norm) / state.mesh().length();
  std::vector<Matrix> q = state.q().nodes();
  for (auto& m : q) m.diagonal().array() -= 0.5 * lambda;
  return state.with_nodes(std::move(q), state.r().nodes());
}

struct OptimizeOptions {
  int max_iterations = 1000;
  /// Stop when |grad| / sqrt(parameter count) falls below this.
  double gradient_tolerance = 1e-6;
  std::size_t memory = 10;
  LineSearchOptions line_search;
  TaylorTolerance taylor;
  /// (iteration, mesh) pairs; the new mesh must contain the current one.
  std::vector<std::pair<int, std::vector<double>>> refine_schedule;
  /// (iteration, bond dimension) pairs.
  std::vector<std::pair<int, Eigen::Index>> bond_schedule;
  double bond_noise = 1e-3;
  int refinement_budget = 8;
  std::uint64_t seed = 0;
  /// Precondition L-BFGS with the node-local Gauss-Newton Hessian model.
  bool precondition = true;
  /// Diagonal shift of each node block, relative to its largest diagonal entry.
  double preconditioner_regularization = 1e-2;
  double norm_lower = 1e-8;
  double norm_upper = 1e8;
  /// Called after every accepted iteration with (iteration, state).
  std::function<void(int, const CmpsState&)> on_iteration;

  void validate() const {
    if (!(gradient_tolerance > 0.0)) throw std::invalid_argument("gradient tolerance must be positive");
    if (!(preconditioner_regularization > 0.0))
      throw std::invalid_argument("preconditioner regularization must be positive");
    if (memory < 1) throw std::invalid_argument("L-BFGS memory must be positive");
    if (!(line_search.sufficient_decrease > 0.0 && line_search.sufficient_decrease < line_search.curvature &&
          line_search.curvature < 1.0))
      throw std::invalid_argument("line search constants need 0 < c1 < c2 < 1");
    auto sorted = [](const auto& v) {
      return std::is_sorted(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    };
    if (!sorted(refine_schedule) || !sorted(bond_schedule))
      throw std::invalid_argument("schedules must be sorted by iteration");
    taylor.validate();
  }
};

struct TraceEntry {
  int iteration = 0;
  double energy = 0.0;
  double gradient_norm = 0.0;
  double step = 0.0;
  int max_taylor_order = 0;
  double seconds = 0.0;
  std::string event;
};

struct OptimizationTrace {
  std::vector<TraceEntry> entries;

  /// CSV with columns iteration,energy,gradNorm,step,maxTaylorOrder,seconds.
  void write_csv(std::ostream& out, bool include_header = true) const {
    if (include_header) out << "iteration,energy,gradNorm,step,maxTaylorOrder,seconds\n";
    const auto old = out.precision(17);
    for (const auto& e : entries)
      out << e.iteration << ',' << e.energy << ',' << e.gradient_norm << ',' << e.step << ',' << e.max_taylor_order
          << ',' << e.seconds << '\n';
    out.precision(old);
  }
};

enum class OptimizeStatus { converged, max_iterations, stalled };

inline const char* to_string(OptimizeStatus s) {
  switch (s) {
    case OptimizeStatus::converged: return "converged";
    case OptimizeStatus::max_iterations: return "max_iterations";
    case OptimizeStatus::stalled: return "stalled";
  }
  return "unknown";
}

struct OptimizeResult {
  CmpsState state;
  OptimizationTrace trace;
  OptimizeStatus status = OptimizeStatus::max_iterations;
  EnergyReport report;
  int refinements = 0;
};

/// Line search failed and no refinement budget remained; carries the best state.
class OptimizationStalled : public std::runtime_error {
public:
  explicit OptimizationStalled(OptimizeResult best)
      : std::runtime_error("optimization stalled: line search failed at energy " + std::to_string(best.report.total)),
        best_(std::move(best)) {}
  const OptimizeResult& best() const noexcept { return best_; }

private:
  OptimizeResult best_;
};

namespace detail {

inline double rms(const Eigen::VectorXd& g) {
  return g.size() == 0 ? 0.0 : g.norm() / std::sqrt(static_cast<double>(g.size()));
}

// Block-diagonal model of the energy Hessian with one block per free node
// matrix X: the local metric rho X sigma weighted by 2 / h^2 for the kinetic
// term, plus for R nodes the Gauss-Newton term of the pair amplitude R^2
// weighted by g. Node envelopes are normalized by the norm.
class LocalHessianPreconditioner {
public:
  LocalHessianPreconditioner() = default;

  LocalHessianPreconditioner(const CmpsState& state, const GradientReport& env, double g, double regularization) {
    const Mesh& mesh = state.mesh();
    const Eigen::Index dim = state.dimension();
    const Eigen::Index n = dim * dim;
    for_each_free_node(state, [&](bool is_q, std::size_t k) {
      double w = 0.0, h = 0.0;
      int sides = 0;
      for (std::size_t seg : {k - 1, k}) {
        if (seg >= state.num_segments()) continue;
        w += 0.5 * mesh.width(seg);
        h += mesh.width(seg);
        ++sides;
      }
      h /= sides;
      const Matrix rho = hermitian_part(env.rho[k]);
      const Matrix sigma = hermitian_part(env.sigma[k]);
      // Column (i, j) is a sum of outer products left.col(i) * right.row(j).
      std::vector<std::tuple<double, Matrix, Matrix>> terms{{2.0 / (h * h), rho, sigma}};
      if (!is_q && g > 0.0) {
        const Matrix& r = state.r_node(k);
        terms.emplace_back(g, rho, r * sigma * r.adjoint());
        terms.emplace_back(g, rho * r, sigma * r.adjoint());
        terms.emplace_back(g, r.adjoint() * rho, r * sigma);
        terms.emplace_back(g, r.adjoint() * rho * r, sigma);
      }
      Matrix p = Matrix::Zero(n, n);
      for (Eigen::Index j = 0; j < dim; ++j)
        for (Eigen::Index i = 0; i < dim; ++i) {
          auto col = p.col(i + j * dim).reshaped(dim, dim);
          for (const auto& [a, left, right] : terms) col.noalias() += (a * w) * left.col(i) * right.row(j);
        }
      const double scale = p.diagonal().real().maxCoeff();
      p = hermitian_part(p);
      if (scale > 0.0)
        p.diagonal().array() += regularization * scale;
      else
        p.setIdentity();
      factors_.emplace_back(p);
    });
  }

  bool active() const { return !factors_.empty(); }

  Eigen::VectorXd operator()(const Eigen::VectorXd& g) const {
    Eigen::VectorXd out(g.size());
    Eigen::Index pos = 0;
    for (const auto& f : factors_) {
      const Eigen::Index n = f.rows();
      Vector v(n);
      for (Eigen::Index i = 0; i < n; ++i) v(i) = Complex(g(pos + 2 * i), g(pos + 2 * i + 1));
      const Vector x = f.solve(v);
      for (Eigen::Index i = 0; i < n; ++i) {
        out(pos + 2 * i) = x(i).real();
        out(pos + 2 * i + 1) = x(i).imag();
      }
      pos += 2 * n;
    }
    return out;
  }

private:
  std::vector<Eigen::LLT<Matrix>> factors_;
};

inline CmpsState apply_refinement(const CmpsState& state, const std::vector<double>& mesh_points) {
  std::vector<double> fresh;
  const Mesh& mesh = state.mesh();
  for (double x : mesh_points)
    if (!mesh.node_index(x) && x > 0.0 && x < mesh.length()) fresh.push_back(x);
  for (double x : mesh.points())
    if (!std::binary_search(mesh_points.begin(), mesh_points.end(), x))
      throw std::invalid_argument("scheduled mesh must contain the current mesh");
  return refine(state, std::move(fresh));
}

}  // namespace detail

/// Runs L-BFGS, returning the result with status converged or max_iterations;
/// throws OptimizationStalled when the line search fails for good.
inline OptimizeResult optimize_result(CmpsState state, const HamiltonianSpec& spec, const OptimizeOptions& options) {
  options.validate();
  spec.validate();
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

  OptimizeResult result;
  LbfgsMemory memory(options.memory);
  std::optional<std::size_t> truncated_segment;
  EnergyReport last_report;

  CmpsState layout = state;
  struct Trial {
    Eigen::VectorXd x;
    EnergyReport report;
    GradientReport envelopes;
  };
  std::vector<Trial> trial_reports;
  GradientReport last_envelopes;
  const Objective objective = [&](const Eigen::VectorXd& x) -> std::optional<Evaluation> {
    try {
      auto [report, grad] = energy_and_gradient(unpack(x, layout), spec, options.taylor);
      last_report = report;
      last_envelopes.rho = grad.rho;
      last_envelopes.sigma = grad.sigma;
      trial_reports.push_back({x, report, last_envelopes});
      return Evaluation{report.total, pack_gradient(grad, layout)};
    } catch (const TruncationError& e) {
      truncated_segment = e.segment();
      return std::nullopt;
    } catch (const NumericalBreakdown&) {
      return std::nullopt;
    }
  };

  // The starting point must be evaluable.
  auto evaluate_current = [&]() -> Evaluation {
    layout = state;
    truncated_segment.reset();
    auto e = objective(pack(state));
    while (!e && truncated_segment && result.refinements < options.refinement_budget) {
      state = refine(state, segment_midpoints(state.mesh(), {*truncated_segment}));
      ++result.refinements;
      layout = state;
      truncated_segment.reset();
      e = objective(pack(state));
    }
    if (!e) throw NumericalBreakdown("initial state cannot be evaluated");
    return std::move(*e);
  };

  Evaluation current = evaluate_current();
  EnergyReport current_report = last_report;
  detail::LocalHessianPreconditioner preconditioner;
  auto update_preconditioner = [&](const GradientReport& envelopes) {
    if (options.precondition)
      preconditioner = detail::LocalHessianPreconditioner(state, envelopes, spec.g,
                                                          options.preconditioner_regularization);
  };
  update_preconditioner(last_envelopes);
  auto record = [&](int it, double step, const std::string& event) {
    result.trace.entries.push_back({it, current.value, detail::rms(current.gradient), step,
                                    current_report.max_taylor_order, elapsed(), event});
  };
  record(0, 0.0, "start");

  std::size_t next_refine = 0, next_bond = 0;
  int iteration = 0;
  result.status = OptimizeStatus::max_iterations;
  while (true) {
    // Scheduled events at this iteration.
    bool changed = false;
    while (next_refine < options.refine_schedule.size() && options.refine_schedule[next_refine].first <= iteration) {
      state = detail::apply_refinement(state, options.refine_schedule[next_refine++].second);
      changed = true;
    }
    while (next_bond < options.bond_schedule.size() && options.bond_schedule[next_bond].first <= iteration) {
      const auto dim = options.bond_schedule[next_bond++].second;
      if (dim > state.dimension())
        state = expand_bond(state, dim, options.bond_noise, options.seed + static_cast<std::uint64_t>(iteration));
      changed = true;
    }
    if (changed) {
      memory.clear();
      current = evaluate_current();
      current_report = last_report;
      update_preconditioner(last_envelopes);
      record(iteration, 0.0, "schedule");
    }

    if (detail::rms(current.gradient) <= options.gradient_tolerance) {
      result.status = OptimizeStatus::converged;
      break;
    }
    if (iteration >= options.max_iterations) break;

    Eigen::VectorXd x = pack(state);
    Eigen::VectorXd direction =
        preconditioner.active()
            ? memory.direction(current.gradient, [&](const Eigen::VectorXd& v) { return preconditioner(v); })
            : memory.direction(current.gradient);
    double slope = current.gradient.dot(direction);
    if (!(slope < 0.0)) {
      memory.clear();
      direction = -current.gradient;
      slope = current.gradient.dot(direction);
    }
    const double initial = memory.empty() ? std::min(1.0, 1.0 / direction.norm()) : 1.0;
    truncated_segment.reset();
    trial_reports.clear();
    auto ls = strong_wolfe_search(objective, x, current.value, slope, direction, initial, options.line_search);
    if (!ls.success && !memory.empty()) {
      memory.clear();
      direction = -current.gradient;
      slope = current.gradient.dot(direction);
      ls = strong_wolfe_search(objective, x, current.value, slope, direction,
                               std::min(1.0, 1.0 / current.gradient.norm()), options.line_search);
    }
    if (!ls.success) {
      if (truncated_segment && result.refinements < options.refinement_budget) {
        state = refine(state, segment_midpoints(state.mesh(), {*truncated_segment}));
        ++result.refinements;
        memory.clear();
        current = evaluate_current();
        current_report = last_report;
        update_preconditioner(last_envelopes);
        record(iteration, 0.0, "refine");
        continue;
      }
      result.status = OptimizeStatus::stalled;
      break;
    }
    ++iteration;
    const Eigen::VectorXd x_new = x + ls.step * direction;
    memory.push(x_new - x, ls.at_step.gradient - current.gradient);
    state = unpack(x_new, layout);
    current = std::move(ls.at_step);
    // The objective's last evaluation is not necessarily the accepted one.
    auto accepted = std::find_if(trial_reports.begin(), trial_reports.end(),
                                 [&](const auto& t) { return t.x == x_new; });
    if (accepted != trial_reports.end()) {
      current_report = accepted->report;
      update_preconditioner(accepted->envelopes);
    } else {
      current_report = energy(state, spec, options.taylor);
    }
    if (current_report.norm < options.norm_lower || current_report.norm > options.norm_upper) {
      state = normalize_norm(state, current_report.norm);
      memory.clear();
      current = evaluate_current();
      current_report = last_report;
      update_preconditioner(last_envelopes);
    }
    record(iteration, ls.step, "");
    if (options.on_iteration) options.on_iteration(iteration, state);
  }
  result.state = state;
  result.report = current_report;
  if (result.status == OptimizeStatus::stalled) throw OptimizationStalled(std::move(result));
  return result;
}

/// Optimized state and its trace.
inline std::pair<CmpsState, OptimizationTrace> optimize(const CmpsState& state, const HamiltonianSpec& spec,
                                                        const OptimizeOptions& options) {
  auto r = optimize_result(state, spec, options);
  return {std::move(r.state), std::move(r.trace)};
}

}  // namespace cmps
