#pragma once

// Limited-memory BFGS on a real parameter vector with a strong-Wolfe line
// search (bracketing + zoom with safeguarded cubic interpolation).

#include <Eigen/Dense>

#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

namespace cmps {

struct LineSearchOptions {
  double sufficient_decrease = 1e-4;
  double curvature = 0.9;
  int max_evaluations = 40;
  double max_step = 1e20;
};

/// Objective value and gradient at a point; nullopt marks an unevaluable point.
struct Evaluation {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

using Objective = std::function<std::optional<Evaluation>(const Eigen::VectorXd&)>;

class LbfgsMemory {
public:
  explicit LbfgsMemory(std::size_t capacity = 10) : capacity_(capacity) {}

  void clear() {
    s_.clear();
    y_.clear();
    rho_.clear();
  }

  bool empty() const { return s_.empty(); }
  std::size_t size() const { return s_.size(); }

  /// Stores the pair if it has positive curvature; returns whether it did.
  bool push(const Eigen::VectorXd& s, const Eigen::VectorXd& y) {
    const double sy = s.dot(y);
    if (!(sy > 1e-14 * s.norm() * y.norm())) return false;
    if (s_.size() == capacity_) {
      s_.pop_front();
      y_.pop_front();
      rho_.pop_front();
    }
    s_.push_back(s);
    y_.push_back(y);
    rho_.push_back(1.0 / sy);
    return true;
  }

  /// -H g by the two-loop recursion. The optional preconditioner applies an
  /// approximate inverse Hessian in place of the identity.
  Eigen::VectorXd direction(const Eigen::VectorXd& g,
                            const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& precondition = {}) const {
    Eigen::VectorXd q = g;
    std::vector<double> alpha(s_.size());
    for (std::size_t i = s_.size(); i-- > 0;) {
      alpha[i] = rho_[i] * s_[i].dot(q);
      q -= alpha[i] * y_[i];
    }
    if (precondition) {
      if (!s_.empty()) {
        const double yhy = y_.back().dot(precondition(y_.back()));
        q = precondition(q);
        if (yhy > 0.0) q *= s_.back().dot(y_.back()) / yhy;
      } else {
        q = precondition(q);
      }
    } else if (!s_.empty()) {
      q *= s_.back().dot(y_.back()) / y_.back().squaredNorm();
    }
    for (std::size_t i = 0; i < s_.size(); ++i) {
      const double beta = rho_[i] * y_[i].dot(q);
      q += (alpha[i] - beta) * s_[i];
    }
    return -q;
  }

private:
  std::size_t capacity_;
  std::deque<Eigen::VectorXd> s_, y_;
  std::deque<double> rho_;
};

struct LineSearchResult {
  bool success = false;
  double step = 0.0;
  Evaluation at_step;
  int evaluations = 0;
};

namespace detail {

// Minimizer of the cubic matching values and slopes at a and b, clamped into
// the interval shrunk by 10% at both ends; falls back to bisection.
inline double cubic_minimizer(double a, double fa, double ga, double b, double fb, double gb) {
  const double lo = std::min(a, b), hi = std::max(a, b);
  const double d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - ga * gb;
  double x = 0.5 * (a + b);
  if (disc >= 0.0 && std::isfinite(disc)) {
    const double d2 = std::copysign(std::sqrt(disc), b - a);
    const double denom = gb - ga + 2.0 * d2;
    if (denom != 0.0) x = b - (b - a) * (gb + d2 - d1) / denom;
  }
  const double margin = 0.1 * (hi - lo);
  if (!std::isfinite(x) || x < lo + margin || x > hi - margin) x = 0.5 * (a + b);
  return x;
}

}  // namespace detail

/// Strong-Wolfe line search along `direction` from x with value f0 and slope g0 < 0.
inline LineSearchResult strong_wolfe_search(const Objective& objective, const Eigen::VectorXd& x, double f0,
                                            double slope0, const Eigen::VectorXd& direction, double initial_step,
                                            const LineSearchOptions& opt) {
  LineSearchResult result;
  auto phi = [&](double alpha) -> std::optional<Evaluation> {
    ++result.evaluations;
    auto e = objective(x + alpha * direction);
    if (e && !std::isfinite(e->value)) return std::nullopt;
    return e;
  };

  double alpha_prev = 0.0, f_prev = f0, g_prev = slope0;
  double alpha = initial_step;
  auto accept = [&](double a, Evaluation e) {
    result.success = true;
    result.step = a;
    result.at_step = std::move(e);
    return result;
  };

  auto zoom = [&](double lo, double f_lo, double g_lo, double hi, double f_hi, double g_hi,
                  Evaluation best) -> LineSearchResult {
    while (result.evaluations < opt.max_evaluations) {
      const double a = std::isfinite(f_hi) ? detail::cubic_minimizer(lo, f_lo, g_lo, hi, f_hi, g_hi) : 0.5 * (lo + hi);
      if (std::abs(hi - lo) <= 1e-16 * std::max(1.0, std::abs(lo))) break;
      auto e = phi(a);
      if (!e) {
        hi = a;
        f_hi = std::numeric_limits<double>::infinity();
        continue;
      }
      const double g_a = e->gradient.dot(direction);
      if (e->value > f0 + opt.sufficient_decrease * a * slope0 || e->value >= f_lo) {
        hi = a;
        f_hi = e->value;
        g_hi = g_a;
      } else {
        if (std::abs(g_a) <= -opt.curvature * slope0) return accept(a, std::move(*e));
        if (g_a * (hi - lo) >= 0.0) {
          hi = lo;
          f_hi = f_lo;
          g_hi = g_lo;
        }
        lo = a;
        f_lo = e->value;
        g_lo = g_a;
        best = std::move(*e);
      }
    }
    // Out of budget: settle for sufficient decrease if we have it.
    if (lo > 0.0 && f_lo < f0 + opt.sufficient_decrease * lo * slope0) return accept(lo, std::move(best));
    return result;
  };

  Evaluation prev_eval;
  for (int i = 0; result.evaluations < opt.max_evaluations; ++i) {
    auto e = phi(alpha);
    if (!e) {
      // Unevaluable trial point: shrink towards the last good step.
      return zoom(alpha_prev, f_prev, g_prev, alpha, std::numeric_limits<double>::infinity(), 0.0, prev_eval);
    }
    const double g_a = e->gradient.dot(direction);
    if (e->value > f0 + opt.sufficient_decrease * alpha * slope0 || (i > 0 && e->value >= f_prev))
      return zoom(alpha_prev, f_prev, g_prev, alpha, e->value, g_a, prev_eval);
    if (std::abs(g_a) <= -opt.curvature * slope0) return accept(alpha, std::move(*e));
    if (g_a >= 0.0) return zoom(alpha, e->value, g_a, alpha_prev, f_prev, g_prev, std::move(*e));
    alpha_prev = alpha;
    f_prev = e->value;
    g_prev = g_a;
    prev_eval = std::move(*e);
    alpha = std::min(2.0 * alpha, opt.max_step);
  }
  return result;
}

struct MinimizeOptions {
  int max_iterations = 1000;
  /// Stop when |grad| / sqrt(n) falls below this.
  double gradient_tolerance = 1e-8;
  std::size_t memory = 10;
  LineSearchOptions line_search;
};

enum class MinimizeStatus { converged, max_iterations, line_search_failed };

struct MinimizeResult {
  Eigen::VectorXd x;
  Evaluation at_x;
  int iterations = 0;
  MinimizeStatus status = MinimizeStatus::max_iterations;
};

/// Plain L-BFGS loop; restarts from steepest descent once before giving up on
/// a failed line search.
inline MinimizeResult minimize(const Objective& objective, Eigen::VectorXd x0, const MinimizeOptions& options) {
  MinimizeResult result;
  result.x = std::move(x0);
  auto first = objective(result.x);
  if (!first) throw std::runtime_error("objective cannot be evaluated at the starting point");
  result.at_x = std::move(*first);
  LbfgsMemory memory(options.memory);
  const double sqrt_n = std::sqrt(static_cast<double>(std::max<Eigen::Index>(result.x.size(), 1)));
  for (;;) {
    const Eigen::VectorXd& g = result.at_x.gradient;
    if (g.norm() / sqrt_n <= options.gradient_tolerance) {
      result.status = MinimizeStatus::converged;
      return result;
    }
    if (result.iterations >= options.max_iterations) return result;
    Eigen::VectorXd d = memory.direction(g);
    if (!(g.dot(d) < 0.0)) {
      memory.clear();
      d = -g;
    }
    double initial = memory.empty() ? std::min(1.0, 1.0 / g.norm()) : 1.0;
    auto ls = strong_wolfe_search(objective, result.x, result.at_x.value, g.dot(d), d, initial, options.line_search);
    if (!ls.success && !memory.empty()) {
      memory.clear();
      d = -g;
      ls = strong_wolfe_search(objective, result.x, result.at_x.value, g.dot(d), d, std::min(1.0, 1.0 / g.norm()),
                               options.line_search);
    }
    if (!ls.success) {
      result.status = MinimizeStatus::line_search_failed;
      return result;
    }
    const Eigen::VectorXd x_new = result.x + ls.step * d;
    memory.push(x_new - result.x, ls.at_step.gradient - g);
    result.x = x_new;
    result.at_x = std::move(ls.at_step);
    ++result.iterations;
  }
}

}  // namespace cmps
