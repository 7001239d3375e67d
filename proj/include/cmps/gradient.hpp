#pragma once

// Reverse-mode derivative of the exact energy with respect to every node
// matrix. The forward pass is the energy evaluation itself (same code path, so
// the energies agree bitwise); the reverse pass replays the energy contraction
// and then both Taylor sweeps backwards.
//
// Convention: gradQ[k] = dE / d conj(Q_k) (Wirtinger), so a perturbation
// (dQ, dR) changes the energy by 2 Re sum_k tr(gradQ[k]^dag dQ_k + gradR[k]^dag dR_k)
// and -grad is the steepest-descent direction. Internally adjoints follow
// dE = Re tr(Xbar^dag dX), i.e. Xbar = 2 grad.

#include "cmps/energy.hpp"

namespace cmps {

struct GradientReport {
  std::vector<Matrix> q;
  std::vector<Matrix> r;
  /// rho and sigma at the nodes, divided by the norm.
  std::vector<Matrix> rho;
  std::vector<Matrix> sigma;

  /// Directional derivative of the energy along (dq, dr).
  double directional(const std::vector<Matrix>& dq, const std::vector<Matrix>& dr) const {
    double acc = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) {
      acc += 2.0 * trace_product(q[k].adjoint(), dq[k]).real();
      acc += 2.0 * trace_product(r[k].adjoint(), dr[k]).real();
    }
    return acc;
  }
};

namespace detail {

// Adjoint accumulators for the node values of Q and R.
struct NodeAdjoints {
  std::vector<Matrix> q;
  std::vector<Matrix> r;

  NodeAdjoints(std::size_t nodes, Eigen::Index dim) : q(nodes, zeros(dim)), r(nodes, zeros(dim)) {}

  // a0 = X_k, a1 = X_{k+1} - X_k
  static void scatter_linear(std::vector<Matrix>& x, std::size_t k, const Matrix& bar0, const Matrix& bar1) {
    x[k] += bar0 - bar1;
    x[k + 1] += bar1;
  }
};

inline void commutator_adjoint(const Matrix& a, const Matrix& b, const Matrix& cbar, Matrix& abar, Matrix& bbar) {
  abar.noalias() += cbar * b.adjoint();
  abar.noalias() -= b.adjoint() * cbar;
  bbar.noalias() += a.adjoint() * cbar;
  bbar.noalias() -= cbar * a.adjoint();
}

// Reverse of contract_family scaled by `scale`: accumulates rho, sigma and
// factor adjoints.
inline void contract_family_adjoint(const std::vector<Matrix>& rho, const std::vector<Matrix>& sigma,
                                    std::span<const Matrix> f, const std::vector<double>& w,
                                    const FamilyCache& cache, double scale, BetaTable& beta,
                                    std::vector<Matrix>& rho_bar, std::vector<Matrix>& sigma_bar,
                                    std::vector<Matrix>& f_bar) {
  const Eigen::Index dim = rho[0].rows();
  const std::size_t np = cache.p.size();
  const std::size_t nt = sigma.size() + f.size() - 1;
  std::vector<Matrix> p_bar(np);
  for (std::size_t l = 0; l < np; ++l) p_bar[l] = scale * cache.u[l].adjoint();
  std::vector<Matrix> t_bar(nt, zeros(dim));
  for (std::size_t l = 0; l < np; ++l) {
    const auto& row = beta.row(l);
    for (std::size_t lp = 0; lp < nt; ++lp) t_bar[lp] += row[lp] * cache.p[l];
  }
  for (auto& m : t_bar) m = (scale * m.adjoint()).eval();

  for (std::size_t n = 0; n < rho.size(); ++n) {
    const Matrix rho_h = rho[n].adjoint();
    for (std::size_t i = 0; i < f.size(); ++i) {
      Matrix prod_bar = zeros(dim);
      bool any = false;
      for (std::size_t q = 0; q < w.size(); ++q) {
        if (w[q] == 0.0) continue;
        prod_bar += w[q] * p_bar[n + i + q];
        any = true;
      }
      if (!any) continue;
      rho_bar[n].noalias() += prod_bar * f[i].adjoint();
      f_bar[i].noalias() += rho_h * prod_bar;
    }
  }
  std::vector<Matrix> fs_bar(cache.f_s.size(), zeros(dim));
  for (std::size_t m = 0; m < sigma.size(); ++m) {
    for (std::size_t j = 0; j < cache.f_s.size(); ++j) {
      const Matrix& tb = t_bar[m + j];
      sigma_bar[m].noalias() += tb * cache.f_s[j];
      fs_bar[j].noalias() += tb.adjoint() * sigma[m];
    }
  }
  for (std::size_t i = 0; i < f.size(); ++i)
    for (std::size_t j = 0; j <= i; ++j) f_bar[i] += ((j % 2 == 0) ? 1.0 : -1.0) * binomial(i, j) * fs_bar[j];
}

// Factor-family adjoints of segment k back onto the node adjoints.
inline void factors_adjoint(const CmpsState& state, std::size_t k, const std::array<std::vector<Matrix>, 3>& fam_bar,
                            NodeAdjoints& nodes) {
  const Eigen::Index dim = state.dimension();
  const Matrix& q0 = state.q_node(k);
  const Matrix q1 = state.q_node(k + 1) - q0;
  const Matrix& r0 = state.r_node(k);
  const Matrix r1 = state.r_node(k + 1) - r0;
  const double width = state.mesh().width(k);
  Matrix q0b = zeros(dim), q1b = zeros(dim), r0b = zeros(dim), r1b = zeros(dim);

  const auto& kin = fam_bar[0];
  // D0 = [q0, r0] + r1 / width, D1 = [q0, r1] + [q1, r0], D2 = [q1, r1]
  commutator_adjoint(q0, r0, kin[0], q0b, r0b);
  r1b += kin[0] / width;
  commutator_adjoint(q0, r1, kin[1], q0b, r1b);
  commutator_adjoint(q1, r0, kin[1], q1b, r0b);
  commutator_adjoint(q1, r1, kin[2], q1b, r1b);

  const auto& field = fam_bar[1];
  r0b += field[0];
  r1b += field[1];

  const auto& pair = fam_bar[2];
  // S0 = r0 r0, S1 = r0 r1 + r1 r0, S2 = r1 r1
  const Matrix r0h = r0.adjoint(), r1h = r1.adjoint();
  r0b.noalias() += pair[0] * r0h + r0h * pair[0];
  r0b.noalias() += pair[1] * r1h + r1h * pair[1];
  r1b.noalias() += r0h * pair[1] + pair[1] * r0h;
  r1b.noalias() += pair[2] * r1h + r1h * pair[2];

  NodeAdjoints::scatter_linear(nodes.q, k, q0b, q1b);
  NodeAdjoints::scatter_linear(nodes.r, k, r0b, r1b);
}

}  // namespace detail

/// Energy and its exact gradient with respect to all node matrices.
inline std::pair<EnergyReport, GradientReport> energy_and_gradient(const CmpsState& state, const HamiltonianSpec& spec,
                                                                   const TaylorTolerance& tol = {}) {
  const StateEnvelopes env = compute_envelopes(state, tol);
  const auto integrals = detail::energy_integrals(state, spec, env, true);
  EnergyReport report = detail::assemble_report(integrals, env);

  const std::size_t segments = state.num_segments();
  const Eigen::Index dim = state.dimension();
  const double z = report.norm;
  const double e = report.total;
  detail::NodeAdjoints nodes(state.num_nodes(), dim);

  std::vector<std::vector<Matrix>> rho_bar(segments), sigma_bar(segments);
  BetaTable beta;
  for (std::size_t k = 0; k < segments; ++k) {
    const auto& rho = env.left.segments[k].coefficients;
    const auto& sigma = env.right.segments[k].coefficients;
    rho_bar[k].assign(rho.size(), zeros(dim));
    sigma_bar[k].assign(sigma.size(), zeros(dim));
    const auto& f = integrals.factors[k];
    std::array<std::vector<Matrix>, 3> fam_bar{std::vector<Matrix>(3, zeros(dim)), std::vector<Matrix>(2, zeros(dim)),
                                               std::vector<Matrix>(3, zeros(dim))};
    for (Channel c : {Channel::kinetic, Channel::potential, Channel::interaction}) {
      const auto ci = static_cast<std::size_t>(c);
      const auto& cache = integrals.caches[k][ci];
      beta.ensure(std::max(cache.p.size(), sigma.size() + 3) + 1);
      detail::contract_family_adjoint(rho, sigma, f.family(c), channel_weight(f, c, spec.g), cache, f.width / z, beta,
                                      rho_bar[k], sigma_bar[k], fam_bar[ci]);
    }
    detail::factors_adjoint(state, k, fam_bar, nodes);
  }

  // Normalization: E = N / Z with Z = Re tr(rho(0) sigma(0)).
  const Matrix z_bar_sigma = (-e / z) * env.left.node_value(0).adjoint();
  for (auto& m : sigma_bar[0]) m += z_bar_sigma;

  // Left sweep backwards: rho(x_{k+1}) = sum_n rho_k^(n).
  Matrix seed_bar = zeros(dim);
  for (std::size_t k = segments; k-- > 0;) {
    auto& bars = rho_bar[k];
    if (k + 1 < segments)
      for (auto& m : bars) m += seed_bar;
    const auto g = left_generator(state, k);
    GeneratorAdjoint gb(dim);
    taylor_propagate_adjoint(g, env.left.segments[k].coefficients, bars, gb);
    seed_bar = bars[0];
    detail::NodeAdjoints::scatter_linear(nodes.q, k, gb.a0, gb.a1);
    detail::NodeAdjoints::scatter_linear(nodes.r, k, gb.b0, gb.b1);
  }

  // Right sweep backwards: sigma(x_k) = sum_m sigma_k^(m) seeds segment k - 1.
  seed_bar = zeros(dim);
  for (std::size_t k = 0; k < segments; ++k) {
    auto& bars = sigma_bar[k];
    if (k > 0)
      for (auto& m : bars) m += seed_bar;
    const auto g = right_generator(state, k);
    GeneratorAdjoint gb(dim);
    taylor_propagate_adjoint(g, env.right.segments[k].coefficients, bars, gb);
    seed_bar = bars[0];
    // a0 = Q_{k+1}^dag, a1 = (Q_k - Q_{k+1})^dag
    nodes.q[k + 1] += gb.a0.adjoint() - gb.a1.adjoint();
    nodes.q[k] += gb.a1.adjoint();
    nodes.r[k + 1] += gb.b0.adjoint() - gb.b1.adjoint();
    nodes.r[k] += gb.b1.adjoint();
  }

  GradientReport grad;
  grad.q.reserve(state.num_nodes());
  grad.r.reserve(state.num_nodes());
  for (std::size_t k = 0; k < state.num_nodes(); ++k) {
    grad.q.push_back(0.5 * nodes.q[k]);
    grad.r.push_back(0.5 * nodes.r[k]);
    grad.rho.push_back(env.left.node_value(k) / z);
    grad.sigma.push_back(env.right.node_value(k) / z);
  }
  return {std::move(report), std::move(grad)};
}

namespace detail {

inline std::vector<double> real_to_s_basis(const std::vector<double>& w) {
  std::vector<double> out(w.size(), 0.0);
  for (std::size_t p = 0; p < w.size(); ++p)
    for (std::size_t j = 0; j <= p; ++j) out[j] += ((j % 2 == 0) ? 1.0 : -1.0) * binomial(p, j) * w[p];
  return out;
}

}  // namespace detail

/// Integrated energy environments H_L (left flow with source sum F^dag rho F,
/// H_L(0) = 0) and H_R (right flow with source sum F sigma F^dag, H_R(L) = 0).
/// tr(H_L(x) sigma(x)) + tr(rho(x) H_R(x)) equals the unnormalized energy.
inline std::pair<TaylorEnvelope, TaylorEnvelope> energy_environments(const CmpsState& state,
                                                                     const HamiltonianSpec& spec,
                                                                     const TaylorTolerance& tol = {}) {
  spec.validate();
  const StateEnvelopes env = compute_envelopes(state, tol);
  const auto potential = spec.potential.on(state.mesh());
  const Eigen::Index dim = state.dimension();
  const std::size_t segments = state.num_segments();
  std::vector<std::vector<Matrix>> left_src(segments), right_src(segments);
  for (std::size_t k = 0; k < segments; ++k) {
    const auto f = segment_factors(state, k, potential.segment(k), spec.mu);
    const auto& rho = env.left.segments[k].coefficients;
    const auto& sigma = env.right.segments[k].coefficients;
    for (Channel c : {Channel::kinetic, Channel::potential, Channel::interaction}) {
      const auto fam = f.family(c);
      const auto w = channel_weight(f, c, spec.g);
      const auto ws = detail::real_to_s_basis(w);
      const auto fs = detail::to_s_basis(fam);
      auto grow = [&](std::vector<Matrix>& v, std::size_t size) {
        if (v.size() < size) v.resize(size, zeros(dim));
      };
      grow(left_src[k], rho.size() + 2 * fam.size() + w.size() - 3);
      grow(right_src[k], sigma.size() + 2 * fam.size() + w.size() - 3);
      for (std::size_t i = 0; i < fam.size(); ++i) {
        for (std::size_t j = 0; j < fam.size(); ++j) {
          for (std::size_t n = 0; n < rho.size(); ++n) {
            const Matrix term = fam[j].adjoint() * rho[n] * fam[i];
            for (std::size_t q = 0; q < w.size(); ++q)
              if (w[q] != 0.0) left_src[k][n + i + j + q] += w[q] * term;
          }
          for (std::size_t m = 0; m < sigma.size(); ++m) {
            const Matrix term = fs[i] * sigma[m] * fs[j].adjoint();
            for (std::size_t q = 0; q < ws.size(); ++q)
              if (ws[q] != 0.0) right_src[k][m + i + j + q] += ws[q] * term;
          }
        }
      }
    }
  }
  return {propagate_with_source(Orientation::left, state, zeros(dim), &left_src, tol),
          propagate_with_source(Orientation::right, state, zeros(dim), &right_src, tol)};
}

}  // namespace cmps
