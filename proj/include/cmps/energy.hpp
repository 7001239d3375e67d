#pragma once

// Exact energy of a piecewise-linear cMPS.
//
// On segment k the Hamiltonian density pairs the envelopes as
//   e(t) = sum_F w_F(t) tr(rho(t) F(t) sigma(t) F(t)^dag)
// over three factor families F: the covariant derivative DR = [Q, R] + dR/dx
// (kinetic, w = 1), R (potential, w = V - mu) and R^2 (interaction, w = g).
// rho is a polynomial in t, sigma in s = 1 - t, F and w in t, so every term is
// a monomial t^a (1 - t)^b integrated exactly by a beta integral.

#include "cmps/envelopes.hpp"

#include <array>
#include <span>

namespace cmps {

/// int_0^1 x^m (1 - x)^n dx = m! n! / (m + n + 1)!.
inline double beta_integral(int m, int n) {
  if (m < 0 || n < 0) throw std::invalid_argument("beta integral needs nonnegative exponents");
  if (m < n) std::swap(m, n);
  long double value = 1.0L / static_cast<long double>(m + 1);
  for (int j = 1; j <= n; ++j) value *= static_cast<long double>(j) / static_cast<long double>(m + j + 1);
  return static_cast<double>(value);
}

/// Triangular cache of beta_integral values, grown on demand.
class BetaTable {
public:
  double operator()(std::size_t m, std::size_t n) {
    ensure(std::max(m, n) + 1);
    return table_[m][n];
  }

  void ensure(std::size_t size) {
    if (size <= table_.size()) return;
    const std::size_t old = table_.size();
    table_.resize(size);
    for (std::size_t m = 0; m < size; ++m) {
      table_[m].resize(size);
      for (std::size_t n = (m < old ? old : 0); n < size; ++n)
        table_[m][n] = beta_integral(static_cast<int>(m), static_cast<int>(n));
    }
  }

  const std::vector<double>& row(std::size_t m) const { return table_[m]; }

private:
  std::vector<std::vector<double>> table_;
};

/// External potential description that can be laid onto any mesh.
struct PotentialModel {
  enum class Kind { none, constant, sine, harmonic, tabulated };

  Kind kind = Kind::none;
  double value = 0.0;       // constant
  double amplitude = 0.0;   // sine: amplitude * sin(wavenumber * pi * x)
  double wavenumber = 0.0;
  double omega = 0.0;       // harmonic: 0.5 omega^2 (x - center)^2
  double center = 0.0;
  int degree = PotentialSpec::default_degree;
  Mesh tabulated_mesh;      // tabulated: explicit per-segment polynomials
  PotentialSpec tabulated_spec;

  PotentialSpec on(const Mesh& mesh) const {
    switch (kind) {
      case Kind::none: return PotentialSpec::constant(mesh, 0.0);
      case Kind::constant: return PotentialSpec::constant(mesh, value);
      case Kind::sine: return PotentialSpec::sine(mesh, amplitude, wavenumber, degree);
      case Kind::harmonic: return PotentialSpec::harmonic(mesh, omega, center);
      case Kind::tabulated:
        if (mesh == tabulated_mesh) return tabulated_spec;
        return tabulated_spec.restricted_to(tabulated_mesh, mesh);
    }
    return PotentialSpec::constant(mesh, 0.0);
  }

  static PotentialModel sine_model(double amplitude, double wavenumber, int degree = PotentialSpec::default_degree) {
    PotentialModel m;
    m.kind = Kind::sine;
    m.amplitude = amplitude;
    m.wavenumber = wavenumber;
    m.degree = degree;
    return m;
  }

  static PotentialModel constant_model(double value) {
    PotentialModel m;
    m.kind = Kind::constant;
    m.value = value;
    return m;
  }

  static PotentialModel tabulated_model(const Mesh& mesh, PotentialSpec spec) {
    PotentialModel m;
    m.kind = Kind::tabulated;
    m.tabulated_mesh = mesh;
    m.tabulated_spec = std::move(spec);
    return m;
  }
};

/// Lieb-Liniger Hamiltonian with external potential in the grand canonical ensemble.
struct HamiltonianSpec {
  double g = 0.0;
  double mu = 0.0;
  PotentialModel potential;

  void validate() const {
    if (!std::isfinite(g) || g < 0.0) throw std::invalid_argument("interaction g must be finite and >= 0");
    if (!std::isfinite(mu)) throw std::invalid_argument("chemical potential must be finite");
  }
};

/// [Q(t), R(t)] + (R_{k+1} - R_k) / width as a degree-2 polynomial in t.
inline SegmentPolynomial covariant_derivative_segment(std::size_t k, const CmpsState& state) {
  if (k >= state.num_segments()) throw std::out_of_range("segment index out of range");
  const Matrix& q0 = state.q_node(k);
  const Matrix q1 = state.q_node(k + 1) - q0;
  const Matrix& r0 = state.r_node(k);
  const Matrix r1 = state.r_node(k + 1) - r0;
  const double width = state.mesh().width(k);
  return {{commutator(q0, r0) + r1 / width, commutator(q0, r1) + commutator(q1, r0), commutator(q1, r1)},
          Orientation::left};
}

enum class Channel { kinetic = 0, potential = 1, interaction = 2 };

/// Factor families of one segment, all as polynomials in t.
struct SegmentFactors {
  std::array<Matrix, 3> kinetic;
  std::array<Matrix, 2> field;
  std::array<Matrix, 3> pair;
  std::vector<double> v_minus_mu;
  double width = 1.0;

  std::span<const Matrix> family(Channel c) const {
    switch (c) {
      case Channel::kinetic: return kinetic;
      case Channel::potential: return field;
      case Channel::interaction: return pair;
    }
    return {};
  }
};

inline SegmentFactors segment_factors(const CmpsState& state, std::size_t k, const std::vector<double>& potential,
                                      double mu) {
  SegmentFactors f;
  const Matrix& r0 = state.r_node(k);
  const Matrix r1 = state.r_node(k + 1) - r0;
  const auto dr = covariant_derivative_segment(k, state);
  f.kinetic = {dr.coefficients[0], dr.coefficients[1], dr.coefficients[2]};
  f.field = {r0, r1};
  f.pair = {r0 * r0, r0 * r1 + r1 * r0, r1 * r1};
  f.v_minus_mu = potential;
  f.v_minus_mu[0] -= mu;
  f.width = state.mesh().width(k);
  return f;
}

inline std::vector<double> channel_weight(const SegmentFactors& f, Channel c, double g) {
  switch (c) {
    case Channel::kinetic: return {1.0};
    case Channel::potential: return f.v_minus_mu;
    case Channel::interaction: return {g};
  }
  return {};
}

/// One element of the Taylor expansion of H on a segment: weight * t^a (1-t)^b A (x) conj(B).
struct HamiltonianTerm {
  Matrix a;
  Matrix b;
  int t_power = 0;
  int s_power = 0;
  double weight = 1.0;
  Channel channel = Channel::kinetic;
};

struct SegmentHamiltonianCoefficients {
  std::vector<HamiltonianTerm> terms;
};

/// Explicit term list of H on segment k. Terms whose matrices vanish are dropped.
inline SegmentHamiltonianCoefficients hamiltonian_coefficients(std::size_t k, const CmpsState& state,
                                                              const HamiltonianSpec& spec) {
  const auto potential = spec.potential.on(state.mesh());
  const auto f = segment_factors(state, k, potential.segment(k), spec.mu);
  SegmentHamiltonianCoefficients out;
  for (Channel c : {Channel::kinetic, Channel::potential, Channel::interaction}) {
    const auto fam = f.family(c);
    const auto w = channel_weight(f, c, spec.g);
    for (std::size_t i = 0; i < fam.size(); ++i) {
      if (fam[i].norm() == 0.0) continue;
      for (std::size_t j = 0; j < fam.size(); ++j) {
        if (fam[j].norm() == 0.0) continue;
        for (std::size_t p = 0; p < w.size(); ++p) {
          if (w[p] == 0.0) continue;
          out.terms.push_back({fam[i], fam[j], static_cast<int>(i + j + p), 0, w[p], c});
        }
      }
    }
  }
  return out;
}

namespace detail {

inline double binomial(std::size_t n, std::size_t k) {
  double r = 1.0;
  for (std::size_t j = 1; j <= k; ++j) r = r * static_cast<double>(n - k + j) / static_cast<double>(j);
  return r;
}

/// F(t) = sum_i F_i t^i re-expressed as sum_j F'_j (1 - t)^j.
inline std::vector<Matrix> to_s_basis(std::span<const Matrix> f) {
  std::vector<Matrix> out(f.size(), zeros(f[0].rows()));
  for (std::size_t i = 0; i < f.size(); ++i)
    for (std::size_t j = 0; j <= i; ++j) out[j] += ((j % 2 == 0) ? 1.0 : -1.0) * binomial(i, j) * f[i];
  return out;
}

/// Intermediates of one family contraction, kept for the reverse pass.
struct FamilyCache {
  std::vector<Matrix> p;  // t-coefficients of w(t) rho(t) F(t)
  std::vector<Matrix> u;  // u_l = sum_l' beta(l, l') T_l', T = sigma(s) F(s)^dag in s
  std::vector<Matrix> f_s;
};

/// int_0^1 w(t) tr(rho(t) F(t) sigma(t) F(t)^dag) dt, exact.
inline Complex contract_family(const std::vector<Matrix>& rho, const std::vector<Matrix>& sigma,
                               std::span<const Matrix> f, const std::vector<double>& w, BetaTable& beta,
                               FamilyCache* cache = nullptr) {
  const Eigen::Index dim = rho[0].rows();
  const std::size_t np = rho.size() + f.size() + w.size() - 2;
  const std::size_t nt = sigma.size() + f.size() - 1;
  std::vector<Matrix> p(np, zeros(dim));
  for (std::size_t n = 0; n < rho.size(); ++n) {
    for (std::size_t i = 0; i < f.size(); ++i) {
      const Matrix prod = rho[n] * f[i];
      for (std::size_t q = 0; q < w.size(); ++q)
        if (w[q] != 0.0) p[n + i + q] += w[q] * prod;
    }
  }
  auto f_s = to_s_basis(f);
  std::vector<Matrix> t(nt, zeros(dim));
  for (std::size_t m = 0; m < sigma.size(); ++m)
    for (std::size_t j = 0; j < f_s.size(); ++j) t[m + j].noalias() += sigma[m] * f_s[j].adjoint();
  beta.ensure(std::max(np, nt) + 1);
  Complex value = 0.0;
  std::vector<Matrix> u(np, zeros(dim));
  for (std::size_t l = 0; l < np; ++l) {
    const auto& row = beta.row(l);
    for (std::size_t lp = 0; lp < nt; ++lp) u[l] += row[lp] * t[lp];
    value += trace_product(p[l], u[l]);
  }
  if (cache) {
    cache->p = std::move(p);
    cache->u = std::move(u);
    cache->f_s = std::move(f_s);
  }
  return value;
}

}  // namespace detail

/// Result of an energy evaluation; channel totals are normalized by the norm.
struct EnergyReport {
  double total = 0.0;
  double kinetic = 0.0;
  double potential = 0.0;
  double interaction = 0.0;
  std::vector<double> per_segment;
  double norm = 0.0;
  double norm_deviation = 0.0;
  double imaginary_part = 0.0;
  int max_taylor_order = 0;
};

namespace detail {

/// Unnormalized per-segment, per-channel integrals (the Delta_k factor included).
struct EnergyIntegrals {
  std::vector<std::array<Complex, 3>> segments;
  std::vector<SegmentFactors> factors;
  std::vector<std::array<FamilyCache, 3>> caches;
};

inline EnergyIntegrals energy_integrals(const CmpsState& state, const HamiltonianSpec& spec,
                                        const StateEnvelopes& env, bool keep_caches) {
  spec.validate();
  const auto potential = spec.potential.on(state.mesh());
  const std::size_t segments = state.num_segments();
  EnergyIntegrals out;
  out.segments.resize(segments);
  out.factors.reserve(segments);
  if (keep_caches) out.caches.resize(segments);
  BetaTable beta;
  for (std::size_t k = 0; k < segments; ++k) {
    out.factors.push_back(segment_factors(state, k, potential.segment(k), spec.mu));
    const auto& f = out.factors.back();
    const auto& rho = env.left.segments[k].coefficients;
    const auto& sigma = env.right.segments[k].coefficients;
    for (Channel c : {Channel::kinetic, Channel::potential, Channel::interaction}) {
      const auto ci = static_cast<std::size_t>(c);
      const auto w = channel_weight(f, c, spec.g);
      out.segments[k][ci] = f.width * contract_family(rho, sigma, f.family(c), w, beta,
                                                       keep_caches ? &out.caches[k][ci] : nullptr);
    }
  }
  return out;
}

inline EnergyReport assemble_report(const EnergyIntegrals& integrals, const StateEnvelopes& env) {
  EnergyReport report;
  report.norm = norm(env);
  report.norm_deviation = norm_deviation(env, report.norm);
  report.max_taylor_order = std::max(env.left.max_order(), env.right.max_order());
  Complex total = 0.0;
  std::array<double, 3> channels{};
  report.per_segment.reserve(integrals.segments.size());
  for (const auto& seg : integrals.segments) {
    Complex seg_total = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      channels[c] += seg[c].real();
      seg_total += seg[c];
    }
    total += seg_total;
    report.per_segment.push_back(seg_total.real() / report.norm);
  }
  report.kinetic = channels[0] / report.norm;
  report.potential = channels[1] / report.norm;
  report.interaction = channels[2] / report.norm;
  report.total = total.real() / report.norm;
  report.imaginary_part = total.imag() / report.norm;
  return report;
}

}  // namespace detail

/// Exact energy of `state` for `spec` given its envelopes.
inline EnergyReport energy(const CmpsState& state, const HamiltonianSpec& spec, const StateEnvelopes& env) {
  return detail::assemble_report(detail::energy_integrals(state, spec, env, false), env);
}

inline EnergyReport energy(const CmpsState& state, const HamiltonianSpec& spec, const TaylorTolerance& tol = {}) {
  return energy(state, spec, compute_envelopes(state, tol));
}

}  // namespace cmps
