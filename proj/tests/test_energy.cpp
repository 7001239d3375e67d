#include "cmps/energy.hpp"
#include "cmps/references.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace cmps;

namespace {

// int_0^L e(x) dx / norm with rho, sigma from the ODE oracle and Gauss-Legendre in x.
double energy_by_quadrature(const CmpsState& s, const HamiltonianSpec& spec) {
  const auto left = oracle::left_nodes(s);
  const auto right = oracle::right_nodes(s);
  const auto potential = spec.potential.on(s.mesh());
  Complex total = 0.0;
  for (std::size_t k = 0; k < s.num_segments(); ++k) {
    const double a = s.mesh()[k], b = s.mesh()[k + 1];
    auto local = [&](double x) {
      const double t = (x - a) / (b - a);
      auto q = [&](double y) { return s.q().on_segment(k, (y - a) / (b - a)); };
      auto r = [&](double y) { return s.r().on_segment(k, (y - a) / (b - a)); };
      const Matrix rho = oracle::integrate(
          [&](double y, const Matrix& m) -> Matrix { return q(y).adjoint() * m + m * q(y) + r(y).adjoint() * m * r(y); },
          left[k], a, x);
      const Matrix sigma = oracle::integrate(
          [&](double u, const Matrix& m) -> Matrix {
            const double y = b - u;
            return q(y) * m + m * q(y).adjoint() + r(y) * m * r(y).adjoint();
          },
          right[k + 1], 0.0, b - x);
      const Matrix rr = r(x), qq = q(x);
      const Matrix dr = commutator(qq, rr) + (s.r_node(k + 1) - s.r_node(k)) / (b - a);
      const Matrix r2 = rr * rr;
      const double v = evaluate_polynomial(potential.segment(k), t) - spec.mu;
      return (trace_product(rho, dr * sigma * dr.adjoint()) + v * trace_product(rho, rr * sigma * rr.adjoint()) +
              spec.g * trace_product(rho, r2 * sigma * r2.adjoint()))
          .real();
    };
    total += oracle::gauss(local, a, b);
  }
  return total.real() / trace_product(left[0], right[0]).real();
}

}  // namespace

TEST(Beta, MatchesQuadrature) {
  for (int m = 0; m <= 25; ++m)
    for (int n = 0; n <= 25; ++n) EXPECT_NEAR(beta_integral(m, n) / oracle::beta_by_quadrature(m, n), 1.0, 1e-12);
  EXPECT_NEAR(beta_integral(0, 0), 1.0, 0.0);
  EXPECT_NEAR(beta_integral(2, 3), 2.0 * 6.0 / 720.0, 1e-16);
  EXPECT_THROW(beta_integral(-1, 2), std::invalid_argument);
  EXPECT_GT(beta_integral(120, 120), 0.0);
}

TEST(Energy, ZeroStateHasZeroEnergy) {
  const auto s = CmpsState::zero(Mesh::uniform(1.0, 5), 2);
  const auto e = energy(s, {1.0, 2.0, PotentialModel::sine_model(3.0, 2.0)});
  EXPECT_EQ(e.total, 0.0);
  EXPECT_EQ(e.norm, 1.0);
}

TEST(Energy, MatchesDirectQuadratureOfLocalDensity) {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const auto s = oracle::random_state(oracle::random_mesh(1.0, 5, seed), 1 + seed % 3, seed, 0.6);
    const HamiltonianSpec spec{1.5, 2.0, PotentialModel::sine_model(4.0, 3.0)};
    const auto e = energy(s, spec);
    EXPECT_NEAR(e.total, energy_by_quadrature(s, spec), 1e-9 * std::max(1.0, std::abs(e.total))) << "seed " << seed;
    EXPECT_NEAR(e.kinetic + e.potential + e.interaction, e.total, 1e-12 * std::abs(e.total));
    EXPECT_LT(std::abs(e.imaginary_part), 1e-10 * std::max(1.0, std::abs(e.total)));
  }
}

TEST(Energy, TermListAgreesWithFactoredContraction) {
  const auto s = oracle::random_state(Mesh::uniform(1.0, 4), 2, 17);
  const HamiltonianSpec spec{0.7, 1.3, PotentialModel::sine_model(2.0, 1.0, 12)};
  const auto env = compute_envelopes(s);
  Complex total = 0.0;
  for (std::size_t k = 0; k < s.num_segments(); ++k) {
    const auto& rho = env.left.segments[k].coefficients;
    const auto& sigma = env.right.segments[k].coefficients;
    for (const auto& term : hamiltonian_coefficients(k, s, spec).terms) {
      // int t^p tr(rho(t) A sigma(t) B^dag) with sigma expanded in (1 - t).
      for (std::size_t n = 0; n < rho.size(); ++n)
        for (std::size_t m = 0; m < sigma.size(); ++m)
          total += s.mesh().width(k) * term.weight *
                   beta_integral(static_cast<int>(n) + term.t_power, static_cast<int>(m) + term.s_power) *
                   trace_product(rho[n], term.a * sigma[m] * term.b.adjoint());
    }
  }
  EXPECT_NEAR(total.real() / norm(env), energy(s, spec, env).total, 1e-10 * std::abs(total.real()));
}

TEST(Energy, CoherentStateMatchesGrossPitaevskii) {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n(0.0, 1.5);
  for (int trial = 0; trial < 5; ++trial) {
    const auto mesh = oracle::random_mesh(1.0, 9, 40 + trial);
    std::vector<Matrix> q, r;
    for (std::size_t k = 0; k < mesh.size(); ++k) {
      Matrix rk(1, 1), qk(1, 1);
      rk(0, 0) = (k == 0 || k + 1 == mesh.size()) ? Complex(0.0) : Complex(n(rng), n(rng));
      qk(0, 0) = Complex(n(rng), n(rng));
      q.push_back(qk);
      r.push_back(rk);
    }
    const CmpsState s(PiecewiseLinearMatrixFunction(mesh, q), PiecewiseLinearMatrixFunction(mesh, r), basis_vector(1),
                      basis_vector(1), true);
    const auto model = PotentialModel::sine_model(5.0, 3.0);
    const auto pot = model.on(mesh);
    const double mu = 2.5, g = 0.8;
    const double ref = oracle::gross_pitaevskii(s, mu, g, [&](double x) { return pot.evaluate(mesh, x); });
    EXPECT_NEAR(energy(s, {g, mu, model}).total / ref, 1.0, 1e-12);
  }
}

TEST(Energy, GaugeInvariant) {
  const auto s = oracle::random_state(Mesh::uniform(1.0, 6), 3, 5);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 0.3);
  Matrix g = identity(3);
  for (Eigen::Index i = 0; i < g.size(); ++i) g(i) += Complex(n(rng), n(rng));
  const Matrix gi = g.inverse();
  std::vector<Matrix> q, r;
  for (std::size_t k = 0; k < s.num_nodes(); ++k) {
    q.push_back(gi * s.q_node(k) * g);
    r.push_back(gi * s.r_node(k) * g);
  }
  const CmpsState t(PiecewiseLinearMatrixFunction(s.mesh(), q), PiecewiseLinearMatrixFunction(s.mesh(), r),
                    g.adjoint() * s.left_boundary(), gi * s.right_boundary(), true);
  const HamiltonianSpec spec{1.0, 1.0, {}};
  EXPECT_NEAR(energy(t, spec).total / energy(s, spec).total, 1.0, 1e-11);
}

TEST(Energy, InvariantUnderRefinementAndBondEmbedding) {
  const auto s = oracle::random_state(Mesh::uniform(1.0, 6), 2, 23);
  const HamiltonianSpec spec{1.2, 3.0, PotentialModel::sine_model(2.0, 1.5)};
  const double e = energy(s, spec).total;
  const auto fine = refine(s, {0.05, 0.3, 0.71, 0.93});
  EXPECT_NEAR(energy(fine, spec).total / e, 1.0, 1e-12);
  const auto big = expand_bond(s, 4, 0.0);
  EXPECT_NEAR(energy(big, spec).total / e, 1.0, 1e-12);
}

TEST(Energy, TonksGirardeauConvergesAtSecondOrder) {
  const double mu = std::pow(reference::tonks_mu_over_pi * std::numbers::pi, 2);
  const HamiltonianSpec spec{1e6, mu, {}};
  std::vector<double> errors;
  for (std::size_t points : {64, 128, 256}) {
    const auto e = energy(tonks_girardeau_state(4, Mesh::uniform(1.0, points)), spec);
    EXPECT_LT(std::abs(e.interaction), 1e-20);
    errors.push_back(std::abs(e.total - reference::tonks_energy.value));
  }
  for (std::size_t i = 0; i + 1 < errors.size(); ++i) {
    const double order = std::log2(errors[i] / errors[i + 1]);
    EXPECT_GT(order, 1.8);
    EXPECT_LT(order, 2.6);
  }
}

TEST(Energy, RejectsInvalidHamiltonian) {
  const auto s = CmpsState::zero(Mesh::uniform(1.0, 3), 1);
  EXPECT_THROW(energy(s, {-1.0, 0.0, {}}), std::invalid_argument);
  EXPECT_THROW(energy(s, {1.0, std::nan(""), {}}), std::invalid_argument);
}
