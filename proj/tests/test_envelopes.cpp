#include "cmps/envelopes.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace cmps;

namespace {

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index dim, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(dim, dim);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = Complex(n(rng), n(rng));
  return m;
}

Matrix random_psd(std::mt19937_64& rng, Eigen::Index dim) {
  const Matrix a = random_matrix(rng, dim, 1.0);
  return a * a.adjoint();
}

double relative(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

}  // namespace

TEST(Envelopes, SegmentEndpointsMatchOdeIntegrator) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> dims(1, 4);
  std::uniform_real_distribution<double> widths(0.01, 0.5);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index d = dims(rng);
    const double w = widths(rng);
    const Matrix qa = random_matrix(rng, d, 1.0), qb = random_matrix(rng, d, 1.0);
    const Matrix ra = random_matrix(rng, d, 1.0), rb = random_matrix(rng, d, 1.0);
    const Matrix seed = random_psd(rng, d);
    auto q = [&](double x) { return Matrix(qa + (x / w) * (qb - qa)); };
    auto r = [&](double x) { return Matrix(ra + (x / w) * (rb - ra)); };

    const Matrix left = propagate_left_segment(qa, qb, ra, rb, w, seed).far_end();
    const Matrix left_ref = oracle::integrate(
        [&](double x, const Matrix& rho) -> Matrix {
          return q(x).adjoint() * rho + rho * q(x) + r(x).adjoint() * rho * r(x);
        },
        seed, 0.0, w);
    worst = std::max(worst, relative(left, left_ref));

    const Matrix right = propagate_right_segment(qa, qb, ra, rb, w, seed).far_end();
    const Matrix right_ref = oracle::integrate(
        [&](double y, const Matrix& sigma) -> Matrix {
          const double x = w - y;
          return q(x) * sigma + sigma * q(x).adjoint() + r(x) * sigma * r(x).adjoint();
        },
        seed, 0.0, w);
    worst = std::max(worst, relative(right, right_ref));
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Envelopes, FullSweepsMatchOdeIntegrator) {
  const auto s = oracle::random_state(oracle::random_mesh(1.0, 7, 5), 3, 11);
  const auto env = compute_envelopes(s);
  const auto left = oracle::left_nodes(s);
  const auto right = oracle::right_nodes(s);
  for (std::size_t k = 0; k < s.num_nodes(); ++k) {
    EXPECT_LT(relative(env.left.node_value(k), left[k]), 1e-9) << "node " << k;
    EXPECT_LT(relative(env.right.node_value(k), right[k]), 1e-9) << "node " << k;
  }
}

TEST(Envelopes, NormIsConstantAcrossTheBox) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto s = oracle::random_state(oracle::random_mesh(1.0, 12, seed), 1 + seed % 4, seed);
    const auto env = compute_envelopes(s);
    const double z = norm(env);
    EXPECT_LT(norm_deviation(env, z), 1e-10);
    for (double x = 0.013; x < 1.0; x += 0.0731) {
      const double v = trace_product(env.left.evaluate(s.mesh(), x), env.right.evaluate(s.mesh(), x)).real();
      EXPECT_NEAR(v / z, 1.0, 1e-10);
    }
  }
}

TEST(Envelopes, SegmentsAreContinuous) {
  const auto s = oracle::random_state(Mesh::uniform(1.0, 9), 2, 4);
  const auto env = compute_envelopes(s);
  for (std::size_t k = 0; k + 1 < s.num_segments(); ++k) {
    EXPECT_LT(relative(env.left.segments[k].far_end(), env.left.segments[k + 1].coefficients.front()), 1e-15);
    EXPECT_LT(relative(env.right.segments[k + 1].far_end(), env.right.segments[k].coefficients.front()), 1e-15);
  }
}

TEST(Envelopes, ZeroGeneratorKeepsSeed) {
  const auto s = CmpsState::zero(Mesh::uniform(1.0, 4), 3);
  const auto env = compute_envelopes(s);
  for (std::size_t k = 0; k < s.num_nodes(); ++k)
    EXPECT_EQ((env.left.node_value(k) - basis_vector(3) * basis_vector(3).adjoint()).norm(), 0.0);
}

TEST(Envelopes, LeadingZeroCoefficientsDoNotStopTheSeries) {
  // R vanishes at the left node, so the first two coefficients beyond the
  // seed are exactly zero while the t^3 term is not.
  Matrix zero = zeros(1), one = identity(1);
  const auto p = propagate_left_segment(zero, zero, zero, one, 1.0, one);
  EXPECT_NEAR(p.far_end()(0, 0).real(), std::exp(1.0 / 3.0), 1e-14);
}

TEST(Envelopes, OrderCapReportsSegment) {
  const auto mesh = Mesh::uniform(1.0, 5);
  auto s = oracle::random_state(mesh, 2, 3, 0.05);
  std::vector<Matrix> q = s.q().nodes();
  q[2] *= 1000.0;
  s = s.with_nodes(q, s.r().nodes());
  TaylorTolerance tol;
  tol.max_order = 24;
  try {
    sweep_left(s, tol);
    FAIL() << "expected a truncation error";
  } catch (const TruncationError& e) {
    EXPECT_TRUE(e.segment() == 1 || e.segment() == 2);
    EXPECT_EQ(e.order(), 24);
  }
}

TEST(Envelopes, FinerMeshNeedsLowerOrder) {
  const auto s = oracle::random_state(Mesh::uniform(1.0, 5), 2, 8, 2.0);
  const auto fine = refine(s, segment_midpoints(s.mesh(), {0, 1, 2, 3}));
  EXPECT_LT(sweep_left(fine).max_order(), sweep_left(s).max_order());
}

TEST(Envelopes, SourcedFlowMatchesOdeIntegrator) {
  const auto s = oracle::random_state(Mesh::uniform(1.0, 4), 2, 21);
  std::mt19937_64 rng(5);
  // Constant-in-x source per segment.
  std::vector<std::vector<Matrix>> sources;
  for (std::size_t k = 0; k < s.num_segments(); ++k) sources.push_back({random_matrix(rng, 2, 1.0)});
  const auto env = propagate_with_source(Orientation::left, s, zeros(2), &sources);
  Matrix acc = zeros(2);
  for (std::size_t k = 0; k < s.num_segments(); ++k) {
    const double a = s.mesh()[k], b = s.mesh()[k + 1];
    acc = oracle::integrate(
        [&](double x, const Matrix& m) -> Matrix {
          const double t = (x - a) / (b - a);
          const Matrix q = s.q().on_segment(k, t), r = s.r().on_segment(k, t);
          return q.adjoint() * m + m * q + r.adjoint() * m * r + sources[k][0];
        },
        acc, a, b);
    EXPECT_LT(relative(env.node_value(k + 1), acc), 1e-9);
  }
}

TEST(Envelopes, ParallelSweepMatchesSerial) {
  const auto s = oracle::random_state(Mesh::uniform(1.0, 9), 3, 13);
  const auto serial = compute_envelopes(s);
  thread_budget() = 2;
  const auto parallel = compute_envelopes(s);
  thread_budget() = 1;
  for (std::size_t k = 0; k < s.num_nodes(); ++k) {
    EXPECT_EQ((serial.left.node_value(k) - parallel.left.node_value(k)).norm(), 0.0);
    EXPECT_EQ((serial.right.node_value(k) - parallel.right.node_value(k)).norm(), 0.0);
  }
}
