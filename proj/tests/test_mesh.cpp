#include "cmps/mesh.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace cmps;

TEST(Mesh, RejectsInvalidPoints) {
  EXPECT_THROW(Mesh({0.0}), std::invalid_argument);
  EXPECT_THROW(Mesh({0.1, 0.5, 1.0}), std::invalid_argument);
  EXPECT_THROW(Mesh({0.0, 0.5, 0.5, 1.0}), std::invalid_argument);
  EXPECT_THROW(Mesh({0.0, 0.6, 0.4, 1.0}), std::invalid_argument);
  EXPECT_NO_THROW(Mesh({0.0, 0.3, 1.0}));
}

TEST(Mesh, UniformAndChebyshevLayouts) {
  const auto u = Mesh::uniform(2.0, 5);
  ASSERT_EQ(u.size(), 5u);
  EXPECT_DOUBLE_EQ(u[1], 0.5);
  EXPECT_EQ(u.length(), 2.0);
  const auto c = Mesh::chebyshev(1.0, 300);
  ASSERT_EQ(c.num_segments(), 300u);
  for (std::size_t k = 0; k <= 300; ++k)
    EXPECT_NEAR(c[k], 0.5 * (1.0 - std::cos(std::numbers::pi * k / 300.0)), 1e-15);
  EXPECT_LT(c.width(0), c.width(150));
}

TEST(Mesh, LocateIsRightContinuous) {
  const auto m = Mesh::uniform(1.0, 5);
  auto [k0, t0] = m.locate(0.25);
  EXPECT_EQ(k0, 1u);
  EXPECT_EQ(t0, 0.0);
  auto [k1, t1] = m.locate(1.0);
  EXPECT_EQ(k1, 3u);
  EXPECT_EQ(t1, 1.0);
  auto [k2, t2] = m.locate(0.3);
  EXPECT_EQ(k2, 1u);
  EXPECT_NEAR(t2, 0.2, 1e-14);
}

TEST(PiecewiseLinear, ReproducesNodesAndInterpolates) {
  const auto mesh = Mesh::uniform(1.0, 3);
  std::vector<Matrix> nodes{identity(2), 2.0 * identity(2), zeros(2)};
  PiecewiseLinearMatrixFunction f(mesh, nodes);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ((f.evaluate(mesh[k]) - nodes[k]).norm(), 0.0);
  EXPECT_NEAR((f.evaluate(0.25) - 1.5 * identity(2)).norm(), 0.0, 1e-15);
  EXPECT_NEAR((f.evaluate(0.75) - identity(2)).norm(), 0.0, 1e-15);
}

TEST(PotentialSpec, SineMatchesFunctionAndIsContinuous) {
  const auto mesh = Mesh::uniform(1.0, 41);
  const auto v = PotentialSpec::sine(mesh, 1749.0, 15.0);
  for (double x = 0.0; x <= 1.0; x += 0.0137)
    EXPECT_NEAR(v.evaluate(mesh, x), 1749.0 * std::sin(15.0 * std::numbers::pi * x), 1e-9 * 1749.0);
}

TEST(PotentialSpec, RestrictionKeepsValues) {
  const auto coarse = Mesh::uniform(1.0, 5);
  const auto v = PotentialSpec::harmonic(coarse, 3.0, 0.4);
  const Mesh fine({0.0, 0.1, 0.25, 0.4, 0.5, 0.75, 1.0});
  const auto w = v.restricted_to(coarse, fine);
  for (double x = 0.0; x <= 1.0; x += 0.031) EXPECT_NEAR(w.evaluate(fine, x), v.evaluate(coarse, x), 1e-13);
  EXPECT_NEAR(v.evaluate(coarse, 0.9), 0.5 * 9.0 * 0.25, 1e-13);
}

TEST(PotentialSpec, RejectsDiscontinuity) {
  const auto mesh = Mesh::uniform(1.0, 3);
  EXPECT_THROW(PotentialSpec(mesh, {{0.0}, {1.0}}), std::invalid_argument);
}

TEST(CmpsState, DirichletRequiresZeroWallR) {
  const auto mesh = Mesh::uniform(1.0, 4);
  auto z = PiecewiseLinearMatrixFunction::constant(mesh, zeros(2));
  auto one = PiecewiseLinearMatrixFunction::constant(mesh, identity(2));
  EXPECT_THROW(CmpsState(z, one, basis_vector(2), basis_vector(2), true), std::invalid_argument);
  EXPECT_NO_THROW(CmpsState(z, one, basis_vector(2), basis_vector(2), false));
}

TEST(Refine, PreservesFunctionsAndValidatesPoints) {
  const auto s = oracle::random_state(Mesh::uniform(1.0, 5), 2, 7);
  const auto fine = refine(s, {0.1, 0.6});
  EXPECT_EQ(fine.num_nodes(), 7u);
  for (double x = 0.0; x <= 1.0; x += 0.05) {
    EXPECT_NEAR((fine.q().evaluate(x) - s.q().evaluate(x)).norm(), 0.0, 1e-14);
    EXPECT_NEAR((fine.r().evaluate(x) - s.r().evaluate(x)).norm(), 0.0, 1e-14);
  }
  EXPECT_THROW(refine(s, {0.25}), std::invalid_argument);
  EXPECT_THROW(refine(s, {0.0}), std::invalid_argument);
  EXPECT_THROW(refine(s, {0.3, 0.3}), std::invalid_argument);
}

TEST(ExpandBond, EmbedsAndKeepsWallsZero) {
  const auto s = oracle::random_state(Mesh::uniform(1.0, 5), 2, 3);
  const auto big = expand_bond(s, 4, 0.1, 9);
  EXPECT_EQ(big.dimension(), 4);
  EXPECT_EQ((big.q_node(2).topLeftCorner(2, 2) - s.q_node(2)).norm(), 0.0);
  EXPECT_EQ(big.r_node(0).norm(), 0.0);
  EXPECT_EQ(big.r_node(4).norm(), 0.0);
  EXPECT_GT(big.q_node(1).bottomRightCorner(2, 2).norm(), 0.0);
  EXPECT_THROW(expand_bond(s, 2, 0.0), std::invalid_argument);
}

TEST(Resample, NestedMeshKeepsFunctionsAndCoarseMeshSamples) {
  const auto s = oracle::random_state(Mesh::uniform(1.0, 5), 2, 41);
  const auto fine = resample(s, Mesh::uniform(1.0, 17));
  EXPECT_EQ(fine.num_segments(), 16u);
  for (double x : {0.0, 0.13, 0.5, 0.77, 1.0}) {
    EXPECT_LT((fine.q().evaluate(x) - s.q().evaluate(x)).norm(), 1e-14);
    EXPECT_LT((fine.r().evaluate(x) - s.r().evaluate(x)).norm(), 1e-14);
  }
  const auto coarse = resample(fine, Mesh::uniform(1.0, 3));
  EXPECT_LT((coarse.r_node(1) - s.r().evaluate(0.5)).norm(), 1e-14);
  EXPECT_TRUE(coarse.r_node(0).isZero());
  EXPECT_THROW(resample(s, Mesh::uniform(2.0, 5)), std::invalid_argument);
}
