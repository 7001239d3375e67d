#include "cmps/checkpoint.hpp"
#include "cmps/config.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cstring>

using namespace cmps;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "cmps_test_io";
  std::filesystem::create_directories(dir);
  return dir / name;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

bool same_bits(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (!same_bits(a(i).real(), b(i).real()) || !same_bits(a(i).imag(), b(i).imag())) return false;
  return true;
}

const char* minimal_config = R"([problem]
mu = 10
g = 2

[ansatz]
bond_dimension = 2
segments = 8
)";

ConfigError config_error(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e;
  }
  ADD_FAILURE() << "no ConfigError for:\n" << text;
  return ConfigError("", "");
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitFaithful) {
  auto s = oracle::random_state(oracle::random_mesh(1.7, 9, 3), 3, 5, 0.9, false);
  std::vector<Matrix> q = s.q().nodes(), r = s.r().nodes();
  q[1](0, 0) = Complex(0.1, 1.0 / 3.0);
  r[2](1, 1) = Complex(4.9e-324, -1e-300);
  r[3](2, 0) = Complex(-0.0, 1.7976931348623157e308);
  s = s.with_nodes(std::move(q), std::move(r));
  const auto path = temp_path("finite.json");
  save_checkpoint(path, s, {{"note", "test"}});
  const auto back = load_checkpoint(path);
  ASSERT_EQ(back.mesh().size(), s.mesh().size());
  for (std::size_t k = 0; k < s.mesh().size(); ++k) EXPECT_TRUE(same_bits(back.mesh()[k], s.mesh()[k]));
  for (std::size_t k = 0; k < s.num_nodes(); ++k) {
    EXPECT_TRUE(same_bits(back.q_node(k), s.q_node(k))) << "node " << k;
    EXPECT_TRUE(same_bits(back.r_node(k), s.r_node(k))) << "node " << k;
  }
  EXPECT_TRUE(same_bits(Matrix(back.left_boundary()), Matrix(s.left_boundary())));
  EXPECT_TRUE(same_bits(Matrix(back.right_boundary()), Matrix(s.right_boundary())));
  EXPECT_EQ(back.dirichlet(), s.dirichlet());
  EXPECT_EQ(read_json(path)["metadata"]["note"], "test");
  EXPECT_FALSE(std::filesystem::exists(path.string() + ".tmp"));
}

TEST(Checkpoint, UniformStateAndReportRoundTrip) {
  const auto u = UniformCmps::from(oracle::random_state(Mesh::uniform(1.0, 2), 2, 7, 0.8, false).q_node(0),
                                   oracle::random_state(Mesh::uniform(1.0, 2), 2, 8, 0.8, false).q_node(1));
  const auto back = uniform_from_json(nlohmann::json::parse(to_json(u).dump()));
  EXPECT_TRUE(same_bits(back.q, u.q));
  EXPECT_TRUE(same_bits(back.r, u.r));
  EXPECT_TRUE(same_bits(back.left, u.left));
  EXPECT_TRUE(same_bits(back.right, u.right));

  const auto s = oracle::random_state(Mesh::uniform(1.0, 5), 2, 9, 0.5);
  const auto report = energy(s, HamiltonianSpec{1.0, 2.0, {}});
  const auto r2 = energy_report_from_json(nlohmann::json::parse(to_json(report).dump()));
  EXPECT_TRUE(same_bits(r2.total, report.total));
  EXPECT_EQ(r2.per_segment, report.per_segment);
  EXPECT_EQ(r2.max_taylor_order, report.max_taylor_order);
}

TEST(Checkpoint, RejectsForeignVersionsAndKinds) {
  const auto s = oracle::random_state(Mesh::uniform(1.0, 4), 2, 11);
  auto doc = to_json(s);
  doc["version"] = checkpoint_format_version + 1;
  try {
    state_from_json(doc);
    FAIL() << "version mismatch accepted";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
  EXPECT_THROW(uniform_from_json(to_json(s)), CheckpointError);
  auto broken = to_json(s);
  broken["q"].erase(0);
  EXPECT_THROW(state_from_json(broken), CheckpointError);
  broken = to_json(s);
  broken["format"] = "something-else";
  EXPECT_THROW(state_from_json(broken), CheckpointError);
  const auto path = temp_path("garbage.json");
  std::ofstream(path) << "{ not json";
  EXPECT_THROW(load_checkpoint(path), CheckpointError);
  EXPECT_THROW(load_checkpoint(temp_path("missing.json")), CheckpointError);
}

TEST(Config, ParsesMinimalFileWithDefaults) {
  const auto rc = parse_config(minimal_config);
  EXPECT_EQ(rc.problem.mu, 10.0);
  EXPECT_EQ(rc.problem.g, 2.0);
  EXPECT_EQ(rc.problem.length, 1.0);
  EXPECT_TRUE(rc.problem.dirichlet);
  EXPECT_EQ(rc.ansatz.bond_dimension, 2);
  EXPECT_EQ(rc.ansatz.build_mesh(1.0).num_segments(), 8u);
  EXPECT_EQ(rc.io.samples, 200u);
  EXPECT_TRUE(rc.continuation.empty());
}

TEST(Config, ParsesEverySection) {
  const auto rc = parse_config(R"([problem]
length = 2
mu = 1749
g = 35
potential = sine
potential_amplitude = 1749
potential_wavenumber = 15
boundary = open

[ansatz]
bond_dimension = 4
mesh = chebyshev
segments = 12
init = random
init_scale = 0.3

[optimizer]
max_iterations = 50
gradient_tolerance = 1e-7
memory = 15
taylor_cutoff = 1e-13
taylor_max_order = 90
refinement_budget = 3
bond_schedule = 10:6, 20:8
g_continuation = 100:20:4, 1e4:30
precondition = false
preconditioner_regularization = 0.05
seed = 9

[uniform]
bond_dimension = 6
restarts = 2

[io]
output_dir = somewhere
checkpoint_every = 5
samples = 33
cuts = chebyshev:300
)");
  EXPECT_EQ(rc.problem.potential.kind, PotentialModel::Kind::sine);
  EXPECT_EQ(rc.problem.potential.wavenumber, 15.0);
  EXPECT_FALSE(rc.problem.dirichlet);
  EXPECT_EQ(rc.ansatz.init, AnsatzConfig::Init::random);
  EXPECT_EQ(rc.ansatz.build_mesh(2.0).num_segments(), 12u);
  EXPECT_EQ(rc.optimizer.taylor.max_order, 90);
  ASSERT_EQ(rc.optimizer.bond_schedule.size(), 2u);
  EXPECT_EQ(rc.optimizer.bond_schedule[1], (std::pair<int, Eigen::Index>{20, 8}));
  ASSERT_EQ(rc.continuation.size(), 2u);
  EXPECT_EQ(rc.continuation[0], (ContinuationStage{100.0, 20, 4}));
  EXPECT_EQ(rc.continuation[1], (ContinuationStage{1e4, 30, 0}));
  EXPECT_EQ(rc.ansatz.build_mesh(2.0, rc.continuation[0].segments).num_segments(), 4u);
  EXPECT_FALSE(rc.optimizer.precondition);
  EXPECT_EQ(rc.optimizer.preconditioner_regularization, 0.05);
  EXPECT_EQ(rc.uniform_bond_dimension, 6);
  EXPECT_EQ(rc.uniform.seed, 9u);
  EXPECT_EQ(rc.io.cuts, "chebyshev:300");
  EXPECT_EQ(rc.io.checkpoint_every, 5);
}

TEST(Config, ErrorsNameTheField) {
  EXPECT_EQ(config_error("[problem]\nmu = 1\n[ansatz]\nbond_dimension = 2\nsegments = 4\n").field(), "problem.g");
  EXPECT_EQ(config_error(std::string(minimal_config) + "[io]\ncolour = red\n").field(), "io.colour");
  EXPECT_EQ(config_error("[problem]\nmu = ten\ng = 1\n").field(), "problem.mu");
  EXPECT_EQ(config_error("[problem]\nmu = 1\ng = -1\n").field(), "problem.g");
  EXPECT_EQ(config_error("[problem]\nmu = 1\ng = 1\npotential = wavy\n").field(), "problem.potential");
  EXPECT_EQ(config_error("[problem]\nmu = 1\ng = 1\n[ansatz]\nsegments = 4\n").field(), "ansatz.bond_dimension");
  EXPECT_EQ(config_error("[problem]\nmu = 1\ng = 1\n[ansatz]\nbond_dimension = 2\n").field(), "ansatz.segments");
  EXPECT_EQ(config_error(std::string(minimal_config) + "taper_width = 0.7\n").field(), "ansatz.taper_width");
  EXPECT_EQ(config_error(std::string(minimal_config) + "[optimizer]\nbond_schedule = 10-4\n").field(),
            "optimizer.bond_schedule");
  EXPECT_EQ(config_error(std::string(minimal_config) + "[optimizer]\nmemory = 0\n").field(), "optimizer");
  EXPECT_EQ(config_error(std::string(minimal_config) + "[optimizer]\ng_continuation = 10:5:0\n").field(),
            "optimizer.g_continuation");
  EXPECT_EQ(config_error(std::string(minimal_config) + "[optimizer]\ng_continuation = 10\n").field(),
            "optimizer.g_continuation");
  EXPECT_EQ(config_error("mu = 1\n").field(), "mu");
  EXPECT_EQ(config_error("[problem\nmu = 1\n").field(), "");
  EXPECT_THROW(load_config(temp_path("no-such.ini")), ConfigError);
}

TEST(Config, ExplicitMeshMustCoverTheBox) {
  const std::string head = "[problem]\nmu = 1\ng = 1\n[ansatz]\nbond_dimension = 2\nmesh = explicit\n";
  const auto rc = parse_config(head + "points = 0, 0.1, 0.5, 1\n");
  EXPECT_EQ(rc.ansatz.build_mesh(1.0).num_segments(), 3u);
  EXPECT_EQ(config_error(head + "points = 0, 0.5\n").field(), "ansatz.points");
  EXPECT_EQ(config_error(head + "points = 0, 0.6, 0.5, 1\n").field(), "ansatz.points");
}

TEST(Config, HashIsStableAndSensitive) {
  EXPECT_EQ(config_hash(minimal_config), config_hash(minimal_config));
  EXPECT_NE(config_hash(minimal_config), config_hash(std::string(minimal_config) + " "));
  EXPECT_EQ(config_hash(minimal_config).size(), 16u);
  EXPECT_EQ(config_hash(""), "cbf29ce484222325");
}

TEST(Config, ShippedConfigurationsParse) {
  int count = 0;
  for (const auto& entry : std::filesystem::directory_iterator(std::filesystem::path(CMPS_SOURCE_DIR) / "configs")) {
    if (entry.path().extension() != ".ini") continue;
    EXPECT_NO_THROW(load_config(entry.path())) << entry.path();
    ++count;
  }
  EXPECT_GE(count, 5);
}
