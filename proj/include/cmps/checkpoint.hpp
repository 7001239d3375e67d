#pragma once

// JSON checkpoints of finite-box and uniform states. Matrices are stored as
// row-major nested arrays of [re, im] pairs; doubles are written in shortest
// round-trip form, so a save/load cycle is bit-faithful.

#include "cmps/energy.hpp"
#include "cmps/uniform.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>

namespace cmps {

inline constexpr int checkpoint_format_version = 1;

class CheckpointError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline nlohmann::json to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back({m(i, j).real(), m(i, j).imag()});
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json to_json(const Vector& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back({v(i).real(), v(i).imag()});
  return out;
}

inline Complex complex_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw CheckpointError("complex entry must be a [re, im] pair");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline Matrix matrix_from_json(const nlohmann::json& j, Eigen::Index dim) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != dim)
    throw CheckpointError("matrix must have " + std::to_string(dim) + " rows");
  Matrix m(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != dim)
      throw CheckpointError("matrix row must have " + std::to_string(dim) + " entries");
    for (Eigen::Index c = 0; c < dim; ++c) m(i, c) = complex_from_json(row[static_cast<std::size_t>(c)]);
  }
  return m;
}

inline Vector vector_from_json(const nlohmann::json& j, Eigen::Index dim) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != dim)
    throw CheckpointError("boundary vector must have " + std::to_string(dim) + " entries");
  Vector v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v(i) = complex_from_json(j[static_cast<std::size_t>(i)]);
  return v;
}

inline void check_header(const nlohmann::json& j, const std::string& kind) {
  if (!j.contains("format") || j["format"] != "cmps-checkpoint") throw CheckpointError("not a cMPS checkpoint");
  if (!j.contains("version") || j["version"].get<int>() != checkpoint_format_version)
    throw CheckpointError("unsupported checkpoint version " + (j.contains("version") ? j["version"].dump() : "none") +
                          " (expected " + std::to_string(checkpoint_format_version) + ")");
  if (j.value("kind", "") != kind) throw CheckpointError("checkpoint holds a " + j.value("kind", "?") + " state, not " + kind);
}

}  // namespace detail

inline nlohmann::json to_json(const EnergyReport& r) {
  return {{"total", r.total},
          {"kinetic", r.kinetic},
          {"potential", r.potential},
          {"interaction", r.interaction},
          {"per_segment", r.per_segment},
          {"norm", r.norm},
          {"norm_deviation", r.norm_deviation},
          {"imaginary_part", r.imaginary_part},
          {"max_taylor_order", r.max_taylor_order}};
}

inline EnergyReport energy_report_from_json(const nlohmann::json& j) {
  EnergyReport r;
  r.total = j.at("total").get<double>();
  r.kinetic = j.at("kinetic").get<double>();
  r.potential = j.at("potential").get<double>();
  r.interaction = j.at("interaction").get<double>();
  r.per_segment = j.at("per_segment").get<std::vector<double>>();
  r.norm = j.at("norm").get<double>();
  r.norm_deviation = j.at("norm_deviation").get<double>();
  r.imaginary_part = j.at("imaginary_part").get<double>();
  r.max_taylor_order = j.at("max_taylor_order").get<int>();
  return r;
}

/// Checkpoint document of a finite-box state; `metadata` is stored verbatim.
inline nlohmann::json to_json(const CmpsState& s, const nlohmann::json& metadata = nlohmann::json::object()) {
  nlohmann::json q = nlohmann::json::array(), r = nlohmann::json::array();
  for (const auto& m : s.q().nodes()) q.push_back(detail::to_json(m));
  for (const auto& m : s.r().nodes()) r.push_back(detail::to_json(m));
  return {{"format", "cmps-checkpoint"},
          {"version", checkpoint_format_version},
          {"kind", "finite"},
          {"bond_dimension", s.dimension()},
          {"mesh", s.mesh().points()},
          {"dirichlet", s.dirichlet()},
          {"q", std::move(q)},
          {"r", std::move(r)},
          {"left_boundary", detail::to_json(s.left_boundary())},
          {"right_boundary", detail::to_json(s.right_boundary())},
          {"metadata", metadata}};
}

inline CmpsState state_from_json(const nlohmann::json& j) {
  detail::check_header(j, "finite");
  try {
    const Eigen::Index dim = j.at("bond_dimension").get<Eigen::Index>();
    if (dim < 1) throw CheckpointError("bond dimension must be positive");
    Mesh mesh(j.at("mesh").get<std::vector<double>>());
    const auto& jq = j.at("q");
    const auto& jr = j.at("r");
    if (jq.size() != mesh.size() || jr.size() != mesh.size())
      throw CheckpointError("node count does not match the mesh");
    std::vector<Matrix> q, r;
    for (std::size_t k = 0; k < mesh.size(); ++k) {
      q.push_back(detail::matrix_from_json(jq[k], dim));
      r.push_back(detail::matrix_from_json(jr[k], dim));
    }
    return {PiecewiseLinearMatrixFunction(mesh, std::move(q)), PiecewiseLinearMatrixFunction(mesh, std::move(r)),
            detail::vector_from_json(j.at("left_boundary"), dim), detail::vector_from_json(j.at("right_boundary"), dim),
            j.at("dirichlet").get<bool>()};
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  }
}

/// Uniform states are stored as a single segment with fixed points attached.
inline nlohmann::json to_json(const UniformCmps& u, const nlohmann::json& metadata = nlohmann::json::object()) {
  return {{"format", "cmps-checkpoint"},
          {"version", checkpoint_format_version},
          {"kind", "uniform"},
          {"bond_dimension", u.dimension()},
          {"q", detail::to_json(u.q)},
          {"r", detail::to_json(u.r)},
          {"left_fixed_point", detail::to_json(u.left)},
          {"right_fixed_point", detail::to_json(u.right)},
          {"metadata", metadata}};
}

inline UniformCmps uniform_from_json(const nlohmann::json& j) {
  detail::check_header(j, "uniform");
  try {
    const Eigen::Index dim = j.at("bond_dimension").get<Eigen::Index>();
    if (dim < 1) throw CheckpointError("bond dimension must be positive");
    return {detail::matrix_from_json(j.at("q"), dim), detail::matrix_from_json(j.at("r"), dim),
            detail::matrix_from_json(j.at("left_fixed_point"), dim),
            detail::matrix_from_json(j.at("right_fixed_point"), dim)};
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw CheckpointError("cannot write " + tmp);
    out << j.dump(1) << '\n';
    if (!out) throw CheckpointError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

inline void save_checkpoint(const std::filesystem::path& path, const CmpsState& s,
                            const nlohmann::json& metadata = nlohmann::json::object()) {
  write_json(path, to_json(s, metadata));
}

inline CmpsState load_checkpoint(const std::filesystem::path& path) { return state_from_json(read_json(path)); }

}  // namespace cmps
