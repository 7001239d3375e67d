#pragma once

// Run configuration read from an INI file with [problem], [ansatz],
// [optimizer], [uniform] and [io] sections. The grammar and every key are
// documented in docs/config.md.

#include "cmps/optimizer.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <filesystem>
#include <set>
#include <sstream>

namespace cmps {

/// Invalid configuration; `field` is "section.key" (empty for syntax errors).
class ConfigError : public std::runtime_error {
public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

private:
  std::string field_;
};

struct ProblemConfig {
  double length = 1.0;
  double mu = 0.0;
  double g = 0.0;
  PotentialModel potential;
  bool dirichlet = true;
};

struct AnsatzConfig {
  enum class MeshKind { uniform, chebyshev, explicit_points };
  enum class Init { uniform, random, tonks };

  Eigen::Index bond_dimension = 8;
  MeshKind mesh = MeshKind::uniform;
  /// Number of segments for uniform and chebyshev meshes.
  std::size_t segments = 32;
  std::vector<double> points;
  Init init = Init::uniform;
  double taper_width = 0.1;
  double init_scale = 0.0;

  /// The configured mesh, or one of the same kind with `segment_count`
  /// segments when that is nonzero.
  Mesh build_mesh(double length, std::size_t segment_count = 0) const {
    const std::size_t n = segment_count > 0 ? segment_count : segments;
    switch (mesh) {
      case MeshKind::uniform: return Mesh::uniform(length, n + 1);
      case MeshKind::chebyshev: return Mesh::chebyshev(length, n);
      case MeshKind::explicit_points: return Mesh(points);
    }
    return Mesh::uniform(length, n + 1);
  }
};

struct IoConfig {
  std::string output_dir;
  int checkpoint_every = 0;
  std::size_t samples = 200;
  std::string cuts = "uniform:99";
};

/// Optimization at interaction g for a fixed number of iterations, optionally
/// on a coarser mesh of the ansatz kind (segments = 0 keeps the ansatz mesh).
struct ContinuationStage {
  double g = 0.0;
  int iterations = 0;
  std::size_t segments = 0;

  bool operator==(const ContinuationStage&) const = default;
};

struct RunConfig {
  ProblemConfig problem;
  AnsatzConfig ansatz;
  OptimizeOptions optimizer;
  /// Stages run before the final optimization at problem.g.
  std::vector<ContinuationStage> continuation;
  UniformOptions uniform;
  Eigen::Index uniform_bond_dimension = 0;  // 0: same as the ansatz
  IoConfig io;
  std::string source_text;

  HamiltonianSpec hamiltonian() const { return {problem.g, problem.mu, problem.potential}; }
};

namespace detail {

class ConfigReader {
public:
  explicit ConfigReader(const boost::property_tree::ptree& tree) : tree_(tree) {}

  template <typename T>
  std::optional<T> optional(const std::string& section, const std::string& key) {
    const std::string field = section + "." + key;
    used_.insert(field);
    const auto child = tree_.get_child_optional(boost::property_tree::ptree::path_type(field, '.'));
    if (!child) return std::nullopt;
    const std::string raw = child->get_value<std::string>();
    if constexpr (std::is_same_v<T, std::string>) {
      return raw;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (raw == "true" || raw == "yes" || raw == "1") return true;
      if (raw == "false" || raw == "no" || raw == "0") return false;
      throw ConfigError(field, "expected true or false, got '" + raw + "'");
    } else {
      std::istringstream in(raw);
      T value{};
      in >> value;
      if (in.fail() || !(in >> std::ws).eof()) throw ConfigError(field, "cannot parse '" + raw + "' as a number");
      if constexpr (std::is_floating_point_v<T>) {
        if (!std::isfinite(value)) throw ConfigError(field, "must be finite");
      }
      return value;
    }
  }

  template <typename T>
  T required(const std::string& section, const std::string& key) {
    auto v = optional<T>(section, key);
    if (!v) throw ConfigError(section + "." + key, "missing required field");
    return *v;
  }

  template <typename T>
  void maybe(const std::string& section, const std::string& key, T& target) {
    if (auto v = optional<T>(section, key)) target = *v;
  }

  void require_sections() const {
    for (const auto& [section, body] : tree_)
      if (body.empty() && !body.data().empty()) throw ConfigError(section, "keys must live inside a [section]");
  }

  void reject_unknown() const {
    for (const auto& [section, body] : tree_) {
      for (const auto& entry : body) {
        const std::string field = section + "." + entry.first;
        if (!used_.count(field)) throw ConfigError(field, "unknown field");
      }
    }
  }

private:
  const boost::property_tree::ptree& tree_;
  std::set<std::string> used_;
};

inline std::vector<double> parse_number_list(const std::string& field, const std::string& text) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    std::istringstream cell(item);
    double v = 0.0;
    cell >> v;
    if (cell.fail() || !(cell >> std::ws).eof()) throw ConfigError(field, "cannot parse '" + item + "' as a number");
    out.push_back(v);
  }
  return out;
}

// "key:value, key:value"; keys are integers unless `real_keys`.
inline std::vector<std::pair<double, double>> parse_schedule(const std::string& field, const std::string& text,
                                                             bool real_keys = false) {
  std::vector<std::pair<double, double>> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError(field, "schedule entries look like key:value");
    try {
      const std::string key = item.substr(0, colon);
      out.emplace_back(real_keys ? std::stod(key) : std::stoi(key), std::stod(item.substr(colon + 1)));
    } catch (const std::exception&) {
      throw ConfigError(field, "cannot parse schedule entry '" + item + "'");
    }
  }
  return out;
}

// "g:iterations[:segments], ..."
inline std::vector<ContinuationStage> parse_continuation(const std::string& text, const AnsatzConfig& ansatz) {
  const std::string field = "optimizer.g_continuation";
  std::vector<ContinuationStage> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    std::vector<std::string> parts;
    std::string part;
    std::istringstream cells(item);
    while (std::getline(cells, part, ':')) parts.push_back(part);
    if (parts.size() < 2 || parts.size() > 3) throw ConfigError(field, "stages look like g:iterations[:segments]");
    ContinuationStage stage;
    try {
      stage.g = std::stod(parts[0]);
      stage.iterations = std::stoi(parts[1]);
      if (parts.size() == 3) stage.segments = static_cast<std::size_t>(std::stoul(parts[2]));
    } catch (const std::exception&) {
      throw ConfigError(field, "cannot parse stage '" + item + "'");
    }
    if (!(stage.g >= 0.0) || stage.iterations < 1)
      throw ConfigError(field, "stages need g >= 0 and iterations >= 1");
    if (parts.size() == 3 && (stage.segments < 1 || ansatz.mesh == AnsatzConfig::MeshKind::explicit_points))
      throw ConfigError(field, "a stage segment count must be positive and needs a uniform or chebyshev mesh");
    out.push_back(stage);
  }
  return out;
}

}  // namespace detail

inline RunConfig parse_config(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("", "line " + std::to_string(e.line()) + ": " + e.message());
  }
  detail::ConfigReader cfg(tree);
  cfg.require_sections();
  RunConfig rc;
  rc.source_text = text;

  auto& p = rc.problem;
  cfg.maybe("problem", "length", p.length);
  if (!(p.length > 0.0)) throw ConfigError("problem.length", "must be positive");
  p.mu = cfg.required<double>("problem", "mu");
  p.g = cfg.required<double>("problem", "g");
  if (p.g < 0.0) throw ConfigError("problem.g", "must be >= 0");
  const std::string potential = cfg.optional<std::string>("problem", "potential").value_or("none");
  if (potential == "none") {
    p.potential = {};
  } else if (potential == "constant") {
    p.potential = PotentialModel::constant_model(cfg.required<double>("problem", "potential_value"));
  } else if (potential == "sine") {
    p.potential = PotentialModel::sine_model(cfg.required<double>("problem", "potential_amplitude"),
                                             cfg.required<double>("problem", "potential_wavenumber"));
  } else if (potential == "harmonic") {
    p.potential.kind = PotentialModel::Kind::harmonic;
    p.potential.omega = cfg.required<double>("problem", "potential_omega");
    p.potential.center = cfg.optional<double>("problem", "potential_center").value_or(0.5 * p.length);
  } else {
    throw ConfigError("problem.potential", "expected none, constant, sine or harmonic, got '" + potential + "'");
  }
  const std::string boundary = cfg.optional<std::string>("problem", "boundary").value_or("dirichlet");
  if (boundary != "dirichlet" && boundary != "open")
    throw ConfigError("problem.boundary", "expected dirichlet or open, got '" + boundary + "'");
  p.dirichlet = boundary == "dirichlet";

  auto& a = rc.ansatz;
  a.bond_dimension = cfg.required<Eigen::Index>("ansatz", "bond_dimension");
  if (a.bond_dimension < 1) throw ConfigError("ansatz.bond_dimension", "must be positive");
  const std::string mesh = cfg.optional<std::string>("ansatz", "mesh").value_or("uniform");
  if (mesh == "uniform") {
    a.mesh = AnsatzConfig::MeshKind::uniform;
  } else if (mesh == "chebyshev") {
    a.mesh = AnsatzConfig::MeshKind::chebyshev;
  } else if (mesh == "explicit") {
    a.mesh = AnsatzConfig::MeshKind::explicit_points;
  } else {
    throw ConfigError("ansatz.mesh", "expected uniform, chebyshev or explicit, got '" + mesh + "'");
  }
  if (a.mesh == AnsatzConfig::MeshKind::explicit_points) {
    a.points = detail::parse_number_list("ansatz.points", cfg.required<std::string>("ansatz", "points"));
    if (a.points.size() < 2 || a.points.back() != p.length)
      throw ConfigError("ansatz.points", "explicit mesh must end at x = L");
  } else {
    const auto segments = cfg.required<long>("ansatz", "segments");
    if (segments < 1) throw ConfigError("ansatz.segments", "must be positive");
    a.segments = static_cast<std::size_t>(segments);
  }
  try {
    a.build_mesh(p.length);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("ansatz.points", e.what());
  }
  const std::string init = cfg.optional<std::string>("ansatz", "init").value_or("uniform");
  if (init == "uniform") {
    a.init = AnsatzConfig::Init::uniform;
  } else if (init == "random") {
    a.init = AnsatzConfig::Init::random;
  } else if (init == "tonks") {
    a.init = AnsatzConfig::Init::tonks;
  } else {
    throw ConfigError("ansatz.init", "expected uniform, random or tonks, got '" + init + "'");
  }
  cfg.maybe("ansatz", "taper_width", a.taper_width);
  if (a.init == AnsatzConfig::Init::uniform && !(a.taper_width > 0.0 && a.taper_width < 0.5 * p.length))
    throw ConfigError("ansatz.taper_width", "must lie in (0, L/2)");
  cfg.maybe("ansatz", "init_scale", a.init_scale);
  if (a.init_scale < 0.0) throw ConfigError("ansatz.init_scale", "must be >= 0");

  auto& o = rc.optimizer;
  cfg.maybe("optimizer", "max_iterations", o.max_iterations);
  cfg.maybe("optimizer", "gradient_tolerance", o.gradient_tolerance);
  cfg.maybe("optimizer", "memory", o.memory);
  cfg.maybe("optimizer", "taylor_cutoff", o.taylor.relative_cutoff);
  cfg.maybe("optimizer", "taylor_max_order", o.taylor.max_order);
  cfg.maybe("optimizer", "refinement_budget", o.refinement_budget);
  cfg.maybe("optimizer", "bond_noise", o.bond_noise);
  cfg.maybe("optimizer", "seed", o.seed);
  if (auto s = cfg.optional<std::string>("optimizer", "bond_schedule")) {
    for (auto [it, d] : detail::parse_schedule("optimizer.bond_schedule", *s))
      o.bond_schedule.emplace_back(static_cast<int>(it), static_cast<Eigen::Index>(d));
  }
  if (auto s = cfg.optional<std::string>("optimizer", "g_continuation"))
    rc.continuation = detail::parse_continuation(*s, a);
  cfg.maybe("optimizer", "precondition", o.precondition);
  cfg.maybe("optimizer", "preconditioner_regularization", o.preconditioner_regularization);
  try {
    o.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("optimizer", e.what());
  }

  auto& u = rc.uniform;
  cfg.maybe("uniform", "bond_dimension", rc.uniform_bond_dimension);
  cfg.maybe("uniform", "max_iterations", u.max_iterations);
  cfg.maybe("uniform", "gradient_tolerance", u.gradient_tolerance);
  cfg.maybe("uniform", "restarts", u.restarts);
  if (rc.uniform_bond_dimension < 0) throw ConfigError("uniform.bond_dimension", "must be >= 0");
  if (u.restarts < 1) throw ConfigError("uniform.restarts", "must be >= 1");
  u.seed = o.seed;

  auto& io = rc.io;
  cfg.maybe("io", "output_dir", io.output_dir);
  cfg.maybe("io", "checkpoint_every", io.checkpoint_every);
  cfg.maybe("io", "samples", io.samples);
  cfg.maybe("io", "cuts", io.cuts);
  if (io.checkpoint_every < 0) throw ConfigError("io.checkpoint_every", "must be >= 0");
  if (io.samples < 2) throw ConfigError("io.samples", "need at least 2 samples");

  cfg.reject_unknown();
  return rc;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

/// 64-bit FNV-1a hash of the configuration text, as 16 hex digits.
inline std::string config_hash(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

}  // namespace cmps
