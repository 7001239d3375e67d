#pragma once

// Command implementations behind the cmps executable. Each command returns the
// process exit code: 0 converged, 1 configuration or input error, 2 stalled
// (best state still written), 3 iteration cap reached (state written).

#include "cmps/checkpoint.hpp"
#include "cmps/config.hpp"
#include "cmps/observables.hpp"
#include "cmps/references.hpp"
#include "cmps/version.hpp"

#include <cstdlib>
#include <iostream>

namespace cmps::cli {

inline constexpr const char* output_dir_variable = "CMPS_OUTPUT_DIR";

enum ExitCode : int { converged = 0, config_error = 1, stalled = 2, iteration_cap = 3 };

/// Command-line overrides shared by all commands.
struct CliOptions {
  std::string config;
  std::string checkpoint;
  std::string out;
  int threads = 1;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> samples;
  std::optional<std::string> cuts;
  int particles = 4;
  std::size_t points = 512;
  std::optional<double> mu;
};

/// --out, then the config's io.output_dir, then $CMPS_OUTPUT_DIR, then ./cmps-out.
inline std::filesystem::path output_directory(const CliOptions& cli, const std::string& configured = {}) {
  if (!cli.out.empty()) return cli.out;
  if (!configured.empty()) return configured;
  if (const char* env = std::getenv(output_dir_variable); env && *env) return env;
  return "cmps-out";
}

/// Provenance stamped on every output file.
struct Provenance {
  std::string config_hash;
  std::string code_version = version;

  std::string header() const { return "# config_hash=" + config_hash + " code_version=" + code_version + "\n"; }
  nlohmann::json json() const { return {{"config_hash", config_hash}, {"code_version", code_version}}; }
};

inline nlohmann::json hamiltonian_json(const HamiltonianSpec& h) {
  using Kind = PotentialModel::Kind;
  const auto& p = h.potential;
  nlohmann::json pot;
  switch (p.kind) {
    case Kind::none: pot = {{"kind", "none"}}; break;
    case Kind::constant: pot = {{"kind", "constant"}, {"value", p.value}}; break;
    case Kind::sine: pot = {{"kind", "sine"}, {"amplitude", p.amplitude}, {"wavenumber", p.wavenumber}}; break;
    case Kind::harmonic: pot = {{"kind", "harmonic"}, {"omega", p.omega}, {"center", p.center}}; break;
    case Kind::tabulated: throw std::invalid_argument("tabulated potentials cannot be stored in checkpoints");
  }
  return {{"g", h.g}, {"mu", h.mu}, {"potential", pot}};
}

inline HamiltonianSpec hamiltonian_from_json(const nlohmann::json& j) {
  HamiltonianSpec h;
  h.g = j.at("g").get<double>();
  h.mu = j.at("mu").get<double>();
  const auto& pot = j.at("potential");
  const std::string kind = pot.at("kind").get<std::string>();
  if (kind == "constant") {
    h.potential = PotentialModel::constant_model(pot.at("value").get<double>());
  } else if (kind == "sine") {
    h.potential = PotentialModel::sine_model(pot.at("amplitude").get<double>(), pot.at("wavenumber").get<double>());
  } else if (kind == "harmonic") {
    h.potential.kind = PotentialModel::Kind::harmonic;
    h.potential.omega = pot.at("omega").get<double>();
    h.potential.center = pot.at("center").get<double>();
  } else if (kind != "none") {
    throw CheckpointError("unknown potential kind '" + kind + "'");
  }
  return h;
}

/// "chebyshev:N" (x_k = L(1 - cos(pi k / N))/2, k = 1..N-1), "uniform:N"
/// (N interior equidistant cuts) or a comma-separated list of positions.
inline std::vector<double> parse_cuts(const std::string& spec, double length) {
  const auto colon = spec.find(':');
  if (colon != std::string::npos) {
    const std::string kind = spec.substr(0, colon);
    std::size_t n = 0;
    try {
      n = std::stoul(spec.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("cuts", "cannot parse count in '" + spec + "'");
    }
    if (kind == "chebyshev") {
      if (n < 2) throw ConfigError("cuts", "chebyshev cuts need N >= 2");
      return chebyshev_cuts(length, n);
    }
    if (kind == "uniform") {
      if (n < 1) throw ConfigError("cuts", "uniform cuts need N >= 1");
      auto v = linspace(0.0, length, n + 2);
      return {v.begin() + 1, v.end() - 1};
    }
    throw ConfigError("cuts", "expected chebyshev:N, uniform:N or a list, got '" + spec + "'");
  }
  auto v = detail::parse_number_list("cuts", spec);
  for (double x : v)
    if (!(x > 0.0 && x < length)) throw ConfigError("cuts", "cut positions must lie strictly inside (0, L)");
  return v;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

struct Observations {
  double particle_mean = 0.0;
  double particle_variance = 0.0;
  double max_order_parameter = 0.0;
};

/// Writes profile.csv and entanglement.csv and returns summary statistics.
inline Observations observe_state(const CmpsState& state, const HamiltonianSpec& spec, std::size_t samples,
                                  const std::vector<double>& cuts, const std::filesystem::path& dir,
                                  const Provenance& prov, const TaylorTolerance& tol = {}) {
  const auto env = compute_envelopes(state, tol);
  const double length = state.mesh().length();
  const auto profile = profiles(state, spec, env, linspace(0.0, length, samples));
  std::ostringstream p;
  p << prov.header();
  write_profile_csv(p, profile);
  write_text(dir / "profile.csv", p.str());
  std::ostringstream e;
  e << prov.header();
  write_entanglement_csv(e, entanglement(state, env, cuts));
  write_text(dir / "entanglement.csv", e.str());
  Observations obs;
  std::tie(obs.particle_mean, obs.particle_variance) = particle_number(state, env, tol);
  for (double v : profile.order_parameter) obs.max_order_parameter = std::max(obs.max_order_parameter, v);
  return obs;
}

struct Summary {
  std::vector<std::pair<std::string, std::string>> rows;

  template <typename T>
  void add(const std::string& key, const T& value) {
    std::ostringstream s;
    s << std::setprecision(17) << value;
    rows.emplace_back(key, s.str());
  }

  std::string text(const Provenance& prov) const {
    std::string out = prov.header();
    for (const auto& [k, v] : rows) out += k + " = " + v + "\n";
    return out;
  }
};

struct FiniteRun {
  OptimizeResult result;
  bool stalled = false;
};

/// Builds the initial state, runs the g continuation stages and the final
/// optimization, checkpointing every io.checkpoint_every iterations.
inline FiniteRun run_finite(const RunConfig& rc, const std::filesystem::path& dir, const Provenance& prov,
                            std::ostream& log) {
  const auto spec = rc.hamiltonian();
  const Mesh mesh = rc.ansatz.build_mesh(rc.problem.length);
  const Eigen::Index dim = rc.ansatz.bond_dimension;
  const double first_g = rc.continuation.empty() ? spec.g : rc.continuation.front().g;
  const Mesh first_mesh =
      rc.continuation.empty() ? mesh : rc.ansatz.build_mesh(rc.problem.length, rc.continuation.front().segments);
  CmpsState state = [&] {
    switch (rc.ansatz.init) {
      case AnsatzConfig::Init::uniform: {
        log << "uniform start: D=" << dim << " g=" << first_g << std::endl;
        const auto u = uniform_optimize(dim, spec.mu, first_g, rc.uniform);
        return initialize_from_uniform(u, first_mesh, rc.ansatz.taper_width, rc.problem.dirichlet);
      }
      case AnsatzConfig::Init::random:
        if (rc.ansatz.init_scale > 0.0)
          return random_state(first_mesh, dim, rc.ansatz.init_scale, rc.optimizer.seed, rc.problem.dirichlet);
        return mean_field_random_state(first_mesh, dim, {first_g, spec.mu, spec.potential}, rc.optimizer.seed,
                                       rc.problem.dirichlet);
      case AnsatzConfig::Init::tonks: {
        const int n = free_fermion_box(spec.mu, rc.problem.length).first;
        if (n < 1 || (Eigen::Index{1} << n) != dim)
          throw ConfigError("ansatz.bond_dimension", "tonks start needs D = 2^N = " + std::to_string(1 << n));
        return tonks_girardeau_state(n, first_mesh);
      }
    }
    throw ConfigError("ansatz.init", "unsupported");
  }();

  auto checkpoint_meta = [&] {
    auto meta = prov.json();
    meta["hamiltonian"] = hamiltonian_json(spec);
    return meta;
  };
  OptimizeOptions options = rc.optimizer;
  if (rc.io.checkpoint_every > 0) {
    options.on_iteration = [&, every = rc.io.checkpoint_every](int it, const CmpsState& s) {
      if (it > 0 && it % every == 0) save_checkpoint(dir / "checkpoint.json", s, checkpoint_meta());
    };
  }
  auto move_to = [&](const Mesh& target) {
    if (state.mesh().points() != target.points()) state = resample(state, target);
  };
  for (const auto& stage : rc.continuation) {
    move_to(rc.ansatz.build_mesh(rc.problem.length, stage.segments));
    OptimizeOptions options_stage = options;
    options_stage.max_iterations = stage.iterations;
    options_stage.bond_schedule.clear();
    try {
      state = optimize_result(state, {stage.g, spec.mu, spec.potential}, options_stage).state;
    } catch (const OptimizationStalled& e) {
      state = e.best().state;
    }
    log << "continuation stage g=" << stage.g << " on " << state.num_segments() << " segments done" << std::endl;
  }
  move_to(mesh);
  FiniteRun run;
  try {
    run.result = optimize_result(state, spec, options);
  } catch (const OptimizationStalled& e) {
    run.result = e.best();
    run.stalled = true;
  }
  save_checkpoint(dir / "checkpoint.json", run.result.state, checkpoint_meta());
  write_json(dir / "energy.json", [&] {
    auto j = to_json(run.result.report);
    j["provenance"] = prov.json();
    return j;
  }());
  std::ostringstream trace;
  trace << prov.header();
  run.result.trace.write_csv(trace);
  write_text(dir / "trace.csv", trace.str());
  return run;
}

inline int exit_code(const FiniteRun& run) {
  if (run.stalled) return stalled;
  return run.result.status == OptimizeStatus::converged ? converged : iteration_cap;
}

inline RunConfig load_with_overrides(const CliOptions& cli) {
  if (cli.config.empty()) throw ConfigError("--config", "a configuration file is required");
  RunConfig rc = load_config(cli.config);
  if (cli.seed) {
    rc.optimizer.seed = *cli.seed;
    rc.uniform.seed = *cli.seed;
  }
  if (cli.samples) rc.io.samples = *cli.samples;
  if (cli.cuts) rc.io.cuts = *cli.cuts;
  return rc;
}

inline int cmd_optimize(const CliOptions& cli, std::ostream& log = std::cout) {
  const auto start = std::chrono::steady_clock::now();
  const RunConfig rc = load_with_overrides(cli);
  const Provenance prov{config_hash(rc.source_text)};
  const auto dir = output_directory(cli, rc.io.output_dir);
  const auto cuts = parse_cuts(rc.io.cuts, rc.problem.length);
  const auto run = run_finite(rc, dir, prov, log);
  const auto obs = observe_state(run.result.state, rc.hamiltonian(), rc.io.samples, cuts, dir, prov,
                                 rc.optimizer.taylor);
  Summary s;
  s.add("status", run.stalled ? "stalled" : to_string(run.result.status));
  s.add("energy", run.result.report.total);
  s.add("particle_number", obs.particle_mean);
  s.add("particle_variance", obs.particle_variance);
  s.add("max_order_parameter", obs.max_order_parameter);
  s.add("iterations", run.result.trace.entries.empty() ? 0 : run.result.trace.entries.back().iteration);
  s.add("wall_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  write_text(dir / "summary.txt", s.text(prov));
  log << s.text(prov);
  return exit_code(run);
}

inline int cmd_observe(const CliOptions& cli, std::ostream& log = std::cout) {
  if (cli.checkpoint.empty()) throw ConfigError("--checkpoint", "a checkpoint file is required");
  const auto doc = read_json(cli.checkpoint);
  const CmpsState state = state_from_json(doc);
  HamiltonianSpec spec;
  std::string configured_dir, cuts_spec = cli.cuts.value_or("uniform:99");
  std::size_t samples = cli.samples.value_or(200);
  Provenance prov;
  if (!cli.config.empty()) {
    const RunConfig rc = load_with_overrides(cli);
    spec = rc.hamiltonian();
    configured_dir = rc.io.output_dir;
    cuts_spec = rc.io.cuts;
    samples = rc.io.samples;
    prov.config_hash = config_hash(rc.source_text);
  } else {
    const auto& meta = doc.at("metadata");
    if (!meta.contains("hamiltonian")) throw ConfigError("--config", "checkpoint carries no Hamiltonian; pass a config");
    spec = hamiltonian_from_json(meta.at("hamiltonian"));
    prov.config_hash = meta.value("config_hash", "unknown");
  }
  const auto dir = output_directory(cli, configured_dir);
  const auto obs = observe_state(state, spec, samples, parse_cuts(cuts_spec, state.mesh().length()), dir, prov);
  Summary s;
  s.add("energy", energy(state, spec).total);
  s.add("particle_number", obs.particle_mean);
  s.add("particle_variance", obs.particle_variance);
  s.add("max_order_parameter", obs.max_order_parameter);
  log << s.text(prov);
  return converged;
}

inline int cmd_uniform(const CliOptions& cli, std::ostream& log = std::cout) {
  const RunConfig rc = load_with_overrides(cli);
  const Provenance prov{config_hash(rc.source_text)};
  const auto dir = output_directory(cli, rc.io.output_dir);
  const Eigen::Index dim = rc.uniform_bond_dimension > 0 ? rc.uniform_bond_dimension : rc.ansatz.bond_dimension;
  const auto u = uniform_optimize(dim, rc.problem.mu, rc.problem.g, rc.uniform);
  const auto e = uniform_energy_density(u, rc.problem.mu, rc.problem.g);
  auto meta = prov.json();
  meta["mu"] = rc.problem.mu;
  meta["g"] = rc.problem.g;
  write_json(dir / "uniform.json", to_json(u, meta));
  Summary s;
  s.add("bond_dimension", dim);
  s.add("energy_density", e.energy_density);
  s.add("density", e.density);
  s.add("order_parameter", uniform_order_parameter(u));
  write_text(dir / "uniform_summary.txt", s.text(prov));
  log << s.text(prov);
  return converged;
}

inline int cmd_casimir(const CliOptions& cli, std::ostream& log = std::cout) {
  const auto start = std::chrono::steady_clock::now();
  const RunConfig rc = load_with_overrides(cli);
  if (rc.problem.potential.kind != PotentialModel::Kind::none)
    throw ConfigError("problem.potential", "the boundary energy needs V = 0");
  const Provenance prov{config_hash(rc.source_text)};
  const auto dir = output_directory(cli, rc.io.output_dir);
  const Eigen::Index dim = rc.uniform_bond_dimension > 0 ? rc.uniform_bond_dimension : rc.ansatz.bond_dimension;
  const auto u = uniform_optimize(dim, rc.problem.mu, rc.problem.g, rc.uniform);
  const auto bulk = uniform_energy_density(u, rc.problem.mu, rc.problem.g);
  write_json(dir / "uniform.json", to_json(u, prov.json()));
  const auto run = run_finite(rc, dir, prov, log);
  const auto obs = observe_state(run.result.state, rc.hamiltonian(), rc.io.samples,
                                 parse_cuts(rc.io.cuts, rc.problem.length), dir, prov, rc.optimizer.taylor);
  const double e = run.result.report.total;
  Summary s;
  s.add("status", run.stalled ? "stalled" : to_string(run.result.status));
  s.add("energy", e);
  s.add("bulk_energy_density", bulk.energy_density);
  s.add("bulk_density", bulk.density);
  s.add("boundary_energy", e - rc.problem.length * bulk.energy_density);
  s.add("particle_number", obs.particle_mean);
  s.add("particle_variance", obs.particle_variance);
  s.add("max_order_parameter", obs.max_order_parameter);
  s.add("wall_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  write_text(dir / "summary.txt", s.text(prov));
  log << s.text(prov);
  return exit_code(run);
}

/// Exact Tonks-Girardeau state for N particles on a uniform mesh of `points` points.
inline int cmd_tg_reference(const CliOptions& cli, std::ostream& log = std::cout) {
  if (cli.particles < 1) throw ConfigError("--particles", "must be positive");
  if (cli.points < 3) throw ConfigError("--points", "need at least 3 mesh points");
  const double mu = cli.mu.value_or(std::pow(reference::tonks_mu_over_pi * std::numbers::pi, 2));
  const HamiltonianSpec spec{1e6, mu, {}};
  std::ostringstream key;
  key << std::setprecision(17) << "tg-reference particles=" << cli.particles << " points=" << cli.points
      << " mu=" << mu;
  const Provenance prov{config_hash(key.str())};
  const auto dir = output_directory(cli);
  const auto state = tonks_girardeau_state(cli.particles, Mesh::uniform(1.0, cli.points));
  auto meta = prov.json();
  meta["hamiltonian"] = hamiltonian_json(spec);
  save_checkpoint(dir / "checkpoint.json", state, meta);
  const auto obs = observe_state(state, spec, cli.samples.value_or(200),
                                 parse_cuts(cli.cuts.value_or("uniform:99"), 1.0), dir, prov);
  Summary s;
  s.add("particles", cli.particles);
  s.add("energy", energy(state, spec).total);
  s.add("free_fermion_energy", [&] {
    double e = 0.0;
    for (int k = 1; k <= cli.particles; ++k) e += std::pow(k * std::numbers::pi, 2) - mu;
    return e;
  }());
  s.add("particle_number", obs.particle_mean);
  s.add("particle_variance", obs.particle_variance);
  write_text(dir / "summary.txt", s.text(prov));
  log << s.text(prov);
  return converged;
}

}  // namespace cmps::cli
