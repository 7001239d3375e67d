#pragma once

// Exact references: the Tonks-Girardeau cMPS of N hard-core bosons in a box,
// free-fermion box energetics and the published benchmark numbers.

#include "cmps/mesh.hpp"

#include <unsupported/Eigen/KroneckerProduct>

namespace cmps {

/// Published benchmark values, kept with a short description of their origin.
struct ReferenceConstant {
  const char* name;
  double value;
  const char* provenance;
};

namespace reference {

inline constexpr double tonks_mu_over_pi = 4.75;
inline constexpr ReferenceConstant tonks_energy{"tonks_energy", -594.643,
                                                "free fermions, N=4, mu=(4.75 pi)^2, L=1"};
inline constexpr ReferenceConstant tonks_energy_d8{"tonks_energy_d8", -594.45,
                                                   "cMPS D=8, 32 equidistant points, g=1e6"};
inline constexpr ReferenceConstant casimir_energy{"casimir_energy", -221056.1,
                                                  "cMPS D=64, 300 chebyshev points, mu=1e4, g=1e3"};
inline constexpr ReferenceConstant casimir_bulk_energy_density{"casimir_bulk_energy_density", -226719.9,
                                                               "uniform cMPS D=64, mu=1e4, g=1e3"};
inline constexpr ReferenceConstant casimir_bulk_density{"casimir_bulk_density", 34.7840,
                                                        "uniform cMPS D=64, mu=1e4, g=1e3"};
inline constexpr ReferenceConstant casimir_boundary_energy{"casimir_boundary_energy", 5663.8, "E - L e_inf"};
inline constexpr ReferenceConstant casimir_particle_number{"casimir_particle_number", 33.9999, "<N>"};
inline constexpr ReferenceConstant casimir_particle_std{"casimir_particle_std", 0.0256, "sqrt(Var N)"};
inline constexpr ReferenceConstant casimir_order_parameter{"casimir_order_parameter", 0.0016, "max |<psi(x)>|"};
inline constexpr ReferenceConstant sine_gamma{"sine_gamma", 1.0509966,
                                              "g / rho for V = mu sin(15 pi x), mu=1749, g=35, D=32"};

}  // namespace reference

/// Number of filled modes and ground-state energy of free fermions in a hard-wall box.
inline std::pair<int, double> free_fermion_box(double mu, double length) {
  if (!(length > 0.0)) throw std::invalid_argument("box length must be positive");
  int n = 0;
  double e = 0.0;
  for (int k = 1;; ++k) {
    const double mode = std::pow(k * std::numbers::pi / length, 2);
    if (!(mode < mu)) break;
    ++n;
    e += mode - mu;
  }
  return {n, e};
}

/// R(x) = sum_k Z^{(k-1)} (x) [[0, sqrt(2/L) sin(pi k x / L)], [0, 0]] (x) 1^{(N-k)}
/// sampled at the mesh nodes; Q = 0, boundaries |0...0> and |1...1>.
inline CmpsState tonks_girardeau_state(int particles, const Mesh& mesh) {
  constexpr int max_particles = 10;
  if (particles < 1) throw std::invalid_argument("need at least one particle");
  if (particles > max_particles)
    throw std::invalid_argument("bond dimension 2^" + std::to_string(particles) + " exceeds the memory budget");
  const Eigen::Index dim = Eigen::Index{1} << particles;
  const double length = mesh.length();
  Matrix pauli_z = Matrix::Zero(2, 2);
  pauli_z(0, 0) = 1.0;
  pauli_z(1, 1) = -1.0;
  Matrix raise = Matrix::Zero(2, 2);
  raise(0, 1) = 1.0;

  // Operator strings without the mode amplitude; R(x) = sum_k f_k(x) strings[k].
  std::vector<Matrix> strings;
  for (int k = 1; k <= particles; ++k) {
    Matrix op = Matrix::Identity(1, 1);
    for (int site = 1; site <= particles; ++site) {
      const Matrix factor = site < k ? pauli_z : (site == k ? raise : identity(2));
      op = Eigen::kroneckerProduct(op, factor).eval();
    }
    strings.push_back(std::move(op));
  }
  std::vector<Matrix> q_nodes(mesh.size(), zeros(dim)), r_nodes;
  r_nodes.reserve(mesh.size());
  for (std::size_t j = 0; j < mesh.size(); ++j) {
    Matrix r = zeros(dim);
    if (j != 0 && j + 1 != mesh.size()) {
      for (int k = 1; k <= particles; ++k)
        r += std::sqrt(2.0 / length) * std::sin(std::numbers::pi * k * mesh[j] / length) * strings[k - 1];
    }
    r_nodes.push_back(std::move(r));
  }
  return {PiecewiseLinearMatrixFunction(mesh, std::move(q_nodes)), PiecewiseLinearMatrixFunction(mesh, std::move(r_nodes)),
          basis_vector(dim, 0), basis_vector(dim, dim - 1), true};
}

}  // namespace cmps
