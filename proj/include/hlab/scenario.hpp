#pragma once

#include <array>
#include <complex>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hlab/expr.hpp"

namespace hlab {

using cplx = std::complex<double>;
using Vec3 = std::array<double, 3>;

enum class BoundaryCondition {
  /// Homogeneous Dirichlet on the box boundary ring.
  Dirichlet,
  /// First-order Sommerfeld condition d_n u = i k u on the box faces.
  Absorbing,
};

std::string to_string(BoundaryCondition bc);
BoundaryCondition boundary_from_string(std::string_view text);

/// The full problem description for
///   (grad + i b)^2 u + n u + Q u + i eps u = f,   n = lambda (1 + p_tilde).
struct Scenario {
  int dimension = 3;
  /// Index of refraction. Absent: n = lambda (1 + p_tilde).
  std::optional<FieldExpr> n;
  /// Long-range part. Absent: p_tilde = n / lambda - 1 (or 0 if n is absent).
  std::optional<FieldExpr> p_tilde;
  FieldExpr q_pot;
  /// Magnetic potential components; size == dimension.
  std::vector<FieldExpr> b;
  FieldExpr source_re;
  FieldExpr source_im;
  /// Angular limit of n at infinity (a function of w only).
  std::optional<FieldExpr> n_inf;

  double lambda = 1.0;
  double epsilon = 0.1;
  double delta = 1.0;
  double mu = 1.0;
  std::optional<double> gamma_bound;
  std::optional<double> c_star;
  double r0 = 1.0;
  double big_r0 = 0.0;

  double half_width = 8.0;
  int points = 65;
  BoundaryCondition boundary = BoundaryCondition::Dirichlet;

  double refraction(std::span<const double> x) const;
  double p_tilde_at(std::span<const double> x) const;
  double q_at(std::span<const double> x) const;
  Vec3 b_at(std::span<const double> x) const;
  cplx source_at(std::span<const double> x) const;
  /// True if any component of b is not the literal constant 0.
  bool has_magnetic_potential() const;
  /// Total zeroth-order real coefficient n + Q.
  double potential(std::span<const double> x) const { return refraction(x) + q_at(x); }

  /// Throws ConfigError when an invariant does not hold.
  void validate() const;
};

struct SolverSettings {
  double tol = 1e-8;
  int max_iter = 2000;
  int restart = 50;
  std::string method = "gmres";
  std::string preconditioner = "shifted-laplacian";
  /// Imaginary shift (as a fraction of the reference index) of the
  /// shifted-Laplacian preconditioner.
  double shift = 0.5;
  double eps_start = 0.1;
  double eps_factor = 0.5;
  int eps_count = 5;
  bool warm_start = true;
};

struct EikonalSettings {
  /// Override of the scenario p_tilde used by the eikonal march.
  std::optional<FieldExpr> p_tilde;
  double r_max = 1000.0;
  double rho = 1.05;
  int angles = 128;
  int angles_theta = 32;
  int angles_phi = 64;
  /// "default" (sqrt(1 + p_tilde(r0 w))), "one", or "saito".
  std::string init = "default";
  double margin = 1e-3;
};

struct Config {
  Scenario scenario;
  SolverSettings solver;
  EikonalSettings eikonal;
  /// Canonical text the config was parsed from.
  std::string text;
};

/// Parses the sectioned `key = value` format documented in docs/config.md.
/// Throws ConfigError with line/column on syntax errors, unknown keys or
/// sections, missing `lambda`, non-positive lambda/epsilon, and dimensions
/// outside {2, 3}.
Config parse_config(std::string_view text);
/// Scenario invariants plus solver and eikonal setting ranges (ConfigError).
void validate_config(const Config& cfg);
Scenario parse_scenario(std::string_view text);

/// Named presets: free, saito, angular-index, azimuthal-b, coulomb-q.
/// Returns configuration text so presets stay inspectable.
std::string preset_text(std::string_view name, int dimension, std::optional<double> lambda = std::nullopt);
std::vector<std::string> preset_names();

/// B = Db - (Db)^t (B_jk = d_k b_j - d_j b_k) and the tangential trace
/// (B_tau)_j = sum_k w_k B_kj.
struct MagneticFieldData {
  int dimension = 3;
  std::array<std::array<double, 3>, 3> b_matrix{};
  Vec3 b_tau{};
};

/// Central-difference evaluation of B at `point`; the result is exactly
/// antisymmetric. Throws DomainError at singular points.
MagneticFieldData magnetic_field(const Scenario& scenario, std::span<const double> point);

}  // namespace hlab
