#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hlab/grid.hpp"

namespace hlab {

struct FunctionalReport {
  std::string name;
  double value = 0.0;
  std::optional<double> delta;
  std::optional<double> radius;
  std::optional<double> r0;
  std::string phase;
  std::optional<double> lambda;
  std::optional<double> epsilon;
  int grid_points = 0;
  double half_width = 0.0;
  /// "satisfied", "violated", "unknown" or empty when no threshold applies.
  std::string verdict;
  std::string note;
};

/// |||f|||_{R0} = sup_{R > R0} (R^{-1} int_{|x|<=R} |f|^2)^{1/2} for the
/// midpoint-sum integral. `density` holds |f|^2 per node. The supremum is
/// exact for the discrete integral: it is attained at a node radius or at R0.
double mc_norm(const Grid& grid, const std::vector<double>& density, double R0);
double mc_norm(const WaveField& f, double R0);
double mc_norm(const GradientField& g, double R0);

/// N_{R0}(g) = sum_j (2^{j+1} int_{2^j <= |x| < 2^{j+1}} |g|^2)^{1/2}
///           + (R0 int_{|x| <= R0} |g|^2)^{1/2}.
/// For R0 > 0 the shells start at the dyadic 2^J with 2^{J-1} < R0 <= 2^J,
/// and the part R0 < |x| < 2^J forms a clipped first shell with weight 2^J.
/// For R0 = 0 every shell holding a node is summed.
double dual_norm(const Grid& grid, const std::vector<double>& density, double R0);
double dual_norm(const WaveField& f, double R0);

std::vector<double> squared_magnitude(const WaveField& f);
std::vector<double> squared_magnitude(const GradientField& g);

struct BetaProfile {
  double beta = 0.0;
  /// (j, sup over {2^{j-1} <= |x| <= 2^j}) for every sampled annulus.
  std::vector<std::pair<int, double>> per_shell;
  std::size_t samples = 0;
};

/// beta = 2 sum_j sup [((x . grad n)_- + 2^{2j} |B_tau|^2) / n] over the
/// annuli {2^{j-1} <= |x| <= 2^j}, sampled on the lattice of spacing
/// h / refine covering the grid box. Throws HypothesisViolation when n <= 0
/// at a sample.
BetaProfile beta_indicator(const Scenario& scenario, const Grid& grid, int refine = 1);

enum class Phase { Eikonal, ExplicitN, ExplicitNinf };
std::string to_string(Phase p);
Phase phase_from_string(const std::string& s);

/// Phase function K: returns K(x) and writes grad K.
using PhaseFunction = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct RadiationOptions {
  Phase phase = Phase::ExplicitNinf;
  double delta = 1.0;
  double min_radius = 1.0;
  /// Upper radius of the region; nodes of the boundary ring are always
  /// excluded. Defaults to no upper bound.
  std::optional<double> max_radius;
  /// Required for Phase::Eikonal.
  PhaseFunction phase_function;
};

/// Eikonal:  int |grad_b u - i sqrt(lambda) grad K u|^2 (1 + |x|)^{delta - 1}
/// ExplicitN:    int |grad_b u - i n^{1/2} (x/|x|) u|^2 / |x|
/// ExplicitNinf: int |grad_b u - i n_inf^{1/2}(x/|x|) (x/|x|) u|^2 / |x|
/// over min_radius <= |x| (<= max_radius).
double radiation_functional(const WaveField& u, const Scenario& scenario, const RadiationOptions& options);

/// int |grad_b^perp u|^2 / |x| over interior nodes.
double tangential_energy(const WaveField& u, const Scenario& scenario);

/// int_{|x| >= R} |grad_w n_inf|^2 |u|^2 / |x| with
/// |grad_w n_inf|^2 = |x|^2 |grad^perp n_inf|^2. Throws PreconditionError if
/// n_inf depends on |x|.
double concentration_functional(const WaveField& u, const FieldExpr& n_inf, double R);

/// |u|^2 mass per direction bin on r_lo <= |x| < r_hi, normalized to sum 1.
/// d = 2: bins of the polar angle on [-pi, pi). d = 3: bins uniform in w1 on
/// [-1, 1] (equal area). Throws RangeError for an empty shell.
std::vector<double> angular_profile(const WaveField& u, double r_lo, double r_hi, int bins);

/// Fraction of the shell's |u|^2 mass within `half_angle` (radians) of any of
/// the given unit directions (or their negatives when `both_signs`).
double direction_mass_fraction(const WaveField& u, double r_lo, double r_hi,
                               const std::vector<std::array<double, 3>>& directions, double half_angle,
                               bool both_signs = true);

/// Estimated constants: beta (verdict beta < 1), gamma_est, cstar_est for
/// |alpha| = 0, 1, 2, mu_decay (fit of |B| + |Q| ~ c |x|^{-1-mu}) and the
/// radial derivative bound c2. Absent fields give verdict "unknown".
std::vector<FunctionalReport> hypothesis_report(const Scenario& scenario, const Grid& grid);

/// n0 = min of n over grid nodes with |x| >= 1; returns n0^{-1/2}, the norm
/// offset used in two dimensions.
double two_dimensional_offset(const Scenario& scenario, const Grid& grid);

/// CSV header and rows: name,value,delta,R,R0,phase,lambda,epsilon,N,L,verdict.
std::string functional_csv(const std::vector<FunctionalReport>& rows);

}  // namespace hlab
