#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hlab/functionals.hpp"
#include "hlab/grid.hpp"

namespace hlab {

/// Multiplier families of the Morawetz identities.
///   phi_const          phi = value
///   phi_theta_over_R   phi = theta_R / (2R), theta_R = 1 inside R, 0 outside
///   psi_radial         grad psi = x/R inside R, x/|x| outside
///   psi_q              psi = q(|x|/R) n_inf(x/|x|), q = 0 on [0,1], q(s) = s for s >= 2
///   psi_eikonal        grad psi = (1 + K)^delta grad K theta(K), theta = 0 below R1,
///                      1 above R1 + 1
/// Kinks are replaced by smoothsteps over [(1 - band) R, (1 + band) R].
enum class MultiplierKind { PhiConst, PhiThetaOverR, PsiRadial, PsiQ, PsiEikonal };
std::string to_string(MultiplierKind k);
MultiplierKind multiplier_from_string(const std::string& s);
bool is_phi_kind(MultiplierKind k);

struct MultiplierParams {
  double R = 1.0;
  double delta = 1.0;
  double R1 = 1.0;
  /// Constant of phi_const.
  double value = 1.0;
  /// Smoothstep degree: 5 (C^2) or 7 (C^3).
  int smooth_order = 5;
  /// Half width of the transition band as a fraction of R.
  double band = 0.2;
  /// Angular profile of psi_q.
  std::optional<FieldExpr> n_inf;
  /// Phase K of psi_eikonal (only K(x) is used; derivatives are taken here).
  PhaseFunction phase;
};

struct MultiplierSpec {
  MultiplierKind kind = MultiplierKind::PhiConst;
  MultiplierParams params;
};

/// Validates parameters (R > 0, delta in (0, 1], R1 >= r0 for psi_eikonal,
/// band in (0, 1), smooth_order in {5, 7}); throws PreconditionError.
MultiplierSpec multiplier_catalog(MultiplierKind kind, MultiplierParams params, double r0 = 1.0);

struct MultiplierValues {
  double phi = 0.0;
  std::array<double, 3> grad_phi{};
  std::array<double, 3> grad_psi{};
  std::array<std::array<double, 3>, 3> hess_psi{};
  double lap_psi = 0.0;
  std::array<double, 3> grad_lap_psi{};
};

/// phi and grad phi for phi kinds; grad psi, D^2 psi, Delta psi and
/// grad Delta psi for psi kinds. Radial kinds are evaluated in closed form,
/// psi_q and psi_eikonal by Richardson-extrapolated central differences of psi.
MultiplierValues evaluate_multiplier(const MultiplierSpec& m, std::span<const double> x);

/// Smoothstep S of degree 5 or 7 and its first three derivatives at t.
std::array<double, 4> smoothstep_derivatives(int order, double t);

enum class IdentityKind { Symmetric, RealPart, ImagPart, AprioriA, AprioriB };
std::string to_string(IdentityKind k);
IdentityKind identity_from_string(const std::string& s);

struct IdentityOptions {
  /// Relative consistency bound ||A u - f|| <= tol ||f||.
  double consistency_tol = 1e-6;
  /// real_part: use lambda + p_tilde + Q (as displayed) instead of
  /// lambda (1 + p_tilde) + Q.
  bool literal_coefficient = false;
  /// symmetric: contract B with the index order as displayed (B_kj).
  bool literal_magnetic_order = false;
};

struct IdentityResidual {
  IdentityKind which = IdentityKind::Symmetric;
  MultiplierKind kind = MultiplierKind::PhiConst;
  double R = 0.0;
  double delta = 0.0;
  double h = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  /// |lhs - rhs| / (|lhs| + |rhs| + ||f|| ||u||); for the a-priori
  /// inequalities only the violation max(0, lhs - rhs) enters.
  double rel_residual = 0.0;
  /// Named summands; lhs terms first, then rhs terms prefixed "rhs:".
  std::vector<std::pair<std::string, double>> terms;
  /// lhs accumulated in one pass over the nodes.
  double lhs_single_pass = 0.0;
  double norm_f = 0.0;
  double norm_u = 0.0;
  /// rhs - lhs (a-priori kinds).
  double slack = 0.0;
  bool violated = false;
};

/// Evaluates one identity on (u, f) with midpoint quadrature over the
/// unknowns and the centered magnetic gradient of the grid module.
/// Throws PreconditionError if (u, f) are inconsistent or the multiplier kind
/// does not fit the identity.
IdentityResidual identity_residual(const WaveField& u, const WaveField& f, const Scenario& scenario,
                                   const MultiplierSpec& m, IdentityKind which, const IdentityOptions& options = {});

/// Both a-priori inequalities; `violated` is set when lhs exceeds rhs by more
/// than 10 tol ||f|| ||u||.
std::pair<IdentityResidual, IdentityResidual> apriori_check(const WaveField& u, const WaveField& f,
                                                            const Scenario& scenario, double tol = 1e-8,
                                                            const IdentityOptions& options = {});

/// u* sampled on the grid with the boundary ring zeroed and f := A u*.
std::pair<WaveField, WaveField> manufactured_pair(const Grid& grid, const Scenario& scenario,
                                                  const std::function<cplx(std::span<const double>)>& ustar);

/// Gaussian packet exp(-|x|^2 / (2 s^2)) exp(i k x1) (1 + 0.3 i x2 / s) with s = L/8.
std::function<cplx(std::span<const double>)> default_packet(double half_width, double k);

/// CSV columns: which,kind,R,delta,h,lhs,rhs,rel_residual.
std::string identity_csv(const std::vector<IdentityResidual>& rows);

}  // namespace hlab
