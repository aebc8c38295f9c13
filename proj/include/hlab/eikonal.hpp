#pragma once

#include <array>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hlab/errors.hpp"
#include "hlab/expr.hpp"
#include "hlab/functionals.hpp"

namespace hlab {

/// Directions on the unit circle (d = 2: M equispaced angles phi_j = 2 pi j/M)
/// or sphere (d = 3: theta_i = (i + 1/2) pi / M_theta, phi_j = 2 pi j / M_phi,
/// polar axis x3; no node sits on a pole).
class AngularGrid {
 public:
  static AngularGrid circle(int m);
  static AngularGrid sphere(int m_theta, int m_phi);

  int dimension() const { return d_; }
  int size() const { return m_theta_ * m_phi_; }
  int m_theta() const { return m_theta_; }
  int m_phi() const { return m_phi_; }
  double theta(int i) const;
  double phi(int j) const;
  /// Unit vector of node a = i * m_phi + j.
  std::array<double, 3> direction(int a) const;

 private:
  AngularGrid(int d, int mt, int mp) : d_(d), m_theta_(mt), m_phi_(mp) {}
  int d_;
  int m_theta_;
  int m_phi_;
};

/// Raised when the radicand of the g equation drops below the margin.
class EikonalBreakdown : public NumericalError {
 public:
  EikonalBreakdown(const std::string& msg, int shell, double radius)
      : NumericalError(msg), shell_(shell), radius_(radius) {}
  int shell() const { return shell_; }
  double radius() const { return radius_; }

 private:
  int shell_;
  double radius_;
};

/// Initial angular profile g(r0, w).
using InitProfile = std::function<double(std::span<const double> omega)>;

/// "default": sqrt(1 + p_tilde(r0 w)); "one": 1; "saito": a(lambda) - b(lambda) w1.
InitProfile make_init(const std::string& kind, const FieldExpr& p_tilde, double r0, double lambda);

class SphereSpectral;
struct RegularityReport;

/// g = K/|x| on shells r_m = r0 rho^m, marched in s = log r.
class EikonalSolution {
 public:
  const AngularGrid& angles() const { return angles_; }
  const std::vector<double>& radii() const { return radii_; }
  double log_step() const { return ds_; }
  int shells() const { return static_cast<int>(radii_.size()); }
  /// g and dg/ds at shell m, one value per angular node.
  const std::vector<double>& g(int m) const { return g_[m]; }
  const std::vector<double>& g_s(int m) const { return gs_[m]; }
  double c0() const { return c0_; }
  double c1() const { return c1_; }
  /// min over samples of d_r K = g + g_s.
  double min_radial_derivative() const { return min_drk_; }
  const FieldExpr& p_tilde() const { return p_tilde_; }

  /// K(x) and grad K(x) by cubic Hermite interpolation in log r and
  /// trigonometric interpolation in angle. Throws RangeError outside
  /// [r_0, r_last].
  double evaluate(std::span<const double> x, std::span<double> grad) const;
  PhaseFunction phase_function() const;

  ~EikonalSolution();
  EikonalSolution(EikonalSolution&&) noexcept;
  EikonalSolution& operator=(EikonalSolution&&) noexcept;

 private:
  friend EikonalSolution march_g(const FieldExpr&, const AngularGrid&, double, double, double, const InitProfile&,
                                 double);
  friend std::vector<double> eikonal_residual_shells(const EikonalSolution&, const FieldExpr&);
  friend double g_infinity_check(const EikonalSolution&, const FieldExpr&, double);
  friend RegularityReport regularity(const EikonalSolution&);

  explicit EikonalSolution(const AngularGrid& angles);
  AngularGrid angles_;
  std::vector<double> radii_;
  double ds_ = 0.0;
  std::vector<std::vector<double>> g_, gs_;
  std::vector<std::vector<cplx>> g_hat_, gs_hat_;
  double c0_ = 0.0, c1_ = 0.0, min_drk_ = 0.0;
  FieldExpr p_tilde_;
  std::unique_ptr<SphereSpectral> spectral_;
};

/// Marches (g + g_s)^2 + |grad_w g|^2 = 1 + p_tilde(e^s w), i.e.
///   g_s = -g + sqrt(1 + p_tilde - |grad_w g|^2),
/// with classical RK4 steps of size log(rho) from r0 to r_max (rho is
/// adjusted down so the last shell lands on r_max). Angular derivatives are
/// spectral (d = 3 via the double Fourier sphere extension). Throws
/// EikonalBreakdown when the radicand falls below `margin`.
EikonalSolution march_g(const FieldExpr& p_tilde, const AngularGrid& angles, double r0, double r_max, double rho,
                        const InitProfile& init, double margin = 1e-3);

/// a(lambda) and b(lambda) of K = a |x| - b x1, the exact solution of
/// |grad K|^2 = 1 - w1/lambda.
std::pair<double, double> saito_coefficients(double lambda);
double saito_exact(double lambda, std::span<const double> x, std::span<double> grad);

/// sup | |grad K|^2 - (1 + p_tilde) | over mid-shells and angles offset from
/// the nodes (half a step in phi, a quarter step in theta).
double eikonal_residual(const EikonalSolution& sol, const FieldExpr& p_tilde);
/// The same residual per interval [r_m, r_{m+1}].
std::vector<double> eikonal_residual_shells(const EikonalSolution& sol, const FieldExpr& p_tilde);

struct CurvatureEntry {
  std::array<std::array<double, 3>, 3> F{};
  double sup = 0.0;
};

/// F_ij = K d_ij K - |grad K|^2 delta_ij + d_i K d_j K with the Hessian from
/// central differences of grad K. The point must lie two shells inside the
/// marched range (RangeError otherwise).
CurvatureEntry hessian_F(const EikonalSolution& sol, std::span<const double> point, double step = 0.0);

/// max_ij |F_ij| over `samples` deterministic points with radius in
/// [r_min, r_max] (clipped to the admissible range).
double curvature_sup(const EikonalSolution& sol, int samples, double r_min, double r_max);

/// Residual of d_k p_tilde = (2/K) sum_j F_kj d_j K at `point`, max over k.
double gradient_identity_residual(const EikonalSolution& sol, std::span<const double> point);

/// sup_w | g^2 + |grad_w g|^2 - n_inf(w)/scale | on the outer shell; n_inf/scale
/// is the limit 1 + p_tilde_inf. Throws RangeError ("march further") unless
/// ||d_r g||_inf < 1e-8 there.
double g_infinity_check(const EikonalSolution& sol, const FieldExpr& n_inf, double scale = 1.0);

struct RegularityReport {
  double sup_g_minus_one = 0.0;
  /// sup |x| |grad g| = sup sqrt(g_s^2 + |grad_w g|^2).
  double sup_first = 0.0;
  /// sup |x|^2 |D^2 g| estimated from angular and log-radial second derivatives.
  double sup_second = 0.0;
};
RegularityReport regularity(const EikonalSolution& sol);

/// CSV columns r,i,j,g,dg_dr (j = 0 in two dimensions).
std::string eikonal_csv(const EikonalSolution& sol);

}  // namespace hlab
