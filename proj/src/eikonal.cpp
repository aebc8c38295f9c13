#include "hlab/eikonal.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

namespace hlab {

// --- angular grid ---------------------------------------------------------------------

AngularGrid AngularGrid::circle(int m) {
  if (m < 32 || m % 2 != 0) throw PreconditionError("circle grid needs an even number of angles >= 32");
  return AngularGrid(2, 1, m);
}

AngularGrid AngularGrid::sphere(int m_theta, int m_phi) {
  if (m_theta < 16 || m_phi < 32 || m_phi % 2 != 0)
    throw PreconditionError("sphere grid needs m_theta >= 16 and an even m_phi >= 32");
  return AngularGrid(3, m_theta, m_phi);
}

double AngularGrid::theta(int i) const { return d_ == 2 ? 0.5 * M_PI : (i + 0.5) * M_PI / m_theta_; }
double AngularGrid::phi(int j) const { return 2.0 * M_PI * j / m_phi_; }

std::array<double, 3> AngularGrid::direction(int a) const {
  const int i = a / m_phi_, j = a % m_phi_;
  const double p = phi(j);
  if (d_ == 2) return {std::cos(p), std::sin(p), 0.0};
  const double t = theta(i);
  return {std::sin(t) * std::cos(p), std::sin(t) * std::sin(p), std::cos(t)};
}

// --- spectral machinery ----------------------------------------------------------------

// Trigonometric representation of functions on the angular grid. In three
// dimensions the colatitude is extended to [0, 2 pi) by
//   f(2 pi - theta, phi) = f(theta, phi + pi),
// which makes smooth functions on the sphere smooth and doubly periodic.
class SphereSpectral {
 public:
  explicit SphereSpectral(const AngularGrid& a) : a_(a) {
    n0_ = a.dimension() == 2 ? 1 : 2 * a.m_theta();
    n1_ = a.m_phi();
    buf_ = fftw_alloc_complex(static_cast<std::size_t>(n0_) * n1_);
    if (n0_ == 1) {
      fwd_ = fftw_plan_dft_1d(n1_, buf_, buf_, FFTW_FORWARD, FFTW_ESTIMATE);
      bwd_ = fftw_plan_dft_1d(n1_, buf_, buf_, FFTW_BACKWARD, FFTW_ESTIMATE);
    } else {
      fwd_ = fftw_plan_dft_2d(n0_, n1_, buf_, buf_, FFTW_FORWARD, FFTW_ESTIMATE);
      bwd_ = fftw_plan_dft_2d(n0_, n1_, buf_, buf_, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    theta0_ = n0_ == 1 ? 0.0 : 0.5 * M_PI / a.m_theta();
  }
  ~SphereSpectral() {
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
    fftw_free(buf_);
  }
  SphereSpectral(const SphereSpectral&) = delete;
  SphereSpectral& operator=(const SphereSpectral&) = delete;

  int k0(int q) const { return wave(q, n0_); }
  int k1(int q) const { return wave(q, n1_); }

  std::vector<cplx> coeffs(const std::vector<double>& nodal) const {
    const int mt = a_.m_theta(), mp = a_.m_phi();
    for (int i = 0; i < n0_; ++i) {
      for (int j = 0; j < n1_; ++j) {
        double v;
        if (i < mt)
          v = nodal[i * mp + j];
        else
          v = nodal[(2 * mt - 1 - i) * mp + (j + mp / 2) % mp];
        buf_[i * n1_ + j][0] = v;
        buf_[i * n1_ + j][1] = 0.0;
      }
    }
    fftw_execute(fwd_);
    std::vector<cplx> c(static_cast<std::size_t>(n0_) * n1_);
    const double scale = 1.0 / (static_cast<double>(n0_) * n1_);
    for (int q0 = 0; q0 < n0_; ++q0) {
      const int kt = k0(q0);
      const cplx shift = std::polar(1.0, -kt * theta0_);
      for (int q1 = 0; q1 < n1_; ++q1) {
        const bool nyquist = (n0_ > 1 && 2 * q0 == n0_) || 2 * q1 == n1_;
        const std::size_t at = static_cast<std::size_t>(q0) * n1_ + q1;
        c[at] = nyquist ? cplx{} : cplx(buf_[at][0], buf_[at][1]) * shift * scale;
      }
    }
    return c;
  }

  // Values of d^pt/dtheta^pt d^pp/dphi^pp at theta_i + st, phi_j + sp for the
  // original nodes (i < m_theta).
  std::vector<double> nodal(const std::vector<cplx>& c, int pt, int pp, double st = 0.0, double sp = 0.0) const {
    for (int q0 = 0; q0 < n0_; ++q0) {
      const int kt = k0(q0);
      const cplx ft = std::polar(1.0, kt * (theta0_ + st)) * ipow(kt, pt);
      for (int q1 = 0; q1 < n1_; ++q1) {
        const int kp = k1(q1);
        const std::size_t at = static_cast<std::size_t>(q0) * n1_ + q1;
        const cplx v = c[at] * ft * std::polar(1.0, kp * sp) * ipow(kp, pp);
        buf_[at][0] = v.real();
        buf_[at][1] = v.imag();
      }
    }
    fftw_execute(bwd_);
    const int mt = a_.m_theta(), mp = a_.m_phi();
    std::vector<double> out(static_cast<std::size_t>(mt) * mp);
    for (int i = 0; i < mt; ++i)
      for (int j = 0; j < mp; ++j) out[i * mp + j] = buf_[i * n1_ + j][0];
    return out;
  }

  // Value and first derivatives at an arbitrary direction.
  void point(const std::vector<cplx>& c, double theta, double phi, double& v, double& dt, double& dp) const {
    std::vector<cplx>& et = et_;
    std::vector<cplx>& ep = ep_;
    et.resize(n0_);
    ep.resize(n1_);
    for (int q0 = 0; q0 < n0_; ++q0) et[q0] = std::polar(1.0, k0(q0) * theta);
    for (int q1 = 0; q1 < n1_; ++q1) ep[q1] = std::polar(1.0, k1(q1) * phi);
    cplx sv{}, st{}, sp{};
    for (int q0 = 0; q0 < n0_; ++q0) {
      cplx rv{}, rp{};
      const cplx* row = c.data() + static_cast<std::size_t>(q0) * n1_;
      for (int q1 = 0; q1 < n1_; ++q1) {
        const cplx t = row[q1] * ep[q1];
        rv += t;
        rp += t * static_cast<double>(k1(q1));
      }
      sv += rv * et[q0];
      st += rv * et[q0] * static_cast<double>(k0(q0));
      sp += rp * et[q0];
    }
    v = sv.real();
    dt = -st.imag();  // Re(i k z) = -k Im z
    dp = -sp.imag();
  }

 private:
  static int wave(int q, int n) { return 2 * q < n ? q : q - n; }
  static cplx ipow(int k, int p) {
    cplx r(1.0, 0.0);
    for (int i = 0; i < p; ++i) r *= cplx(0.0, static_cast<double>(k));
    return r;
  }

  AngularGrid a_;
  int n0_ = 1, n1_ = 1;
  double theta0_ = 0.0;
  fftw_complex* buf_ = nullptr;
  fftw_plan fwd_ = nullptr, bwd_ = nullptr;
  mutable std::vector<cplx> et_, ep_;
};

// --- solution -------------------------------------------------------------------------

EikonalSolution::EikonalSolution(const AngularGrid& angles)
    : angles_(angles), spectral_(std::make_unique<SphereSpectral>(angles)) {}
EikonalSolution::~EikonalSolution() = default;
EikonalSolution::EikonalSolution(EikonalSolution&&) noexcept = default;
EikonalSolution& EikonalSolution::operator=(EikonalSolution&&) noexcept = default;

namespace {

std::vector<double> sin_theta(const AngularGrid& a, double shift = 0.0) {
  std::vector<double> out(a.size(), 1.0);
  if (a.dimension() == 2) return out;
  for (int i = 0; i < a.m_theta(); ++i)
    for (int j = 0; j < a.m_phi(); ++j) out[i * a.m_phi() + j] = std::sin(a.theta(i) + shift);
  return out;
}

// |grad_w g|^2 on the nodes.
std::vector<double> angular_gradient_sq(const SphereSpectral& sp, const AngularGrid& a, const std::vector<cplx>& c,
                                        const std::vector<double>& sint) {
  std::vector<double> out(a.size());
  const auto gp = sp.nodal(c, 0, 1);
  if (a.dimension() == 2) {
    for (int k = 0; k < a.size(); ++k) out[k] = gp[k] * gp[k];
    return out;
  }
  const auto gt = sp.nodal(c, 1, 0);
  for (int k = 0; k < a.size(); ++k) out[k] = gt[k] * gt[k] + gp[k] * gp[k] / (sint[k] * sint[k]);
  return out;
}

std::vector<double> sample_shell(const FieldExpr& p, const AngularGrid& a, double r) {
  std::vector<double> out(a.size());
  const int d = a.dimension();
  for (int k = 0; k < a.size(); ++k) {
    auto w = a.direction(k);
    for (int c = 0; c < d; ++c) w[c] *= r;
    out[k] = p.eval(std::span<const double>(w.data(), d));
  }
  return out;
}

}  // namespace

InitProfile make_init(const std::string& kind, const FieldExpr& p_tilde, double r0, double lambda) {
  if (kind == "one") return [](std::span<const double>) { return 1.0; };
  if (kind == "saito") {
    const auto [a, b] = saito_coefficients(lambda);
    return [a, b](std::span<const double> w) { return a - b * w[0]; };
  }
  if (kind == "default") {
    return [p_tilde, r0](std::span<const double> w) {
      std::array<double, 3> x{};
      for (std::size_t k = 0; k < w.size(); ++k) x[k] = r0 * w[k];
      const double v = 1.0 + p_tilde.eval(std::span<const double>(x.data(), w.size()));
      if (!(v > 0.0)) throw DomainError("1 + p_tilde is not positive on the initial shell");
      return std::sqrt(v);
    };
  }
  throw ConfigError("unknown eikonal init '" + kind + "'");
}

EikonalSolution march_g(const FieldExpr& p_tilde, const AngularGrid& angles, double r0, double r_max, double rho,
                        const InitProfile& init, double margin) {
  if (!(r0 > 0.0) || !(r_max > r0)) throw PreconditionError("eikonal march needs 0 < r0 < r_max");
  if (!(rho > 1.0)) throw PreconditionError("eikonal shell ratio rho must exceed 1");
  EikonalSolution sol(angles);
  sol.p_tilde_ = p_tilde;
  const SphereSpectral& sp = *sol.spectral_;
  const int A = angles.size();
  const int d = angles.dimension();
  const auto sint = sin_theta(angles);

  const double span = std::log(r_max / r0);
  const int steps = std::max(1, static_cast<int>(std::ceil(span / std::log(rho) - 1e-12)));
  const double ds = span / steps;
  sol.ds_ = ds;
  const double s0 = std::log(r0);

  int current_shell = 0;
  auto rhs = [&](const std::vector<double>& g, const std::vector<double>& p, double r) {
    const auto grad2 = angular_gradient_sq(sp, angles, sp.coeffs(g), sint);
    std::vector<double> out(A);
    for (int k = 0; k < A; ++k) {
      const double rad = 1.0 + p[k] - grad2[k];
      if (!(rad >= margin)) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "eikonal breakdown: C* too large (shell %d, r = %.6g, radicand %.3e)",
                      current_shell, r, rad);
        throw EikonalBreakdown(buf, current_shell, r);
      }
      out[k] = -g[k] + std::sqrt(rad);
    }
    return out;
  };

  std::vector<double> g(A);
  for (int k = 0; k < A; ++k) {
    const auto w = angles.direction(k);
    g[k] = init(std::span<const double>(w.data(), d));
  }
  auto p_here = sample_shell(p_tilde, angles, r0);
  auto k1 = rhs(g, p_here, r0);
  sol.radii_.push_back(r0);
  sol.g_.push_back(g);
  sol.gs_.push_back(k1);

  // Largest rate of the linearized right-hand side: the angular advection
  // speed times the largest resolved wavenumber, plus the damping term.
  const double k_theta = d == 3 ? angles.m_theta() : 0.0;
  const double k_phi = 0.5 * angles.m_phi();
  auto stiffness = [&](const std::vector<double>& gv, const std::vector<double>& p) {
    const auto c = sp.coeffs(gv);
    const auto gp = sp.nodal(c, 0, 1);
    const auto gt = d == 3 ? sp.nodal(c, 1, 0) : std::vector<double>(A, 0.0);
    double worst = 0.0;
    for (int k = 0; k < A; ++k) {
      const double s2 = sint[k] * sint[k];
      const double rad = std::max(margin, 1.0 + p[k] - gt[k] * gt[k] - gp[k] * gp[k] / s2);
      worst = std::max(worst, (std::abs(gt[k]) * k_theta + std::abs(gp[k]) * k_phi / s2) / std::sqrt(rad));
    }
    return worst + 1.0;
  };

  std::vector<double> tmp(A);
  for (int m = 0; m < steps; ++m) {
    current_shell = m + 1;
    const double s_lo = s0 + m * ds;
    const double s_hi = m + 1 == steps ? std::log(r_max) : s0 + (m + 1) * ds;
    // RK4 is stable for imaginary rates up to about 2.8 per step.
    const int sub = std::max(1, static_cast<int>(std::ceil(ds * stiffness(g, p_here) / 2.0)));
    const double h = (s_hi - s_lo) / sub;
    for (int q = 0; q < sub; ++q) {
      const double s = s_lo + q * h;
      const double r_half = std::exp(s + 0.5 * h);
      const double r_next = q + 1 == sub ? std::exp(s_hi) : std::exp(s + h);
      const auto p_half = sample_shell(p_tilde, angles, r_half);
      const auto p_next = sample_shell(p_tilde, angles, r_next);
      for (int k = 0; k < A; ++k) tmp[k] = g[k] + 0.5 * h * k1[k];
      const auto k2 = rhs(tmp, p_half, r_half);
      for (int k = 0; k < A; ++k) tmp[k] = g[k] + 0.5 * h * k2[k];
      const auto k3 = rhs(tmp, p_half, r_half);
      for (int k = 0; k < A; ++k) tmp[k] = g[k] + h * k3[k];
      const auto k4 = rhs(tmp, p_next, r_next);
      for (int k = 0; k < A; ++k) g[k] += h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
      p_here = p_next;
      k1 = rhs(g, p_here, r_next);
    }
    sol.radii_.push_back(m + 1 == steps ? r_max : std::exp(s_hi));
    sol.g_.push_back(g);
    sol.gs_.push_back(k1);
  }

  sol.c0_ = std::numeric_limits<double>::infinity();
  sol.c1_ = -std::numeric_limits<double>::infinity();
  sol.min_drk_ = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < sol.g_.size(); ++m) {
    for (int k = 0; k < A; ++k) {
      sol.c0_ = std::min(sol.c0_, sol.g_[m][k]);
      sol.c1_ = std::max(sol.c1_, sol.g_[m][k]);
      sol.min_drk_ = std::min(sol.min_drk_, sol.g_[m][k] + sol.gs_[m][k]);
    }
    sol.g_hat_.push_back(sp.coeffs(sol.g_[m]));
    sol.gs_hat_.push_back(sp.coeffs(sol.gs_[m]));
  }
  return sol;
}

double EikonalSolution::evaluate(std::span<const double> x, std::span<double> grad) const {
  const int d = angles_.dimension();
  if (static_cast<int>(x.size()) != d) throw PreconditionError("point dimension does not match the eikonal grid");
  double r2 = 0.0;
  for (double c : x) r2 += c * c;
  const double r = std::sqrt(r2);
  const double lo = radii_.front(), hi = radii_.back();
  if (!(r >= lo * (1.0 - 1e-12) && r <= hi * (1.0 + 1e-12))) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "radius %.6g outside the marched range [%.6g, %.6g]", r, lo, hi);
    throw RangeError(buf);
  }
  const double s = std::log(r / lo);
  const int n = shells();
  int m = std::clamp(static_cast<int>(std::floor(s / ds_)), 0, n - 2);
  const double t = std::clamp(s / ds_ - m, 0.0, 1.0);

  const double phi = std::atan2(x[1], x[0]);
  const double theta = d == 3 ? std::acos(std::clamp(x[2] / r, -1.0, 1.0)) : 0.5 * M_PI;
  double G[2][3], S[2][3];
  for (int e = 0; e < 2; ++e) {
    spectral_->point(g_hat_[m + e], theta, phi, G[e][0], G[e][1], G[e][2]);
    spectral_->point(gs_hat_[m + e], theta, phi, S[e][0], S[e][1], S[e][2]);
  }
  const double t2 = t * t, t3 = t2 * t;
  const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t, h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
  const double d00 = 6 * t2 - 6 * t, d10 = 3 * t2 - 4 * t + 1, d01 = -6 * t2 + 6 * t, d11 = 3 * t2 - 2 * t;
  double val[3], dsv;
  for (int c = 0; c < 3; ++c) val[c] = h00 * G[0][c] + h10 * ds_ * S[0][c] + h01 * G[1][c] + h11 * ds_ * S[1][c];
  dsv = (d00 * G[0][0] + d10 * ds_ * S[0][0] + d01 * G[1][0] + d11 * ds_ * S[1][0]) / ds_;

  const double g = val[0];
  const double radial = g + dsv;
  const double cp = std::cos(phi), spn = std::sin(phi);
  if (d == 2) {
    grad[0] = radial * cp - val[2] * spn;
    grad[1] = radial * spn + val[2] * cp;
  } else {
    const double ct = std::cos(theta), st = std::sin(theta);
    const double gphi = val[2] / st;
    grad[0] = radial * st * cp + val[1] * ct * cp - gphi * spn;
    grad[1] = radial * st * spn + val[1] * ct * spn + gphi * cp;
    grad[2] = radial * ct - val[1] * st;
  }
  return r * g;
}

PhaseFunction EikonalSolution::phase_function() const {
  return [this](std::span<const double> x, std::span<double> grad) { return evaluate(x, grad); };
}

// --- closed form ------------------------------------------------------------------------

std::pair<double, double> saito_coefficients(double lambda) {
  if (!(lambda > 1.0)) throw DomainError("the closed-form eikonal solution needs lambda > 1");
  const double p = std::sqrt(1.0 + 1.0 / lambda), q = std::sqrt(1.0 - 1.0 / lambda);
  return {0.5 * (p + q), 0.5 * (p - q)};
}

double saito_exact(double lambda, std::span<const double> x, std::span<double> grad) {
  const auto [a, b] = saito_coefficients(lambda);
  double r2 = 0.0;
  for (double c : x) r2 += c * c;
  const double r = std::sqrt(r2);
  if (r == 0.0) throw DomainError("the closed-form eikonal solution is singular at the origin");
  for (std::size_t k = 0; k < x.size(); ++k) grad[k] = a * x[k] / r - (k == 0 ? b : 0.0);
  return a * r - b * x[0];
}

// --- diagnostics ------------------------------------------------------------------------

std::vector<double> eikonal_residual_shells(const EikonalSolution& sol, const FieldExpr& p_tilde) {
  const AngularGrid& a = sol.angles_;
  const SphereSpectral& sp = *sol.spectral_;
  const int A = a.size();
  const int d = a.dimension();
  const double ds = sol.ds_;
  const double st = d == 3 ? 0.25 * M_PI / a.m_theta() : 0.0;
  const double sphi = M_PI / a.m_phi();
  const auto sint = sin_theta(a, st);
  std::vector<double> out;
  std::vector<double> gm(A), gsm(A);
  for (int m = 0; m + 1 < sol.shells(); ++m) {
    const auto& G0 = sol.g_[m];
    const auto& G1 = sol.g_[m + 1];
    const auto& S0 = sol.gs_[m];
    const auto& S1 = sol.gs_[m + 1];
    for (int k = 0; k < A; ++k) {
      gm[k] = 0.5 * (G0[k] + G1[k]) + ds * (S0[k] - S1[k]) / 8.0;
      gsm[k] = 1.5 * (G1[k] - G0[k]) / ds - 0.25 * (S0[k] + S1[k]);
    }
    const auto cg = sp.coeffs(gm);
    const auto cs = sp.coeffs(gsm);
    const auto gv = sp.nodal(cg, 0, 0, st, sphi);
    const auto gp = sp.nodal(cg, 0, 1, st, sphi);
    const auto gt = d == 3 ? sp.nodal(cg, 1, 0, st, sphi) : std::vector<double>(A, 0.0);
    const auto sv = sp.nodal(cs, 0, 0, st, sphi);
    const double r = sol.radii_[m] * std::exp(0.5 * ds);
    double worst = 0.0;
    for (int k = 0; k < A; ++k) {
      const int i = k / a.m_phi(), j = k % a.m_phi();
      const double ph = a.phi(j) + sphi;
      std::array<double, 3> x{};
      if (d == 2) {
        x = {r * std::cos(ph), r * std::sin(ph), 0.0};
      } else {
        const double th = a.theta(i) + st;
        x = {r * std::sin(th) * std::cos(ph), r * std::sin(th) * std::sin(ph), r * std::cos(th)};
      }
      const double p = p_tilde.eval(std::span<const double>(x.data(), d));
      const double radial = gv[k] + sv[k];
      const double grad2 = radial * radial + gt[k] * gt[k] + gp[k] * gp[k] / (sint[k] * sint[k]);
      worst = std::max(worst, std::abs(grad2 - (1.0 + p)));
    }
    out.push_back(worst);
  }
  return out;
}

double eikonal_residual(const EikonalSolution& sol, const FieldExpr& p_tilde) {
  double worst = 0.0;
  for (double v : eikonal_residual_shells(sol, p_tilde)) worst = std::max(worst, v);
  return worst;
}

CurvatureEntry hessian_F(const EikonalSolution& sol, std::span<const double> point, double step) {
  const int d = sol.angles().dimension();
  if (static_cast<int>(point.size()) != d) throw PreconditionError("point dimension does not match the eikonal grid");
  const auto& radii = sol.radii();
  if (radii.size() < 5) throw RangeError("too few shells for curvature diagnostics");
  double r2 = 0.0;
  for (double c : point) r2 += c * c;
  const double r = std::sqrt(r2);
  if (r < radii[2] || r > radii[radii.size() - 3])
    throw RangeError("curvature point must lie two shells inside the marched range");
  const double h = step > 0.0 ? step : 1e-4 * r;
  std::array<double, 3> x{}, g0{}, gp{}, gm{};
  for (int k = 0; k < d; ++k) x[k] = point[k];
  const double K = sol.evaluate(std::span<const double>(x.data(), d), std::span<double>(g0.data(), d));
  std::array<std::array<double, 3>, 3> hess{};
  for (int j = 0; j < d; ++j) {
    auto xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    sol.evaluate(std::span<const double>(xp.data(), d), std::span<double>(gp.data(), d));
    sol.evaluate(std::span<const double>(xm.data(), d), std::span<double>(gm.data(), d));
    for (int i = 0; i < d; ++i) hess[i][j] = (gp[i] - gm[i]) / (2.0 * h);
  }
  double grad2 = 0.0;
  for (int k = 0; k < d; ++k) grad2 += g0[k] * g0[k];
  CurvatureEntry out;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      // symmetrize the finite-difference Hessian
      const double hij = 0.5 * (hess[i][j] + hess[j][i]);
      out.F[i][j] = K * hij - (i == j ? grad2 : 0.0) + g0[i] * g0[j];
      out.sup = std::max(out.sup, std::abs(out.F[i][j]));
    }
  }
  return out;
}

double curvature_sup(const EikonalSolution& sol, int samples, double r_min, double r_max) {
  const auto& radii = sol.radii();
  const int d = sol.angles().dimension();
  const double lo = std::max(r_min, radii[2]);
  const double hi = std::min(r_max, radii[radii.size() - 3]);
  if (!(hi > lo)) throw RangeError("empty radius range for curvature sampling");
  std::mt19937_64 rng(20240601);
  auto uni = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  double sup = 0.0;
  for (int n = 0; n < samples; ++n) {
    const double r = lo * std::pow(hi / lo, uni());
    std::array<double, 3> x{};
    if (d == 2) {
      const double p = 2.0 * M_PI * uni();
      x = {r * std::cos(p), r * std::sin(p), 0.0};
    } else {
      const double z = 2.0 * uni() - 1.0, p = 2.0 * M_PI * uni();
      const double q = std::sqrt(1.0 - z * z);
      x = {r * q * std::cos(p), r * q * std::sin(p), r * z};
    }
    sup = std::max(sup, hessian_F(sol, std::span<const double>(x.data(), d)).sup);
  }
  return sup;
}

double gradient_identity_residual(const EikonalSolution& sol, std::span<const double> point) {
  const int d = sol.angles().dimension();
  const auto F = hessian_F(sol, point);
  std::array<double, 3> g{};
  const double K = sol.evaluate(point, std::span<double>(g.data(), d));
  const double h = default_fd_step(point);
  double worst = 0.0;
  for (int k = 0; k < d; ++k) {
    double rhs = 0.0;
    for (int j = 0; j < d; ++j) rhs += F.F[k][j] * g[j];
    rhs *= 2.0 / K;
    worst = std::max(worst, std::abs(differentiate_field(sol.p_tilde(), point, k, h) - rhs));
  }
  return worst;
}

double g_infinity_check(const EikonalSolution& sol, const FieldExpr& n_inf, double scale) {
  const AngularGrid& a = sol.angles_;
  const int d = a.dimension();
  const int last = sol.shells() - 1;
  const double r = sol.radii_[last];
  double drg = 0.0;
  for (double v : sol.gs_[last]) drg = std::max(drg, std::abs(v) / r);
  if (!(drg < 1e-8)) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "outer shell is not steady (max |d_r g| = %.3e); march further", drg);
    throw RangeError(buf);
  }
  const auto& g = sol.g_[last];
  const auto grad2 = angular_gradient_sq(*sol.spectral_, a, sol.g_hat_[last], sin_theta(a));
  double worst = 0.0;
  for (int k = 0; k < a.size(); ++k) {
    const auto w = a.direction(k);
    const double target = n_inf.eval(std::span<const double>(w.data(), d)) / scale;
    worst = std::max(worst, std::abs(g[k] * g[k] + grad2[k] - target));
  }
  return worst;
}

RegularityReport regularity(const EikonalSolution& sol) {
  const AngularGrid& a = sol.angles_;
  const SphereSpectral& sp = *sol.spectral_;
  const int d = a.dimension();
  const auto sint = sin_theta(a);
  RegularityReport rep;
  const int n = sol.shells();
  for (int m = 0; m < n; ++m) {
    const auto& g = sol.g_[m];
    const auto& gs = sol.gs_[m];
    const auto gp = sp.nodal(sol.g_hat_[m], 0, 1);
    const auto gpp = sp.nodal(sol.g_hat_[m], 0, 2);
    const auto sp1 = sp.nodal(sol.gs_hat_[m], 0, 1);
    std::vector<double> gt(a.size(), 0.0), gtt(a.size(), 0.0), gtp(a.size(), 0.0), st1(a.size(), 0.0);
    if (d == 3) {
      gt = sp.nodal(sol.g_hat_[m], 1, 0);
      gtt = sp.nodal(sol.g_hat_[m], 2, 0);
      gtp = sp.nodal(sol.g_hat_[m], 1, 1);
      st1 = sp.nodal(sol.gs_hat_[m], 1, 0);
    }
    const int mp = std::clamp(m + 1, 0, n - 1), mm = std::clamp(m - 1, 0, n - 1);
    for (int k = 0; k < a.size(); ++k) {
      const double s2 = sint[k];
      rep.sup_g_minus_one = std::max(rep.sup_g_minus_one, std::abs(g[k] - 1.0));
      const double ang2 = gt[k] * gt[k] + gp[k] * gp[k] / (s2 * s2);
      rep.sup_first = std::max(rep.sup_first, std::sqrt(gs[k] * gs[k] + ang2));
      const double gss = mp == mm ? 0.0 : (sol.gs_[mp][k] - sol.gs_[mm][k]) / ((mp - mm) * sol.ds_);
      // Covariant second derivatives in the orthonormal frame (e_r, e_theta, e_phi).
      const double cot = d == 3 ? std::cos(a.theta(k / a.m_phi())) / s2 : 0.0;
      const double second =
          std::max({std::abs(gss - gs[k]), std::abs(st1[k] - gt[k]), std::abs(sp1[k] - gp[k]) / s2, std::abs(gtt[k]),
                    std::abs(gtp[k] - cot * gp[k]) / s2, std::abs(gpp[k] / (s2 * s2) + cot * gt[k])});
      rep.sup_second = std::max(rep.sup_second, second);
    }
  }
  return rep;
}

std::string eikonal_csv(const EikonalSolution& sol) {
  std::ostringstream o;
  o << "r,i,j,g,dg_dr\n";
  const AngularGrid& a = sol.angles();
  char buf[128];
  for (int m = 0; m < sol.shells(); ++m) {
    const double r = sol.radii()[m];
    for (int k = 0; k < a.size(); ++k) {
      const int i = a.dimension() == 2 ? k : k / a.m_phi();
      const int j = a.dimension() == 2 ? 0 : k % a.m_phi();
      std::snprintf(buf, sizeof buf, "%.17g,%d,%d,%.17g,%.17g\n", r, i, j, sol.g(m)[k], sol.g_s(m)[k] / r);
      o << buf;
    }
  }
  return o.str();
}

}  // namespace hlab
