#include "hlab/identities.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "hlab/errors.hpp"

namespace hlab {

std::string to_string(MultiplierKind k) {
  switch (k) {
    case MultiplierKind::PhiConst: return "phi_const";
    case MultiplierKind::PhiThetaOverR: return "phi_theta_over_R";
    case MultiplierKind::PsiRadial: return "psi_radial";
    case MultiplierKind::PsiQ: return "psi_q";
    case MultiplierKind::PsiEikonal: return "psi_eikonal";
  }
  return "?";
}

MultiplierKind multiplier_from_string(const std::string& s) {
  for (auto k : {MultiplierKind::PhiConst, MultiplierKind::PhiThetaOverR, MultiplierKind::PsiRadial,
                 MultiplierKind::PsiQ, MultiplierKind::PsiEikonal})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown multiplier kind '" + s + "'");
}

bool is_phi_kind(MultiplierKind k) { return k == MultiplierKind::PhiConst || k == MultiplierKind::PhiThetaOverR; }

std::string to_string(IdentityKind k) {
  switch (k) {
    case IdentityKind::Symmetric: return "symmetric";
    case IdentityKind::RealPart: return "real_part";
    case IdentityKind::ImagPart: return "imag_part";
    case IdentityKind::AprioriA: return "apriori_a";
    case IdentityKind::AprioriB: return "apriori_b";
  }
  return "?";
}

IdentityKind identity_from_string(const std::string& s) {
  for (auto k : {IdentityKind::Symmetric, IdentityKind::RealPart, IdentityKind::ImagPart, IdentityKind::AprioriA,
                 IdentityKind::AprioriB})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown identity '" + s + "'");
}

std::array<double, 4> smoothstep_derivatives(int order, double t) {
  if (t <= 0.0) return {0.0, 0.0, 0.0, 0.0};
  if (t >= 1.0) return {1.0, 0.0, 0.0, 0.0};
  const double t2 = t * t, t3 = t2 * t, u = 1.0 - t;
  if (order == 5) {
    return {t3 * (10.0 - 15.0 * t + 6.0 * t2), 30.0 * t2 * u * u, 60.0 * t * u * (1.0 - 2.0 * t),
            60.0 * (1.0 - 6.0 * t + 6.0 * t2)};
  }
  return {t2 * t2 * (35.0 - 84.0 * t + 70.0 * t2 - 20.0 * t3), 140.0 * t3 * u * u * u,
          420.0 * t2 * u * u * (1.0 - 2.0 * t), 840.0 * t * u * (1.0 - 5.0 * t + 5.0 * t2)};
}

MultiplierSpec multiplier_catalog(MultiplierKind kind, MultiplierParams p, double r0) {
  if (!(p.R > 0.0)) throw PreconditionError("multiplier radius R must be positive");
  if (!(p.delta > 0.0 && p.delta <= 1.0)) throw PreconditionError("multiplier delta must lie in (0, 1]");
  if (p.smooth_order != 5 && p.smooth_order != 7) throw PreconditionError("smooth_order must be 5 or 7");
  if (!(p.band > 0.0 && p.band < 1.0)) throw PreconditionError("band must lie in (0, 1)");
  if (kind == MultiplierKind::PsiQ && !p.n_inf) throw PreconditionError("psi_q needs n_inf");
  if (kind == MultiplierKind::PsiEikonal) {
    if (!p.phase) throw PreconditionError("psi_eikonal needs a phase function");
    if (p.R1 < r0) throw PreconditionError("psi_eikonal needs R1 >= r0");
  }
  return {kind, std::move(p)};
}

namespace {

double norm3(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

// Closed form for a radial field grad psi = g(r) x/r given g, g', g''.
void radial_psi(std::span<const double> x, double r, double g, double g1, double g2, MultiplierValues& out) {
  const int d = static_cast<int>(x.size());
  for (int i = 0; i < d; ++i) {
    const double wi = x[i] / r;
    out.grad_psi[i] = g * wi;
    for (int j = 0; j < d; ++j) {
      const double wj = x[j] / r;
      out.hess_psi[i][j] = (g1 - g / r) * wi * wj + (i == j ? g / r : 0.0);
    }
  }
  out.lap_psi = g1 + (d - 1) * g / r;
  const double dl = g2 + (d - 1) * (g1 / r - g / (r * r));
  for (int i = 0; i < d; ++i) out.grad_lap_psi[i] = dl * x[i] / r;
}

// Primitive G(k) = int_0^k (1 + s)^delta S(s - R1) ds.
double eikonal_primitive(double k, double delta, double R1, int order) {
  if (k <= R1) return 0.0;
  static const double xg[8] = {-0.9602898564975363, -0.7966664774136267, -0.5255324099163290, -0.1834346424956498,
                               0.1834346424956498,  0.5255324099163290,  0.7966664774136267,  0.9602898564975363};
  static const double wg[8] = {0.1012285362903763, 0.2223810344533745, 0.3137066458778873, 0.3626837833783620,
                               0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763};
  const double b = std::min(k, R1 + 1.0);
  double band = 0.0;
  for (int i = 0; i < 8; ++i) {
    const double s = R1 + 0.5 * (b - R1) * (xg[i] + 1.0);
    band += wg[i] * std::pow(1.0 + s, delta) * smoothstep_derivatives(order, s - R1)[0];
  }
  band *= 0.5 * (b - R1);
  if (k <= R1 + 1.0) return band;
  return band + (std::pow(1.0 + k, delta + 1.0) - std::pow(2.0 + R1, delta + 1.0)) / (delta + 1.0);
}

double psi_value(const MultiplierSpec& m, std::span<const double> x) {
  const auto& p = m.params;
  if (m.kind == MultiplierKind::PsiQ) {
    const double s = norm3(x) / p.R;
    return s * smoothstep_derivatives(p.smooth_order, s - 1.0)[0] * p.n_inf->eval(x);
  }
  std::array<double, 3> g{};
  const double K = p.phase(x, std::span<double>(g.data(), x.size()));
  return eikonal_primitive(K, p.delta, p.R1, p.smooth_order);
}

// Derivatives of psi by second-order central differences with steps eta and
// 2 eta, combined by Richardson extrapolation.
void finite_difference_psi(const MultiplierSpec& m, std::span<const double> x, MultiplierValues& out) {
  const int d = static_cast<int>(x.size());
  const double eta = 1e-2 * std::max(1.0, m.kind == MultiplierKind::PsiEikonal ? m.params.R1 : m.params.R);
  std::array<double, 3> y{};
  auto f = [&](const std::array<int, 3>& off, double e) {
    for (int k = 0; k < d; ++k) y[k] = x[k] + off[k] * e;
    return psi_value(m, std::span<const double>(y.data(), d));
  };
  auto unit = [](int a, int s) {
    std::array<int, 3> o{};
    o[a] = s;
    return o;
  };
  auto add = [](std::array<int, 3> a, const std::array<int, 3>& b) {
    for (int k = 0; k < 3; ++k) a[k] += b[k];
    return a;
  };
  const std::array<int, 3> zero{};
  for (int level = 0; level < 2; ++level) {
    const double e = level == 0 ? eta : 2.0 * eta;
    const double wgt = level == 0 ? 4.0 / 3.0 : -1.0 / 3.0;
    const double f0 = f(zero, e);
    std::array<double, 3> grad{}, third{};
    std::array<std::array<double, 3>, 3> hess{};
    for (int a = 0; a < d; ++a) {
      const double fp = f(unit(a, 1), e), fm = f(unit(a, -1), e);
      grad[a] = (fp - fm) / (2.0 * e);
      hess[a][a] = (fp - 2.0 * f0 + fm) / (e * e);
      for (int b = a + 1; b < d; ++b) {
        const double fpp = f(add(unit(a, 1), unit(b, 1)), e), fpm = f(add(unit(a, 1), unit(b, -1)), e);
        const double fmp = f(add(unit(a, -1), unit(b, 1)), e), fmm = f(add(unit(a, -1), unit(b, -1)), e);
        hess[a][b] = hess[b][a] = (fpp - fpm - fmp + fmm) / (4.0 * e * e);
      }
    }
    // d_a sum_j d_jj psi
    for (int a = 0; a < d; ++a) {
      double acc = (f(unit(a, 2), e) - 2.0 * f(unit(a, 1), e) + 2.0 * f(unit(a, -1), e) - f(unit(a, -2), e)) /
                   (2.0 * e * e * e);
      for (int j = 0; j < d; ++j) {
        if (j == a) continue;
        const auto pa = unit(a, 1), ma = unit(a, -1);
        const double sp = f(add(pa, unit(j, 1)), e) - 2.0 * f(pa, e) + f(add(pa, unit(j, -1)), e);
        const double sm = f(add(ma, unit(j, 1)), e) - 2.0 * f(ma, e) + f(add(ma, unit(j, -1)), e);
        acc += (sp - sm) / (2.0 * e * e * e);
      }
      third[a] = acc;
    }
    for (int a = 0; a < d; ++a) {
      out.grad_psi[a] += wgt * grad[a];
      out.grad_lap_psi[a] += wgt * third[a];
      for (int b = 0; b < d; ++b) out.hess_psi[a][b] += wgt * hess[a][b];
    }
  }
  out.lap_psi = 0.0;
  for (int a = 0; a < d; ++a) out.lap_psi += out.hess_psi[a][a];
}

}  // namespace

MultiplierValues evaluate_multiplier(const MultiplierSpec& m, std::span<const double> x) {
  MultiplierValues out;
  const auto& p = m.params;
  const double r = norm3(x);
  const int d = static_cast<int>(x.size());
  const double a = (1.0 - p.band) * p.R, w = 2.0 * p.band * p.R;
  switch (m.kind) {
    case MultiplierKind::PhiConst:
      out.phi = p.value;
      break;
    case MultiplierKind::PhiThetaOverR: {
      const auto s = smoothstep_derivatives(p.smooth_order, (r - a) / w);
      out.phi = (1.0 - s[0]) / (2.0 * p.R);
      if (r > 0.0)
        for (int k = 0; k < d; ++k) out.grad_phi[k] = -s[1] / w / (2.0 * p.R) * x[k] / r;
      break;
    }
    case MultiplierKind::PsiRadial: {
      if (r <= a) {
        for (int i = 0; i < d; ++i) {
          out.grad_psi[i] = x[i] / p.R;
          out.hess_psi[i][i] = 1.0 / p.R;
        }
        out.lap_psi = d / p.R;
        break;
      }
      const auto s = smoothstep_derivatives(p.smooth_order, (r - a) / w);
      const double sg = s[0], s1 = s[1] / w, s2 = s[2] / (w * w);
      const double g = (1.0 - sg) * r / p.R + sg;
      const double g1 = (1.0 - sg) / p.R + s1 * (1.0 - r / p.R);
      const double g2 = -2.0 * s1 / p.R + s2 * (1.0 - r / p.R);
      radial_psi(x, r, g, g1, g2, out);
      break;
    }
    case MultiplierKind::PsiQ:
    case MultiplierKind::PsiEikonal:
      finite_difference_psi(m, x, out);
      break;
  }
  return out;
}

namespace {

struct Context {
  const Grid& grid;
  HelmholtzOperator op;
  double dv;
  double norm_f = 0.0, norm_u = 0.0;
};

Context prepare(const WaveField& u, const WaveField& f, const Scenario& scenario, double tol) {
  if (!(u.grid == f.grid)) throw PreconditionError("u and f live on different grids");
  Context c{u.grid, HelmholtzOperator(u.grid, scenario), u.grid.cell_volume()};
  std::vector<cplx> au;
  c.op.apply(u.values, au);
  double res = 0.0;
  for (std::size_t i = 0; i < u.grid.size(); ++i) {
    if (!c.op.is_unknown(i)) continue;
    const double w = c.op.boundary_weight(i) * c.dv;
    res += std::norm(au[i] - f.values[i]) * w;
    c.norm_f += std::norm(f.values[i]) * w;
    c.norm_u += std::norm(u.values[i]) * w;
  }
  res = std::sqrt(res);
  c.norm_f = std::sqrt(c.norm_f);
  c.norm_u = std::sqrt(c.norm_u);
  if (res > tol * c.norm_f && res > 0.0) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "(u, f) inconsistent: ||A u - f|| = %.3e exceeds %.1e ||f||", res, tol);
    throw PreconditionError(buf);
  }
  return c;
}

// grad p_tilde by central differences of the expression.
std::array<double, 3> grad_p_tilde(const Scenario& s, std::span<const double> x) {
  std::array<double, 3> g{}, y{};
  const int d = static_cast<int>(x.size());
  const double h = default_fd_step(x);
  for (int k = 0; k < d; ++k) {
    for (int j = 0; j < d; ++j) y[j] = x[j];
    y[k] = x[k] + h;
    const double fp = s.p_tilde_at(std::span<const double>(y.data(), d));
    y[k] = x[k] - h;
    const double fm = s.p_tilde_at(std::span<const double>(y.data(), d));
    g[k] = (fp - fm) / (2.0 * h);
  }
  return g;
}

void finish(IdentityResidual& r, bool inequality) {
  r.lhs = 0.0;
  r.rhs = 0.0;
  for (const auto& [name, v] : r.terms) {
    if (name.rfind("rhs:", 0) == 0)
      r.rhs += v;
    else
      r.lhs += v;
  }
  const double denom = std::abs(r.lhs) + std::abs(r.rhs) + r.norm_f * r.norm_u;
  const double gap = inequality ? std::max(0.0, r.lhs - r.rhs) : std::abs(r.lhs - r.rhs);
  r.rel_residual = denom > 0.0 ? gap / denom : 0.0;
  r.slack = r.rhs - r.lhs;
}

}  // namespace

IdentityResidual identity_residual(const WaveField& u, const WaveField& f, const Scenario& scenario,
                                   const MultiplierSpec& m, IdentityKind which, const IdentityOptions& options) {
  const bool apriori = which == IdentityKind::AprioriA || which == IdentityKind::AprioriB;
  if (!apriori) {
    const bool wants_phi = which != IdentityKind::Symmetric;
    if (wants_phi != is_phi_kind(m.kind))
      throw PreconditionError("multiplier " + to_string(m.kind) + " does not fit identity " + to_string(which));
  }
  Context c = prepare(u, f, scenario, options.consistency_tol);
  const Grid& grid = c.grid;
  const int d = grid.dimension();
  const auto b_nodes = sample_potential(grid, scenario);
  const GradientField Du = magnetic_gradient(grid, b_nodes, u);
  const bool magnetic = scenario.has_magnetic_potential();
  const double lambda = scenario.lambda, eps = c.op.epsilon();

  IdentityResidual r;
  r.which = which;
  r.kind = m.kind;
  r.R = m.params.R;
  r.delta = m.params.delta;
  r.h = grid.spacing();
  r.norm_f = c.norm_f;
  r.norm_u = c.norm_u;

  std::vector<double> acc(10, 0.0);
  double single = 0.0;
  std::array<double, 3> x{};
  std::array<cplx, 3> D{};
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!c.op.is_unknown(i)) continue;
    const cplx ui = u.values[i], fi = f.values[i];
    for (int k = 0; k < d; ++k) D[k] = Du.components[k][i];
    if (ui == cplx{} && fi == cplx{} && D[0] == cplx{} && D[1] == cplx{} && D[2] == cplx{}) continue;
    const double w = c.op.boundary_weight(i) * c.dv;
    grid.coordinates(i, x);
    const std::span<const double> xv(x.data(), d);
    const double u2 = std::norm(ui);
    double du2 = 0.0;
    for (int k = 0; k < d; ++k) du2 += std::norm(D[k]);
    const double q = scenario.q_at(xv);

    switch (which) {
      case IdentityKind::Symmetric: {
        const MultiplierValues mv = evaluate_multiplier(m, xv);
        cplx hess{}, gl{}, gp{}, fgrad{}, mag{};
        for (int j = 0; j < d; ++j) {
          for (int k = 0; k < d; ++k) hess += D[j] * std::conj(D[k]) * mv.hess_psi[j][k];
          gl += mv.grad_lap_psi[j] * D[j];
          gp += mv.grad_psi[j] * D[j];
          fgrad += mv.grad_psi[j] * std::conj(D[j]);
        }
        if (magnetic) {
          const auto B = magnetic_field(scenario, xv);
          for (int j = 0; j < d; ++j)
            for (int k = 0; k < d; ++k) {
              const double Bv = options.literal_magnetic_order ? B.b_matrix[k][j] : B.b_matrix[j][k];
              mag += mv.grad_psi[k] * Bv * D[j];
            }
        }
        const auto gpt = grad_p_tilde(scenario, xv);
        double gpsi_gp = 0.0;
        for (int k = 0; k < d; ++k) gpsi_gp += gpt[k] * mv.grad_psi[k];
        const double t[9] = {
            hess.real() * w,
            0.5 * (gl * std::conj(ui)).real() * w,
            eps * (fgrad * ui).imag() * w,
            -(mag * std::conj(ui)).imag() * w,
            -0.5 * mv.lap_psi * q * u2 * w,
            -(q * gp * std::conj(ui)).real() * w,
            0.5 * lambda * gpsi_gp * u2 * w,
            -(fi * fgrad).real() * w,
            -0.5 * (fi * mv.lap_psi * std::conj(ui)).real() * w,
        };
        for (int k = 0; k < 9; ++k) acc[k] += t[k];
        single += (hess.real() + 0.5 * (gl * std::conj(ui)).real() + eps * (fgrad * ui).imag() -
                   (mag * std::conj(ui)).imag() - 0.5 * mv.lap_psi * q * u2 - (q * gp * std::conj(ui)).real() +
                   0.5 * lambda * gpsi_gp * u2) *
                  w;
        break;
      }
      case IdentityKind::RealPart:
      case IdentityKind::ImagPart: {
        const MultiplierValues mv = evaluate_multiplier(m, xv);
        cplx flux{};
        for (int k = 0; k < d; ++k) flux += mv.grad_phi[k] * D[k];
        flux *= std::conj(ui);
        const cplx source = mv.phi * fi * std::conj(ui);
        if (which == IdentityKind::RealPart) {
          const double coef = options.literal_coefficient ? lambda + scenario.p_tilde_at(xv) + q
                                                          : lambda * (1.0 + scenario.p_tilde_at(xv)) + q;
          const double t[4] = {mv.phi * coef * u2 * w, -mv.phi * du2 * w, -flux.real() * w, source.real() * w};
          for (int k = 0; k < 4; ++k) acc[k] += t[k];
          single += (mv.phi * coef * u2 - mv.phi * du2 - flux.real()) * w;
        } else {
          const double t[3] = {eps * mv.phi * u2 * w, -flux.imag() * w, source.imag() * w};
          for (int k = 0; k < 3; ++k) acc[k] += t[k];
          single += (eps * mv.phi * u2 - flux.imag()) * w;
        }
        break;
      }
      case IdentityKind::AprioriA: {
        acc[0] += eps * u2 * w;
        acc[1] += std::abs(fi) * std::abs(ui) * w;
        single += eps * u2 * w;
        break;
      }
      case IdentityKind::AprioriB: {
        const double coef = options.literal_coefficient ? lambda + scenario.p_tilde_at(xv) + q
                                                        : lambda * (1.0 + scenario.p_tilde_at(xv)) + q;
        acc[0] += du2 * w;
        acc[1] += coef * u2 * w;
        acc[2] += std::abs(fi) * std::abs(ui) * w;
        single += du2 * w;
        break;
      }
    }
  }

  auto& T = r.terms;
  switch (which) {
    case IdentityKind::Symmetric:
      T = {{"hessian", acc[0]},  {"grad_laplacian", acc[1]}, {"epsilon", acc[2]},
           {"magnetic", acc[3]}, {"q_laplacian", acc[4]},    {"q_gradient", acc[5]},
           {"p_tilde", acc[6]},  {"rhs:f_gradient", acc[7]}, {"rhs:f_laplacian", acc[8]}};
      break;
    case IdentityKind::RealPart:
      T = {{"potential", acc[0]}, {"gradient", acc[1]}, {"flux", acc[2]}, {"rhs:source", acc[3]}};
      break;
    case IdentityKind::ImagPart:
      T = {{"epsilon", acc[0]}, {"flux", acc[1]}, {"rhs:source", acc[2]}};
      break;
    case IdentityKind::AprioriA:
      T = {{"epsilon_mass", acc[0]}, {"rhs:source", acc[1]}};
      break;
    case IdentityKind::AprioriB:
      T = {{"gradient", acc[0]}, {"rhs:potential", acc[1]}, {"rhs:source", acc[2]}};
      break;
  }
  r.lhs_single_pass = single;
  finish(r, apriori);
  return r;
}

std::pair<IdentityResidual, IdentityResidual> apriori_check(const WaveField& u, const WaveField& f,
                                                            const Scenario& scenario, double tol,
                                                            const IdentityOptions& options) {
  const MultiplierSpec one{MultiplierKind::PhiConst, {}};
  auto a = identity_residual(u, f, scenario, one, IdentityKind::AprioriA, options);
  auto b = identity_residual(u, f, scenario, one, IdentityKind::AprioriB, options);
  for (auto* r : {&a, &b}) r->violated = -r->slack > 10.0 * tol * r->norm_f * r->norm_u;
  return {a, b};
}

std::pair<WaveField, WaveField> manufactured_pair(const Grid& grid, const Scenario& scenario,
                                                  const std::function<cplx(std::span<const double>)>& ustar) {
  WaveField u(grid);
  std::array<double, 3> x{};
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!grid.is_interior(i)) continue;
    grid.coordinates(i, x);
    u.values[i] = ustar(std::span<const double>(x.data(), grid.dimension()));
  }
  HelmholtzOperator op(grid, scenario);
  WaveField f = op.apply(u);
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (!op.is_unknown(i)) f.values[i] = 0.0;
  return {std::move(u), std::move(f)};
}

std::function<cplx(std::span<const double>)> default_packet(double half_width, double k) {
  const double s = half_width / 8.0;
  return [s, k](std::span<const double> x) {
    double r2 = 0.0;
    for (double v : x) r2 += v * v;
    return std::exp(-r2 / (2.0 * s * s)) * std::polar(1.0, k * x[0]) * cplx(1.0, 0.3 * x[1] / s);
  };
}

std::string identity_csv(const std::vector<IdentityResidual>& rows) {
  std::ostringstream o;
  o << "which,kind,R,delta,h,lhs,rhs,rel_residual\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", to_string(r.which).c_str(),
                  to_string(r.kind).c_str(), r.R, r.delta, r.h, r.lhs, r.rhs, r.rel_residual);
    o << buf;
  }
  return o.str();
}

}  // namespace hlab
