#include "hlab/functionals.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "hlab/errors.hpp"

namespace hlab {

namespace {

// Largest j with 2^j <= r.
int dyadic_floor(double r) {
  int j = static_cast<int>(std::floor(std::log2(r)));
  while (std::ldexp(1.0, j + 1) <= r) ++j;
  while (std::ldexp(1.0, j) > r) --j;
  return j;
}

cplx centered(const Grid& g, const std::vector<cplx>& u, std::size_t i, int k) {
  const std::ptrdiff_t s = g.stride(k);
  return (u[i + s] - u[i - s]) * (0.5 / g.spacing());
}

// grad_b u at interior node i.
std::array<cplx, 3> node_gradient(const Grid& g, const Scenario& s, bool magnetic, const std::vector<cplx>& u,
                                   std::size_t i, const std::array<double, 3>& x) {
  std::array<cplx, 3> out{};
  const int d = g.dimension();
  for (int k = 0; k < d; ++k) out[k] = centered(g, u, i, k);
  if (magnetic) {
    const std::span<const double> view(x.data(), d);
    for (int k = 0; k < d; ++k) out[k] += cplx(0.0, s.b[k].eval(view)) * u[i];
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

}  // namespace

// --- norms ---------------------------------------------------------------------------

std::vector<double> squared_magnitude(const WaveField& f) {
  std::vector<double> out(f.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::norm(f.values[i]);
  return out;
}

std::vector<double> squared_magnitude(const GradientField& g) {
  std::vector<double> out(g.grid.size(), 0.0);
  for (const auto& c : g.components)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += std::norm(c[i]);
  return out;
}

double mc_norm(const Grid& grid, const std::vector<double>& density, double R0) {
  if (density.size() != grid.size()) throw PreconditionError("density length does not match the grid");
  if (R0 < 0.0) throw PreconditionError("R0 must be non-negative");
  std::vector<std::pair<double, double>> nodes;
  nodes.reserve(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) nodes.emplace_back(grid.radius(i), density[i]);
  std::sort(nodes.begin(), nodes.end());
  double best = 0.0;
  double acc = 0.0;
  bool r0_done = R0 == 0.0;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const double r = nodes[k].first;
    if (!r0_done && r > R0) {
      best = std::max(best, acc / R0);
      r0_done = true;
    }
    acc += nodes[k].second;
    const bool last_of_radius = k + 1 == nodes.size() || nodes[k + 1].first != r;
    if (last_of_radius && r > R0) best = std::max(best, acc / r);
  }
  if (!r0_done) best = std::max(best, acc / R0);
  return std::sqrt(best * grid.cell_volume());
}

double mc_norm(const WaveField& f, double R0) { return mc_norm(f.grid, squared_magnitude(f), R0); }
double mc_norm(const GradientField& g, double R0) { return mc_norm(g.grid, squared_magnitude(g), R0); }

double dual_norm(const Grid& grid, const std::vector<double>& density, double R0) {
  if (density.size() != grid.size()) throw PreconditionError("density length does not match the grid");
  if (R0 < 0.0) throw PreconditionError("R0 must be non-negative");
  std::map<int, double> shells;
  double inner = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double r = grid.radius(i);
    if (r <= R0) {
      inner += density[i];
      continue;
    }
    shells[dyadic_floor(r)] += density[i];
  }
  const double dv = grid.cell_volume();
  double total = std::sqrt(R0 * inner * dv);
  for (const auto& [j, mass] : shells) total += std::sqrt(std::ldexp(1.0, j + 1) * mass * dv);
  return total;
}

double dual_norm(const WaveField& f, double R0) { return dual_norm(f.grid, squared_magnitude(f), R0); }

// --- beta --------------------------------------------------------------------------

namespace {

// x . grad n at x (finite differences on whichever expression defines n).
double radial_derivative_of_n(const Scenario& s, std::span<const double> x) {
  const double h = default_fd_step(x);
  const int d = static_cast<int>(x.size());
  double acc = 0.0;
  for (int k = 0; k < d; ++k) {
    double dk = 0.0;
    if (s.n)
      dk = differentiate_field(*s.n, x, k, h);
    else if (s.p_tilde)
      dk = s.lambda * differentiate_field(*s.p_tilde, x, k, h);
    acc += x[k] * dk;
  }
  return acc;
}

}  // namespace

BetaProfile beta_indicator(const Scenario& s, const Grid& grid, int refine) {
  if (refine < 1) throw PreconditionError("refine must be >= 1");
  const int d = grid.dimension();
  const double L = grid.half_width();
  const double hs = grid.spacing() / refine;
  const int M = static_cast<int>(std::floor((2.0 * L + grid.spacing()) / hs));
  const bool magnetic = s.has_magnetic_potential();
  std::map<int, double> sup;
  BetaProfile out;
  std::array<int, 3> idx{};
  std::array<double, 3> x{};
  const std::span<const double> view(x.data(), d);
  std::size_t total = 1;
  for (int k = 0; k < d; ++k) total *= static_cast<std::size_t>(M);
  for (std::size_t q = 0; q < total; ++q) {
    std::size_t rest = q;
    double r2 = 0.0;
    for (int k = d - 1; k >= 0; --k) {
      idx[k] = static_cast<int>(rest % M);
      rest /= M;
      x[k] = -L + (idx[k] + 0.5) * hs;
      r2 += x[k] * x[k];
    }
    const double r = std::sqrt(r2);
    if (r < 0.5 * hs) continue;
    const double n = s.refraction(view);
    if (!(n > 0.0)) throw HypothesisViolation("index of refraction is not positive at a sample point");
    const double xn = radial_derivative_of_n(s, view);
    double btau2 = 0.0;
    if (magnetic) {
      const auto mf = magnetic_field(s, view);
      for (int k = 0; k < d; ++k) btau2 += mf.b_tau[k] * mf.b_tau[k];
    }
    const double neg = std::max(0.0, -xn);
    // r lies in {2^{j-1} <= |x| <= 2^j} for j = ceil(log2 r), and also j + 1
    // when r is an exact power of two.
    const int jf = dyadic_floor(r);
    const bool exact = std::ldexp(1.0, jf) == r;
    const int jlo = exact ? jf : jf + 1;
    const int jhi = jf + 1;
    for (int j = jlo; j <= jhi; ++j) {
      const double v = (neg + std::ldexp(1.0, 2 * j) * btau2) / n;
      auto it = sup.find(j);
      if (it == sup.end())
        sup.emplace(j, v);
      else
        it->second = std::max(it->second, v);
    }
    ++out.samples;
  }
  for (const auto& [j, v] : sup) {
    out.per_shell.emplace_back(j, v);
    out.beta += 2.0 * v;
  }
  return out;
}

// --- radiation and energy functionals -------------------------------------------

std::string to_string(Phase p) {
  switch (p) {
    case Phase::Eikonal: return "eikonal";
    case Phase::ExplicitN: return "explicit_n";
    case Phase::ExplicitNinf: return "explicit_ninf";
  }
  return "?";
}

Phase phase_from_string(const std::string& s) {
  if (s == "eikonal") return Phase::Eikonal;
  if (s == "explicit_n" || s == "explicit-n") return Phase::ExplicitN;
  if (s == "explicit_ninf" || s == "explicit-ninf") return Phase::ExplicitNinf;
  throw ConfigError("unknown phase '" + s + "'");
}

double radiation_functional(const WaveField& u, const Scenario& s, const RadiationOptions& opt) {
  const Grid& grid = u.grid;
  const int d = grid.dimension();
  if (opt.phase == Phase::Eikonal) {
    if (!opt.phase_function) throw PreconditionError("eikonal phase requires a phase function");
    if (opt.min_radius < std::max(1.0, s.r0))
      throw PreconditionError("eikonal radiation region must start at max(1, r0) or beyond");
  }
  if (opt.phase == Phase::ExplicitNinf && !s.n_inf) throw PreconditionError("explicit_ninf phase requires n_inf");
  const bool magnetic = s.has_magnetic_potential();
  const double sqrt_lambda = std::sqrt(s.lambda);
  std::array<double, 3> x{};
  std::array<double, 3> w{};
  std::array<double, 3> gradK{};
  const std::span<const double> view(x.data(), d);
  const std::span<const double> wview(w.data(), d);
  double acc = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid.boundary_mask(i)) continue;
    const double r = grid.coordinates(i, x);
    if (r < opt.min_radius) continue;
    if (opt.max_radius && r > *opt.max_radius) continue;
    const auto gb = node_gradient(grid, s, magnetic, u.values, i, x);
    std::array<double, 3> phase{};
    double weight = 1.0;
    switch (opt.phase) {
      case Phase::Eikonal: {
        opt.phase_function(view, std::span<double>(gradK.data(), d));
        for (int k = 0; k < d; ++k) phase[k] = sqrt_lambda * gradK[k];
        weight = std::pow(1.0 + r, opt.delta - 1.0);
        break;
      }
      case Phase::ExplicitN: {
        const double n = s.refraction(view);
        if (n < 0.0) throw HypothesisViolation("negative index of refraction in the radiation region");
        const double sn = std::sqrt(n);
        for (int k = 0; k < d; ++k) phase[k] = sn * x[k] / r;
        weight = 1.0 / r;
        break;
      }
      case Phase::ExplicitNinf: {
        for (int k = 0; k < d; ++k) w[k] = x[k] / r;
        const double ni = s.n_inf->eval(wview);
        if (ni < 0.0) throw HypothesisViolation("negative n_inf in the radiation region");
        const double sn = std::sqrt(ni);
        for (int k = 0; k < d; ++k) phase[k] = sn * w[k];
        weight = 1.0 / r;
        break;
      }
    }
    double m2 = 0.0;
    for (int k = 0; k < d; ++k) m2 += std::norm(gb[k] - cplx(0.0, phase[k]) * u.values[i]);
    acc += m2 * weight;
  }
  return acc * grid.cell_volume();
}

double tangential_energy(const WaveField& u, const Scenario& s) {
  const Grid& grid = u.grid;
  const int d = grid.dimension();
  const bool magnetic = s.has_magnetic_potential();
  std::array<double, 3> x{};
  double acc = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid.boundary_mask(i)) continue;
    const double r = grid.coordinates(i, x);
    const auto gb = node_gradient(grid, s, magnetic, u.values, i, x);
    cplx rad{};
    for (int k = 0; k < d; ++k) rad += x[k] / r * gb[k];
    double t2 = 0.0;
    for (int k = 0; k < d; ++k) t2 += std::norm(gb[k] - rad * (x[k] / r));
    acc += t2 / r;
  }
  return acc * grid.cell_volume();
}

double concentration_functional(const WaveField& u, const FieldExpr& n_inf, double R) {
  const Grid& grid = u.grid;
  const int d = grid.dimension();
  if (n_inf.uses_cartesian()) throw PreconditionError("n_inf must depend on x/|x| only");
  std::array<double, 3> x{};
  std::array<double, 3> y{};
  const std::span<const double> view(x.data(), d);
  const std::span<const double> yview(y.data(), d);
  double acc = 0.0;
  bool checked = false;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double r = grid.coordinates(i, x);
    if (r < R) continue;
    if (!checked) {
      // n_inf(x) = n_inf(2x) for a function of the direction only.
      for (int k = 0; k < d; ++k) y[k] = 2.0 * x[k];
      const double a = n_inf.eval(view), b = n_inf.eval(yview);
      if (std::abs(a - b) > 1e-10 * std::max(1.0, std::abs(a)))
        throw PreconditionError("n_inf depends on |x|");
      checked = true;
    }
    const double h = default_fd_step(view);
    std::array<double, 3> g{};
    double radial = 0.0;
    for (int k = 0; k < d; ++k) {
      g[k] = differentiate_field(n_inf, view, k, h);
      radial += g[k] * x[k] / r;
    }
    double perp2 = 0.0;
    for (int k = 0; k < d; ++k) {
      const double t = g[k] - radial * x[k] / r;
      perp2 += t * t;
    }
    acc += r * r * perp2 * std::norm(u.values[i]) / r;
  }
  return acc * grid.cell_volume();
}

std::vector<double> angular_profile(const WaveField& u, double r_lo, double r_hi, int bins) {
  if (bins < 1) throw PreconditionError("bins must be positive");
  const Grid& grid = u.grid;
  const int d = grid.dimension();
  std::vector<double> hist(bins, 0.0);
  std::array<double, 3> x{};
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double r = grid.coordinates(i, x);
    if (r < r_lo || r >= r_hi) continue;
    ++count;
    double t;
    if (d == 2)
      t = (std::atan2(x[1], x[0]) + M_PI) / (2.0 * M_PI);
    else
      t = 0.5 * (x[0] / r + 1.0);
    const int b = std::clamp(static_cast<int>(t * bins), 0, bins - 1);
    const double m = std::norm(u.values[i]);
    hist[b] += m;
    total += m;
  }
  if (count == 0 || total == 0.0) throw RangeError("angular profile shell holds no mass");
  for (auto& v : hist) v /= total;
  return hist;
}

double direction_mass_fraction(const WaveField& u, double r_lo, double r_hi,
                               const std::vector<std::array<double, 3>>& directions, double half_angle,
                               bool both_signs) {
  const Grid& grid = u.grid;
  const int d = grid.dimension();
  const double c = std::cos(half_angle);
  std::array<double, 3> x{};
  double total = 0.0, inside = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double r = grid.coordinates(i, x);
    if (r < r_lo || r >= r_hi) continue;
    const double m = std::norm(u.values[i]);
    total += m;
    for (const auto& e : directions) {
      double cosang = 0.0;
      for (int k = 0; k < d; ++k) cosang += e[k] * x[k] / r;
      if (both_signs) cosang = std::abs(cosang);
      if (cosang >= c) {
        inside += m;
        break;
      }
    }
  }
  if (total == 0.0) throw RangeError("direction mass shell holds no mass");
  return inside / total;
}

// --- hypotheses ---------------------------------------------------------------------

double two_dimensional_offset(const Scenario& s, const Grid& grid) {
  std::array<double, 3> x{};
  const std::span<const double> view(x.data(), grid.dimension());
  double n0 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid.coordinates(i, x) < 1.0) continue;
    n0 = std::min(n0, s.refraction(view));
  }
  if (!(n0 > 0.0) || !std::isfinite(n0)) throw HypothesisViolation("n is not bounded below by a positive constant");
  return 1.0 / std::sqrt(n0);
}

namespace {

// Node subset with at most ~`cap` samples.
std::vector<std::size_t> sample_nodes(const Grid& grid, std::size_t cap) {
  const int d = grid.dimension();
  int stride = 1;
  while (std::pow(static_cast<double>(grid.points()) / stride, d) > static_cast<double>(cap)) ++stride;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto idx = grid.index(i);
    bool keep = true;
    for (int k = 0; k < d; ++k) keep = keep && idx[k] % stride == 0;
    if (keep) out.push_back(i);
  }
  return out;
}

class PTilde {
 public:
  explicit PTilde(const Scenario& s) : s_(s) {}
  double operator()(std::array<double, 3> x, int d) const {
    return s_.p_tilde_at(std::span<const double>(x.data(), d));
  }

 private:
  const Scenario& s_;
};

}  // namespace

std::vector<FunctionalReport> hypothesis_report(const Scenario& s, const Grid& grid) {
  std::vector<FunctionalReport> out;
  const int d = grid.dimension();
  auto base = [&](const std::string& name) {
    FunctionalReport r;
    r.name = name;
    r.lambda = s.lambda;
    r.epsilon = s.epsilon;
    r.grid_points = grid.points();
    r.half_width = grid.half_width();
    return r;
  };

  {
    auto r = base("beta");
    const auto bp = beta_indicator(s, grid, 1);
    r.value = bp.beta;
    r.verdict = bp.beta < 1.0 ? "satisfied" : "violated";
    r.note = "grid-truncated annuli; a lower bound for singular fields";
    out.push_back(r);
  }

  const auto nodes = sample_nodes(grid, 60000);
  std::array<double, 3> x{};
  const std::span<const double> view(x.data(), d);

  {
    auto r = base("gamma_est");
    if (!s.n_inf) {
      r.verdict = "unknown";
      r.note = "n_inf not given";
    } else {
      double g = 0.0;
      for (auto i : nodes) {
        const double rad = grid.coordinates(i, x);
        if (rad < 1.0) continue;
        const double ni = s.n_inf->eval(view);
        g = std::max(g, rad * std::abs(s.refraction(view) - ni) / ni);
      }
      r.value = g;
    }
    out.push_back(r);
  }

  {
    // sup_{|x| >= r0} |x|^{|alpha|} |d^alpha p_tilde| for |alpha| = 0, 1, 2.
    const PTilde p(s);
    std::array<double, 3> c{0.0, 0.0, 0.0};
    for (auto i : nodes) {
      const double rad = grid.coordinates(i, x);
      if (rad < s.r0) continue;
      c[0] = std::max(c[0], std::abs(p(x, d)));
      const double h1 = 1e-5 * (1.0 + rad);
      const double h2 = 1e-3 * (1.0 + rad);
      for (int a = 0; a < d; ++a) {
        auto xp = x, xm = x;
        xp[a] += h1;
        xm[a] -= h1;
        c[1] = std::max(c[1], rad * std::abs((p(xp, d) - p(xm, d)) / (2.0 * h1)));
        for (int b = a; b < d; ++b) {
          auto pp = x, pm = x, mp = x, mm = x;
          pp[a] += h2;
          pp[b] += h2;
          pm[a] += h2;
          pm[b] -= h2;
          mp[a] -= h2;
          mp[b] += h2;
          mm[a] -= h2;
          mm[b] -= h2;
          const double dab = (p(pp, d) - p(pm, d) - p(mp, d) + p(mm, d)) / (4.0 * h2 * h2);
          c[2] = std::max(c[2], rad * rad * std::abs(dab));
        }
      }
    }
    for (int a = 0; a < 3; ++a) {
      auto r = base("cstar_est");
      r.value = c[a];
      r.r0 = s.r0;
      r.note = "|alpha| = " + std::to_string(a);
      out.push_back(r);
    }
  }

  {
    // Fit log sup_{shell} (max |B_jk| + |Q|) against log r over dyadic shells.
    std::map<int, double> sup;
    const bool magnetic = s.has_magnetic_potential();
    for (auto i : nodes) {
      const double rad = grid.coordinates(i, x);
      if (rad < 1.0) continue;
      double v = std::abs(s.q_at(view));
      if (magnetic) {
        const auto mf = magnetic_field(s, view);
        double bm = 0.0;
        for (int a = 0; a < d; ++a)
          for (int b = 0; b < d; ++b) bm = std::max(bm, std::abs(mf.b_matrix[a][b]));
        v += bm;
      }
      auto& slot = sup[dyadic_floor(rad)];
      slot = std::max(slot, v);
    }
    auto r = base("mu_decay");
    std::vector<std::pair<double, double>> pts;
    bool all_zero = true;
    for (const auto& [j, v] : sup) {
      if (v > 0.0) {
        all_zero = false;
        pts.emplace_back(std::log(std::ldexp(1.5, j)), std::log(v));
      }
    }
    if (all_zero) {
      r.value = 0.0;
      r.verdict = "satisfied";
      r.note = "B and Q vanish";
    } else if (pts.size() < 2) {
      r.verdict = "unknown";
      r.note = "too few shells for a decay fit";
    } else {
      double mx = 0.0, my = 0.0;
      for (auto [a, b] : pts) {
        mx += a;
        my += b;
      }
      mx /= pts.size();
      my /= pts.size();
      double sxy = 0.0, sxx = 0.0;
      for (auto [a, b] : pts) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
      }
      const double mu = -sxy / sxx - 1.0;
      r.value = mu;
      r.verdict = mu > 0.0 ? "satisfied" : "violated";
    }
    out.push_back(r);
  }

  {
    // c2 = sup |x|^{1+mu} |d_r p_tilde| with the scenario's mu.
    const PTilde p(s);
    double c2 = 0.0;
    for (auto i : nodes) {
      const double rad = grid.coordinates(i, x);
      if (rad < s.r0) continue;
      const double hr = 1e-5 * (1.0 + rad);
      auto xp = x, xm = x;
      for (int k = 0; k < d; ++k) {
        xp[k] += hr * x[k] / rad;
        xm[k] -= hr * x[k] / rad;
      }
      c2 = std::max(c2, std::pow(rad, 1.0 + s.mu) * std::abs((p(xp, d) - p(xm, d)) / (2.0 * hr)));
    }
    auto r = base("p1_c2");
    r.value = c2;
    r.note = "mu = " + fmt(s.mu);
    out.push_back(r);
  }
  return out;
}

std::string functional_csv(const std::vector<FunctionalReport>& rows) {
  std::ostringstream o;
  o << "name,value,delta,R,R0,phase,lambda,epsilon,N,L,verdict\n";
  for (const auto& r : rows) {
    o << r.name << ',' << fmt(r.value) << ',' << fmt(r.delta) << ',' << fmt(r.radius) << ',' << fmt(r.r0) << ','
      << r.phase << ',' << fmt(r.lambda) << ',' << fmt(r.epsilon) << ',' << r.grid_points << ','
      << fmt(r.half_width) << ',' << r.verdict << '\n';
  }
  return o.str();
}

}  // namespace hlab
