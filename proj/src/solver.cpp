#include "hlab/solver.hpp"

#include <fftw3.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "hlab/functionals.hpp"

namespace hlab {

namespace {

using Vec = std::vector<cplx>;

double norm2(const Vec& v) {
  double s = 0.0;
  for (const auto& z : v) s += std::norm(z);
  return std::sqrt(s);
}

// <a, b> = sum conj(a) b
cplx dot(const Vec& a, const Vec& b) {
  double re = 0.0, im = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double ar = a[i].real(), ai = a[i].imag(), br = b[i].real(), bi = b[i].imag();
    re += ar * br + ai * bi;
    im += ar * bi - ai * br;
  }
  return {re, im};
}

void axpy(cplx a, const Vec& x, Vec& y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

class IdentityPreconditioner final : public Preconditioner {
 public:
  void apply(const Vec& in, Vec& out) const override { out = in; }
  std::string name() const override { return "identity"; }
};

class JacobiPreconditioner final : public Preconditioner {
 public:
  explicit JacobiPreconditioner(const HelmholtzOperator& op) : inv_(op.diagonal()) {
    for (auto& z : inv_) z = std::abs(z) > 0.0 ? 1.0 / z : cplx(1.0, 0.0);
  }
  void apply(const Vec& in, Vec& out) const override {
    out.resize(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = inv_[i] * in[i];
  }
  std::string name() const override { return "jacobi"; }

 private:
  Vec inv_;
};

// Exact inverse of Delta_h + c on a box with zero values one cell outside,
// by type-I sine transforms along every axis.
class ShiftedLaplacian final : public Preconditioner {
 public:
  ShiftedLaplacian(const HelmholtzOperator& op, double shift) : grid_(op.grid()) {
    const int d = grid_.dimension();
    const int N = grid_.points();
    interior_only_ = op.boundary() == BoundaryCondition::Dirichlet;
    m_ = interior_only_ ? N - 2 : N;
    offset_ = interior_only_ ? 1 : 0;
    std::size_t count = 1;
    for (int k = 0; k < d; ++k) count *= static_cast<std::size_t>(m_);
    buffer_ = fftw_alloc_real(2 * count);
    count_ = count;

    double mean = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      if (!op.is_unknown(i)) continue;
      mean += op.coefficient()[i];
      ++used;
    }
    mean /= static_cast<double>(used);
    const cplx c(mean, mean * shift + op.epsilon());

    const double h = grid_.spacing();
    std::vector<double> eig(m_);
    for (int k = 0; k < m_; ++k) {
      const double s = std::sin(M_PI * (k + 1) / (2.0 * (m_ + 1)));
      eig[k] = -4.0 / (h * h) * s * s;
    }
    const double norm = std::pow(2.0 * (m_ + 1), d);
    inverse_.resize(count);
    for (std::size_t q = 0; q < count; ++q) {
      std::size_t rest = q;
      double lam = 0.0;
      for (int k = 0; k < d; ++k) {
        lam += eig[rest % m_];
        rest /= m_;
      }
      inverse_[q] = 1.0 / ((lam + c) * norm);
    }

    std::vector<int> dims(d, m_);
    std::vector<fftw_r2r_kind> kinds(d, FFTW_RODFT00);
    plan_ = fftw_plan_many_r2r(d, dims.data(), 2, buffer_, nullptr, 2, 1, buffer_, nullptr, 2, 1, kinds.data(),
                               FFTW_ESTIMATE);
    if (!plan_) throw NumericalError("could not build the sine transform plan");
  }

  ~ShiftedLaplacian() override {
    fftw_destroy_plan(plan_);
    fftw_free(buffer_);
  }
  ShiftedLaplacian(const ShiftedLaplacian&) = delete;
  ShiftedLaplacian& operator=(const ShiftedLaplacian&) = delete;

  void apply(const Vec& in, Vec& out) const override {
    out.resize(in.size());
    const int d = grid_.dimension();
    if (interior_only_)
      for (std::size_t i = 0; i < in.size(); ++i)
        if (grid_.boundary_mask(i)) out[i] = in[i];
    auto node_of = [&](std::size_t q) {
      std::array<int, 3> idx{};
      for (int k = d - 1; k >= 0; --k) {
        idx[k] = static_cast<int>(q % m_) + offset_;
        q /= m_;
      }
      return grid_.flat(idx);
    };
    for (std::size_t q = 0; q < count_; ++q) {
      const cplx z = in[node_of(q)];
      buffer_[2 * q] = z.real();
      buffer_[2 * q + 1] = z.imag();
    }
    fftw_execute(plan_);
    for (std::size_t q = 0; q < count_; ++q) {
      const cplx z = cplx(buffer_[2 * q], buffer_[2 * q + 1]) * inverse_[q];
      buffer_[2 * q] = z.real();
      buffer_[2 * q + 1] = z.imag();
    }
    fftw_execute(plan_);
    for (std::size_t q = 0; q < count_; ++q) out[node_of(q)] = cplx(buffer_[2 * q], buffer_[2 * q + 1]);
  }

  std::string name() const override { return "shifted-laplacian"; }

 private:
  Grid grid_;
  bool interior_only_ = true;
  int m_ = 0;
  int offset_ = 1;
  std::size_t count_ = 0;
  double* buffer_ = nullptr;
  fftw_plan plan_ = nullptr;
  Vec inverse_;
};

struct KrylovResult {
  Vec x;
  std::vector<double> history;
  int iterations = 0;
  bool converged = false;
};

KrylovResult gmres(const HelmholtzOperator& op, const Preconditioner& M, const Vec& b, Vec x, double tol,
                   int max_iter, int restart) {
  KrylovResult res;
  const std::size_t n = b.size();
  const double bnorm = norm2(b);
  Vec r(n), w(n), z(n);
  op.apply(x, r);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
  double beta = norm2(r);
  res.history.push_back(beta / bnorm);
  const int m = std::max(1, restart);
  std::vector<Vec> V(m + 1, Vec(n));
  std::vector<std::vector<cplx>> H(m + 1, std::vector<cplx>(m));
  std::vector<double> cs(m);
  std::vector<cplx> sn(m), g(m + 1);

  while (beta > tol * bnorm && res.iterations < max_iter) {
    for (std::size_t i = 0; i < n; ++i) V[0][i] = r[i] / beta;
    std::fill(g.begin(), g.end(), cplx{});
    g[0] = beta;
    int j = 0;
    for (; j < m && res.iterations < max_iter; ++j) {
      M.apply(V[j], z);
      op.apply(z, w);
      for (int i = 0; i <= j; ++i) {
        H[i][j] = dot(V[i], w);
        axpy(-H[i][j], V[i], w);
      }
      const double hn = norm2(w);
      H[j + 1][j] = hn;
      if (hn > 0.0)
        for (std::size_t i = 0; i < n; ++i) V[j + 1][i] = w[i] / hn;
      for (int i = 0; i < j; ++i) {
        const cplx t = cs[i] * H[i][j] + sn[i] * H[i + 1][j];
        H[i + 1][j] = -std::conj(sn[i]) * H[i][j] + cs[i] * H[i + 1][j];
        H[i][j] = t;
      }
      // Givens rotation annihilating H[j+1][j].
      const cplx a = H[j][j];
      const double bb = std::abs(H[j + 1][j]);
      const double rr = std::hypot(std::abs(a), bb);
      if (rr == 0.0) {
        cs[j] = 1.0;
        sn[j] = 0.0;
      } else if (std::abs(a) == 0.0) {
        cs[j] = 0.0;
        sn[j] = std::conj(H[j + 1][j]) / bb;
      } else {
        cs[j] = std::abs(a) / rr;
        sn[j] = (a / std::abs(a)) * std::conj(H[j + 1][j]) / rr;
      }
      H[j][j] = cs[j] * H[j][j] + sn[j] * H[j + 1][j];
      H[j + 1][j] = 0.0;
      g[j + 1] = -std::conj(sn[j]) * g[j];
      g[j] = cs[j] * g[j];
      ++res.iterations;
      res.history.push_back(std::abs(g[j + 1]) / bnorm);
      if (std::abs(g[j + 1]) <= tol * bnorm || hn == 0.0) {
        ++j;
        break;
      }
    }
    // Back substitution for y, then x += M^{-1} V y.
    std::vector<cplx> y(j);
    for (int i = j - 1; i >= 0; --i) {
      cplx s = g[i];
      for (int k = i + 1; k < j; ++k) s -= H[i][k] * y[k];
      y[i] = s / H[i][i];
    }
    std::fill(w.begin(), w.end(), cplx{});
    for (int i = 0; i < j; ++i) axpy(y[i], V[i], w);
    M.apply(w, z);
    for (std::size_t i = 0; i < n; ++i) x[i] += z[i];
    op.apply(x, r);
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
    beta = norm2(r);
    res.history.back() = beta / bnorm;
  }
  res.converged = beta <= tol * bnorm;
  res.x = std::move(x);
  return res;
}

KrylovResult bicgstab(const HelmholtzOperator& op, const Preconditioner& M, const Vec& b, Vec x, double tol,
                      int max_iter) {
  KrylovResult res;
  const std::size_t n = b.size();
  const double bnorm = norm2(b);
  Vec r(n), rhat, p(n), v(n), phat(n), s(n), shat(n), t(n);
  op.apply(x, r);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
  rhat = r;
  double rnorm = norm2(r);
  res.history.push_back(rnorm / bnorm);
  Vec best = x;
  double best_norm = rnorm;
  cplx rho = 1.0, alpha = 1.0, omega = 1.0;
  while (rnorm > tol * bnorm && res.iterations < max_iter) {
    const cplx rho_new = dot(rhat, r);
    if (std::abs(rho_new) == 0.0) break;
    const cplx beta = (rho_new / rho) * (alpha / omega);
    rho = rho_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * (p[i] - omega * v[i]);
    M.apply(p, phat);
    op.apply(phat, v);
    const cplx rv = dot(rhat, v);
    if (std::abs(rv) == 0.0) break;
    alpha = rho / rv;
    for (std::size_t i = 0; i < n; ++i) s[i] = r[i] - alpha * v[i];
    ++res.iterations;
    if (norm2(s) <= tol * bnorm) {
      axpy(alpha, phat, x);
      op.apply(x, r);
      for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
      rnorm = norm2(r);
      res.history.push_back(rnorm / bnorm);
      if (rnorm < best_norm) {
        best = x;
        best_norm = rnorm;
      }
      break;
    }
    M.apply(s, shat);
    op.apply(shat, t);
    const double tt = dot(t, t).real();
    omega = tt > 0.0 ? dot(t, s) / dot(t, t) : cplx{};
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * phat[i] + omega * shat[i];
      r[i] = s[i] - omega * t[i];
    }
    rnorm = norm2(r);
    res.history.push_back(rnorm / bnorm);
    if (rnorm < best_norm) {
      best = x;
      best_norm = rnorm;
    }
    if (std::abs(omega) == 0.0) break;
  }
  res.converged = best_norm <= tol * bnorm;
  res.x = std::move(best);
  return res;
}

}  // namespace

std::unique_ptr<Preconditioner> make_preconditioner(const HelmholtzOperator& op, const std::string& kind,
                                                    double shift) {
  if (kind == "identity" || kind == "none") return std::make_unique<IdentityPreconditioner>();
  if (kind == "jacobi" || kind == "diagonal") return std::make_unique<JacobiPreconditioner>(op);
  if (kind == "shifted-laplacian") return std::make_unique<ShiftedLaplacian>(op, shift);
  throw ConfigError("unknown preconditioner '" + kind + "'");
}

std::pair<WaveField, SolveStats> solve_linear(const HelmholtzOperator& op, const WaveField& rhs,
                                              const SolverSettings& settings, const WaveField* initial) {
  const auto t0 = std::chrono::steady_clock::now();
  if (!(op.epsilon() > 0.0)) throw PreconditionError("limiting absorption requires epsilon > 0");
  if (!(settings.tol > 1e-14 && settings.tol < 1e-2)) throw PreconditionError("tol must lie in (1e-14, 1e-2)");
  if (settings.max_iter < 1) throw PreconditionError("max_iter must be positive");
  const Grid& grid = op.grid();
  if (!(rhs.grid == grid)) throw PreconditionError("source lives on a different grid");

  Vec b = rhs.values;
  Vec x0(grid.size());
  if (initial) {
    if (!(initial->grid == grid)) throw PreconditionError("initial guess lives on a different grid");
    x0 = initial->values;
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!op.is_unknown(i)) {
      b[i] = 0.0;
      x0[i] = 0.0;
    }
  }

  SolveStats stats;
  stats.epsilon = op.epsilon();
  if (norm2(b) == 0.0) {
    stats.residual_history.push_back(0.0);
    stats.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {WaveField(grid), stats};
  }

  const auto M = make_preconditioner(op, settings.preconditioner, settings.shift);
  KrylovResult kr;
  if (settings.method == "gmres")
    kr = gmres(op, *M, b, std::move(x0), settings.tol, settings.max_iter, settings.restart);
  else if (settings.method == "bicgstab")
    kr = bicgstab(op, *M, b, std::move(x0), settings.tol, settings.max_iter);
  else
    throw ConfigError("unknown solver method '" + settings.method + "'");

  stats.iterations = kr.iterations;
  stats.residual_history = std::move(kr.history);
  {
    Vec r;
    op.apply(kr.x, r);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
    stats.final_relative_residual = norm2(r) / norm2(b);
  }
  stats.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  WaveField u(grid, std::move(kr.x));
  if (!(stats.final_relative_residual <= settings.tol)) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s did not converge: relative residual %.3e after %d iterations (tol %.1e)",
                  settings.method.c_str(), stats.final_relative_residual, stats.iterations, settings.tol);
    throw ConvergenceError(buf, std::move(u), std::move(stats));
  }
  return {std::move(u), std::move(stats)};
}

std::pair<WaveField, SolveStats> solve_fixed_epsilon(const Grid& grid, const Scenario& scenario,
                                                     const SolverSettings& settings, const WaveField* initial) {
  if (!(scenario.epsilon > 0.0)) throw PreconditionError("limiting absorption requires epsilon > 0");
  const HelmholtzOperator op(grid, scenario);
  return solve_linear(op, sample_source(grid, scenario), settings, initial);
}

SweepReport epsilon_sweep(const Grid& grid, const Scenario& scenario, const SolverSettings& settings) {
  if (settings.eps_count < 2) throw PreconditionError("a sweep needs at least two epsilon values");
  if (!(settings.eps_start > 0.0)) throw PreconditionError("eps_start must be positive");
  if (!(settings.eps_factor > 0.0 && settings.eps_factor < 1.0))
    throw PreconditionError("eps_factor must lie in (0, 1)");

  SweepReport report;
  Scenario s = scenario;
  s.epsilon = settings.eps_start;
  HelmholtzOperator op(grid, s);
  const WaveField f = sample_source(grid, s);
  const auto b_nodes = sample_potential(grid, s);
  const double dual_f = dual_norm(f, 1.0);

  std::optional<WaveField> prev;
  double eps = settings.eps_start;
  for (int k = 0; k < settings.eps_count; ++k, eps *= settings.eps_factor) {
    op.set_epsilon(eps);
    SweepStep step;
    step.epsilon = eps;
    try {
      const WaveField* guess = settings.warm_start && prev ? &*prev : nullptr;
      auto [u, stats] = solve_linear(op, f, settings, guess);
      step.stats = std::move(stats);
      step.mc_u = mc_norm(u, 1.0);
      step.mc_grad = mc_norm(magnetic_gradient(grid, b_nodes, u), 1.0);
      step.dual_f = dual_f;
      step.rho = dual_f > 0.0 ? (s.lambda * step.mc_u * step.mc_u + step.mc_grad * step.mc_grad) / (dual_f * dual_f)
                              : 0.0;
      if (prev) {
        WaveField diff(grid);
        for (std::size_t i = 0; i < grid.size(); ++i) diff.values[i] = u.values[i] - prev->values[i];
        step.cauchy_gap = mc_norm(diff, 1.0);
      } else {
        step.cauchy_gap = std::numeric_limits<double>::quiet_NaN();
      }
      report.steps.push_back(step);
      prev = std::move(u);
    } catch (const Error& e) {
      report.complete = false;
      char buf[64];
      std::snprintf(buf, sizeof buf, "epsilon %.6g: ", eps);
      report.failure = buf + std::string(e.what());
      break;
    }
  }
  report.last = std::move(prev);
  return report;
}

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string sweep_csv(const SweepReport& report) {
  std::ostringstream o;
  o << "epsilon,iterations,residual,rho,cauchy_gap\n";
  for (const auto& s : report.steps)
    o << fmt(s.epsilon) << ',' << s.stats.iterations << ',' << fmt(s.stats.final_relative_residual) << ','
      << fmt(s.rho) << ',' << fmt(s.cauchy_gap) << '\n';
  return o.str();
}

std::string solve_stats_csv(const SolveStats& stats) {
  std::ostringstream o;
  o << "epsilon,iterations,residual\n"
    << fmt(stats.epsilon) << ',' << stats.iterations << ',' << fmt(stats.final_relative_residual) << '\n';
  return o.str();
}

}  // namespace hlab
