#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hlab/errors.hpp"
#include "hlab/grid.hpp"

namespace hlab {

struct SolveStats {
  int iterations = 0;
  double final_relative_residual = 0.0;
  double wall_time = 0.0;
  double epsilon = 0.0;
  /// Relative residual after each iteration (entry 0: initial guess).
  std::vector<double> residual_history;
};

/// Thrown when the Krylov iteration stops before reaching the tolerance.
class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& msg, WaveField best, SolveStats stats)
      : NumericalError(msg), best_(std::move(best)), stats_(std::move(stats)) {}
  const WaveField& best_iterate() const { return best_; }
  const SolveStats& stats() const { return stats_; }

 private:
  WaveField best_;
  SolveStats stats_;
};

/// Approximate inverse used for right preconditioning.
class Preconditioner {
 public:
  virtual ~Preconditioner() = default;
  virtual void apply(const std::vector<cplx>& in, std::vector<cplx>& out) const = 0;
  virtual std::string name() const = 0;
};

/// "identity", "jacobi", or "shifted-laplacian". The shifted Laplacian is
/// Delta_h + n_ref (1 + i shift) + i eps with n_ref the mean of n + Q over the
/// unknowns, inverted exactly by sine transforms (b is ignored).
std::unique_ptr<Preconditioner> make_preconditioner(const HelmholtzOperator& op, const std::string& kind,
                                                    double shift);

/// Solves op u = rhs. Boundary entries of rhs are ignored for Dirichlet
/// operators (the solution vanishes there). `initial` is the starting guess.
std::pair<WaveField, SolveStats> solve_linear(const HelmholtzOperator& op, const WaveField& rhs,
                                              const SolverSettings& settings,
                                              const WaveField* initial = nullptr);

/// Solves the scenario at its own epsilon with the sampled source.
std::pair<WaveField, SolveStats> solve_fixed_epsilon(const Grid& grid, const Scenario& scenario,
                                                     const SolverSettings& settings,
                                                     const WaveField* initial = nullptr);

struct SweepStep {
  double epsilon = 0.0;
  SolveStats stats;
  double mc_u = 0.0;     // |||u|||_1
  double mc_grad = 0.0;  // |||grad_b u|||_1
  double dual_f = 0.0;   // N_1(f)
  double rho = 0.0;
  /// |||u_k - u_{k-1}|||_1; NaN for the first step.
  double cauchy_gap = 0.0;
};

struct SweepReport {
  std::vector<SweepStep> steps;
  bool complete = true;
  std::string failure;
  /// Solution at the last successful epsilon.
  std::optional<WaveField> last;
};

/// eps_k = eps_start * factor^k, k < count, warm-started when requested.
/// A failing step ends the sweep; the partial report is returned with
/// complete = false.
SweepReport epsilon_sweep(const Grid& grid, const Scenario& scenario, const SolverSettings& settings);

/// CSV columns: epsilon,iterations,residual,rho,cauchy_gap.
std::string sweep_csv(const SweepReport& report);
std::string solve_stats_csv(const SolveStats& stats);

}  // namespace hlab
