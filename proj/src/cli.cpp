#include "hlab/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "hlab/eikonal.hpp"
#include "hlab/errors.hpp"
#include "hlab/functionals.hpp"
#include "hlab/grid.hpp"
#include "hlab/identities.hpp"
#include "hlab/scenario.hpp"
#include "hlab/solver.hpp"

#ifndef HLAB_VERSION
#define HLAB_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;

namespace hlab {

std::string version_string() { return HLAB_VERSION; }

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["tool"] = "hlab";
  j["version"] = version;
  j["subcommand"] = subcommand;
  j["config_hash"] = config_hash;
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
  for (const auto& [k, v] : parameters) params[k] = v;
  j["parameters"] = params;
  j["config_text"] = config_text;
  j["artifacts"] = artifacts;
  j["wall_time_seconds"] = wall_time;
  j["status"] = status;
  if (!error.empty()) j["error"] = error;
  j["exit_code"] = exit_code;
  return j.dump(2) + "\n";
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Options {
  std::string config, preset, out;
  int threads = 1;
  bool strict = false, dry_run = false, csv_field = false;
  std::uint64_t seed = 0;
  int dim = 3;
  double lambda = 0, epsilon = 0, half_width = 0, delta = 0;
  int points = 0;
  std::string boundary;
  double tol = 0, eps_start = 0, eps_factor = 0, shift = 0;
  int max_iter = 0, eps_count = 0, restart = 0;
  std::string method, precond;
  bool warm_start = true;
  std::string p_tilde, init;
  double r0 = 0, rmax = 0, rho = 0;
  int angles = 0, angles_theta = 0, angles_phi = 0;
  std::string phase, field;
  double min_radius = 0, max_radius = 0, radius = 0;
  int refine = 1, bins = 72;
  std::vector<int> levels;
  bool literal = false;
};

class Run {
 public:
  Run(CLI::App* sub, Options& o, std::ostream& out, std::ostream& err) : sub_(sub), o_(o), out_(out), err_(err) {}

  bool given(const std::string& flag) const {
    const CLI::Option* opt = sub_->get_option_no_throw(flag);
    return opt != nullptr && opt->count() > 0;
  }

  void load() {
    std::string text;
    if (!o_.config.empty()) {
      std::ifstream in(o_.config);
      if (!in) throw ConfigError("cannot read config file " + o_.config);
      std::stringstream ss;
      ss << in.rdbuf();
      text = ss.str();
    } else if (!o_.preset.empty()) {
      const auto names = preset_names();
      if (std::find(names.begin(), names.end(), o_.preset) == names.end())
        throw ConfigError("unknown preset '" + o_.preset + "'");
      text = preset_text(o_.preset, o_.dim,
                         given("--lambda") ? std::optional<double>(o_.lambda) : std::optional<double>());
    } else {
      throw ConfigError("one of --config or --preset is required");
    }
    cfg_ = parse_config(text);
    apply_overrides();
    validate_config(cfg_);
    std::string canonical = cfg_.text.empty() ? text : cfg_.text;
    canonical += "\n# overrides\n";
    for (const auto& [k, v] : overrides_) canonical += k + " = " + v + "\n";
    manifest_.config_text = canonical;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical)));
    manifest_.config_hash = std::string("fnv1a64:") + buf;
  }

  void prepare_output() {
    std::string dir = o_.out;
    if (dir.empty()) {
      const char* env = std::getenv("HLAB_OUT");
      dir = env && *env ? env : "hlab_out";
    }
    out_dir_ = dir;
    std::error_code ec;
    fs::create_directories(out_dir_, ec);
    if (ec) throw ConfigError("cannot create output directory " + dir + ": " + ec.message());
  }

  void artifact(const std::string& name, const std::string& content) {
    std::ofstream f(out_dir_ / name, std::ios::binary);
    if (!f) throw Error("cannot write " + (out_dir_ / name).string());
    f << content;
    manifest_.artifacts.push_back(name);
  }

  void wavefield(const std::string& name, const WaveField& u) {
    write_wavefield(u, (out_dir_ / name).string());
    manifest_.artifacts.push_back(name);
  }

  void finish_manifest(int code, const std::string& error, double wall) {
    if (out_dir_.empty()) return;
    manifest_.subcommand = sub_->get_name();
    manifest_.version = version_string();
    manifest_.wall_time = wall;
    manifest_.exit_code = code;
    manifest_.status = code == 0 ? "ok" : "failed";
    manifest_.error = error;
    manifest_.parameters = {{"threads", std::to_string(o_.threads)},
                            {"seed", std::to_string(o_.seed)},
                            {"strict", o_.strict ? "true" : "false"},
                            {"dry_run", o_.dry_run ? "true" : "false"}};
    for (const auto& kv : overrides_) manifest_.parameters.push_back(kv);
    std::ofstream f(out_dir_ / "manifest.json");
    f << manifest_.to_json();
  }

  int execute() {
    const std::string name = sub_->get_name();
    if (o_.dry_run) {
      out_ << "config ok (" << manifest_.config_hash << ")\n";
      return kExitOk;
    }
    if (name == "solve") return solve();
    if (name == "sweep") return sweep();
    if (name == "eikonal") return eikonal();
    if (name == "norms") return norms();
    if (name == "radiation") return radiation();
    if (name == "concentration") return concentration();
    if (name == "verify-identities") return verify_identities();
    if (name == "check-hypotheses") return check_hypotheses();
    throw ConfigError("unknown subcommand " + name);
  }

  bool strict() const { return o_.strict; }

 private:
  template <class T>
  void override_value(const std::string& flag, T& target, const T& value) {
    if (!given(flag)) return;
    target = value;
    std::ostringstream s;
    if constexpr (std::is_same_v<T, double>)
      s << fmt(value);
    else
      s << value;
    overrides_.emplace_back(flag.substr(2), s.str());
  }

  void apply_overrides() {
    Scenario& s = cfg_.scenario;
    SolverSettings& v = cfg_.solver;
    EikonalSettings& e = cfg_.eikonal;
    if (!o_.config.empty()) override_value("--lambda", s.lambda, o_.lambda);
    override_value("--epsilon", s.epsilon, o_.epsilon);
    override_value("--half-width", s.half_width, o_.half_width);
    override_value("--points", s.points, o_.points);
    override_value("--delta", s.delta, o_.delta);
    if (given("--boundary")) {
      s.boundary = boundary_from_string(o_.boundary);
      overrides_.emplace_back("boundary", o_.boundary);
    }
    override_value("--tol", v.tol, o_.tol);
    override_value("--max-iter", v.max_iter, o_.max_iter);
    override_value("--restart", v.restart, o_.restart);
    override_value("--method", v.method, o_.method);
    override_value("--preconditioner", v.preconditioner, o_.precond);
    override_value("--shift", v.shift, o_.shift);
    override_value("--eps-start", v.eps_start, o_.eps_start);
    override_value("--eps-factor", v.eps_factor, o_.eps_factor);
    override_value("--eps-count", v.eps_count, o_.eps_count);
    if (given("--warm-start") || given("--no-warm-start")) {
      v.warm_start = o_.warm_start;
      overrides_.emplace_back("warm_start", o_.warm_start ? "true" : "false");
    }
    if (given("--p-tilde")) {
      e.p_tilde = FieldExpr::parse(o_.p_tilde);
      overrides_.emplace_back("p_tilde", o_.p_tilde);
    }
    override_value("--r0", s.r0, o_.r0);
    override_value("--rmax", e.r_max, o_.rmax);
    override_value("--rho", e.rho, o_.rho);
    override_value("--angles", e.angles, o_.angles);
    override_value("--angles-theta", e.angles_theta, o_.angles_theta);
    override_value("--angles-phi", e.angles_phi, o_.angles_phi);
    override_value("--init", e.init, o_.init);
    for (const char* f : {"--phase", "--field", "--min-radius", "--max-radius", "--radius", "--refine", "--bins"}) {
      if (!given(f)) continue;
      overrides_.emplace_back(std::string(f).substr(2), sub_->get_option(f)->as<std::string>());
    }
    if (given("--levels")) {
      std::string l;
      for (int n : o_.levels) l += (l.empty() ? "" : ",") + std::to_string(n);
      overrides_.emplace_back("levels", l);
    }
    if (o_.literal) overrides_.emplace_back("literal", "true");
  }

  const Scenario& sc() const { return cfg_.scenario; }

  void damping_warning() const {
    const double reach = sc().epsilon * sc().half_width / (2.0 * std::sqrt(sc().lambda));
    if (reach < 3.0 && sc().boundary == BoundaryCondition::Dirichlet)
      err_ << "warning: eps L / (2 sqrt(lambda)) = " << reach
           << " < 3; reflections from the box boundary may be significant\n";
  }

  WaveField obtain_solution(const Grid& grid) {
    if (!o_.field.empty()) {
      WaveField u = read_wavefield(o_.field);
      if (!(u.grid == grid)) throw ConfigError("field file grid does not match the scenario grid");
      return u;
    }
    damping_warning();
    auto [u, stats] = solve_fixed_epsilon(grid, sc(), cfg_.solver);
    artifact("solve_stats.csv", solve_stats_csv(stats));
    return std::move(u);
  }

  FunctionalReport report(const std::string& name, double value) const {
    FunctionalReport r;
    r.name = name;
    r.value = value;
    r.lambda = sc().lambda;
    r.epsilon = sc().epsilon;
    r.grid_points = sc().points;
    r.half_width = sc().half_width;
    return r;
  }

  FieldExpr eikonal_p_tilde() const {
    if (cfg_.eikonal.p_tilde) return *cfg_.eikonal.p_tilde;
    if (sc().p_tilde) return *sc().p_tilde;
    if (sc().n) return FieldExpr::parse("(" + sc().n->to_string() + ")/" + fmt(sc().lambda) + " - 1");
    return FieldExpr::constant(0.0);
  }

  AngularGrid angular_grid() const {
    const auto& e = cfg_.eikonal;
    return sc().dimension == 2 ? AngularGrid::circle(e.angles) : AngularGrid::sphere(e.angles_theta, e.angles_phi);
  }

  EikonalSolution march(double r_max) const {
    const auto p = eikonal_p_tilde();
    const auto& e = cfg_.eikonal;
    return march_g(p, angular_grid(), sc().r0, r_max, e.rho, make_init(e.init, p, sc().r0, sc().lambda), e.margin);
  }

  void slice_plot(const WaveField& u) {
    const Grid& g = u.grid;
    std::ostringstream o;
    o << "# x1 x2 re im abs\n";
    const int mid = g.points() / 2;
    std::array<double, 3> x{};
    for (int i = 0; i < g.points(); ++i) {
      for (int j = 0; j < g.points(); ++j) {
        const std::size_t k = g.flat({i, j, g.dimension() == 3 ? mid : 0});
        g.coordinates(k, x);
        const cplx v = u.values[k];
        o << fmt(x[0]) << ' ' << fmt(x[1]) << ' ' << fmt(v.real()) << ' ' << fmt(v.imag()) << ' ' << fmt(std::abs(v))
          << '\n';
      }
      o << '\n';
    }
    artifact("u_slice.dat", o.str());
  }

  int solve() {
    const Grid grid = grid_for(sc());
    damping_warning();
    auto [u, stats] = solve_fixed_epsilon(grid, sc(), cfg_.solver);
    wavefield("u.bin", u);
    artifact("solve_stats.csv", solve_stats_csv(stats));
    if (o_.csv_field) {
      std::ostringstream o;
      write_wavefield_csv(u, o);
      artifact("u.csv", o.str());
    }
    slice_plot(u);
    const WaveField f = sample_source(grid, sc());
    IdentityOptions io;
    io.consistency_tol = std::max(10.0 * cfg_.solver.tol, 1e-12);
    auto [a, b] = apriori_check(u, f, sc(), cfg_.solver.tol, io);
    artifact("apriori.csv", identity_csv({a, b}));
    out_ << "solved: " << stats.iterations << " iterations, relative residual " << stats.final_relative_residual
         << "\n";
    if ((a.violated || b.violated) && o_.strict) {
      err_ << "a-priori inequality violated\n";
      return kExitHypothesis;
    }
    return kExitOk;
  }

  int sweep() {
    const Grid grid = grid_for(sc());
    const SweepReport rep = epsilon_sweep(grid, sc(), cfg_.solver);
    artifact("sweep.csv", sweep_csv(rep));
    if (rep.last) wavefield("u_last.bin", *rep.last);
    if (!rep.complete) {
      err_ << "sweep stopped early: " << rep.failure << "\n";
      return kExitNumerical;
    }
    out_ << "sweep: " << rep.steps.size() << " epsilon values\n";
    return kExitOk;
  }

  int eikonal() {
    const auto p = eikonal_p_tilde();
    const EikonalSolution sol = march(cfg_.eikonal.r_max);
    artifact("eikonal.csv", eikonal_csv(sol));
    const auto shells = eikonal_residual_shells(sol, p);
    std::ostringstream res;
    res << "r_lo,r_hi,residual\n";
    double worst = 0.0;
    for (std::size_t m = 0; m < shells.size(); ++m) {
      res << fmt(sol.radii()[m]) << ',' << fmt(sol.radii()[m + 1]) << ',' << fmt(shells[m]) << '\n';
      worst = std::max(worst, shells[m]);
    }
    artifact("eikonal_residual.csv", res.str());

    const auto reg = regularity(sol);
    std::ostringstream sum;
    sum << "name,value\n";
    sum << "residual_max," << fmt(worst) << '\n';
    sum << "shells," << sol.shells() << '\n';
    sum << "c0," << fmt(sol.c0()) << '\n';
    sum << "c1," << fmt(sol.c1()) << '\n';
    sum << "min_radial_derivative," << fmt(sol.min_radial_derivative()) << '\n';
    sum << "sup_g_minus_one," << fmt(reg.sup_g_minus_one) << '\n';
    sum << "sup_first," << fmt(reg.sup_first) << '\n';
    sum << "sup_second," << fmt(reg.sup_second) << '\n';
    if (sol.shells() >= 5) sum << "curvature_sup," << fmt(curvature_sup(sol, 20, 0.0, sol.radii().back())) << '\n';
    if (sc().n_inf) {
      try {
        sum << "g_infinity_residual," << fmt(g_infinity_check(sol, *sc().n_inf, sc().lambda)) << '\n';
      } catch (const RangeError& e) {
        err_ << "note: " << e.what() << "\n";
      }
    }
    artifact("eikonal_summary.csv", sum.str());

    std::ostringstream plot;
    plot << "# direction_index w1 w2 w3 g_outer\n";
    const int last = sol.shells() - 1;
    for (int a = 0; a < sol.angles().size(); ++a) {
      const auto w = sol.angles().direction(a);
      plot << a << ' ' << fmt(w[0]) << ' ' << fmt(w[1]) << ' ' << fmt(w[2]) << ' ' << fmt(sol.g(last)[a]) << '\n';
    }
    artifact("eikonal_outer.dat", plot.str());
    out_ << "eikonal: " << sol.shells() << " shells, max residual " << worst << "\n";
    return kExitOk;
  }

  double norm_offset(const Grid& grid) const {
    if (sc().dimension == 2) return std::max(sc().big_r0, two_dimensional_offset(sc(), grid));
    return sc().big_r0;
  }

  int norms() {
    const Grid grid = grid_for(sc());
    const WaveField u = obtain_solution(grid);
    const WaveField f = sample_source(grid, sc());
    const double R0 = norm_offset(grid);
    const GradientField g = magnetic_gradient(grid, sc(), u);
    std::vector<FunctionalReport> rows;
    auto add = [&](const std::string& name, double v) {
      auto r = report(name, v);
      r.r0 = R0;
      rows.push_back(r);
    };
    const double mu = mc_norm(u, R0), mg = mc_norm(g, R0), nf = dual_norm(f, R0);
    add("mc_norm_u", mu);
    add("mc_norm_grad_b_u", mg);
    add("dual_norm_f", nf);
    add("uniform_ratio", nf > 0.0 ? (sc().lambda * mu * mu + mg * mg) / (nf * nf) : 0.0);
    const auto beta = beta_indicator(sc(), grid, o_.refine);
    auto rb = report("beta", beta.beta);
    rb.verdict = beta.beta < 1.0 ? "satisfied" : "violated";
    rows.push_back(rb);
    artifact("functionals.csv", functional_csv(rows));
    std::ostringstream plot;
    plot << "# j beta_shell\n";
    for (const auto& [j, v] : beta.per_shell) plot << j << ' ' << fmt(v) << '\n';
    artifact("beta_shells.dat", plot.str());
    out_ << "norms: |||u||| = " << mu << ", N(f) = " << nf << "\n";
    if (o_.strict && beta.beta >= 1.0) return kExitHypothesis;
    return kExitOk;
  }

  int radiation() {
    const Grid grid = grid_for(sc());
    const WaveField u = obtain_solution(grid);
    RadiationOptions ro;
    ro.phase = given("--phase") ? phase_from_string(o_.phase)
                                : (sc().n_inf ? Phase::ExplicitNinf : Phase::ExplicitN);
    ro.delta = sc().delta;
    ro.min_radius = given("--min-radius") ? o_.min_radius : std::max(1.0, sc().r0);
    if (given("--max-radius")) ro.max_radius = o_.max_radius;
    std::optional<EikonalSolution> sol;
    if (ro.phase == Phase::Eikonal) {
      const double reach = std::sqrt(static_cast<double>(sc().dimension)) * sc().half_width * 1.01;
      sol.emplace(march(std::max(cfg_.eikonal.r_max, reach)));
      ro.phase_function = sol->phase_function();
    }
    std::vector<FunctionalReport> rows;
    auto r = report("radiation", radiation_functional(u, sc(), ro));
    r.phase = to_string(ro.phase);
    r.delta = ro.delta;
    r.radius = ro.min_radius;
    rows.push_back(r);
    rows.push_back(report("tangential_energy", tangential_energy(u, sc())));
    artifact("functionals.csv", functional_csv(rows));
    out_ << "radiation (" << r.phase << "): " << r.value << "\n";
    return kExitOk;
  }

  std::vector<std::array<double, 3>> critical_directions(const FieldExpr& n_inf) const {
    std::vector<std::array<double, 3>> dirs;
    auto value = [&](const std::array<double, 3>& w) {
      return n_inf.eval(std::span<const double>(w.data(), sc().dimension));
    };
    if (sc().dimension == 2) {
      const int M = 3600;
      std::vector<double> v(M);
      for (int i = 0; i < M; ++i) {
        const double t = 2.0 * M_PI * i / M;
        v[i] = value({std::cos(t), std::sin(t), 0.0});
      }
      for (int i = 0; i < M; ++i) {
        const double a = v[(i + M - 1) % M], b = v[i], c = v[(i + 1) % M];
        if ((b > a && b >= c) || (b < a && b <= c)) {
          const double t = 2.0 * M_PI * i / M;
          dirs.push_back({std::cos(t), std::sin(t), 0.0});
        }
      }
      return dirs;
    }
    const int mt = 90, mp = 180;
    std::vector<double> v(mt * mp);
    auto dir = [&](int i, int j) {
      const double t = (i + 0.5) * M_PI / mt, p = 2.0 * M_PI * j / mp;
      return std::array<double, 3>{std::sin(t) * std::cos(p), std::sin(t) * std::sin(p), std::cos(t)};
    };
    for (int i = 0; i < mt; ++i)
      for (int j = 0; j < mp; ++j) v[i * mp + j] = value(dir(i, j));
    for (int i = 0; i < mt; ++i) {
      for (int j = 0; j < mp; ++j) {
        bool is_max = true, is_min = true;
        for (int di = -1; di <= 1; ++di)
          for (int dj = -1; dj <= 1; ++dj) {
            if (!di && !dj) continue;
            const int ii = i + di;
            if (ii < 0 || ii >= mt) continue;
            const double nb = v[ii * mp + (j + dj + mp) % mp];
            if (nb >= v[i * mp + j]) is_max = false;
            if (nb <= v[i * mp + j]) is_min = false;
          }
        if (is_max || is_min) dirs.push_back(dir(i, j));
      }
    }
    return dirs;
  }

  int concentration() {
    if (!sc().n_inf) throw ConfigError("concentration needs n_inf in [fields]");
    const Grid grid = grid_for(sc());
    const WaveField u = obtain_solution(grid);
    const double L = sc().half_width;
    const double R = given("--radius") ? o_.radius : L / 4.0;
    const double conc = concentration_functional(u, *sc().n_inf, R);
    WaveField fs_(grid);
    const WaveField f = sample_source(grid, sc());
    std::array<double, 3> x{};
    for (std::size_t i = 0; i < grid.size(); ++i) {
      grid.coordinates(i, x);
      const double ni = sc().refraction(std::span<const double>(x.data(), sc().dimension));
      fs_.values[i] = ni > 0.0 ? f.values[i] / std::sqrt(ni) : cplx{};
    }
    const double nf = dual_norm(fs_, 0.0);
    std::vector<FunctionalReport> rows;
    auto r = report("concentration", conc);
    r.radius = R;
    rows.push_back(r);
    auto rr = report("concentration_ratio", nf > 0.0 ? conc / (nf * nf) : 0.0);
    rr.radius = R;
    rows.push_back(rr);
    const auto dirs = critical_directions(*sc().n_inf);
    const double half = 20.0 * M_PI / 180.0;
    if (!dirs.empty()) {
      rows.push_back(report("mass_fraction_inner", direction_mass_fraction(u, L / 8.0, L / 4.0, dirs, half, false)));
      rows.push_back(report("mass_fraction_outer", direction_mass_fraction(u, L / 4.0, L / 2.0, dirs, half, false)));
    }
    artifact("functionals.csv", functional_csv(rows));
    const auto inner = angular_profile(u, L / 8.0, L / 4.0, o_.bins);
    const auto outer = angular_profile(u, L / 4.0, L / 2.0, o_.bins);
    std::ostringstream plot;
    plot << "# bin_center mass_inner mass_outer\n";
    for (int b = 0; b < o_.bins; ++b) {
      const double c = sc().dimension == 2 ? -M_PI + (b + 0.5) * 2.0 * M_PI / o_.bins : -1.0 + (b + 0.5) * 2.0 / o_.bins;
      plot << fmt(c) << ' ' << fmt(inner[b]) << ' ' << fmt(outer[b]) << '\n';
    }
    artifact("angular_profile.dat", plot.str());
    out_ << "concentration: " << conc << "\n";
    return kExitOk;
  }

  int verify_identities() {
    const int d = sc().dimension;
    std::vector<int> levels = o_.levels;
    if (levels.empty()) levels = d == 2 ? std::vector<int>{65, 129, 257} : std::vector<int>{17, 33, 65};
    const double L = sc().half_width;
    std::vector<std::pair<MultiplierSpec, IdentityKind>> catalog;
    MultiplierParams one;
    catalog.emplace_back(multiplier_catalog(MultiplierKind::PhiConst, one, sc().r0), IdentityKind::ImagPart);
    catalog.emplace_back(multiplier_catalog(MultiplierKind::PhiConst, one, sc().r0), IdentityKind::RealPart);
    MultiplierParams mid;
    mid.R = L / 4.0;
    mid.delta = sc().delta;
    catalog.emplace_back(multiplier_catalog(MultiplierKind::PhiThetaOverR, mid, sc().r0), IdentityKind::ImagPart);
    catalog.emplace_back(multiplier_catalog(MultiplierKind::PhiThetaOverR, mid, sc().r0), IdentityKind::RealPart);
    catalog.emplace_back(multiplier_catalog(MultiplierKind::PsiRadial, mid, sc().r0), IdentityKind::Symmetric);
    if (sc().n_inf) {
      MultiplierParams q = mid;
      q.R = L / 8.0;
      q.n_inf = sc().n_inf;
      catalog.emplace_back(multiplier_catalog(MultiplierKind::PsiQ, q, sc().r0), IdentityKind::Symmetric);
    }
    MultiplierParams ek = mid;
    ek.R1 = std::max(sc().r0, L / 8.0);
    ek.phase = [](std::span<const double> x, std::span<double> grad) {
      double r2 = 0.0;
      for (double v : x) r2 += v * v;
      const double r = std::sqrt(r2);
      for (std::size_t k = 0; k < x.size(); ++k) grad[k] = x[k] / r;
      return r;
    };
    catalog.emplace_back(multiplier_catalog(MultiplierKind::PsiEikonal, ek, sc().r0), IdentityKind::Symmetric);

    IdentityOptions io;
    io.literal_coefficient = o_.literal;
    io.literal_magnetic_order = o_.literal;
    std::vector<IdentityResidual> rows;
    std::vector<std::vector<double>> per_case(catalog.size() + 2);
    bool violated = false;
    for (int N : levels) {
      const Grid grid(d, L, N);
      auto [u, f] = manufactured_pair(grid, sc(), default_packet(L, std::sqrt(sc().lambda)));
      for (std::size_t c = 0; c < catalog.size(); ++c) {
        auto r = identity_residual(u, f, sc(), catalog[c].first, catalog[c].second, io);
        per_case[c].push_back(r.rel_residual);
        double sum = 0.0, scale = 0.0;
        for (const auto& [nm, v] : r.terms)
          if (nm.rfind("rhs:", 0) != 0) {
            sum += v;
            scale += std::abs(v);
          }
        if (std::abs(sum - r.lhs_single_pass) > 1e-13 * std::max(scale, 1e-300))
          err_ << "warning: term accounting mismatch for " << to_string(r.which) << "\n";
        rows.push_back(std::move(r));
      }
      auto [a, b] = apriori_check(u, f, sc(), cfg_.solver.tol, io);
      per_case[catalog.size()].push_back(a.rel_residual);
      per_case[catalog.size() + 1].push_back(b.rel_residual);
      violated = violated || a.violated || b.violated;
      rows.push_back(a);
      rows.push_back(b);
    }
    artifact("identities.csv", identity_csv(rows));
    std::ostringstream ord;
    ord << "which,kind";
    for (std::size_t k = 1; k < levels.size(); ++k) ord << ",order_" << levels[k - 1] << '_' << levels[k];
    ord << '\n';
    for (std::size_t c = 0; c < catalog.size(); ++c) {
      ord << to_string(catalog[c].second) << ',' << to_string(catalog[c].first.kind);
      for (std::size_t k = 1; k < levels.size(); ++k) {
        const double a = per_case[c][k - 1], b = per_case[c][k];
        ord << ',' << fmt(a > 0.0 && b > 0.0 ? std::log2(a / b) : 0.0);
      }
      ord << '\n';
    }
    artifact("identity_orders.csv", ord.str());
    out_ << "verify-identities: " << rows.size() << " rows\n";
    if (violated && o_.strict) return kExitHypothesis;
    return kExitOk;
  }

  int check_hypotheses() {
    const Grid grid = grid_for(sc());
    const auto rows = hypothesis_report(sc(), grid);
    artifact("hypotheses.csv", functional_csv(rows));
    bool violated = false;
    for (const auto& r : rows) {
      out_ << r.name << " = " << r.value << (r.verdict.empty() ? "" : " (" + r.verdict + ")") << "\n";
      violated = violated || r.verdict == "violated";
    }
    if (violated && o_.strict) return kExitHypothesis;
    return kExitOk;
  }

  CLI::App* sub_;
  Options& o_;
  std::ostream& out_;
  std::ostream& err_;
  Config cfg_;
  fs::path out_dir_;
  RunManifest manifest_;
  std::vector<std::pair<std::string, std::string>> overrides_;
};

void add_common(CLI::App* s, Options& o) {
  s->add_option("--config", o.config, "Scenario config file");
  s->add_option("--preset", o.preset, "Named preset (free, saito, angular-index, azimuthal-b, coulomb-q)");
  s->add_option("--dim", o.dim, "Dimension used with --preset")->check(CLI::IsMember({2, 3}));
  s->add_option("--out", o.out, "Output directory (default $HLAB_OUT or hlab_out)");
  s->add_option("--threads", o.threads, "Worker cap")->check(CLI::PositiveNumber);
  s->add_flag("--strict", o.strict, "Exit 4 on hypothesis violations");
  s->add_flag("--dry-run", o.dry_run, "Validate the configuration only");
  s->add_option("--seed", o.seed, "Seed for sampled diagnostics");
  s->add_option("--lambda", o.lambda, "Spectral parameter");
  s->add_option("--epsilon", o.epsilon, "Absorption");
  s->add_option("--half-width", o.half_width, "Box half width L");
  s->add_option("--points", o.points, "Grid points per axis");
  s->add_option("--delta", o.delta, "Weight exponent");
  s->add_option("--boundary", o.boundary, "dirichlet or absorbing");
  s->add_option("--tol", o.tol, "Relative residual tolerance");
  s->add_option("--max-iter", o.max_iter, "Krylov iteration cap");
  s->add_option("--restart", o.restart, "GMRES restart length");
  s->add_option("--method", o.method, "gmres or bicgstab");
  s->add_option("--preconditioner", o.precond, "identity, jacobi or shifted-laplacian");
  s->add_option("--shift", o.shift, "Imaginary shift of the shifted-Laplacian preconditioner");
  s->add_option("--eps-start", o.eps_start, "First epsilon of the sweep");
  s->add_option("--eps-factor", o.eps_factor, "Epsilon reduction factor");
  s->add_option("--eps-count", o.eps_count, "Number of epsilon values");
  s->add_flag("--warm-start,!--no-warm-start", o.warm_start, "Warm start across epsilon steps");
  s->add_option("--field", o.field, "Read u from a wavefield file instead of solving");
}

void add_eikonal(CLI::App* s, Options& o) {
  s->add_option("--p-tilde", o.p_tilde, "Long-range part used by the march");
  s->add_option("--r0", o.r0, "Inner radius");
  s->add_option("--rmax", o.rmax, "Outer radius");
  s->add_option("--rho", o.rho, "Shell ratio");
  s->add_option("--angles", o.angles, "Angles on the circle (d = 2)");
  s->add_option("--angles-theta", o.angles_theta, "Colatitudes (d = 3)");
  s->add_option("--angles-phi", o.angles_phi, "Longitudes (d = 3)");
  s->add_option("--init", o.init, "default, one or saito");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"hlab: Helmholtz limiting-absorption laboratory"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);
  struct Sub {
    const char* name;
    const char* help;
  };
  const Sub subs[] = {
      {"solve", "Solve at the scenario epsilon"},
      {"sweep", "Limiting-absorption sweep over epsilon"},
      {"eikonal", "March the eikonal equation"},
      {"norms", "Morrey-Campanato norms, dual norm and beta"},
      {"radiation", "Radiation functionals"},
      {"concentration", "Energy concentration functional and angular profiles"},
      {"verify-identities", "Morawetz identities on manufactured pairs"},
      {"check-hypotheses", "Estimated hypothesis constants"},
  };
  for (const auto& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    add_common(sub, o);
    add_eikonal(sub, o);
    if (std::string(s.name) == "radiation") {
      sub->add_option("--phase", o.phase, "eikonal, explicit_n or explicit_ninf");
      sub->add_option("--min-radius", o.min_radius, "Inner radius of the region");
      sub->add_option("--max-radius", o.max_radius, "Outer radius of the region");
    }
    if (std::string(s.name) == "concentration") {
      sub->add_option("--radius", o.radius, "Radius R of the functional (default L/4)");
      sub->add_option("--bins", o.bins, "Angular profile bins")->check(CLI::PositiveNumber);
    }
    if (std::string(s.name) == "norms") sub->add_option("--refine", o.refine, "Beta sampling refinement");
    if (std::string(s.name) == "verify-identities") {
      sub->add_option("--levels", o.levels, "Grid levels N");
      sub->add_flag("--literal", o.literal, "Use the displayed coefficient and index order");
    }
    if (std::string(s.name) == "solve") sub->add_flag("--csv-field", o.csv_field, "Also write u.csv");
  }

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  CLI::App* sub = app.get_subcommands().front();
  Run runner(sub, o, out, err);
  const auto t0 = std::chrono::steady_clock::now();
  int code = kExitOk;
  std::string message;
  bool manifest_possible = false;
  try {
    runner.prepare_output();
    manifest_possible = true;
    runner.load();
    code = runner.execute();
  } catch (const ConfigError& e) {
    message = e.what();
    code = kExitConfig;
  } catch (const PreconditionError& e) {
    message = e.what();
    code = kExitConfig;
  } catch (const HypothesisViolation& e) {
    message = e.what();
    code = runner.strict() ? kExitHypothesis : kExitNumerical;
  } catch (const std::exception& e) {
    message = e.what();
    code = kExitNumerical;
  }
  if (!message.empty()) err << "error: " << message << "\n";
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (manifest_possible) runner.finish_manifest(code, message, wall);
  return code;
}

}  // namespace hlab
