#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "hlab/errors.hpp"
#include "hlab/grid.hpp"

using namespace hlab;

namespace {

Scenario scenario_from(const std::string& fields, int d, double eps = 0.0, double lambda = 1.0) {
  Scenario s = parse_scenario("[scenario]\ndimension = " + std::to_string(d) + "\nlambda = " + std::to_string(lambda) +
                              "\n[fields]\n" + fields);
  s.epsilon = eps;
  return s;
}

WaveField random_field(const Grid& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N01;
  WaveField u(g);
  for (auto& v : u.values) v = {N01(rng), N01(rng)};
  return u;
}

cplx weighted_dot(const HelmholtzOperator& op, const WaveField& a, const std::vector<cplx>& b) {
  cplx s{};
  for (std::size_t i = 0; i < a.values.size(); ++i)
    if (op.is_unknown(i)) s += std::conj(a.values[i]) * b[i] * op.boundary_weight(i);
  return s;
}

}  // namespace

TEST_SUITE("grid") {
  TEST_CASE("construction") {
    const Grid g2 = build_grid(2, 16.0, 129);
    CHECK(g2.spacing() == 0.25);
    CHECK(g2.size() == 129u * 129u);
    const Grid g3 = build_grid(3, 8.0, 65);
    CHECK(g3.spacing() == 0.25);
    CHECK(g3.size() == 65u * 65u * 65u);
    CHECK(g3.cell_volume() == doctest::Approx(0.25 * 0.25 * 0.25));
    CHECK_THROWS_AS(build_grid(2, 16.0, 8), PreconditionError);
    CHECK_THROWS_AS(build_grid(4, 16.0, 33), PreconditionError);
    CHECK_THROWS_AS(build_grid(2, -1.0, 33), PreconditionError);
    CHECK_THROWS_AS(build_grid(2, 16.0, 32), PreconditionError);  // even N would put a node at the origin
  }

  TEST_CASE("node cap") {
    const std::size_t cap = Grid::node_cap();
    Grid::set_node_cap(1000);
    CHECK_THROWS_AS(build_grid(3, 1.0, 17), ResourceError);
    Grid::set_node_cap(cap);
    CHECK_NOTHROW(build_grid(3, 1.0, 17));
  }

  TEST_CASE("indexing and geometry") {
    const Grid g = build_grid(3, 2.0, 17);
    const double h = g.spacing();
    std::array<double, 3> x{};
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto idx = g.index(i);
      CHECK(g.flat(idx) == i);
      const double r = g.coordinates(i, x);
      CHECK(r >= h / 2);
      CHECK(x[0] == g.axis_coordinate(idx[0]));
      CHECK(x[2] == g.axis_coordinate(idx[2]));
      const bool edge = idx[0] == 0 || idx[0] == 16 || idx[1] == 0 || idx[1] == 16 || idx[2] == 0 || idx[2] == 16;
      CHECK(g.is_interior(i) == !edge);
    }
    CHECK(g.boundary_mask(g.flat({0, 5, 5})) == 0b000001);
    CHECK(g.boundary_mask(g.flat({16, 5, 0})) == 0b010010);
  }

  TEST_CASE("constant field under the free operator") {
    for (int d : {2, 3}) {
      const Scenario s = scenario_from("n = \"2.5\"\n", d, 0.0, 2.5);
      const Grid g = build_grid(d, 2.0, 17);
      WaveField u(g);
      for (auto& v : u.values) v = 1.0;
      const WaveField out = apply_helmholtz_operator(g, s, u);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (!g.is_interior(i)) continue;
        CHECK(std::abs(out.values[i] - cplx(2.5, 0.0)) < 1e-12);
      }
    }
  }

  TEST_CASE("plane wave truncation is second order") {
    const double lam = 1.0;
    double prev = 0.0;
    for (int n : {33, 65, 129}) {
      const Scenario s = scenario_from("n = \"1\"\n", 2, 0.0, lam);
      const Grid g = build_grid(2, 4.0, n);
      WaveField u(g);
      std::array<double, 3> x{};
      for (std::size_t i = 0; i < g.size(); ++i) {
        g.coordinates(i, x);
        u.values[i] = std::polar(1.0, std::sqrt(lam) * x[0]);
      }
      const WaveField out = apply_helmholtz_operator(g, s, u);
      double res = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i)
        if (g.is_interior(i)) res = std::max(res, std::abs(out.values[i]));
      const double h = g.spacing();
      const double c = res / (h * h * lam * lam);
      MESSAGE("N = " << n << " measured C = " << c);
      CHECK(c <= 1.0 / 12.0 + 1e-3);
      if (prev > 0.0) CHECK(prev / res == doctest::Approx(4.0).epsilon(0.02));
      prev = res;
    }
  }

  TEST_CASE("operator matches an independently assembled stencil") {
    for (int d : {2, 3}) {
      const std::string b = d == 2 ? "b = \"0.4*sin(x2)\", \"-0.3*x1/(1 + r^2)\"\n"
                                   : "b = \"0.4*sin(x2)\", \"-0.3*x1/(1 + r^2)\", \"0.2*x1*x2\"\n";
      Scenario s = scenario_from("n = \"1.3 + 0.2*exp(-r^2)\"\nq = \"0.1/(1 + r^2)\"\n" + b, d, 0.05, 1.3);
      s.p_tilde.reset();
      const Grid g = build_grid(d, 2.0, 17);
      WaveField u(g);
      std::array<double, 3> x{};
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double r = g.coordinates(i, x);
        u.values[i] = std::exp(-r * r) * cplx(1.0 + x[0], 0.5 * x[1]);
      }
      const WaveField out = apply_helmholtz_operator(g, s, u);

      // row-by-row oracle
      const double h = g.spacing();
      double diff = 0.0, scale = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        cplx acc = u.values[i];
        if (g.is_interior(i)) {
          g.coordinates(i, x);
          const std::span<const double> xs(x.data(), d);
          acc = cplx(s.refraction(xs) + s.q_at(xs) - 2.0 * d / (h * h), s.epsilon) * u.values[i];
          for (int k = 0; k < d; ++k) {
            auto mid = x;
            mid[k] += h / 2;
            const double bp = s.b[k].eval(std::span<const double>(mid.data(), d));
            mid[k] -= h;
            const double bm = s.b[k].eval(std::span<const double>(mid.data(), d));
            acc += std::polar(1.0, h * bp) / (h * h) * u.values[i + g.stride(k)];
            acc += std::polar(1.0, -h * bm) / (h * h) * u.values[i - g.stride(k)];
          }
        }
        diff = std::max(diff, std::abs(acc - out.values[i]));
        scale = std::max(scale, std::abs(acc));
      }
      CHECK(diff <= 1e-13 * scale);

      // row() agrees with apply()
      const HelmholtzOperator op(g, s);
      for (std::size_t i = 0; i < g.size(); i += 7) {
        cplx acc{};
        for (const auto& [c, v] : op.row(i)) acc += v * u.values[c];
        CHECK(std::abs(acc - out.values[i]) <= 1e-13 * scale);
      }
    }
  }

  TEST_CASE("discrete gauge covariance") {
    // chi = 0.3 x1 x2 + 0.2 x1^2 is quadratic, so the midpoint link phase
    // integrates grad chi exactly along every edge.
    for (auto bc : {BoundaryCondition::Dirichlet, BoundaryCondition::Absorbing}) {
      Scenario s = scenario_from("n = \"1\"\nb = \"0.1*x2\", \"-0.2*x1\"\n", 2, 0.1);
      Scenario t = scenario_from("n = \"1\"\nb = \"0.1*x2 + 0.3*x2 + 0.4*x1\", \"-0.2*x1 + 0.3*x1\"\n", 2, 0.1);
      s.boundary = t.boundary = bc;
      const Grid g = build_grid(2, 3.0, 33);
      const WaveField u = random_field(g, 3);
      WaveField v(g);
      std::vector<cplx> phase(g.size());
      std::array<double, 3> x{};
      for (std::size_t i = 0; i < g.size(); ++i) {
        g.coordinates(i, x);
        phase[i] = std::polar(1.0, -(0.3 * x[0] * x[1] + 0.2 * x[0] * x[0]));
        v.values[i] = phase[i] * u.values[i];
      }
      const WaveField au = apply_helmholtz_operator(g, s, u);
      const WaveField av = apply_helmholtz_operator(g, t, v);
      double err = 0.0, scale = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        err = std::max(err, std::abs(av.values[i] - phase[i] * au.values[i]));
        scale = std::max(scale, std::abs(au.values[i]));
      }
      CHECK(err <= 1e-12 * scale);
    }
  }

  TEST_CASE("Dirichlet operator is Hermitian on interior unknowns at eps = 0") {
    const Scenario s = scenario_from("n = \"1 + 0.3*exp(-r^2)\"\nb = \"0.3*x2\", \"-0.2*x1^2\"\n", 2, 0.0);
    const Grid g = build_grid(2, 3.0, 25);
    const HelmholtzOperator op(g, s);
    WaveField u = random_field(g, 1), v = random_field(g, 2);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!g.is_interior(i)) u.values[i] = v.values[i] = 0.0;
    const WaveField au = op.apply(u), av = op.apply(v);
    cplx a{}, b{};
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!g.is_interior(i)) continue;
      a += std::conj(v.values[i]) * au.values[i];
      b += std::conj(av.values[i]) * u.values[i];
    }
    CHECK(std::abs(a - b) <= 1e-12 * std::abs(a));
  }

  TEST_CASE("absorbing operator: symmetric real part, non-negative imaginary part") {
    const Scenario base = scenario_from("n = \"1\"\nb = \"0.3*x2\", \"-0.2*x1\"\n", 2, 0.05);
    Scenario s = base;
    s.boundary = BoundaryCondition::Absorbing;
    const Grid g = build_grid(2, 3.0, 25);
    HelmholtzOperator op(g, s);
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const WaveField u = random_field(g, seed);
      std::vector<cplx> au;
      op.apply(u.values, au);
      double mass = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) mass += std::norm(u.values[i]) * op.boundary_weight(i);
      CHECK(weighted_dot(op, u, au).imag() >= s.epsilon * mass * (1 - 1e-12));
    }
    // W (A - i eps - boundary terms) is Hermitian: check <v, A u>_W - <A* v, u> via eps = 0 and k real
    op.set_epsilon(0.0);
    const WaveField u = random_field(g, 21), v = random_field(g, 22);
    std::vector<cplx> au, av;
    op.apply(u.values, au);
    op.apply(v.values, av);
    // the anti-Hermitian part is diagonal: 2 i k / h per boundary face
    cplx lhs = weighted_dot(op, v, au), rhs = std::conj(weighted_dot(op, u, av));
    const auto diag = op.diagonal();
    cplx corr{};
    for (std::size_t i = 0; i < g.size(); ++i)
      corr += std::conj(v.values[i]) * u.values[i] * op.boundary_weight(i) * cplx(0.0, 2.0 * diag[i].imag());
    CHECK(std::abs(lhs - rhs - corr) <= 1e-11 * std::abs(lhs));
  }

  TEST_CASE("magnetic gradient") {
    const Grid g = build_grid(3, 2.0, 33);
    WaveField one(g);
    for (auto& v : one.values) v = 1.0;
    const Scenario free = scenario_from("n = \"1\"\n", 3);
    const auto g0 = magnetic_gradient(g, free, one);
    for (int k = 0; k < 3; ++k)
      for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(g0.components[k][i]) < 1e-14);

    const Scenario bx = scenario_from("n = \"1\"\nb = \"1\", \"0\", \"0\"\n", 3);
    const auto g1 = magnetic_gradient(g, bx, one);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!g.is_interior(i)) continue;
      CHECK(std::abs(g1.components[0][i] - cplx(0, 1)) < 1e-14);
      CHECK(std::abs(g1.components[1][i]) < 1e-14);
    }

    double prev = 0.0;
    for (int n : {33, 65}) {
      const Grid gg = build_grid(2, 2.0, n);
      const Scenario f2 = scenario_from("n = \"1\"\n", 2);
      WaveField u(gg);
      std::array<double, 3> x{};
      for (std::size_t i = 0; i < gg.size(); ++i) {
        gg.coordinates(i, x);
        u.values[i] = std::polar(1.0, x[0]);
      }
      const auto gr = magnetic_gradient(gg, f2, u);
      double err = 0.0;
      for (std::size_t i = 0; i < gg.size(); ++i)
        if (gg.is_interior(i)) err = std::max(err, std::abs(gr.components[0][i] - cplx(0, 1) * u.values[i]));
      if (prev > 0.0) CHECK(prev / err == doctest::Approx(4.0).epsilon(0.02));
      prev = err;
    }
  }

  TEST_CASE("radial and tangential split") {
    const Grid g = build_grid(2, 2.0, 33);
    GradientField radial(g), azimuthal(g), rnd(g);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> N01;
    std::array<double, 3> x{};
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double r = g.coordinates(i, x);
      const cplx s(std::sin(r), 0.3 * r);
      radial.components[0][i] = s * x[0] / r;
      radial.components[1][i] = s * x[1] / r;
      azimuthal.components[0][i] = -x[1] / r;
      azimuthal.components[1][i] = x[0] / r;
      for (int k = 0; k < 2; ++k) rnd.components[k][i] = {N01(rng), N01(rng)};
    }
    const auto a = radial_tangential_split(radial);
    const auto b = radial_tangential_split(azimuthal);
    const auto c = radial_tangential_split(rnd);
    for (std::size_t i = 0; i < g.size(); ++i) {
      for (int k = 0; k < 2; ++k) CHECK(std::abs(a.tangential.components[k][i]) < 1e-14);
      CHECK(std::abs(b.radial[i]) < 1e-14);
      const double total = std::norm(rnd.components[0][i]) + std::norm(rnd.components[1][i]);
      const double parts =
          std::norm(c.radial[i]) + std::norm(c.tangential.components[0][i]) + std::norm(c.tangential.components[1][i]);
      CHECK(std::abs(total - parts) <= 1e-12 * total);
    }
  }

  TEST_CASE("wave field files") {
    const Grid g = build_grid(2, 1.5, 17);
    const WaveField u = random_field(g, 8);
    const auto dir = std::filesystem::temp_directory_path() / "hlab_grid_test";
    std::filesystem::create_directories(dir);
    const std::string p64 = (dir / "u128.bin").string(), p32 = (dir / "u64.bin").string();
    write_wavefield(u, p64);
    write_wavefield(u, p32, true);
    const WaveField a = read_wavefield(p64), b = read_wavefield(p32);
    CHECK(a.grid == g);
    CHECK(a.values == u.values);
    for (std::size_t i = 0; i < g.size(); ++i)
      CHECK(std::abs(b.values[i] - u.values[i]) <= 1e-6 * std::abs(u.values[i]) + 1e-7);
    CHECK(std::filesystem::file_size(p64) == 8 + 4 + 4 + 8 + 4 + 16 * g.size());
    {
      std::ofstream bad(dir / "bad.bin", std::ios::binary);
      bad << "NOTAWAVEFIELD....................";
    }
    CHECK_THROWS_AS(read_wavefield((dir / "bad.bin").string()), Error);
    std::ostringstream csv;
    write_wavefield_csv(u, csv);
    CHECK(csv.str().rfind("x1,x2,re,im\n", 0) == 0);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("mismatched lengths are rejected") {
    const Grid g = build_grid(2, 1.0, 17);
    CHECK_THROWS_AS(WaveField(g, std::vector<cplx>(3)), PreconditionError);
    const Scenario s = scenario_from("n = \"1\"\n", 2);
    const HelmholtzOperator op(g, s);
    std::vector<cplx> out;
    CHECK_THROWS_AS(op.apply(std::vector<cplx>(5), out), PreconditionError);
  }
}
