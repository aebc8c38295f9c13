#include "hlab/grid.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <ostream>

#include "hlab/errors.hpp"

namespace hlab {

namespace {

std::size_t g_node_cap = std::size_t{1} << 25;

constexpr char kMagic[8] = {'H', 'L', 'A', 'B', 'W', 'A', 'V', 'E'};

}  // namespace

// --- Grid ----------------------------------------------------------------------

Grid::Grid(int dimension, double half_width, int points) : d_(dimension), L_(half_width), n_(points) {
  if (d_ != 2 && d_ != 3) throw PreconditionError("grid dimension must be 2 or 3");
  if (!(L_ > 0.0)) throw PreconditionError("grid half width must be positive");
  if (n_ < 16) throw PreconditionError("grid needs at least 16 points per axis");
  // with h = 2L/(N-1) the half-cell shift keeps nodes off the origin only for odd N
  if (n_ % 2 == 0) throw PreconditionError("grid points per axis must be odd so that no node sits at the origin");
  double total = 1.0;
  for (int k = 0; k < d_; ++k) total *= n_;
  if (total > static_cast<double>(g_node_cap))
    throw ResourceError("grid of " + std::to_string(static_cast<long long>(total)) + " nodes exceeds the cap of " +
                        std::to_string(g_node_cap));
  size_ = static_cast<std::size_t>(total);
  h_ = 2.0 * L_ / (n_ - 1);
  std::ptrdiff_t s = 1;
  for (int k = d_ - 1; k >= 0; --k) {
    strides_[k] = s;
    s *= n_;
  }
}

double Grid::cell_volume() const { return d_ == 2 ? h_ * h_ : h_ * h_ * h_; }

std::array<int, 3> Grid::index(std::size_t flat) const {
  std::array<int, 3> idx{};
  for (int k = d_ - 1; k >= 0; --k) {
    idx[k] = static_cast<int>(flat % n_);
    flat /= n_;
  }
  return idx;
}

std::size_t Grid::flat(const std::array<int, 3>& idx) const {
  std::size_t f = 0;
  for (int k = 0; k < d_; ++k) f = f * n_ + idx[k];
  return f;
}

double Grid::coordinates(std::size_t flat, std::array<double, 3>& x) const {
  const auto idx = index(flat);
  double r2 = 0.0;
  x = {0.0, 0.0, 0.0};
  for (int k = 0; k < d_; ++k) {
    x[k] = axis_coordinate(idx[k]);
    r2 += x[k] * x[k];
  }
  return std::sqrt(r2);
}

double Grid::radius(std::size_t flat) const {
  std::array<double, 3> x;
  return coordinates(flat, x);
}

std::uint8_t Grid::boundary_mask(std::size_t flat) const {
  std::uint8_t m = 0;
  for (int k = d_ - 1; k >= 0; --k) {
    const int i = static_cast<int>(flat % n_);
    flat /= n_;
    if (i == 0) m |= static_cast<std::uint8_t>(1u << (2 * k));
    if (i == n_ - 1) m |= static_cast<std::uint8_t>(1u << (2 * k + 1));
  }
  return m;
}

std::size_t Grid::node_cap() { return g_node_cap; }
void Grid::set_node_cap(std::size_t cap) { g_node_cap = cap; }

WaveField::WaveField(const Grid& g, std::vector<cplx> v) : grid(g), values(std::move(v)) {
  if (values.size() != grid.size()) throw PreconditionError("wave field length does not match the grid");
}

GradientField::GradientField(const Grid& g) : grid(g), components(g.dimension(), std::vector<cplx>(g.size())) {}

Grid build_grid(int dimension, double half_width, int points) { return Grid(dimension, half_width, points); }

Grid grid_for(const Scenario& s) { return Grid(s.dimension, s.half_width, s.points); }

std::vector<double> sample_real(const Grid& grid, const FieldExpr& expr) {
  std::vector<double> out(grid.size());
  std::array<double, 3> x;
  const std::span<const double> view(x.data(), grid.dimension());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.coordinates(i, x);
    out[i] = expr.eval(view);
  }
  return out;
}

WaveField sample_source(const Grid& grid, const Scenario& s) {
  WaveField f(grid);
  std::array<double, 3> x;
  const std::span<const double> view(x.data(), grid.dimension());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.coordinates(i, x);
    f.values[i] = s.source_at(view);
  }
  return f;
}

std::vector<std::array<double, 3>> sample_potential(const Grid& grid, const Scenario& s) {
  std::vector<std::array<double, 3>> out(grid.size(), std::array<double, 3>{});
  if (!s.has_magnetic_potential()) return out;
  std::array<double, 3> x;
  const std::span<const double> view(x.data(), grid.dimension());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.coordinates(i, x);
    for (int k = 0; k < grid.dimension(); ++k) out[i][k] = s.b[k].eval(view);
  }
  return out;
}

// --- operator --------------------------------------------------------------------

HelmholtzOperator::HelmholtzOperator(const Grid& grid, const Scenario& s)
    : grid_(grid), boundary_(s.boundary), eps_(s.epsilon), coef_(grid.size()) {
  const int d = grid.dimension();
  const double h = grid.spacing();
  const bool magnetic = s.has_magnetic_potential();
  for (int k = 0; k < d; ++k) links_[k].assign(grid.size(), cplx(1.0, 0.0));
  std::array<double, 3> x;
  const std::span<const double> view(x.data(), d);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.coordinates(i, x);
    coef_[i] = s.refraction(view) + s.q_at(view);
    if (!magnetic) continue;
    for (int k = 0; k < d; ++k) {
      const double keep = x[k];
      x[k] += 0.5 * h;
      const double bk = s.b[k].eval(view);
      x[k] = keep;
      links_[k][i] = std::polar(1.0, h * bk);
    }
  }
  refresh_wavenumber();
}

void HelmholtzOperator::set_epsilon(double eps) {
  eps_ = eps;
  refresh_wavenumber();
}

void HelmholtzOperator::refresh_wavenumber() {
  wavenumber_.clear();
  if (boundary_ != BoundaryCondition::Absorbing) return;
  wavenumber_.assign(grid_.size(), cplx{});
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    if (grid_.boundary_mask(i) == 0) continue;
    wavenumber_[i] = std::sqrt(cplx(coef_[i], eps_));
  }
}

bool HelmholtzOperator::is_unknown(std::size_t flat) const {
  return boundary_ == BoundaryCondition::Absorbing || grid_.boundary_mask(flat) == 0;
}

double HelmholtzOperator::boundary_weight(std::size_t flat) const {
  if (boundary_ != BoundaryCondition::Absorbing) return 1.0;
  const std::uint8_t m = grid_.boundary_mask(flat);
  double w = 1.0;
  for (int k = 0; k < grid_.dimension(); ++k)
    if (m & (3u << (2 * k))) w *= 0.5;
  return w;
}

std::vector<std::pair<std::size_t, cplx>> HelmholtzOperator::row(std::size_t i) const {
  std::vector<std::pair<std::size_t, cplx>> out;
  const std::uint8_t m = grid_.boundary_mask(i);
  if (boundary_ == BoundaryCondition::Dirichlet && m != 0) {
    out.emplace_back(i, cplx(1.0, 0.0));
    return out;
  }
  const int d = grid_.dimension();
  const double ih2 = 1.0 / (grid_.spacing() * grid_.spacing());
  cplx diag(coef_[i], eps_);
  for (int k = 0; k < d; ++k) {
    const std::ptrdiff_t s = grid_.stride(k);
    const bool lo = m & (1u << (2 * k));
    const bool hi = m & (1u << (2 * k + 1));
    diag -= 2.0 * ih2;
    if (lo || hi) {
      // ghost: covariant outside value = inside value + 2 i h k u_i
      if (lo)
        out.emplace_back(i + s, 2.0 * links_[k][i] * ih2);
      else
        out.emplace_back(i - s, 2.0 * std::conj(links_[k][i - s]) * ih2);
      diag += cplx(0.0, 2.0 * grid_.spacing()) * wavenumber_[i] * ih2;
    } else {
      out.emplace_back(i + s, links_[k][i] * ih2);
      out.emplace_back(i - s, std::conj(links_[k][i - s]) * ih2);
    }
  }
  out.emplace_back(i, diag);
  return out;
}

std::vector<cplx> HelmholtzOperator::diagonal() const {
  std::vector<cplx> out(grid_.size());
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    for (const auto& [col, v] : row(i))
      if (col == i) out[i] += v;
  }
  return out;
}

void HelmholtzOperator::apply(const std::vector<cplx>& in, std::vector<cplx>& out) const {
  const std::size_t n = grid_.size();
  if (in.size() != n) throw PreconditionError("operator input length does not match the grid");
  out.resize(n);
  const int d = grid_.dimension();
  const int N = grid_.points();
  const double h = grid_.spacing();
  const double ih2 = 1.0 / (h * h);
  const cplx shift(0.0, eps_);
  const double centre = -2.0 * d * ih2;

  // Interior nodes: walk lines along the last axis.
  const std::size_t lines = n / N;
  for (std::size_t line = 0; line < lines; ++line) {
    const std::size_t base = line * N;
    const auto idx = grid_.index(base);
    bool edge_line = false;
    for (int k = 0; k < d - 1; ++k) edge_line = edge_line || idx[k] == 0 || idx[k] == N - 1;
    if (edge_line) continue;
    for (int j = 1; j < N - 1; ++j) {
      const std::size_t i = base + j;
      cplx acc = (coef_[i] + centre + shift) * in[i];
      for (int k = 0; k < d; ++k) {
        const std::ptrdiff_t s = grid_.stride(k);
        acc += (links_[k][i] * in[i + s] + std::conj(links_[k][i - s]) * in[i - s]) * ih2;
      }
      out[i] = acc;
    }
  }
  // Boundary ring.
  for (std::size_t i = 0; i < n; ++i) {
    if (grid_.boundary_mask(i) == 0) continue;
    if (boundary_ == BoundaryCondition::Dirichlet) {
      out[i] = in[i];
      continue;
    }
    cplx acc{};
    for (const auto& [col, v] : row(i)) acc += v * in[col];
    out[i] = acc;
  }
}

WaveField HelmholtzOperator::apply(const WaveField& u) const {
  if (!(u.grid == grid_)) throw PreconditionError("wave field lives on a different grid");
  WaveField out(grid_);
  apply(u.values, out.values);
  return out;
}

WaveField apply_helmholtz_operator(const Grid& grid, const Scenario& scenario, const WaveField& u) {
  return HelmholtzOperator(grid, scenario).apply(u);
}

// --- gradients ---------------------------------------------------------------------

GradientField magnetic_gradient(const Grid& grid, const std::vector<std::array<double, 3>>& b_nodes,
                                const WaveField& u) {
  if (!(u.grid == grid)) throw PreconditionError("wave field lives on a different grid");
  GradientField g(grid);
  const int d = grid.dimension();
  const double inv2h = 0.5 / grid.spacing();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid.boundary_mask(i) != 0) continue;
    for (int k = 0; k < d; ++k) {
      const std::ptrdiff_t s = grid.stride(k);
      g.components[k][i] = (u.values[i + s] - u.values[i - s]) * inv2h + cplx(0.0, b_nodes[i][k]) * u.values[i];
    }
  }
  return g;
}

GradientField magnetic_gradient(const Grid& grid, const Scenario& scenario, const WaveField& u) {
  return magnetic_gradient(grid, sample_potential(grid, scenario), u);
}

RadialSplit radial_tangential_split(const GradientField& g) {
  const Grid& grid = g.grid;
  const int d = grid.dimension();
  RadialSplit out{std::vector<cplx>(grid.size()), GradientField(grid)};
  std::array<double, 3> x;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double r = grid.coordinates(i, x);
    cplx rad{};
    for (int k = 0; k < d; ++k) rad += x[k] / r * g.components[k][i];
    out.radial[i] = rad;
    for (int k = 0; k < d; ++k) out.tangential.components[k][i] = g.components[k][i] - rad * (x[k] / r);
  }
  return out;
}

// --- IO ------------------------------------------------------------------------------

void write_wavefield(const WaveField& u, const std::string& path, bool single_precision) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  const std::int32_t d = u.grid.dimension();
  const std::int32_t n = u.grid.points();
  const double L = u.grid.half_width();
  const std::int32_t prec = single_precision ? 8 : 16;
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&d), sizeof d);
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(&L), sizeof L);
  out.write(reinterpret_cast<const char*>(&prec), sizeof prec);
  if (single_precision) {
    std::vector<float> buf(2 * u.values.size());
    for (std::size_t i = 0; i < u.values.size(); ++i) {
      buf[2 * i] = static_cast<float>(u.values[i].real());
      buf[2 * i + 1] = static_cast<float>(u.values[i].imag());
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  } else {
    out.write(reinterpret_cast<const char*>(u.values.data()),
              static_cast<std::streamsize>(u.values.size() * sizeof(cplx)));
  }
  if (!out) throw Error("write failed: " + path);
}

WaveField read_wavefield(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  char magic[8];
  std::int32_t d = 0, n = 0, prec = 0;
  double L = 0.0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&d), sizeof d);
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  in.read(reinterpret_cast<char*>(&L), sizeof L);
  in.read(reinterpret_cast<char*>(&prec), sizeof prec);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw Error(path + " is not a wave field file");
  if (prec != 8 && prec != 16) throw Error(path + ": unknown precision flag");
  WaveField u(Grid(d, L, n));
  if (prec == 16) {
    in.read(reinterpret_cast<char*>(u.values.data()), static_cast<std::streamsize>(u.values.size() * sizeof(cplx)));
  } else {
    std::vector<float> buf(2 * u.values.size());
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    for (std::size_t i = 0; i < u.values.size(); ++i) u.values[i] = cplx(buf[2 * i], buf[2 * i + 1]);
  }
  if (!in) throw Error(path + ": truncated wave field");
  return u;
}

void write_wavefield_csv(const WaveField& u, std::ostream& out) {
  const int d = u.grid.dimension();
  for (int k = 0; k < d; ++k) out << 'x' << (k + 1) << ',';
  out << "re,im\n";
  std::array<double, 3> x;
  char buf[64];
  for (std::size_t i = 0; i < u.values.size(); ++i) {
    u.grid.coordinates(i, x);
    for (int k = 0; k < d; ++k) {
      std::snprintf(buf, sizeof buf, "%.17g,", x[k]);
      out << buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", u.values[i].real(), u.values[i].imag());
    out << buf;
  }
}

}  // namespace hlab
