#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "hlab/scenario.hpp"

namespace hlab {

/// Structured box grid on [-L, L]^d with spacing h = 2L/(N-1).
///
/// Nodes sit at x_k = -L + (i_k + 1/2) h, a half-cell shift that keeps every
/// node at distance >= h/2 from the origin. Storage is row-major with the
/// last axis fastest.
class Grid {
 public:
  Grid(int dimension, double half_width, int points);

  int dimension() const { return d_; }
  double half_width() const { return L_; }
  int points() const { return n_; }
  double spacing() const { return h_; }
  std::size_t size() const { return size_; }
  /// Volume element h^d.
  double cell_volume() const;
  std::ptrdiff_t stride(int axis) const { return strides_[axis]; }

  double axis_coordinate(int index) const { return -L_ + (index + 0.5) * h_; }
  /// Multi-index of a flat index (unused axes are 0).
  std::array<int, 3> index(std::size_t flat) const;
  std::size_t flat(const std::array<int, 3>& idx) const;
  /// Coordinates of a node; returns |x|.
  double coordinates(std::size_t flat, std::array<double, 3>& x) const;
  double radius(std::size_t flat) const;

  /// Bit 2k set: node on the low face of axis k; bit 2k+1: high face.
  std::uint8_t boundary_mask(std::size_t flat) const;
  bool is_interior(std::size_t flat) const { return boundary_mask(flat) == 0; }

  /// Maximum node count accepted by the constructor (ResourceError beyond).
  static std::size_t node_cap();
  static void set_node_cap(std::size_t cap);

  bool operator==(const Grid& other) const { return d_ == other.d_ && n_ == other.n_ && L_ == other.L_; }

 private:
  int d_;
  double L_;
  int n_;
  double h_;
  std::size_t size_;
  std::array<std::ptrdiff_t, 3> strides_{};
};

/// Grid-sampled complex field.
struct WaveField {
  Grid grid;
  std::vector<cplx> values;

  explicit WaveField(const Grid& g) : grid(g), values(g.size()) {}
  WaveField(const Grid& g, std::vector<cplx> v);
};

/// Magnetic gradient samples; components[k][node]. Boundary nodes hold 0.
struct GradientField {
  Grid grid;
  std::vector<std::vector<cplx>> components;

  explicit GradientField(const Grid& g);
};

Grid build_grid(int dimension, double half_width, int points);
Grid grid_for(const Scenario& scenario);

/// Samples a real expression or the complex source at every node.
std::vector<double> sample_real(const Grid& grid, const FieldExpr& expr);
WaveField sample_source(const Grid& grid, const Scenario& scenario);

/// The discrete operator (grad + i b)^2 + n + Q + i eps with Peierls links
/// U_k(x) = exp(i h b_k(x + h e_k / 2)).
///
/// Dirichlet: rows of interior nodes use neighbour values as given; boundary
/// rows are the identity. Restricted to interior unknowns the matrix is
/// Hermitian for eps = 0.
///
/// Absorbing: every node is an unknown; a missing neighbour across a face is
/// replaced by the ghost value that makes the centered outward derivative
/// equal i k u with k = sqrt(n + Q + i eps) (principal branch). With the
/// trapezoid weights of boundary_weight() the real part is symmetric and the
/// imaginary part is non-negative.
class HelmholtzOperator {
 public:
  HelmholtzOperator(const Grid& grid, const Scenario& scenario);

  const Grid& grid() const { return grid_; }
  BoundaryCondition boundary() const { return boundary_; }
  double epsilon() const { return eps_; }
  void set_epsilon(double eps);

  void apply(const std::vector<cplx>& in, std::vector<cplx>& out) const;
  WaveField apply(const WaveField& u) const;

  /// Real zeroth-order coefficient n + Q at each node.
  const std::vector<double>& coefficient() const { return coef_; }
  /// Forward link phase along `axis` at each node.
  const std::vector<cplx>& links(int axis) const { return links_[axis]; }
  /// Diagonal entries of the matrix.
  std::vector<cplx> diagonal() const;
  /// Quadrature weight: 1/2 per face the node lies on (absorbing), 1 else.
  double boundary_weight(std::size_t flat) const;
  /// True when the node is an unknown of the linear system.
  bool is_unknown(std::size_t flat) const;

  /// Row `flat` as (column, value) pairs, matching apply().
  std::vector<std::pair<std::size_t, cplx>> row(std::size_t flat) const;

 private:
  Grid grid_;
  BoundaryCondition boundary_;
  double eps_;
  std::vector<double> coef_;
  std::array<std::vector<cplx>, 3> links_;
  std::vector<cplx> wavenumber_;  // absorbing only
  void refresh_wavenumber();
};

WaveField apply_helmholtz_operator(const Grid& grid, const Scenario& scenario, const WaveField& u);

/// Centered differences plus i b(x) u(x), interior nodes.
GradientField magnetic_gradient(const Grid& grid, const Scenario& scenario, const WaveField& u);
GradientField magnetic_gradient(const Grid& grid, const std::vector<std::array<double, 3>>& b_nodes,
                                const WaveField& u);
std::vector<std::array<double, 3>> sample_potential(const Grid& grid, const Scenario& scenario);

struct RadialSplit {
  std::vector<cplx> radial;
  GradientField tangential;
};

/// radial = (x/|x|) . g, tangential = g - radial x/|x|.
RadialSplit radial_tangential_split(const GradientField& g);

/// Binary layout: 8-byte magic "HLABWAVE", int32 d, int32 N, float64 L,
/// int32 precision (8: complex64, 16: complex128), then row-major values.
void write_wavefield(const WaveField& u, const std::string& path, bool single_precision = false);
WaveField read_wavefield(const std::string& path);
/// CSV with header x1..xd,re,im.
void write_wavefield_csv(const WaveField& u, std::ostream& out);

}  // namespace hlab
