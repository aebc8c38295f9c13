#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hlab {

/// A scalar field given by a small arithmetic expression.
///
/// Variables: `x1..x3` (Cartesian coordinates), `r` (= |x|), `w1..w3`
/// (= x_k/|x|), the constant `pi`. Operators `+ - * / ^` (`^` is right
/// associative and binds tighter than unary minus). Functions: `sin cos tan
/// exp sqrt abs log tanh smoothstep`, where `smoothstep(t)` is the quintic
/// 6t^5 - 15t^4 + 10t^3 clamped to 0 for t <= 0 and 1 for t >= 1.
///
/// Instances are immutable and cheap to copy; evaluation is pure and safe from
/// any number of threads.
class FieldExpr {
 public:
  /// The zero field.
  FieldExpr();

  /// Throws ConfigError (column set) on a syntax error.
  static FieldExpr parse(std::string_view text);
  static FieldExpr constant(double value);

  /// Evaluates at `point` (its size is the dimension). Throws DomainError at
  /// r = 0 when the expression references r or w_k, or when a coordinate
  /// index exceeds the dimension; NumericalError on a NaN/Inf result.
  double eval(std::span<const double> point) const;

  /// Original text as given to parse().
  const std::string& source() const;
  /// Fully parenthesized canonical form; re-parses to an identical program.
  std::string to_string() const;

  bool is_constant() const;
  /// True when the value depends on r or on w_k.
  bool uses_radius() const;
  /// True when any Cartesian coordinate x_k appears.
  bool uses_cartesian() const;
  /// Largest coordinate index referenced through x_k or w_k (0 if none).
  int max_index() const;

  struct Program;

 private:
  explicit FieldExpr(std::shared_ptr<const Program> program);
  std::shared_ptr<const Program> program_;
};

/// Central difference (f(x + h e_k) - f(x - h e_k)) / (2h); O(h^2) accurate.
/// `direction` is zero-based.
double differentiate_field(const FieldExpr& expr, std::span<const double> point,
                           int direction, double step);

/// Default finite-difference step 1e-5 (1 + |x|).
double default_fd_step(std::span<const double> point);

}  // namespace hlab
