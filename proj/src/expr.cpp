#include "hlab/expr.hpp"

#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numbers>

#include "hlab/errors.hpp"

namespace hlab {

namespace {

enum class Op : unsigned char {
  Const,
  Coord,   // x_k, index in `index`
  Radius,  // r
  Unit,    // w_k
  Add,
  Sub,
  Mul,
  Div,
  Pow,
  Neg,
  Sin,
  Cos,
  Tan,
  Exp,
  Sqrt,
  Abs,
  Log,
  Tanh,
  Smoothstep,
};

struct Instr {
  Op op;
  int index = 0;
  double value = 0.0;
};

struct FunctionName {
  const char* name;
  Op op;
};

constexpr std::array<FunctionName, 9> kFunctions{{
    {"sin", Op::Sin},
    {"cos", Op::Cos},
    {"tan", Op::Tan},
    {"exp", Op::Exp},
    {"sqrt", Op::Sqrt},
    {"abs", Op::Abs},
    {"log", Op::Log},
    {"tanh", Op::Tanh},
    {"smoothstep", Op::Smoothstep},
}};

constexpr int kMaxStack = 64;

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  std::vector<Instr> run() {
    skip_space();
    if (pos_ >= text_.size()) fail("empty expression");
    expression();
    skip_space();
    if (pos_ < text_.size()) fail("unexpected character '" + std::string(1, text_[pos_]) + "'");
    return std::move(code_);
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("expression syntax error: " + msg, 1, static_cast<int>(pos_) + 1);
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expression() {
    term();
    for (;;) {
      if (accept('+')) {
        term();
        code_.push_back({Op::Add});
      } else if (accept('-')) {
        term();
        code_.push_back({Op::Sub});
      } else {
        return;
      }
    }
  }

  void term() {
    unary();
    for (;;) {
      if (accept('*')) {
        unary();
        code_.push_back({Op::Mul});
      } else if (accept('/')) {
        unary();
        code_.push_back({Op::Div});
      } else {
        return;
      }
    }
  }

  void unary() {
    if (accept('-')) {
      unary();
      code_.push_back({Op::Neg});
    } else if (accept('+')) {
      unary();
    } else {
      power();
    }
  }

  void power() {
    primary();
    if (accept('^')) {
      unary();
      code_.push_back({Op::Pow});
    }
  }

  void primary() {
    skip_space();
    if (pos_ >= text_.size()) fail("unexpected end of expression");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      expression();
      if (!accept(')')) fail("expected ')'");
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      number();
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      identifier();
      return;
    }
    fail("unexpected character '" + std::string(1, c) + "'");
  }

  void number() {
    const std::string rest(text_.substr(pos_));
    char* end = nullptr;
    const double v = std::strtod(rest.c_str(), &end);
    if (end == rest.c_str()) fail("malformed number");
    pos_ += static_cast<std::size_t>(end - rest.c_str());
    code_.push_back({Op::Const, 0, v});
  }

  void identifier() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
      ++pos_;
    const std::string id(text_.substr(start, pos_ - start));
    if (id == "pi") {
      code_.push_back({Op::Const, 0, std::numbers::pi});
      return;
    }
    if (id == "r") {
      code_.push_back({Op::Radius});
      return;
    }
    if (id.size() == 2 && (id[0] == 'x' || id[0] == 'w') && id[1] >= '1' && id[1] <= '3') {
      code_.push_back({id[0] == 'x' ? Op::Coord : Op::Unit, id[1] - '1'});
      return;
    }
    for (const auto& f : kFunctions) {
      if (id == f.name) {
        if (!accept('(')) fail("expected '(' after function " + id);
        expression();
        if (!accept(')')) fail("expected ')'");
        code_.push_back({f.op});
        return;
      }
    }
    pos_ = start;
    fail("unknown identifier '" + id + "'");
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::vector<Instr> code_;
};

const char* function_name(Op op) {
  for (const auto& f : kFunctions)
    if (f.op == op) return f.name;
  return "?";
}

double smoothstep5(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  return t * t * t * (t * (6.0 * t - 15.0) + 10.0);
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

struct FieldExpr::Program {
  std::string source;
  std::vector<Instr> code;
  bool uses_radius = false;
  bool uses_cartesian = false;
  int max_index = 0;
};

FieldExpr::FieldExpr() : FieldExpr(constant(0.0)) {}

FieldExpr::FieldExpr(std::shared_ptr<const Program> program) : program_(std::move(program)) {}

FieldExpr FieldExpr::constant(double value) {
  auto p = std::make_shared<Program>();
  p->source = format_number(value);
  p->code.push_back({Op::Const, 0, value});
  return FieldExpr(std::move(p));
}

FieldExpr FieldExpr::parse(std::string_view text) {
  auto p = std::make_shared<Program>();
  p->source = std::string(text);
  p->code = Parser(text).run();
  int depth = 0;
  int max_depth = 0;
  for (const auto& in : p->code) {
    switch (in.op) {
      case Op::Const:
        ++depth;
        break;
      case Op::Coord:
        ++depth;
        p->uses_cartesian = true;
        p->max_index = std::max(p->max_index, in.index + 1);
        break;
      case Op::Radius:
        ++depth;
        p->uses_radius = true;
        break;
      case Op::Unit:
        ++depth;
        p->uses_radius = true;
        p->max_index = std::max(p->max_index, in.index + 1);
        break;
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
      case Op::Div:
      case Op::Pow:
        --depth;
        break;
      default:
        break;
    }
    max_depth = std::max(max_depth, depth);
  }
  if (max_depth > kMaxStack) throw ConfigError("expression too deeply nested");
  return FieldExpr(std::move(p));
}

double FieldExpr::eval(std::span<const double> point) const {
  const Program& p = *program_;
  if (p.max_index > static_cast<int>(point.size()))
    throw DomainError("expression '" + p.source + "' references coordinate " + std::to_string(p.max_index) +
                      " in dimension " + std::to_string(point.size()));
  double radius = 0.0;
  if (p.uses_radius) {
    for (double c : point) radius += c * c;
    radius = std::sqrt(radius);
    if (radius == 0.0) throw DomainError("expression '" + p.source + "' is singular at r = 0");
  }
  std::array<double, kMaxStack> st;
  int top = -1;
  for (const auto& in : p.code) {
    switch (in.op) {
      case Op::Const: st[++top] = in.value; break;
      case Op::Coord: st[++top] = point[in.index]; break;
      case Op::Radius: st[++top] = radius; break;
      case Op::Unit: st[++top] = point[in.index] / radius; break;
      case Op::Add: st[top - 1] += st[top]; --top; break;
      case Op::Sub: st[top - 1] -= st[top]; --top; break;
      case Op::Mul: st[top - 1] *= st[top]; --top; break;
      case Op::Div: st[top - 1] /= st[top]; --top; break;
      case Op::Pow: st[top - 1] = std::pow(st[top - 1], st[top]); --top; break;
      case Op::Neg: st[top] = -st[top]; break;
      case Op::Sin: st[top] = std::sin(st[top]); break;
      case Op::Cos: st[top] = std::cos(st[top]); break;
      case Op::Tan: st[top] = std::tan(st[top]); break;
      case Op::Exp: st[top] = std::exp(st[top]); break;
      case Op::Sqrt: st[top] = std::sqrt(st[top]); break;
      case Op::Abs: st[top] = std::abs(st[top]); break;
      case Op::Log: st[top] = std::log(st[top]); break;
      case Op::Tanh: st[top] = std::tanh(st[top]); break;
      case Op::Smoothstep: st[top] = smoothstep5(st[top]); break;
    }
  }
  const double v = st[0];
  if (!std::isfinite(v)) throw NumericalError("expression '" + p.source + "' evaluated to a non-finite value");
  return v;
}

const std::string& FieldExpr::source() const { return program_->source; }

std::string FieldExpr::to_string() const {
  std::vector<std::string> st;
  for (const auto& in : program_->code) {
    switch (in.op) {
      case Op::Const: st.push_back(format_number(in.value)); break;
      case Op::Coord: st.push_back("x" + std::to_string(in.index + 1)); break;
      case Op::Radius: st.push_back("r"); break;
      case Op::Unit: st.push_back("w" + std::to_string(in.index + 1)); break;
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
      case Op::Div:
      case Op::Pow: {
        static constexpr char sym[] = "+-*/^";
        const char c = sym[static_cast<int>(in.op) - static_cast<int>(Op::Add)];
        std::string rhs = std::move(st.back());
        st.pop_back();
        st.back() = "(" + st.back() + " " + c + " " + rhs + ")";
        break;
      }
      case Op::Neg: st.back() = "(-" + st.back() + ")"; break;
      default: st.back() = std::string(function_name(in.op)) + "(" + st.back() + ")"; break;
    }
  }
  return st.empty() ? "0" : st.back();
}

bool FieldExpr::is_constant() const { return !program_->uses_radius && !program_->uses_cartesian; }
bool FieldExpr::uses_radius() const { return program_->uses_radius; }
bool FieldExpr::uses_cartesian() const { return program_->uses_cartesian; }
int FieldExpr::max_index() const { return program_->max_index; }

double default_fd_step(std::span<const double> point) {
  double r2 = 0.0;
  for (double c : point) r2 += c * c;
  return 1e-5 * (1.0 + std::sqrt(r2));
}

double differentiate_field(const FieldExpr& expr, std::span<const double> point, int direction, double step) {
  if (step <= 0.0) throw PreconditionError("differentiation step must be positive");
  std::array<double, 3> p{};
  const std::size_t d = point.size();
  for (std::size_t k = 0; k < d; ++k) p[k] = point[k];
  const std::span<const double> view(p.data(), d);
  p[direction] = point[direction] + step;
  const double fp = expr.eval(view);
  p[direction] = point[direction] - step;
  const double fm = expr.eval(view);
  return (fp - fm) / (2.0 * step);
}

}  // namespace hlab
