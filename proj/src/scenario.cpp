#include "hlab/scenario.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <sstream>

#include "hlab/errors.hpp"

namespace hlab {

std::string to_string(BoundaryCondition bc) {
  return bc == BoundaryCondition::Dirichlet ? "dirichlet" : "absorbing";
}

BoundaryCondition boundary_from_string(std::string_view text) {
  if (text == "dirichlet") return BoundaryCondition::Dirichlet;
  if (text == "absorbing") return BoundaryCondition::Absorbing;
  throw ConfigError("unknown boundary condition '" + std::string(text) + "'");
}

double Scenario::refraction(std::span<const double> x) const {
  if (n) return n->eval(x);
  return p_tilde ? lambda * (1.0 + p_tilde->eval(x)) : lambda;
}

double Scenario::p_tilde_at(std::span<const double> x) const {
  if (p_tilde) return p_tilde->eval(x);
  return n ? n->eval(x) / lambda - 1.0 : 0.0;
}

double Scenario::q_at(std::span<const double> x) const { return q_pot.eval(x); }

Vec3 Scenario::b_at(std::span<const double> x) const {
  Vec3 out{};
  for (std::size_t k = 0; k < b.size(); ++k) out[k] = b[k].eval(x);
  return out;
}

cplx Scenario::source_at(std::span<const double> x) const { return {source_re.eval(x), source_im.eval(x)}; }

bool Scenario::has_magnetic_potential() const {
  for (const auto& c : b) {
    if (!c.is_constant() || c.eval(std::span<const double>{}) != 0.0) return true;
  }
  return false;
}

namespace {

// Deterministic sample points in the box (never the origin).
std::vector<std::vector<double>> sample_points(int d, double half_width, int count) {
  std::vector<std::vector<double>> pts;
  std::uint64_t state = 0x9E3779B97F4A7C15ull;
  auto next = [&]() {
    state ^= state << 13;
    state ^= state >> 7;
    state ^= state << 17;
    return static_cast<double>(state >> 11) * 0x1.0p-53;
  };
  while (static_cast<int>(pts.size()) < count) {
    std::vector<double> p(d);
    double r2 = 0.0;
    for (auto& c : p) {
      c = (2.0 * next() - 1.0) * half_width;
      r2 += c * c;
    }
    if (r2 > 1e-6) pts.push_back(std::move(p));
  }
  return pts;
}

}  // namespace

void Scenario::validate() const {
  if (dimension != 2 && dimension != 3) throw ConfigError("dimension must be 2 or 3");
  if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(delta > 0.0 && delta <= 1.0)) throw ConfigError("delta must lie in (0, 1]");
  if (!(mu > 0.0)) throw ConfigError("mu must be positive");
  if (gamma_bound && !(*gamma_bound > 0.0)) throw ConfigError("gamma_bound must be positive");
  if (c_star && !(*c_star > 0.0)) throw ConfigError("c_star must be positive");
  if (!(r0 >= 1.0)) throw ConfigError("r0 must be >= 1");
  if (!(big_r0 >= 0.0)) throw ConfigError("big_r0 must be >= 0");
  if (!(half_width > 0.0)) throw ConfigError("half_width must be positive");
  if (points < 16) throw ConfigError("points must be >= 16");
  if (points % 2 == 0) throw ConfigError("points must be odd so that no grid node sits at the origin");
  if (static_cast<int>(b.size()) != dimension)
    throw ConfigError("b must have " + std::to_string(dimension) + " components");

  auto check_dim = [&](const FieldExpr& e, const char* name) {
    if (e.max_index() > dimension)
      throw ConfigError(std::string("field ") + name + " references a coordinate beyond dimension " +
                        std::to_string(dimension));
  };
  if (n) check_dim(*n, "n");
  if (p_tilde) check_dim(*p_tilde, "p_tilde");
  check_dim(q_pot, "q");
  for (const auto& c : b) check_dim(c, "b");
  check_dim(source_re, "f");
  check_dim(source_im, "f");
  if (n_inf) {
    check_dim(*n_inf, "n_inf");
    if (n_inf->uses_cartesian()) throw ConfigError("n_inf must depend on w1..wd only");
  }

  if (n && p_tilde) {
    for (const auto& p : sample_points(dimension, half_width, 64)) {
      const double lhs = n->eval(p);
      const double rhs = lambda * (1.0 + p_tilde->eval(p));
      if (std::abs(lhs - rhs) > 1e-12 * std::max(1.0, std::abs(lhs)))
        throw ConfigError("n and lambda (1 + p_tilde) disagree at a sample point");
    }
  }
}

// --- config document -------------------------------------------------------

namespace {

struct Item {
  std::string text;
  bool quoted = false;
  int column = 0;
};

struct Entry {
  std::vector<Item> items;
  int line = 0;
  int column = 0;
};

using Section = std::map<std::string, Entry>;

class DocParser {
 public:
  explicit DocParser(std::string_view text) : text_(text) {}

  std::map<std::string, Section> run() {
    std::map<std::string, Section> doc;
    std::string current;
    int line_no = 0;
    std::size_t start = 0;
    while (start <= text_.size()) {
      std::size_t end = text_.find('\n', start);
      if (end == std::string_view::npos) end = text_.size();
      ++line_no;
      parse_line(text_.substr(start, end - start), line_no, current, doc);
      start = end + 1;
    }
    return doc;
  }

 private:
  static bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r'; }

  void parse_line(std::string_view line, int line_no, std::string& current, std::map<std::string, Section>& doc) {
    std::size_t i = 0;
    auto skip = [&] {
      while (i < line.size() && is_space(line[i])) ++i;
    };
    skip();
    if (i >= line.size() || line[i] == '#') return;
    if (line[i] == '[') {
      const std::size_t close = line.find(']', i);
      if (close == std::string_view::npos) throw ConfigError("syntax error: missing ']'", line_no, static_cast<int>(i) + 1);
      current = std::string(line.substr(i + 1, close - i - 1));
      static const std::set<std::string> known{"scenario", "fields", "solver", "eikonal"};
      if (!known.count(current)) throw ConfigError("unknown section [" + current + "]", line_no, static_cast<int>(i) + 2);
      doc[current];
      i = close + 1;
      skip();
      if (i < line.size() && line[i] != '#')
        throw ConfigError("syntax error: trailing characters after section header", line_no, static_cast<int>(i) + 1);
      return;
    }
    const std::size_t key_start = i;
    while (i < line.size() && (std::isalnum(static_cast<unsigned char>(line[i])) || line[i] == '_')) ++i;
    if (i == key_start) throw ConfigError("syntax error: expected a key", line_no, static_cast<int>(i) + 1);
    const std::string key(line.substr(key_start, i - key_start));
    skip();
    if (i >= line.size() || line[i] != '=') throw ConfigError("syntax error: expected '='", line_no, static_cast<int>(i) + 1);
    ++i;
    if (current.empty()) throw ConfigError("key '" + key + "' outside of a section", line_no, static_cast<int>(key_start) + 1);
    Entry entry;
    entry.line = line_no;
    entry.column = static_cast<int>(key_start) + 1;
    for (;;) {
      skip();
      if (i >= line.size() || line[i] == '#') throw ConfigError("syntax error: expected a value", line_no, static_cast<int>(i) + 1);
      Item item;
      item.column = static_cast<int>(i) + 1;
      if (line[i] == '"') {
        const std::size_t close = line.find('"', i + 1);
        if (close == std::string_view::npos) throw ConfigError("syntax error: unterminated string", line_no, static_cast<int>(i) + 1);
        item.text = std::string(line.substr(i + 1, close - i - 1));
        item.quoted = true;
        i = close + 1;
      } else {
        const std::size_t s = i;
        while (i < line.size() && line[i] != ',' && line[i] != '#') ++i;
        std::size_t e = i;
        while (e > s && is_space(line[e - 1])) --e;
        item.text = std::string(line.substr(s, e - s));
        if (item.text.empty()) throw ConfigError("syntax error: empty value", line_no, static_cast<int>(s) + 1);
      }
      entry.items.push_back(std::move(item));
      skip();
      if (i < line.size() && line[i] == ',') {
        ++i;
        continue;
      }
      if (i < line.size() && line[i] != '#')
        throw ConfigError("syntax error: unexpected character '" + std::string(1, line[i]) + "'", line_no,
                          static_cast<int>(i) + 1);
      break;
    }
    auto& section = doc[current];
    if (section.count(key)) throw ConfigError("duplicate key " + key, line_no, entry.column);
    section.emplace(key, std::move(entry));
  }

  std::string_view text_;
};

double as_number(const Entry& e, const std::string& key) {
  if (e.items.size() != 1 || e.items[0].quoted) throw ConfigError("key " + key + " expects a number", e.line, e.column);
  const std::string& s = e.items[0].text;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || s.empty())
    throw ConfigError("key " + key + ": malformed number '" + s + "'", e.line, e.items[0].column);
  return v;
}

int as_int(const Entry& e, const std::string& key) {
  const double v = as_number(e, key);
  if (v != std::floor(v) || std::abs(v) > 1e9) throw ConfigError("key " + key + " expects an integer", e.line, e.column);
  return static_cast<int>(v);
}

bool as_bool(const Entry& e, const std::string& key) {
  if (e.items.size() == 1 && !e.items[0].quoted) {
    if (e.items[0].text == "true") return true;
    if (e.items[0].text == "false") return false;
  }
  throw ConfigError("key " + key + " expects true or false", e.line, e.column);
}

std::string as_word(const Entry& e, const std::string& key) {
  if (e.items.size() != 1) throw ConfigError("key " + key + " expects a single value", e.line, e.column);
  return e.items[0].text;
}

FieldExpr as_expr(const Item& item, const Entry& e, const std::string& key) {
  try {
    return FieldExpr::parse(item.text);
  } catch (const ConfigError& err) {
    // Shift the expression column into document coordinates.
    const int offset = item.quoted ? item.column : item.column - 1;
    throw ConfigError("key " + key + ": " + std::string(err.what()), e.line, offset + err.column());
  }
}

FieldExpr as_single_expr(const Entry& e, const std::string& key) {
  if (e.items.size() != 1) throw ConfigError("key " + key + " expects a single expression", e.line, e.column);
  return as_expr(e.items[0], e, key);
}

}  // namespace

void validate_config(const Config& cfg) {
  cfg.scenario.validate();
  const auto& es = cfg.eikonal;
  if (!(es.rho > 1.0)) throw ConfigError("eikonal rho must exceed 1");
  if (!(es.r_max > cfg.scenario.r0)) throw ConfigError("eikonal r_max must exceed r0");
  if (es.angles < 32 || es.angles_theta < 16 || es.angles_phi < 32 || es.angles_phi % 2 != 0)
    throw ConfigError("eikonal angular grid too coarse (angles >= 32; theta >= 16; even phi >= 32)");
  if (es.init != "default" && es.init != "one" && es.init != "saito")
    throw ConfigError("eikonal init must be default, one or saito");
  const auto& ss = cfg.solver;
  if (!(ss.tol > 1e-14 && ss.tol < 1e-2)) throw ConfigError("solver tol must lie in (1e-14, 1e-2)");
  if (ss.max_iter < 1 || ss.restart < 1) throw ConfigError("solver max_iter and restart must be positive");
  if (!(ss.eps_start > 0.0)) throw ConfigError("solver eps_start must be positive");
  if (!(ss.eps_factor > 0.0 && ss.eps_factor < 1.0)) throw ConfigError("solver eps_factor must lie in (0, 1)");
  if (ss.eps_count < 2) throw ConfigError("solver eps_count must be >= 2");
}

Config parse_config(std::string_view text) {
  const auto doc = DocParser(text).run();
  Config cfg;
  cfg.text = std::string(text);
  Scenario& s = cfg.scenario;

  using Handler = std::function<void(const Entry&, const std::string&)>;
  const std::map<std::string, std::map<std::string, Handler>> handlers{
      {"scenario",
       {
           {"dimension", [&](const Entry& e, const std::string& k) { s.dimension = as_int(e, k); }},
           {"lambda", [&](const Entry& e, const std::string& k) { s.lambda = as_number(e, k); }},
           {"epsilon", [&](const Entry& e, const std::string& k) { s.epsilon = as_number(e, k); }},
           {"delta", [&](const Entry& e, const std::string& k) { s.delta = as_number(e, k); }},
           {"mu", [&](const Entry& e, const std::string& k) { s.mu = as_number(e, k); }},
           {"gamma_bound", [&](const Entry& e, const std::string& k) { s.gamma_bound = as_number(e, k); }},
           {"c_star", [&](const Entry& e, const std::string& k) { s.c_star = as_number(e, k); }},
           {"r0", [&](const Entry& e, const std::string& k) { s.r0 = as_number(e, k); }},
           {"big_r0", [&](const Entry& e, const std::string& k) { s.big_r0 = as_number(e, k); }},
           {"half_width", [&](const Entry& e, const std::string& k) { s.half_width = as_number(e, k); }},
           {"points", [&](const Entry& e, const std::string& k) { s.points = as_int(e, k); }},
           {"boundary",
            [&](const Entry& e, const std::string& k) {
              try {
                s.boundary = boundary_from_string(as_word(e, k));
              } catch (const ConfigError& err) {
                throw ConfigError(err.what(), e.line, e.column);
              }
            }},
       }},
      {"fields",
       {
           {"n", [&](const Entry& e, const std::string& k) { s.n = as_single_expr(e, k); }},
           {"p_tilde", [&](const Entry& e, const std::string& k) { s.p_tilde = as_single_expr(e, k); }},
           {"q", [&](const Entry& e, const std::string& k) { s.q_pot = as_single_expr(e, k); }},
           {"n_inf", [&](const Entry& e, const std::string& k) { s.n_inf = as_single_expr(e, k); }},
           {"b",
            [&](const Entry& e, const std::string& k) {
              s.b.clear();
              for (const auto& it : e.items) s.b.push_back(as_expr(it, e, k));
            }},
           {"f",
            [&](const Entry& e, const std::string& k) {
              if (e.items.size() > 2) throw ConfigError("key f expects \"re\" or \"re\", \"im\"", e.line, e.column);
              s.source_re = as_expr(e.items[0], e, k);
              s.source_im = e.items.size() == 2 ? as_expr(e.items[1], e, k) : FieldExpr::constant(0.0);
            }},
       }},
      {"solver",
       {
           {"tol", [&](const Entry& e, const std::string& k) { cfg.solver.tol = as_number(e, k); }},
           {"max_iter", [&](const Entry& e, const std::string& k) { cfg.solver.max_iter = as_int(e, k); }},
           {"restart", [&](const Entry& e, const std::string& k) { cfg.solver.restart = as_int(e, k); }},
           {"method", [&](const Entry& e, const std::string& k) { cfg.solver.method = as_word(e, k); }},
           {"preconditioner", [&](const Entry& e, const std::string& k) { cfg.solver.preconditioner = as_word(e, k); }},
           {"shift", [&](const Entry& e, const std::string& k) { cfg.solver.shift = as_number(e, k); }},
           {"eps_start", [&](const Entry& e, const std::string& k) { cfg.solver.eps_start = as_number(e, k); }},
           {"eps_factor", [&](const Entry& e, const std::string& k) { cfg.solver.eps_factor = as_number(e, k); }},
           {"eps_count", [&](const Entry& e, const std::string& k) { cfg.solver.eps_count = as_int(e, k); }},
           {"warm_start", [&](const Entry& e, const std::string& k) { cfg.solver.warm_start = as_bool(e, k); }},
       }},
      {"eikonal",
       {
           {"p_tilde", [&](const Entry& e, const std::string& k) { cfg.eikonal.p_tilde = as_single_expr(e, k); }},
           {"r_max", [&](const Entry& e, const std::string& k) { cfg.eikonal.r_max = as_number(e, k); }},
           {"rho", [&](const Entry& e, const std::string& k) { cfg.eikonal.rho = as_number(e, k); }},
           {"angles", [&](const Entry& e, const std::string& k) { cfg.eikonal.angles = as_int(e, k); }},
           {"angles_theta", [&](const Entry& e, const std::string& k) { cfg.eikonal.angles_theta = as_int(e, k); }},
           {"angles_phi", [&](const Entry& e, const std::string& k) { cfg.eikonal.angles_phi = as_int(e, k); }},
           {"init", [&](const Entry& e, const std::string& k) { cfg.eikonal.init = as_word(e, k); }},
           {"margin", [&](const Entry& e, const std::string& k) { cfg.eikonal.margin = as_number(e, k); }},
       }},
  };

  bool have_lambda = false;
  bool have_b = false;
  bool have_f = false;
  for (const auto& [section, entries] : doc) {
    const auto& table = handlers.at(section);
    for (const auto& [key, entry] : entries) {
      auto it = table.find(key);
      if (it == table.end()) throw ConfigError("unknown key " + key + " in [" + section + "]", entry.line, entry.column);
      it->second(entry, key);
      if (section == "scenario" && key == "lambda") have_lambda = true;
      if (section == "fields" && key == "b") have_b = true;
      if (section == "fields" && key == "f") have_f = true;
    }
  }
  if (!have_lambda) throw ConfigError("missing key lambda");
  if (!have_b) s.b.assign(static_cast<std::size_t>(std::max(s.dimension, 0)), FieldExpr::constant(0.0));
  if (!have_f) {
    s.source_re = FieldExpr::constant(0.0);
    s.source_im = FieldExpr::constant(0.0);
  }
  validate_config(cfg);
  return cfg;
}

Scenario parse_scenario(std::string_view text) { return parse_config(text).scenario; }

// --- presets ---------------------------------------------------------------

std::vector<std::string> preset_names() { return {"free", "saito", "angular-index", "azimuthal-b", "coulomb-q"}; }

namespace {

// Shortest text that round-trips.
std::string num(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string gaussian_source(int d) {
  return d == 2 ? "\"exp(-(x1^2 + x2^2)/2)/(2*pi)\"" : "\"exp(-(x1^2 + x2^2 + x3^2)/2)/(2*pi)^1.5\"";
}

std::string zero_b(int d) { return d == 2 ? "\"0\", \"0\"" : "\"0\", \"0\", \"0\""; }

std::string azimuthal_b(int d, double s) {
  const std::string k = num(s);
  const std::string den = "(1 + r^2)";
  std::string out = "\"-" + k + "*x2/" + den + "\", \"" + k + "*x1/" + den + "\"";
  if (d == 3) out += ", \"0\"";
  return out;
}

}  // namespace

std::string preset_text(std::string_view name, int dimension, std::optional<double> lambda) {
  if (dimension != 2 && dimension != 3) throw ConfigError("dimension must be 2 or 3");
  std::ostringstream o;
  const int d = dimension;
  auto header = [&](double lam, double half_width, int points, double eps) {
    o << "[scenario]\n"
      << "dimension = " << d << "\n"
      << "lambda = " << num(lam) << "\n"
      << "epsilon = " << num(eps) << "\n"
      << "half_width = " << num(half_width) << "\n"
      << "points = " << points << "\n";
  };
  const int pts = d == 2 ? 129 : 65;
  if (name == "free") {
    const double lam = lambda.value_or(1.0);
    header(lam, 8.0, pts, 0.1);
    o << "\n[fields]\n"
      << "n = \"" << num(lam) << "\"\n"
      << "b = " << zero_b(d) << "\n"
      << "f = " << gaussian_source(d) << "\n"
      << "n_inf = \"" << num(lam) << "\"\n";
    o << "\n[eikonal]\np_tilde = \"0\"\ninit = \"one\"\n";
  } else if (name == "saito") {
    const double lam = lambda.value_or(2.0);
    if (!(lam > 1.0)) throw ConfigError("the saito preset needs lambda > 1");
    header(lam, 8.0, pts, 0.1);
    // p_tilde = -w1/lambda on |x| >= r0, smoothly tapered to 0 inside r0/2.
    o << "r0 = 1\n"
      << "\n[fields]\n"
      << "p_tilde = \"-w1/" << num(lam) << " * smoothstep(2*r - 1)\"\n"
      << "b = " << zero_b(d) << "\n"
      << "f = " << gaussian_source(d) << "\n"
      << "n_inf = \"" << num(lam) << " - w1\"\n";
    o << "\n[eikonal]\np_tilde = \"-w1/" << num(lam) << "\"\ninit = \"saito\"\nr_max = 1000\n";
  } else if (name == "angular-index") {
    const double lam = lambda.value_or(2.0);
    header(lam, 8.0, pts, 0.1);
    o << "\n[fields]\n"
      << "n = \"" << num(lam) << " + 0.5*w1\"\n"
      << "b = " << azimuthal_b(d, 0.05) << "\n"
      << "f = " << gaussian_source(d) << "\n"
      << "n_inf = \"" << num(lam) << " + 0.5*w1\"\n";
  } else if (name == "azimuthal-b") {
    const double lam = lambda.value_or(1.0);
    header(lam, 8.0, pts, 0.1);
    o << "\n[fields]\n"
      << "n = \"" << num(lam) << "\"\n"
      << "b = " << azimuthal_b(d, 0.1) << "\n"
      << "f = " << gaussian_source(d) << "\n"
      << "n_inf = \"" << num(lam) << "\"\n";
  } else if (name == "coulomb-q") {
    const double lam = lambda.value_or(1.0);
    header(lam, 8.0, pts, 0.1);
    o << "\n[fields]\n"
      << "n = \"" << num(lam) << "\"\n"
      << "q = \"0.5/r\"\n"
      << "b = " << zero_b(d) << "\n"
      << "f = " << gaussian_source(d) << "\n"
      << "n_inf = \"" << num(lam) << "\"\n";
  } else {
    throw ConfigError("unknown preset '" + std::string(name) + "'");
  }
  return o.str();
}

// --- magnetic field ----------------------------------------------------------

MagneticFieldData magnetic_field(const Scenario& scenario, std::span<const double> point) {
  const int d = scenario.dimension;
  if (static_cast<int>(point.size()) != d) throw PreconditionError("point dimension mismatch");
  MagneticFieldData out;
  out.dimension = d;
  const double h = default_fd_step(point);
  // db[j][k] = d_k b_j
  std::array<std::array<double, 3>, 3> db{};
  for (int j = 0; j < d; ++j)
    for (int k = 0; k < d; ++k) db[j][k] = differentiate_field(scenario.b[j], point, k, h);
  for (int j = 0; j < d; ++j) {
    for (int k = j + 1; k < d; ++k) {
      const double v = db[j][k] - db[k][j];
      out.b_matrix[j][k] = v;
      out.b_matrix[k][j] = -v;
    }
  }
  double r = 0.0;
  for (double c : point) r += c * c;
  r = std::sqrt(r);
  if (r == 0.0) throw DomainError("B_tau is undefined at the origin");
  for (int j = 0; j < d; ++j) {
    double s = 0.0;
    for (int k = 0; k < d; ++k) s += point[k] / r * out.b_matrix[k][j];
    out.b_tau[j] = s;
  }
  return out;
}

}  // namespace hlab
