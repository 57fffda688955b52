#pragma once

// Command drivers behind tools/sobtrace_cli: flat key=value configs, CSV
// output with a '#' header echoing the resolved config, PASS/FAIL audits.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sobtrace/errors.hpp"
#include "sobtrace/expansion.hpp"
#include "sobtrace/extremal.hpp"
#include "sobtrace/fit.hpp"
#include "sobtrace/mesh.hpp"
#include "sobtrace/oracle.hpp"
#include "sobtrace/shape.hpp"
#include "sobtrace/steklov.hpp"

namespace sobtrace::cli {

inline constexpr const char* kVersion = "sobtrace 0.1.0";

enum ExitCode : int { kOk = 0, kAuditFailed = 1, kUsageError = 2, kRuntimeError = 3 };

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"kp",     "verify-extremal", "expand",
                                              "oracle", "steklov",         "shapeopt"};
  return names;
}

using ConfigMap = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) out.push_back(trim(item));
  return out;
}

inline double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const std::string s = trim(text);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty() || !std::isfinite(v)) {
    throw ConfigError("config: " + key + " expects a finite number, got '" + text + "'");
  }
  return v;
}

inline long parse_integer(const std::string& key, const std::string& text) {
  long v = 0;
  const std::string s = trim(text);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError("config: " + key + " expects an integer, got '" + text + "'");
  }
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("config: " + key + " expects true or false, got '" + text + "'");
}

inline std::vector<double> parse_doubles(const std::string& key, const std::string& text) {
  std::vector<double> out;
  if (trim(text).empty()) return out;
  for (const std::string& item : split(text, ',')) out.push_back(parse_double(key, item));
  return out;
}

/// "3,4,5" or the inclusive range "3:8".
inline std::vector<int> parse_ints(const std::string& key, const std::string& text) {
  std::vector<int> out;
  const std::string s = trim(text);
  if (s.empty()) return out;
  if (const auto colon = s.find(':'); colon != std::string::npos) {
    const long lo = parse_integer(key, s.substr(0, colon));
    const long hi = parse_integer(key, s.substr(colon + 1));
    if (hi < lo || hi - lo > 1000) throw ConfigError("config: " + key + " has a bad range");
    for (long n = lo; n <= hi; ++n) out.push_back(static_cast<int>(n));
    return out;
  }
  for (const std::string& item : split(s, ',')) {
    out.push_back(static_cast<int>(parse_integer(key, item)));
  }
  return out;
}

inline std::string format(double v) {
  std::ostringstream os;
  os << std::setprecision(15) << v;
  return os.str();
}

template <typename T>
std::string join(const std::vector<T>& values) {
  std::ostringstream os;
  os << std::setprecision(15);
  for (std::size_t i = 0; i < values.size(); ++i) os << (i ? "," : "") << values[i];
  return os.str();
}

inline bool fem_command(const std::string& command) {
  return command == "steklov" || command == "shapeopt";
}

}  // namespace detail

/// Every accepted key with its default ("" = derived during resolution).
inline const ConfigMap& default_config() {
  static const ConfigMap defaults{
      {"N", ""},               // 3, or 2 for steklov / shapeopt
      {"p", "1.5"},
      {"N_list", ""},          // kp: list or range a:b; defaults to N
      {"p_list", ""},          // kp: defaults to p
      {"lambdas", ""},         // principal curvatures; defaults to N-1 zeros
      {"h0", "0"},
      {"one_sided", "true"},
      {"r", "1"},
      {"cutoff_inner", ""},    // r/4
      {"cutoff_outer", ""},    // r/2
      {"eps_min", "1e-3"},
      {"eps_max", "1e-2"},
      {"eps_per_decade", "8"},
      {"tolerance", "1e-6"},   // verify-extremal: norm tolerance
      {"quotient_tolerance", "1e-5"},
      {"oracle_tol", "1e-10"},
      {"max_cells", "500000"},
      {"shape", "disk"},
      {"resolution", "3"},
      {"mesh", ""},            // mesh file; overrides shape / resolution
      {"q", "critical"},
      {"h", "1"},
      {"seed", "0"},
      {"iterations", "5000"},
      {"restarts", ""},        // 0, or 4 for shapeopt
      {"alpha", "0,0.05,0.1,0.2,0.3"},
      {"alpha_units", "fraction"},  // fraction of |Omega| or absolute
      {"random_holes", "20"},
  };
  return defaults;
}

/// key=value lines; '#' starts a comment.
inline ConfigMap parse_config(std::istream& is) {
  ConfigMap out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (!out.emplace(key, detail::trim(line.substr(eq + 1))).second) {
      throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key " + key);
    }
  }
  return out;
}

inline void apply_override(ConfigMap& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string key = detail::trim(assignment.substr(0, eq));
  if (key.empty()) throw ConfigError("--set: empty key");
  cfg[key] = detail::trim(assignment.substr(eq + 1));
}

/// Fully validated settings; nothing is computed before this succeeds.
struct RunConfig {
  std::string command;
  int N = 3;
  double p = 1.5;
  std::vector<int> N_list;
  std::vector<double> p_list;
  BoundaryGeometry geometry;
  double r = 1.0;
  CutoffProfile cutoff;
  double eps_min = 1e-3, eps_max = 1e-2;
  int eps_per_decade = 8;
  double tolerance = 1e-6;
  double quotient_tolerance = 1e-5;
  OracleOptions oracle;
  MeshShape shape = MeshShape::kDisk;
  int resolution = 3;
  std::string mesh_path;
  std::optional<double> q;  // empty: critical exponent
  double h = 1.0;
  std::uint64_t seed = 0;
  int iterations = 5000;
  int restarts = 0;
  std::vector<double> alpha;
  bool alpha_fraction = true;
  int random_holes = 20;

  ProblemParams params() const { return ProblemParams(N, p); }
  double exponent_q() const { return q ? *q : params().critical_exponent(); }
  std::vector<double> epsilons() const { return epsilon_grid(eps_min, eps_max, eps_per_decade); }

  SolverOptions solver() const {
    SolverOptions o;
    o.max_iters = iterations;
    o.seed = seed;
    o.restarts = restarts;
    return o;
  }

  /// Resolved values, key order, as echoed into output headers.
  std::vector<std::pair<std::string, std::string>> echo() const {
    using detail::format;
    std::vector<std::pair<std::string, std::string>> out{
        {"N", std::to_string(N)},
        {"p", format(p)},
        {"N_list", detail::join(N_list)},
        {"p_list", detail::join(p_list)},
        {"lambdas", detail::join(geometry.lambdas)},
        {"h0", format(geometry.h0)},
        {"one_sided", geometry.one_sided ? "true" : "false"},
        {"r", format(r)},
        {"cutoff_inner", format(cutoff.inner)},
        {"cutoff_outer", format(cutoff.outer)},
        {"eps_min", format(eps_min)},
        {"eps_max", format(eps_max)},
        {"eps_per_decade", std::to_string(eps_per_decade)},
        {"tolerance", format(tolerance)},
        {"quotient_tolerance", format(quotient_tolerance)},
        {"oracle_tol", format(oracle.rel_tol)},
        {"max_cells", std::to_string(oracle.max_cells)},
        {"shape", to_string(shape)},
        {"resolution", std::to_string(resolution)},
        {"mesh", mesh_path},
        {"q", q ? format(*q) : "critical"},
        {"h", format(h)},
        {"seed", std::to_string(seed)},
        {"iterations", std::to_string(iterations)},
        {"restarts", std::to_string(restarts)},
        {"alpha", detail::join(alpha)},
        {"alpha_units", alpha_fraction ? "fraction" : "absolute"},
        {"random_holes", std::to_string(random_holes)},
    };
    return out;
  }
};

inline RunConfig resolve_config(const std::string& command, const ConfigMap& given) {
  const auto& names = command_names();
  if (std::find(names.begin(), names.end(), command) == names.end()) {
    throw ConfigError("unknown command '" + command + "'");
  }
  for (const auto& [key, value] : given) {
    if (!default_config().count(key)) throw ConfigError("config: unknown key '" + key + "'");
  }
  auto get = [&](const std::string& key) {
    const auto it = given.find(key);
    return it != given.end() ? it->second : default_config().at(key);
  };
  using namespace detail;
  RunConfig c;
  c.command = command;
  const std::string n_text = get("N");
  c.N = n_text.empty() ? (fem_command(command) ? 2 : 3)
                       : static_cast<int>(parse_integer("N", n_text));
  c.p = parse_double("p", get("p"));
  c.N_list = parse_ints("N_list", get("N_list"));
  if (c.N_list.empty()) c.N_list = {c.N};
  c.p_list = parse_doubles("p_list", get("p_list"));
  if (c.p_list.empty()) c.p_list = {c.p};
  c.geometry.lambdas = parse_doubles("lambdas", get("lambdas"));
  if (c.geometry.lambdas.empty() && c.N >= 2) {
    c.geometry.lambdas.assign(static_cast<std::size_t>(c.N - 1), 0.0);
  }
  c.geometry.h0 = parse_double("h0", get("h0"));
  c.geometry.one_sided = parse_bool("one_sided", get("one_sided"));
  c.r = parse_double("r", get("r"));
  const std::string ci = get("cutoff_inner"), co = get("cutoff_outer");
  c.cutoff = CutoffProfile{ci.empty() ? c.r / 4.0 : parse_double("cutoff_inner", ci),
                           co.empty() ? c.r / 2.0 : parse_double("cutoff_outer", co), true};
  c.eps_min = parse_double("eps_min", get("eps_min"));
  c.eps_max = parse_double("eps_max", get("eps_max"));
  c.eps_per_decade = static_cast<int>(parse_integer("eps_per_decade", get("eps_per_decade")));
  c.tolerance = parse_double("tolerance", get("tolerance"));
  c.quotient_tolerance = parse_double("quotient_tolerance", get("quotient_tolerance"));
  c.oracle.rel_tol = parse_double("oracle_tol", get("oracle_tol"));
  c.oracle.max_cells = parse_integer("max_cells", get("max_cells"));
  c.shape = parse_mesh_shape(get("shape"));
  c.resolution = static_cast<int>(parse_integer("resolution", get("resolution")));
  c.mesh_path = get("mesh");
  const std::string q_text = get("q");
  if (q_text != "critical") c.q = parse_double("q", q_text);
  c.h = parse_double("h", get("h"));
  const long seed = parse_integer("seed", get("seed"));
  if (seed < 0) throw ConfigError("config: seed must be >= 0");
  c.seed = static_cast<std::uint64_t>(seed);
  c.iterations = static_cast<int>(parse_integer("iterations", get("iterations")));
  const std::string restarts = get("restarts");
  c.restarts = restarts.empty() ? (command == "shapeopt" ? default_shape_solver().restarts : 0)
                                : static_cast<int>(parse_integer("restarts", restarts));
  c.alpha = parse_doubles("alpha", get("alpha"));
  const std::string units = get("alpha_units");
  if (units != "fraction" && units != "absolute") {
    throw ConfigError("config: alpha_units must be fraction or absolute");
  }
  c.alpha_fraction = units == "fraction";
  c.random_holes = static_cast<int>(parse_integer("random_holes", get("random_holes")));

  // Range checks for what the command will touch.
  if (command == "kp") {
    for (int n : c.N_list) {
      if (n < 2) throw ConfigError("config: N_list entries must be >= 2");
    }
  } else {
    (void)c.params();  // throws DomainError on invalid (N, p)
  }
  if (command == "verify-extremal" || command == "oracle") {
    if (c.N > 4) throw ConfigError("config: " + command + " needs N <= 4");
  }
  if (command == "expand" || command == "oracle") {
    sobtrace::detail::check_geometry(c.params(), c.geometry);
    if (!(c.eps_min > 0.0) || !(c.eps_max > c.eps_min) || c.eps_per_decade < 1) {
      throw ConfigError("config: need 0 < eps_min < eps_max and eps_per_decade >= 1");
    }
  }
  if (command == "oracle") {
    ModelDomain dom(c.N, c.geometry.lambdas, c.r);
    dom.cutoff = c.cutoff;
    dom.validate();
    if (c.epsilons().size() < 5) {
      throw ConfigError("config: the oracle fit needs at least 5 epsilon values");
    }
    if (!(c.oracle.rel_tol > 0.0) || c.oracle.max_cells < 1) {
      throw ConfigError("config: oracle_tol must be > 0 and max_cells >= 1");
    }
  }
  if (command == "verify-extremal" && !(c.tolerance > 0.0 && c.quotient_tolerance > 0.0)) {
    throw ConfigError("config: tolerances must be > 0");
  }
  if (detail::fem_command(command)) {
    if (c.N != 2) throw ConfigError("config: " + command + " is planar, need N = 2");
    sobtrace::detail::check_exponents(c.params(), c.exponent_q());
    if (c.mesh_path.empty() && (c.resolution < 1 || c.resolution > 12)) {
      throw ConfigError("config: resolution must be in 1..12");
    }
    if (c.iterations < 1 || c.restarts < 0) {
      throw ConfigError("config: iterations must be >= 1 and restarts >= 0");
    }
  }
  if (command == "shapeopt") {
    if (c.alpha.empty()) throw ConfigError("config: alpha grid is empty");
    for (double a : c.alpha) {
      if (a < 0.0) throw ConfigError("config: alpha must be >= 0");
      if (c.alpha_fraction && a >= 1.0) throw ConfigError("config: alpha fraction must be < 1");
    }
    if (c.random_holes < 0) throw ConfigError("config: random_holes must be >= 0");
  }
  return c;
}

inline void write_header(std::ostream& os, const RunConfig& cfg) {
  os << "# " << kVersion << '\n' << "# command=" << cfg.command << '\n';
  for (const auto& [key, value] : cfg.echo()) os << "# " << key << '=' << value << '\n';
}

/// PASS/FAIL lines collected during a run and appended to its output.
class AuditLog {
 public:
  void add(const std::string& name, bool pass, const std::string& detail) {
    entries_.push_back({name, pass, detail});
  }
  bool all_pass() const {
    return std::all_of(entries_.begin(), entries_.end(), [](const Entry& e) { return e.pass; });
  }
  void write(std::ostream& os) const {
    for (const Entry& e : entries_) {
      os << "# audit " << e.name << ": " << (e.pass ? "PASS" : "FAIL") << " (" << e.detail << ")\n";
    }
  }
  int exit_code() const { return all_pass() ? kOk : kAuditFailed; }

 private:
  struct Entry {
    std::string name;
    bool pass;
    std::string detail;
  };
  std::vector<Entry> entries_;
};

namespace detail {

inline double rel_diff(double a, double b) {
  return b == 0.0 ? std::abs(a) : std::abs(a - b) / std::abs(b);
}

inline std::string to_string(Side s) {
  switch (s) {
    case Side::kBelow: return "below";
    case Side::kEqual: return "equal";
    case Side::kAbove: return "above";
  }
  return "unknown";
}

inline Mesh load_mesh(const RunConfig& cfg) {
  if (cfg.mesh_path.empty()) return generate_mesh(cfg.shape, cfg.resolution);
  std::ifstream in(cfg.mesh_path);
  if (!in) throw ConfigError("cannot open mesh file " + cfg.mesh_path);
  return read_mesh(in);
}

}  // namespace detail

/// Rows N,p,Kp_inverse,Kp_inverse_from_norms,rel_diff over N_list x p_list.
inline int run_kp(const RunConfig& cfg, std::ostream& out) {
  AuditLog audits;
  std::ostringstream body;
  body << std::setprecision(15) << "N,p,Kp_inverse,Kp_inverse_from_norms,rel_diff\n";
  double worst = 0.0;
  int rows = 0;
  for (int N : cfg.N_list) {
    for (double p : cfg.p_list) {
      if (!(p > 1.0) || !(p < N)) {
        body << "# skipped N=" << N << ",p=" << p << ": "
             << (p > 1.0 ? "p must be < N" : "p must be > 1") << '\n';
        continue;
      }
      const ProblemParams pp(N, p);
      const double direct = kp_inverse(pp), ratio = kp_inverse_from_norms(pp);
      const double d = detail::rel_diff(ratio, direct);
      worst = std::max(worst, d);
      ++rows;
      body << N << ',' << p << ',' << direct << ',' << ratio << ',' << d << '\n';
    }
  }
  audits.add("identity_self_check", worst <= 1e-12,
             "max rel_diff " + detail::format(worst) + " <= 1e-12 over " + std::to_string(rows) +
                 " rows");
  write_header(out, cfg);
  out << body.str();
  audits.write(out);
  return audits.exit_code();
}

/// Quadrature of the extremal norms against their closed forms.
inline int run_verify_extremal(const RunConfig& cfg, std::ostream& out) {
  const ProblemParams pp = cfg.params();
  AuditLog audits;
  std::ostringstream body;
  body << std::setprecision(15) << "check,numeric,reference,rel_err,tolerance,status\n";
  auto row = [&](const std::string& name, double numeric, double reference, double tol) {
    const double e = detail::rel_diff(numeric, reference);
    const bool pass = e <= tol;
    body << name << ',' << numeric << ',' << reference << ',' << e << ',' << tol << ','
         << (pass ? "PASS" : "FAIL") << '\n';
    audits.add(name, pass, "rel_err " + detail::format(e) + " <= " + detail::format(tol));
  };
  const double qtol = std::min(1e-9, 0.01 * cfg.tolerance);
  try {
    const TruncatedIntegral b = extremal_boundary_norm_numeric(pp, qtol, cfg.oracle.max_cells);
    const TruncatedIntegral g = extremal_gradient_norm_numeric(pp, qtol, cfg.oracle.max_cells);
    const double bval = b.quadrature.value, gval = g.quadrature.value;
    row("boundary_norm", bval, boundary_norm_Lpstar(pp), cfg.tolerance);
    row("gradient_norm", gval, gradient_norm_Lp(pp), cfg.tolerance);
    row("flat_quotient", gval / std::pow(bval, pp.p() / pp.critical_exponent()), kp_inverse(pp),
        cfg.quotient_tolerance);
  } catch (const BudgetError& e) {
    audits.add("quadrature_budget", false,
               std::string(e.what()) + "; partial " + detail::format(e.value()) + " after " +
                   std::to_string(e.cells()) + " cells");
  }
  // Central differences of U against the analytic gradient.
  double worst = 0.0;
  const double step = 1e-6;
  for (const double t : {0.0, 0.3, 1.7}) {
    for (const double y1 : {0.0, 0.4, -2.5}) {
      HalfSpacePoint pt{std::vector<double>(static_cast<std::size_t>(pp.N() - 1), 0.5 * y1), t};
      pt.y[0] = y1;
      const std::vector<double> grad = eval_grad_U(pp, pt);
      for (std::size_t k = 0; k < grad.size(); ++k) {
        HalfSpacePoint plus = pt, minus = pt;
        double h = step;
        if (k + 1 == grad.size()) {
          plus.t += h;
          if (pt.t >= h) {
            minus.t -= h;
          } else {
            h *= 0.5;  // one-sided at t = 0: second-order forward formula below
          }
        } else {
          plus.y[k] += h;
          minus.y[k] -= h;
        }
        double fd = 0.0;
        if (k + 1 == grad.size() && pt.t < step) {
          HalfSpacePoint p1 = pt, p2 = pt;
          p1.t += step;
          p2.t += 2.0 * step;
          fd = (-3.0 * eval_U(pp, pt) + 4.0 * eval_U(pp, p1) - eval_U(pp, p2)) / (2.0 * step);
        } else {
          fd = (eval_U(pp, plus) - eval_U(pp, minus)) / (2.0 * h);
        }
        const double scale = std::max(std::abs(grad[k]), 1e-3 * std::abs(eval_U(pp, pt)));
        worst = std::max(worst, std::abs(fd - grad[k]) / scale);
      }
    }
  }
  body << "gradient_finite_difference," << worst << ",0," << worst << ",1e-6,"
       << (worst <= 1e-6 ? "PASS" : "FAIL") << '\n';
  audits.add("gradient_finite_difference", worst <= 1e-6,
             "max scaled error " + detail::format(worst) + " <= 1e-6");
  write_header(out, cfg);
  out << body.str();
  audits.write(out);
  return audits.exit_code();
}

/// Coefficients, regime labels, good-point verdict and predicted curve as
/// section,name,value rows.
inline int run_expand(const RunConfig& cfg, std::ostream& out) {
  const ProblemParams pp = cfg.params();
  const BoundaryGeometry& geom = cfg.geometry;
  std::ostringstream body;
  body << std::setprecision(15) << "section,name,value\n";
  body << "params,critical_exponent," << pp.critical_exponent() << '\n'
       << "params,kp_inverse," << kp_inverse(pp) << '\n'
       << "params,mean_curvature," << geom.mean_curvature() << '\n';
  const RegimeLabel label = classify_regime(pp);
  body << "regime,gradient," << to_string(label.gradient_regime) << '\n'
       << "regime,mass," << to_string(label.mass_regime) << '\n'
       << "regime,boundary," << to_string(label.boundary_regime) << '\n'
       << "regime,combined," << to_string(label.combined_regime) << '\n';
  const RemainderOrder rem = expansion_remainder(pp);
  body << "remainder,exponent," << rem.exponent << '\n'
       << "remainder,logarithmic," << (rem.logarithmic ? "true" : "false") << '\n'
       << "remainder,little_o," << (rem.little_o ? "true" : "false") << '\n';
  try {
    const ExpansionCoefficients co = coefficients(pp, geom);
    auto opt = [&](const char* name, const std::optional<double>& v) {
      if (v) body << "coefficient," << name << ',' << *v + 0.0 << '\n';
    };
    body << "coefficient,A1," << co.A1 << '\n';
    opt("A2", co.A2);
    opt("A2prime", co.A2prime);
    opt("A3", co.A3);
    body << "coefficient,B1," << co.B1 << '\n' << "coefficient,B2," << co.B2 + 0.0 << '\n';
    opt("B3", co.B3);
    opt("B4", co.B4);
    opt("D", co.D);
    opt("E", co.E);
    body << "coefficient,cNp," << co.cNp << '\n';
  } catch (const RegimeError& e) {
    body << "# coefficients: " << e.what() << '\n';
  }
  try {
    const double c1 = first_order_coefficient(pp, geom);
    body << "expansion,first_order," << c1 << '\n';
  } catch (const RegimeError& e) {
    body << "# first_order: " << e.what() << '\n';
  }
  try {
    const double e2 = second_order_E(pp, geom);
    body << "expansion,second_order_E," << e2 << '\n';
  } catch (const RegimeError& e) {
    body << "# second_order_E: " << e.what() << '\n';
  }
  try {
    const GoodPointVerdict v = is_good_point(pp, geom);
    body << "verdict,good_point," << (v.good ? "true" : "false") << '\n'
         << "verdict,reason,\"" << v.reason << "\"\n";
  } catch (const RegimeError& e) {
    body << "verdict,good_point,not_applicable\n"
         << "verdict,reason,\"" << e.what() << "\"\n";
  }
  for (double eps : cfg.epsilons()) {
    body << "curve," << eps << ',' << rayleigh_expansion(pp, geom, eps) << '\n';
  }
  write_header(out, cfg);
  out << body.str();
  return kOk;
}

/// epsilon,gradient,mass,boundary,quotient,predicted_quotient over the eps grid
/// (quotient normalized by K_p^{-1}), with a fit summary and audits.
inline int run_oracle(const RunConfig& cfg, std::ostream& out) {
  const ProblemParams pp = cfg.params();
  const BoundaryGeometry& geom = cfg.geometry;
  ModelDomain dom(cfg.N, geom.lambdas, cfg.r);
  dom.cutoff = cfg.cutoff;
  const Potential h{geom.h0, {}};
  AuditLog audits;
  std::ostringstream body;
  body << std::setprecision(15)
       << "epsilon,gradient,mass,boundary,quotient,predicted_quotient\n";
  std::vector<FitSample> samples;
  bool budget_ok = true;
  for (double eps : cfg.epsilons()) {
    auto guarded = [&](const char* name, auto&& integrate) {
      try {
        return integrate().value;
      } catch (const BudgetError& e) {
        budget_ok = false;
        body << "# budget exhausted: epsilon=" << eps << " term=" << name
             << " partial=" << e.value() << " error_estimate=" << e.error_estimate() << '\n';
        return e.value();
      }
    };
    const double g = guarded("gradient", [&] { return integrate_gradient_term(dom, pp, eps, cfg.oracle); });
    const double m = guarded("mass", [&] { return integrate_mass_term(dom, pp, h, eps, cfg.oracle); });
    const double b = guarded("boundary", [&] { return integrate_boundary_term(dom, pp, eps, cfg.oracle); });
    const double q = (g + m) / std::pow(b, pp.p() / pp.critical_exponent()) / kp_inverse(pp);
    double predicted = std::numeric_limits<double>::quiet_NaN();
    try {
      predicted = rayleigh_expansion(pp, geom, eps);
    } catch (const RegimeError&) {
    }
    samples.push_back({eps, q});
    body << eps << ',' << g << ',' << m << ',' << b << ',' << q << ',' << predicted << '\n';
  }
  audits.add("quadrature_budget", budget_ok, "every integral reached oracle_tol");

  const bool below_critical =
      compare_threshold(pp.p(), RegimeThresholds(pp.N()).critical) == Side::kBelow;
  std::vector<double> exps{0.0, 1.0, 2.0};
  const bool flat = geom.mean_curvature() == 0.0 && geom.sum_squares() == 0.0;
  if (geom.h0 != 0.0 && pp.p() < 2.0 && pp.p() > 1.0) exps = {0.0, 1.0, pp.p(), 2.0};
  try {
    const FitResult fit = fit_expansion(samples, exps);
    body << "# fit quotient ~ sum c_k eps^e_k, e = " << detail::join(exps) << '\n'
         << "# fit coefficients " << detail::join(fit.coefficients) << '\n'
         << "# fit residual " << detail::format(fit.residual) << '\n';
    if (flat && geom.h0 == 0.0) {
      const double d = std::abs(fit.coefficients[0] - 1.0);
      audits.add("flat_limit", d <= 1e-3, "|c0 - 1| = " + detail::format(d) + " <= 1e-3");
    }
    if (below_critical && geom.h0 == 0.0 && geom.mean_curvature() != 0.0) {
      const double c1 = first_order_coefficient(pp, geom);
      const double e = detail::rel_diff(fit.coefficients[1], c1);
      body << "# predicted first-order coefficient " << detail::format(c1) << '\n';
      audits.add("first_order_slope", e <= 0.05,
                 "fitted " + detail::format(fit.coefficients[1]) + " vs " + detail::format(c1) +
                     ", rel_err " + detail::format(e) + " <= 0.05");
    }
  } catch (const ConditioningError& e) {
    audits.add("fit", false, e.what());
  }
  if (below_critical && is_good_point(pp, geom).good) {
    double worst = -std::numeric_limits<double>::infinity();
    for (const FitSample& s : samples) worst = std::max(worst, s.value);
    audits.add("good_point_below_one", worst < 1.0, "max quotient " + detail::format(worst) + " < 1");
  }
  write_header(out, cfg);
  out << body.str();
  audits.write(out);
  return audits.exit_code();
}

/// Solution CSV vertex_index,x,y,u after a summary of lambda, residual, the
/// u = 1 bound and the criticality verdict.
inline int run_steklov(const RunConfig& cfg, std::ostream& out) {
  const Mesh mesh = detail::load_mesh(cfg);
  const ProblemParams pp = cfg.params();
  const double q = cfg.exponent_q();
  const PotentialField h = PotentialField::constant(mesh, cfg.h);
  const std::vector<double> ones(mesh.num_vertices(), 1.0);
  const double bound = rayleigh_quotient(mesh, ones, pp, h, q);
  AuditLog audits;
  std::ostringstream summary;
  summary << std::setprecision(15);
  EigenSolution sol;
  try {
    sol = minimize(mesh, pp, h, q, cfg.solver());
    audits.add("converged", true, std::to_string(sol.iterations) + " iterations");
  } catch (const IterationError& e) {
    sol.lambda = e.best_value();
    sol.dofs = e.best_dofs();
    sol.exponent_q = q;
    audits.add("converged", false, e.what());
  }
  const double residual = el_residual(mesh, sol, pp, h, q);
  summary << "# lambda=" << sol.lambda << '\n'
          << "# residual=" << residual << '\n'
          << "# iterations=" << sol.iterations << '\n'
          << "# constant_bound=" << bound << '\n'
          << "# exponent_q=" << q << '\n';
  if (std::abs(q - pp.critical_exponent()) <= 1e-12 * pp.critical_exponent()) {
    const CriticalityReport rep = compare_to_threshold(sol.lambda, kp_inverse(pp));
    summary << "# kp_inverse=" << rep.kp_inverse << '\n'
            << "# criticality=" << detail::to_string(rep.side) << " (margin " << rep.margin << ")\n";
  }
  audits.add("below_constant_bound", sol.lambda <= bound,
             detail::format(sol.lambda) + " <= " + detail::format(bound));
  audits.add("residual", residual <= SolverOptions{}.residual_tol,
             detail::format(residual) + " <= " + detail::format(SolverOptions{}.residual_tol));
  write_header(out, cfg);
  out << summary.str();
  write_solution_csv(out, mesh, sol.dofs);
  audits.write(out);
  return audits.exit_code();
}

/// Receives each optimized hole (index into cfg.alpha) for export.
using HoleSink = std::function<void(std::size_t, const ShapeRunRecord&)>;

/// alpha,lambda_alpha rows plus random-hole baselines and audits.
inline int run_shapeopt(const RunConfig& cfg, std::ostream& out, const HoleSink& sink = {}) {
  const Mesh mesh = detail::load_mesh(cfg);
  const ProblemParams pp = cfg.params();
  const double q = cfg.exponent_q();
  const PotentialField h = PotentialField::constant(mesh, cfg.h);
  const double area = mesh.area();
  std::vector<double> alphas;
  for (double a : cfg.alpha) alphas.push_back(cfg.alpha_fraction ? a * area : a);
  for (double a : alphas) {
    if (a >= area) throw ConfigError("config: alpha " + detail::format(a) + " >= mesh area");
  }
  ShapeOptions opts;
  opts.solver = cfg.solver();
  AuditLog audits;
  std::vector<ShapeRunRecord> runs;
  try {
    runs = alpha_sweep(mesh, alphas, pp, h, q, opts);
  } catch (const IterationError& e) {
    write_header(out, cfg);
    audits.add("converged", false, e.what());
    audits.write(out);
    return audits.exit_code();
  }
  std::mt19937_64 rng(cfg.seed);
  std::vector<double> random_min(alphas.size(), std::numeric_limits<double>::infinity());
  bool dominance = true;
  int baseline_failures = 0;
  for (std::size_t k = 0; k < alphas.size(); ++k) {
    if (runs[k].best_hole.empty()) continue;
    for (int i = 0; i < cfg.random_holes; ++i) {
      const HoleSet hole = random_hole(mesh, alphas[k], rng, opts.protected_elements);
      double lam = 0.0;
      try {
        lam = solve_with_hole(mesh, hole, pp, h, q, opts.solver).lambda;
      } catch (const IterationError& e) {
        lam = e.best_value();  // an upper bound for the hole's minimum
        ++baseline_failures;
      } catch (const InfeasibleError&) {
        continue;
      }
      random_min[k] = std::min(random_min[k], lam);
    }
    dominance &= runs[k].lambda_alpha <= random_min[k] * (1.0 + 1e-9);
  }
  std::ostringstream body;
  body << std::setprecision(15)
       << "alpha,lambda_alpha,hole_measure,hole_elements,outer_iterations,stabilized,random_hole_min\n";
  for (std::size_t k = 0; k < alphas.size(); ++k) {
    const ShapeRunRecord& r = runs[k];
    body << alphas[k] << ',' << r.lambda_alpha << ',' << r.best_hole.measure << ','
         << r.best_hole.element_indices.size() << ',' << r.history.size() << ','
         << (r.stabilized ? "true" : "false") << ',';
    if (std::isfinite(random_min[k])) {
      body << random_min[k];
    } else {
      body << "nan";
    }
    body << '\n';
    if (sink) sink(k, r);
  }
  std::vector<std::size_t> order(alphas.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return alphas[a] < alphas[b]; });
  bool monotone = true;
  for (std::size_t i = 1; i < order.size(); ++i) {
    monotone &= runs[order[i]].lambda_alpha >= runs[order[i - 1]].lambda_alpha;
  }
  audits.add("monotone_in_alpha", monotone, "lambda(alpha) non-decreasing over the grid");
  for (std::size_t k = 0; k < alphas.size(); ++k) {
    if (alphas[k] != 0.0) continue;
    const double plain = minimize(mesh, pp, h, q, opts.solver).lambda;
    audits.add("zero_alpha_is_plain", runs[k].lambda_alpha == plain,
               detail::format(runs[k].lambda_alpha) + " == " + detail::format(plain));
    break;
  }
  if (cfg.random_holes > 0) {
    audits.add("dominates_random_holes", dominance,
               std::to_string(cfg.random_holes) + " random holes per alpha" +
                   (baseline_failures ? ", " + std::to_string(baseline_failures) +
                                            " baseline solves unconverged"
                                      : ""));
  }
  write_header(out, cfg);
  out << body.str();
  audits.write(out);
  return audits.exit_code();
}

/// Dispatches by cfg.command.
inline int run_command(const RunConfig& cfg, std::ostream& out, const HoleSink& sink = {}) {
  if (cfg.command == "kp") return run_kp(cfg, out);
  if (cfg.command == "verify-extremal") return run_verify_extremal(cfg, out);
  if (cfg.command == "expand") return run_expand(cfg, out);
  if (cfg.command == "oracle") return run_oracle(cfg, out);
  if (cfg.command == "steklov") return run_steklov(cfg, out);
  if (cfg.command == "shapeopt") return run_shapeopt(cfg, out, sink);
  throw ConfigError("unknown command '" + cfg.command + "'");
}

}  // namespace sobtrace::cli
