#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "almgren/asymptotics.hpp"
#include "almgren/frequency.hpp"
#include "almgren/inequalities.hpp"

namespace almgren {

inline constexpr int kReportSchemaVersion = 1;
inline constexpr const char* kToolVersion = "1.0.0";

struct GridSpec {
  int intervals = 400;
  double r_min_ratio = 1e-6;  // r_min / R interior, R / r_max exterior
  int truncation = 0;         // angular Galerkin truncation J; 0 selects the default
};

struct CheckToggles {
  bool frequency = true;
  bool asymptotics = true;
  bool identities = true;
  bool kelvin = false;
  std::vector<std::string> inequalities;
  int sweep_count = 50;
};

struct OutputPaths {
  std::string report = "report.json";
  std::string trace = "trace.csv";
};

/// Validated run configuration. Complex values are read as a number or [re, im].
struct Scenario {
  std::string name = "scenario";
  int dimension = 2;
  PotentialDescriptor potential;
  Side side = Side::interior;
  cplx c = 0.0;
  double eps = 1.0;
  std::map<int, cplx> factor_trig;                   // empty with factor_harmonics means f = 1
  std::map<std::pair<int, int>, cplx> factor_harmonics;
  double R = 1.0;
  std::vector<BoundaryDatum> boundary{{1, 1.0}};
  GridSpec grid;
  int eigen_count = 8;
  std::vector<double> radii;
  CheckToggles checks;
  std::uint64_t seed = 42;
  OutputPaths outputs;

  int truncation() const {
    if (grid.truncation > 0) return grid.truncation;
    return dimension == 2 ? 32 : 12;
  }
  PerturbationSpec perturbation() const {
    PerturbationSpec h;
    h.c = c;
    h.eps = eps;
    h.side = side;
    if (!factor_trig.empty()) h.factor = AngularFunction::trig(factor_trig);
    if (!factor_harmonics.empty()) h.factor = AngularFunction::harmonics(factor_harmonics);
    return h;
  }
  LogGrid radial_grid() const {
    return side == Side::interior ? LogGrid(R * grid.r_min_ratio, R, grid.intervals)
                                  : LogGrid(R, R / grid.r_min_ratio, grid.intervals);
  }
};

inline const std::vector<std::string>& verification_checks() {
  static const std::vector<std::string> names{"hardy",    "diamagnetic",      "hardy2d", "mu1",
                                              "pohozaev", "height_derivative", "kelvin"};
  return names;
}

inline const std::vector<std::string>& inequality_checks() {
  static const std::vector<std::string> names{"hardy", "diamagnetic", "hardy2d", "mu1"};
  return names;
}

namespace detail {

using nlohmann::json;

inline std::string join(const std::vector<std::string>& v, const char* sep = ", ") {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + v[i];
  return s;
}

[[noreturn]] inline void invalid(const std::string& where, const std::string& what) {
  throw Error(ErrorKind::validation_error, where + ": " + what);
}

inline void allow_keys(const json& obj, const std::vector<std::string>& keys, const std::string& where) {
  if (!obj.is_object()) invalid(where, "expected an object");
  for (const auto& [k, v] : obj.items())
    if (std::find(keys.begin(), keys.end(), k) == keys.end())
      invalid(where, "unknown key '" + k + "' (expected one of " + join(keys) + ")");
}

inline double number(const json& v, const std::string& where) {
  if (!v.is_number()) invalid(where, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) invalid(where, "must be finite");
  return x;
}

inline int integer(const json& v, const std::string& where) {
  if (!v.is_number_integer()) invalid(where, "expected an integer");
  return v.get<int>();
}

inline cplx complex_value(const json& v, const std::string& where) {
  if (v.is_number()) return number(v, where);
  if (v.is_array() && v.size() == 2) return {number(v[0], where + "[0]"), number(v[1], where + "[1]")};
  invalid(where, "expected a number or [re, im]");
}

inline json complex_json(cplx z) {
  return z.imag() == 0.0 ? json(z.real()) : json::array({z.real(), z.imag()});
}

inline std::map<int, cplx> trig_entries(const json& v, const std::string& where) {
  if (!v.is_array()) invalid(where, "expected an array of {n, value}");
  std::map<int, cplx> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string at = where + "[" + std::to_string(i) + "]";
    allow_keys(v[i], {"n", "value"}, at);
    if (!v[i].contains("n") || !v[i].contains("value")) invalid(at, "needs n and value");
    out[integer(v[i]["n"], at + ".n")] += complex_value(v[i]["value"], at + ".value");
  }
  return out;
}

inline std::map<std::pair<int, int>, cplx> harmonic_entries(const json& v, const std::string& where) {
  if (!v.is_array()) invalid(where, "expected an array of {l, m, value}");
  std::map<std::pair<int, int>, cplx> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string at = where + "[" + std::to_string(i) + "]";
    allow_keys(v[i], {"l", "m", "value"}, at);
    if (!v[i].contains("l") || !v[i].contains("m") || !v[i].contains("value"))
      invalid(at, "needs l, m and value");
    const int l = integer(v[i]["l"], at + ".l"), m = integer(v[i]["m"], at + ".m");
    if (l < 0 || std::abs(m) > l) invalid(at, "harmonic index requires |m| <= l");
    out[{l, m}] += complex_value(v[i]["value"], at + ".value");
  }
  return out;
}

inline json trig_json(const std::map<int, cplx>& m) {
  json a = json::array();
  for (const auto& [n, c] : m) a.push_back({{"n", n}, {"value", complex_json(c)}});
  return a;
}

inline json harmonic_json(const std::map<std::pair<int, int>, cplx>& m) {
  json a = json::array();
  for (const auto& [lm, c] : m) a.push_back({{"l", lm.first}, {"m", lm.second}, {"value", complex_json(c)}});
  return a;
}

inline PotentialDescriptor parse_potential(const json& v, int N) {
  const std::string where = "potential";
  if (!v.is_object() || !v.contains("kind") || !v["kind"].is_string())
    invalid(where, "needs a string 'kind'");
  const std::string kind = v["kind"];
  PotentialDescriptor d;
  if (kind == "aharonov_bohm") {
    allow_keys(v, {"kind", "alpha", "a0"}, where);
    if (N != 2) invalid(where, "aharonov_bohm requires dimension 2");
    d = PotentialDescriptor::aharonov_bohm(v.contains("alpha") ? number(v["alpha"], "potential.alpha") : 0.0,
                                           v.contains("a0") ? number(v["a0"], "potential.a0") : 0.0);
  } else if (kind == "dipole") {
    allow_keys(v, {"kind", "lambda", "axis"}, where);
    if (N != 3) invalid(where, "dipole requires dimension 3");
    Vec3 axis{0.0, 0.0, 1.0};
    if (v.contains("axis")) {
      if (!v["axis"].is_array() || v["axis"].size() != 3) invalid("potential.axis", "expected [x, y, z]");
      for (int i = 0; i < 3; ++i) axis[i] = number(v["axis"][i], "potential.axis");
    }
    d = PotentialDescriptor::dipole(v.contains("lambda") ? number(v["lambda"], "potential.lambda") : 1.0, axis);
  } else if (kind == "zero") {
    allow_keys(v, {"kind"}, where);
    d = PotentialDescriptor::zero(N);
  } else if (kind == "fourier") {
    allow_keys(v, {"kind", "magnetic", "electric", "electric_harmonics"}, where);
    d = PotentialDescriptor::zero(N);
    if (v.contains("magnetic")) {
      if (N != 2) invalid("potential.magnetic", "magnetic Fourier data requires dimension 2");
      d.magnetic_trig = trig_entries(v["magnetic"], "potential.magnetic");
    }
    if (v.contains("electric")) {
      if (N != 2) invalid("potential.electric", "Fourier electric data requires dimension 2");
      d.electric_trig = trig_entries(v["electric"], "potential.electric");
    }
    if (v.contains("electric_harmonics")) {
      if (N != 3) invalid("potential.electric_harmonics", "harmonic electric data requires dimension 3");
      d.electric_harmonics = harmonic_entries(v["electric_harmonics"], "potential.electric_harmonics");
    }
  } else {
    invalid("potential.kind", "unknown kind '" + kind + "' (expected aharonov_bohm, dipole, fourier, zero)");
  }
  try {
    build_potential(d);
  } catch (const Error& e) {
    invalid(where, e.what());
  }
  return d;
}

inline json potential_json(const PotentialDescriptor& d) {
  switch (d.kind) {
    case PotentialKind::aharonov_bohm:
      return {{"kind", "aharonov_bohm"}, {"alpha", d.alpha}, {"a0", d.a0}};
    case PotentialKind::dipole:
      return {{"kind", "dipole"}, {"lambda", d.lambda}, {"axis", {d.axis[0], d.axis[1], d.axis[2]}}};
    case PotentialKind::fourier: break;
  }
  json j{{"kind", "fourier"}};
  if (d.dimension == 2) {
    j["magnetic"] = trig_json(d.magnetic_trig);
    j["electric"] = trig_json(d.electric_trig);
  } else {
    j["electric_harmonics"] = harmonic_json(d.electric_harmonics);
  }
  return j;
}

inline std::pair<int, int> line_column(const std::string& text, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i < text.size() && i + 1 < byte; ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::vector<double> geometric(double from, double to, int n) {
  std::vector<double> v;
  for (int i = 0; i < n; ++i) v.push_back(from * std::pow(to / from, i / double(n - 1)));
  return v;
}

}  // namespace detail

/// Normalised scenario with every default filled in; outputs are excluded so
/// the echo (and its hash) depends only on what is computed.
inline nlohmann::json to_json(const Scenario& s) {
  using nlohmann::json;
  json pert{{"c", detail::complex_json(s.c)}, {"eps", s.eps}};
  if (!s.factor_trig.empty()) pert["factor"] = {{"trig", detail::trig_json(s.factor_trig)}};
  if (!s.factor_harmonics.empty()) pert["factor"] = {{"harmonics", detail::harmonic_json(s.factor_harmonics)}};
  json modes = json::array();
  for (const auto& b : s.boundary) modes.push_back({{"k", b.k}, {"value", detail::complex_json(b.value)}});
  return {{"name", s.name},
          {"dimension", s.dimension},
          {"side", to_string(s.side)},
          {"potential", detail::potential_json(s.potential)},
          {"perturbation", pert},
          {"boundary", {{"R", s.R}, {"modes", modes}}},
          {"grid", {{"intervals", s.grid.intervals}, {"r_min_ratio", s.grid.r_min_ratio}, {"truncation", s.truncation()}}},
          {"eigen_count", s.eigen_count},
          {"radii", s.radii},
          {"checks",
           {{"frequency", s.checks.frequency},
            {"asymptotics", s.checks.asymptotics},
            {"identities", s.checks.identities},
            {"kelvin", s.checks.kelvin},
            {"inequalities", s.checks.inequalities},
            {"sweep_count", s.checks.sweep_count}}},
          {"seed", s.seed}};
}

inline std::string scenario_hash(const Scenario& s) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << detail::fnv1a(to_json(s).dump());
  return os.str();
}

/// Enforces the scenario invariants; throws validation_error naming the field.
inline void validate(const Scenario& s) {
  using detail::invalid;
  if (s.dimension != 2 && s.dimension != 3) invalid("dimension", "supported dimensions are 2 and 3");
  if (s.potential.dimension != s.dimension) invalid("potential", "dimension does not match the scenario");
  if (!(s.R > 0.0) || !std::isfinite(s.R)) invalid("boundary.R", "must be positive and finite");
  if (!(s.eps > 0.0) || !std::isfinite(s.eps))
    invalid("perturbation.eps", "the perturbation bound h = O(|x|^{-2+eps}) requires eps > 0");
  if (!std::isfinite(s.c.real()) || !std::isfinite(s.c.imag())) invalid("perturbation.c", "must be finite");
  if (!s.factor_trig.empty() && s.dimension != 2) invalid("perturbation.factor", "trig factor requires dimension 2");
  if (!s.factor_harmonics.empty() && s.dimension != 3)
    invalid("perturbation.factor", "harmonic factor requires dimension 3");
  if (s.grid.intervals < 40) invalid("grid.intervals", "at least 40 intervals are required");
  if (!(s.grid.r_min_ratio > 0.0 && s.grid.r_min_ratio < 1.0)) invalid("grid.r_min_ratio", "must lie in (0, 1)");
  if (s.grid.truncation < 0) invalid("grid.truncation", "must be nonnegative");
  if (s.eigen_count < 1) invalid("eigen_count", "must be at least 1");
  const int J = s.truncation();
  const int basis = s.dimension == 2 ? 2 * J + 1 : (J + 1) * (J + 1);
  if (s.eigen_count > basis)
    invalid("eigen_count", std::to_string(s.eigen_count) + " exceeds the basis size " + std::to_string(basis));
  if (s.boundary.empty()) invalid("boundary.modes", "at least one boundary mode is required");
  bool nonzero = false;
  for (const auto& b : s.boundary) {
    if (b.k < 1 || b.k > s.eigen_count)
      invalid("boundary.modes", "mode index " + std::to_string(b.k) + " outside 1.." + std::to_string(s.eigen_count));
    nonzero = nonzero || b.value != cplx(0.0);
  }
  if (!nonzero) invalid("boundary.modes", "boundary data vanishes identically");
  const LogGrid g = s.radial_grid();
  for (double r : s.radii)
    if (!(r > g.r_min() && r < g.r_max()) || !std::isfinite(r))
      invalid("radii", "radius " + std::to_string(r) + " outside the radial grid");
  const auto& known = inequality_checks();
  for (const auto& n : s.checks.inequalities) {
    if (std::find(known.begin(), known.end(), n) == known.end())
      invalid("checks.inequalities", "unknown check '" + n + "' (expected one of " + detail::join(known) + ")");
    if (n == "hardy2d" && s.dimension != 2) invalid("checks.inequalities", "hardy2d requires dimension 2");
  }
  if (s.checks.sweep_count < 1) invalid("checks.sweep_count", "must be at least 1");
  try {
    build_potential(s.potential);
    s.perturbation();
  } catch (const Error& e) {
    invalid("scenario", e.what());
  }
}

inline Scenario parse_scenario_json(const nlohmann::json& j) {
  using namespace detail;
  allow_keys(j, {"name", "dimension", "side", "potential", "perturbation", "boundary", "grid", "eigen_count",
                 "radii", "checks", "seed", "outputs"},
             "scenario");
  Scenario s;
  if (j.contains("name")) {
    if (!j["name"].is_string()) invalid("name", "expected a string");
    s.name = j["name"];
  }
  if (!j.contains("dimension")) invalid("dimension", "is required");
  s.dimension = integer(j["dimension"], "dimension");
  if (s.dimension != 2 && s.dimension != 3) invalid("dimension", "supported dimensions are 2 and 3");
  if (!j.contains("potential")) invalid("potential", "is required");
  s.potential = parse_potential(j["potential"], s.dimension);
  if (j.contains("side")) {
    const auto& v = j["side"];
    if (v == "interior") s.side = Side::interior;
    else if (v == "exterior") s.side = Side::exterior;
    else invalid("side", "expected 'interior' or 'exterior'");
  }
  if (j.contains("perturbation") && !j["perturbation"].is_null()) {
    const auto& p = j["perturbation"];
    allow_keys(p, {"c", "eps", "factor"}, "perturbation");
    if (p.contains("c")) s.c = complex_value(p["c"], "perturbation.c");
    if (p.contains("eps")) s.eps = number(p["eps"], "perturbation.eps");
    if (p.contains("factor")) {
      allow_keys(p["factor"], {"trig", "harmonics"}, "perturbation.factor");
      if (p["factor"].contains("trig")) s.factor_trig = trig_entries(p["factor"]["trig"], "perturbation.factor.trig");
      if (p["factor"].contains("harmonics"))
        s.factor_harmonics = harmonic_entries(p["factor"]["harmonics"], "perturbation.factor.harmonics");
    }
  }
  if (j.contains("boundary")) {
    const auto& b = j["boundary"];
    allow_keys(b, {"R", "modes"}, "boundary");
    if (b.contains("R")) s.R = number(b["R"], "boundary.R");
    if (b.contains("modes")) {
      if (!b["modes"].is_array()) invalid("boundary.modes", "expected an array of {k, value}");
      s.boundary.clear();
      for (std::size_t i = 0; i < b["modes"].size(); ++i) {
        const std::string at = "boundary.modes[" + std::to_string(i) + "]";
        const auto& m = b["modes"][i];
        allow_keys(m, {"k", "value"}, at);
        if (!m.contains("k") || !m.contains("value")) invalid(at, "needs k and value");
        s.boundary.push_back({integer(m["k"], at + ".k"), complex_value(m["value"], at + ".value")});
      }
    }
  }
  if (j.contains("grid")) {
    const auto& g = j["grid"];
    allow_keys(g, {"intervals", "r_min_ratio", "truncation"}, "grid");
    if (g.contains("intervals")) s.grid.intervals = integer(g["intervals"], "grid.intervals");
    if (g.contains("r_min_ratio")) s.grid.r_min_ratio = number(g["r_min_ratio"], "grid.r_min_ratio");
    if (g.contains("truncation")) s.grid.truncation = integer(g["truncation"], "grid.truncation");
  }
  if (j.contains("eigen_count")) s.eigen_count = integer(j["eigen_count"], "eigen_count");
  if (j.contains("radii")) {
    if (!j["radii"].is_array()) invalid("radii", "expected an array of numbers");
    for (const auto& r : j["radii"]) s.radii.push_back(number(r, "radii"));
  }
  if (j.contains("checks")) {
    const auto& c = j["checks"];
    allow_keys(c, {"frequency", "asymptotics", "identities", "kelvin", "inequalities", "sweep_count"}, "checks");
    auto flag = [&](const char* key, bool& out) {
      if (!c.contains(key)) return;
      if (!c[key].is_boolean()) invalid(std::string("checks.") + key, "expected a boolean");
      out = c[key];
    };
    flag("frequency", s.checks.frequency);
    flag("asymptotics", s.checks.asymptotics);
    flag("identities", s.checks.identities);
    flag("kelvin", s.checks.kelvin);
    if (c.contains("inequalities")) {
      if (!c["inequalities"].is_array()) invalid("checks.inequalities", "expected an array of names");
      for (const auto& n : c["inequalities"]) {
        if (!n.is_string()) invalid("checks.inequalities", "expected an array of names");
        s.checks.inequalities.push_back(n);
      }
    }
    if (c.contains("sweep_count")) s.checks.sweep_count = integer(c["sweep_count"], "checks.sweep_count");
  } else if (s.side == Side::exterior) {
    s.checks.kelvin = true;
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) invalid("seed", "expected a nonnegative integer");
    s.seed = j["seed"];
  }
  if (j.contains("outputs")) {
    const auto& o = j["outputs"];
    allow_keys(o, {"report", "trace"}, "outputs");
    if (o.contains("report")) s.outputs.report = o["report"].get<std::string>();
    if (o.contains("trace")) s.outputs.trace = o["trace"].get<std::string>();
  }
  validate(s);
  return s;
}

/// Parses scenario text; malformed JSON raises parse_error with line and column.
inline Scenario parse_scenario_text(const std::string& text, const std::string& origin = "<scenario>") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto [line, col] = detail::line_column(text, e.byte);
    throw Error(ErrorKind::parse_error, origin + ":" + std::to_string(line) + ":" + std::to_string(col) +
                                            ": malformed JSON (" + e.what() + ")");
  }
  return parse_scenario_json(j);
}

inline Scenario parse_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::validation_error, "cannot open scenario file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario_text(ss.str(), path.string());
}

/// Image of a scenario under the Kelvin transform: sides swap, R becomes 1/R,
/// boundary values pick up R^{N-2} and radii are inverted.
inline Scenario kelvin_scenario(const Scenario& s) {
  Scenario k = s;
  k.name = s.name + "_kelvin";
  k.side = opposite(s.side);
  k.R = 1.0 / s.R;
  const double scale = std::pow(s.R, s.dimension - 2);
  for (auto& b : k.boundary) b.value *= scale;
  for (auto& r : k.radii) r = 1.0 / r;
  std::sort(k.radii.begin(), k.radii.end());
  return k;
}

/// Pipeline stages to execute; the CLI subcommands select subsets.
struct Stages {
  bool field = false, frequency = false, asymptotics = false, identities = false, kelvin = false;
  bool pohozaev = true, height_derivative = true;
  bool kelvin_image = false;  // also solve the Kelvin-image scenario and compare fields
  bool modal_file = false;    // write the modal profiles as modal.json
  std::vector<std::string> inequalities;
  bool trace_file = false;
};

struct RunOptions {
  std::filesystem::path out_dir;  // empty: write nothing
  double tol_scale = 1.0;
  std::optional<std::uint64_t> seed;  // overrides the scenario seed
  bool force_solve = false;           // solve the field even when no field stage is enabled
};

inline FieldProblem field_problem(const Scenario& sc) {
  FieldProblem prob;
  prob.side = sc.side;
  prob.grid = sc.radial_grid();
  prob.angular = AngularGrid::for_truncation(sc.dimension, sc.truncation());
  prob.modes = sc.eigen_count;
  prob.boundary = sc.boundary;
  prob.h = sc.perturbation();
  return prob;
}

struct RunReport {
  nlohmann::json json;
  bool passed = true;
  std::vector<std::string> files;  // written outputs
};

namespace detail {

/// Asserted checks as {value, tolerance, pass}; tolerances scale with tol_scale.
class CheckSet {
 public:
  explicit CheckSet(double scale) : scale_(scale) {}

  void at_most(const std::string& name, double value, double tol) { add(name, value, tol * scale_, value <= tol * scale_, "<="); }
  void margin(const std::string& name, double value, double tol) { add(name, value, tol * scale_, value >= -tol * scale_, ">=-"); }
  void at_least(const std::string& name, double value, double threshold) { add(name, value, threshold, value >= threshold, ">="); }
  void holds(const std::string& name, bool ok) {
    json_[name] = {{"value", ok}, {"tolerance", nullptr}, {"pass", ok}, {"relation", "true"}};
    passed_ = passed_ && ok;
  }

  const nlohmann::json& json() const { return json_; }
  bool passed() const { return passed_; }

 private:
  void add(const std::string& name, double value, double tol, bool ok, const char* rel) {
    ok = ok && std::isfinite(value);
    json_[name] = {{"value", nullable(value)}, {"tolerance", tol}, {"pass", ok}, {"relation", rel}};
    passed_ = passed_ && ok;
  }

  double scale_;
  nlohmann::json json_ = nlohmann::json::object();
  bool passed_ = true;
};

struct Leading {
  int k = 1;                 // lowest active mode
  double gamma = 0.0;        // its exponent (decay exponent on the exterior side)
  double rate = NAN;         // expected approach rate of N, NaN when not asserted
  double blowup_rate = NAN;  // expected decay rate of blow-up distances
};

inline double side_exponent(int N, double mu, Side side) {
  const auto ex = characteristic_exponents(N, mu);
  return side == Side::interior ? ex.sigma_plus : -ex.sigma_minus;
}

/// Leading exponent from the modes actually present in the solution. Rates
/// are asserted only without angular mixing (constant factor): then N - gamma
/// decays like min(eps, 2 delta) and blow-up distances like min(eps, delta),
/// delta the gap to the next block carried by the boundary data.
inline Leading leading_mode(const Scenario& sc, const AngularSpectrum& s, const ModalSolution& sol) {
  double scale = 0.0;
  std::vector<double> size(sol.count(), 0.0);
  for (int k = 0; k < sol.count(); ++k) {
    for (const auto& v : sol.modes[k].phi) size[k] = std::max(size[k], std::abs(v));
    scale = std::max(scale, size[k]);
  }
  Leading out;
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < sol.count(); ++k) {
    if (!(size[k] > 1e-12 * scale)) continue;
    const double g = side_exponent(sc.dimension, s.eigenvalues[k], sc.side);
    if (g < best - 1e-12) {
      best = g;
      out.k = k + 1;
    }
  }
  out.gamma = best;
  const PerturbationSpec h = sc.perturbation();
  const bool mixing = h.factor && !h.factor->is_constant();
  if (mixing) return out;
  double delta = std::numeric_limits<double>::infinity();
  for (const auto& b : sc.boundary) {
    if (b.value == cplx(0.0)) continue;
    const double g = side_exponent(sc.dimension, s.eigenvalues[b.k - 1], sc.side);
    if (g > best + 1e-8) delta = std::min(delta, g - best);
  }
  const double e = h.is_zero() ? std::numeric_limits<double>::infinity() : sc.eps;
  if (std::isfinite(std::min(e, 2.0 * delta))) out.rate = std::min(e, 2.0 * delta);
  if (std::isfinite(std::min(e, delta))) out.blowup_rate = std::min(e, delta);
  return out;
}

inline nlohmann::json profile_json(const AsymptoticProfile& p) { return to_json(p); }

inline double beta_distance(const AsymptoticProfile& a, const AsymptoticProfile& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.beta.size() && i < b.beta.size(); ++i) d = std::max(d, std::abs(a.beta[i] - b.beta[i]));
  return d;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::validation_error, "cannot write " + path.string());
  os << j.dump(2) << '\n';
}

inline void run_inequalities(const Scenario& sc, const AngularPotential& pot, const AngularSpectrum& spec,
                             const std::vector<std::string>& names, std::uint64_t seed, CheckSet& checks,
                             nlohmann::json& report) {
  nlohmann::json out = nlohmann::json::object();
  const int count = sc.checks.sweep_count;
  for (const auto& name : names) {
    if (name == "hardy") {
      const auto rep = hardy_boundary_sweep(pot, mu1(spec), count, seed);
      out[name] = to_json(rep);
      checks.margin("hardy_margin", rep.min_margin, kQuadratureTolerance);
    } else if (name == "diamagnetic") {
      const auto rep = diamagnetic_sweep(pot, count, seed);
      out[name] = to_json(rep);
      checks.margin("diamagnetic_margin", rep.min_margin, kQuadratureTolerance);
    } else if (name == "hardy2d") {
      const auto rep = hardy_2d_sweep(pot, count, seed);
      const auto hc = hardy_2d_constant_check(pot, sc.truncation());
      out[name] = to_json(rep);
      out[name]["constant"] = {{"eigensolver", hc.eigensolver}, {"closed_form", hc.closed_form}, {"degenerate", hc.degenerate}};
      checks.margin("hardy2d_margin", rep.min_margin, kQuadratureTolerance);
      checks.at_most("hardy2d_constant", std::abs(hc.eigensolver - hc.closed_form), 1e-9);
    } else if (name == "mu1") {
      const double d = mu1_comparison(pot, sc.truncation());
      out[name] = {{"difference", d}};
      checks.margin("mu1_comparison", d, 1e-10);
    }
  }
  report["inequalities"] = out;
}

}  // namespace detail

/// Runs the requested stages; the report is written (with a status field) even
/// when a module error aborts the pipeline, and the error is rethrown with the
/// scenario and stage attached.
inline RunReport run_stages(const Scenario& sc, const Stages& st, const RunOptions& opt) {
  using nlohmann::json;
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t seed = opt.seed.value_or(sc.seed);
  detail::CheckSet checks(opt.tol_scale);
  RunReport out;
  json& rep = out.json;
  Scenario echo = sc;
  echo.seed = seed;
  rep["schema_version"] = kReportSchemaVersion;
  rep["tool"] = {{"name", "almgren"}, {"version", kToolVersion}};
  rep["scenario"] = to_json(echo);
  rep["scenario_hash"] = scenario_hash(echo);
  rep["tol_scale"] = opt.tol_scale;
  std::string stage = "setup";
  if (!opt.out_dir.empty()) std::filesystem::create_directories(opt.out_dir);

  auto finish = [&](const std::string& status) {
    rep["checks"] = checks.json();
    rep["status"] = status;
    rep["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.passed = status == "pass";
    if (!opt.out_dir.empty()) {
      const auto path = opt.out_dir / sc.outputs.report;
      detail::write_json(path, rep);
      out.files.push_back(path.string());
    }
  };

  try {
    stage = "spectrum";
    const AngularPotential pot = build_potential(sc.potential);
    const AngularSpectrum spec = angular_spectrum(pot, sc.truncation(), sc.eigen_count);
    const auto pos = positivity_check(sc.dimension, mu1(spec));
    rep["spectrum"] = to_json(spec);
    rep["spectrum"]["mu1"] = mu1(spec);
    rep["spectrum"]["positivity"] = {{"positive", pos.positive}, {"margin", pos.margin}};

    if (st.field) {
      stage = "solve";
      const PerturbationSpec h = sc.perturbation();
      const FieldProblem prob = field_problem(sc);
      const FieldSolution sol = solve_field(spec, prob);
      if (st.modal_file && !opt.out_dir.empty()) {
        const auto path = opt.out_dir / "modal.json";
        detail::write_json(path, to_json(sol.modal));
        out.files.push_back(path.string());
      }
      const FieldSample& field = sol.field;
      rep["solve"] = {{"iterations", sol.iterations},
                      {"fixed_point_residual", sol.residuals.empty() ? 0.0 : sol.residuals.back()},
                      {"radial_nodes", prob.grid.size()},
                      {"angular_nodes", prob.angular.size()}};
      const detail::Leading lead = detail::leading_mode(sc, spec, sol.modal);
      rep["leading"] = {{"k", lead.k},
                        {"gamma", lead.gamma},
                        {"rate", nullable(lead.rate)},
                        {"blowup_rate", nullable(lead.blowup_rate)}};

      std::optional<FrequencyProfile> profile;
      std::optional<FrequencyTrace> trace;
      if (st.frequency || st.asymptotics || st.identities) {
        stage = "frequency";
        profile = frequency_profile(field, pot, h);
      }
      if (st.frequency || st.asymptotics) trace = frequency_trace(*profile);
      if (st.frequency) {
        const auto& fit = trace->fit;
        rep["frequency"] = fit_json(*trace);
        rep["frequency"]["gamma_err"] = fit.gamma_err;
        rep["frequency"]["window"] = fit.window;
        rep["frequency"]["eps_identifiable"] = fit.eps_identifiable;
        if (!sc.radii.empty()) rep["frequency"]["samples"] = {{"r", sc.radii}, {"N", frequency_at(*profile, sc.radii)}};
        checks.at_most("frequency_limit", std::abs(fit.gamma_hat - lead.gamma), 1e-5);
        if (std::isfinite(lead.rate))
          checks.at_most("frequency_rate", std::abs(fit.eps_hat - lead.rate) / lead.rate, 0.1);
        checks.holds("frequency_lower_bound", satisfies_lower_bound(*trace, sc.dimension));
        const HeightScaling hs = height_scaling_limit(*profile, lead.gamma);
        rep["height_scaling"] = {{"limit", hs.limit}, {"drift", hs.drift}, {"slope", hs.slope},
                                 {"expected_slope", hs.expected_slope}};
        checks.at_most("height_scaling_slope", std::abs(hs.slope - hs.expected_slope), 1e-3);
        checks.at_most("height_scaling_drift", hs.drift, 1e-2);
        if (st.trace_file && !opt.out_dir.empty()) {
          const auto path = opt.out_dir / sc.outputs.trace;
          std::ofstream os(path);
          if (!os) throw Error(ErrorKind::validation_error, "cannot write " + path.string());
          write_csv(os, *trace);
          out.files.push_back(path.string());
        }
      }

      if (st.identities) {
        stage = "identities";
        json id = json::object();
        if (st.height_derivative) {
          const double r = check_height_derivative(*profile);
          id["height_derivative"] = r;
          checks.at_most("height_derivative", r, 1e-6);
        }
        if (st.pohozaev && sc.side == Side::interior) {
          std::vector<double> radii = sc.radii;
          if (radii.empty()) radii = {1e-4 * sc.R, 1e-2 * sc.R, 0.5 * sc.R};
          double worst = 0.0;
          for (double r : radii) worst = std::max(worst, pohozaev_terms(*profile, r).residual());
          const double noisy =
              pohozaev_residual(with_multiplicative_noise(field, 0.01, seed), pot, h, 0.5 * sc.R);
          id["pohozaev"] = {{"radii", radii}, {"residual", worst}, {"noisy_residual", noisy}};
          checks.at_most("pohozaev", worst, 1e-6);
          checks.at_least("pohozaev_noise_detection", noisy, 1e-2);
        }
        rep["identities"] = id;
      }

      if (st.asymptotics) {
        stage = "asymptotics";
        const double g_fit = std::isfinite(trace->fit.gamma_hat) ? trace->fit.gamma_hat : lead.gamma;
        const MultiplicityBlock block = match_block(spec, g_fit, sc.side);
        const double gamma = detail::side_exponent(sc.dimension, spec.eigenvalues[block.j0 - 1], sc.side);
        const LogGrid& g = prob.grid;
        AsymptoticProfile a, b;
        std::vector<double> lambdas;
        if (sc.side == Side::interior) {
          a = extract_interior_coefficients(field, spec, gamma, sc.R, h);
          b = extract_interior_coefficients(field, spec, gamma, 0.5 * sc.R, h);
          lambdas = detail::geometric(10.0 * g.r_min(), 1e-2 * sc.R, 12);
        } else {
          a = extract_exterior_coefficients(field, spec, gamma, sc.R, h);
          b = extract_exterior_coefficients(field, spec, gamma, 2.0 * sc.R, h);
          lambdas = detail::geometric(1e2 * sc.R, 0.1 * g.r_max(), 12);
        }
        rep["profile"] = detail::profile_json(a);
        rep["regularity"] = to_json(a.regularity);
        const double dist = detail::beta_distance(a, b);
        rep["beta_r_independence"] = dist;
        checks.at_most("beta_r_independence", dist, 1e-8);
        checks.holds("beta_nontrivial", a.beta_norm() > 0.0);
        const BlowupResult bu = blowup_profile(field, spec, a, lambdas);
        json blow{{"lambdas", lambdas}, {"distances", bu.distances}, {"rate", nullable(bu.rate)}};
        if (std::isfinite(lead.blowup_rate))
          checks.at_most("blowup_rate", std::abs(bu.rate - lead.blowup_rate) / lead.blowup_rate, 0.1);
        if (field.has_gradient) {
          const BlowupResult gb = gradient_blowup_profile(field, spec, a, lambdas);
          blow["gradient_distances"] = gb.distances;
          blow["gradient_rate"] = nullable(gb.rate);
          if (std::isfinite(lead.blowup_rate))
            checks.at_most("gradient_blowup_rate", std::abs(gb.rate - lead.blowup_rate) / lead.blowup_rate, 0.1);
        }
        rep["blowup"] = blow;
        if (sc.side == Side::exterior) {
          // the Kelvin image is an interior solution carrying the same coefficients
          const FieldSample v = kelvin_transform(field);
          const double gv = gamma - sc.dimension + 2.0;
          const auto iv = extract_interior_coefficients(v, spec, gv, 1.0 / sc.R, kelvin_transform(h));
          const double d = detail::beta_distance(a, iv);
          rep["kelvin_beta_distance"] = d;
          checks.at_most("kelvin_beta", d, 1e-8);
        }
      }

      if (st.kelvin) {
        stage = "kelvin";
        const FieldSample u = sc.side == Side::exterior ? field : kelvin_transform(field);
        const PerturbationSpec hu = sc.side == Side::exterior ? h : kelvin_transform(h);
        const double rho_min = 1.0 / u.radial.r_max(), rho_max = 1.0 / u.radial.r_min();
        const auto radii = detail::geometric(10.0 * rho_min, 0.9 * rho_max, 20);
        const double defect = kelvin_conjugacy_defect(u, pot, hu, radii);
        const FieldSample back = kelvin_transform(kelvin_transform(u));
        const double scale = u.u.cwiseAbs().maxCoeff();
        const double involution = (back.u - u.u).cwiseAbs().maxCoeff() / scale;
        rep["kelvin"] = {{"conjugacy_defect", defect}, {"involution_defect", involution}, {"radii", radii}};
        checks.at_most("kelvin_conjugacy", defect, 1e-8);
        checks.at_most("kelvin_involution", involution, 1e-12);
        if (st.kelvin_image) {
          // solving the image problem directly must reproduce the transformed field
          const Scenario image = kelvin_scenario(sc);
          const FieldSolution isol = solve_field(spec, field_problem(image));
          const FieldSample mapped = kelvin_transform(field);
          const double consistency =
              (isol.field.u - mapped.u).cwiseAbs().maxCoeff() / mapped.u.cwiseAbs().maxCoeff();
          rep["kelvin"]["image_scenario"] = to_json(image);
          rep["kelvin"]["solve_consistency"] = consistency;
          checks.at_most("kelvin_solve_consistency", consistency, 1e-8);
          if (!opt.out_dir.empty()) {
            const auto path = opt.out_dir / "kelvin_scenario.json";
            detail::write_json(path, to_json(image));
            out.files.push_back(path.string());
          }
        }
      }
    }

    if (!st.inequalities.empty()) {
      stage = "inequalities";
      detail::run_inequalities(sc, pot, spec, st.inequalities, seed, checks, rep);
    }
  } catch (const Error& e) {
    std::string message = e.what();
    const std::string prefix = std::string(to_string(e.kind())) + ": ";
    if (message.rfind(prefix, 0) == 0) message.erase(0, prefix.size());
    rep["error"] = {{"kind", to_string(e.kind())}, {"stage", stage}, {"message", message}};
    finish("error");
    throw Error(e.kind(), "scenario '" + sc.name + "', stage " + stage + ": " + message);
  }
  finish(checks.passed() ? "pass" : "fail");
  return out;
}

/// Full pipeline as configured by the scenario toggles.
inline RunReport run_scenario(const Scenario& sc, const RunOptions& opt = {}) {
  Stages st;
  st.frequency = sc.checks.frequency;
  st.asymptotics = sc.checks.asymptotics;
  st.identities = sc.checks.identities;
  st.kelvin = sc.checks.kelvin;
  st.field = opt.force_solve || st.frequency || st.asymptotics || st.identities || st.kelvin;
  st.inequalities = sc.checks.inequalities;
  st.trace_file = true;
  return run_stages(sc, st, opt);
}

/// Parses a comma-separated list of check names; unknown names raise a usage
/// error listing the valid ones.
inline std::vector<std::string> parse_check_list(const std::string& list) {
  std::vector<std::string> out;
  std::stringstream ss(list);
  std::string item;
  const auto& valid = verification_checks();
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    if (std::find(valid.begin(), valid.end(), item) == valid.end())
      throw Error(ErrorKind::usage_error,
                  "unknown check '" + item + "'; valid checks: " + detail::join(valid));
    if (std::find(out.begin(), out.end(), item) == out.end()) out.push_back(item);
  }
  if (out.empty()) throw Error(ErrorKind::usage_error, "no checks given; valid checks: " + detail::join(valid));
  return out;
}

/// Runs only the named verification checks; no trace files are written.
inline RunReport verify_suite(const Scenario& sc, const std::vector<std::string>& names,
                              const RunOptions& opt = {}) {
  const auto& valid = verification_checks();
  for (const auto& n : names)
    if (std::find(valid.begin(), valid.end(), n) == valid.end())
      throw Error(ErrorKind::usage_error, "unknown check '" + n + "'; valid checks: " + detail::join(valid));
  auto has = [&](const char* n) { return std::find(names.begin(), names.end(), n) != names.end(); };
  if (has("hardy2d") && sc.dimension != 2)
    throw Error(ErrorKind::validation_error, "checks: hardy2d requires dimension 2");
  Stages st;
  st.pohozaev = has("pohozaev");
  st.height_derivative = has("height_derivative");
  st.identities = st.pohozaev || st.height_derivative;
  st.kelvin = has("kelvin");
  st.field = st.identities || st.kelvin;
  for (const auto& n : inequality_checks())
    if (has(n.c_str())) st.inequalities.push_back(n);
  return run_stages(sc, st, opt);
}

/// Verification-only scenario: the inequality checks it lists, no field stages.
inline RunReport verify_suite(const Scenario& sc, const RunOptions& opt = {}) {
  std::vector<std::string> names = sc.checks.inequalities;
  if (names.empty())
    for (const auto& n : inequality_checks())
      if (n != "hardy2d" || sc.dimension == 2) names.push_back(n);
  return verify_suite(sc, names, opt);
}

}  // namespace almgren
