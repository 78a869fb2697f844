#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "builtins.hpp"
#include "dynamics.hpp"

namespace pldirac {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

// ---- scenario configuration ----------------------------------------------------------

struct CocycleSpec {
  std::string kind = "zero";  // zero | coboundary | lattice
  std::vector<double> mu0;    // coboundary: full coordinates of mu0
  double level = 1.0;         // lattice
};

struct FiberConfig {
  std::vector<double> g_minus;    // exponential coordinates (supported on g-)
  std::vector<double> eta_minus;  // coordinates of eta- (supported on g-*)
  std::optional<std::vector<double>> control_eta_minus;  // a second, inadmissible fiber
};

struct EnergyConfig {
  std::string preset = "identity";
  std::optional<Mat> matrix;
};

struct InitialConfig {
  std::optional<std::vector<double>> g_plus;    // exponential coordinates in g+
  std::optional<std::vector<double>> eta_plus;  // coordinates in g+*
  double scale = 0.7;                           // random draws when absent
};

struct LoopConfig {
  int sites = 32;
  double level = 1.0;
  double amplitude = 0.05;
  std::vector<int> sizes{8, 16, 32, 64};
};

struct SampleConfig {
  int points = 100;
  int pairs = 20;
  int refinements = 3;
};

struct ScenarioConfig {
  int schema_version = kSchemaVersion;
  std::string experiment;
  std::string description;
  json algebra;  // a built-in name or an inline declaration
  CocycleSpec cocycle;
  std::optional<FiberConfig> fiber;
  EnergyConfig energy;
  IntegratorConfig integrator;
  bool integrator_dt_given = false;
  InitialConfig initial;
  LoopConfig loop;
  SampleConfig samples;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
};

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"check", "brackets", "flow", "collective",
                                              "legendre", "sigma", "loop", "converge"};
  return names;
}

namespace detail {

// Typed access to one JSON object that remembers which keys were read, so
// anything left over is reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const std::string& key) {
    used_.insert(key);
    return j_.contains(key);
  }

  const json& at(const std::string& key) {
    used_.insert(key);
    if (!j_.contains(key)) throw ConfigError(where(key) + ": required key missing");
    return j_.at(key);
  }

  std::string where(const std::string& key) const { return path_ + "/" + key; }

  template <class T>
  T get(const std::string& key) {
    return convert<T>(at(key), where(key));
  }

  template <class T>
  T get_or(const std::string& key, T fallback) {
    return has(key) ? get<T>(key) : fallback;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw ConfigError(where(it.key()) + ": unknown key");
  }

  template <class T>
  static T convert(const json& v, const std::string& at) {
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError(at + ": expected a number");
        return v.get<double>();
      } else if constexpr (std::is_same_v<T, int>) {
        if (!v.is_number_integer()) throw ConfigError(at + ": expected an integer");
        return v.get<int>();
      } else if constexpr (std::is_same_v<T, std::uint64_t>) {
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
          throw ConfigError(at + ": expected a non-negative integer");
        return v.get<std::uint64_t>();
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(at + ": expected true or false");
        return v.get<bool>();
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(at + ": expected a string");
        return v.get<std::string>();
      } else if constexpr (std::is_same_v<T, std::vector<double>>) {
        if (!v.is_array()) throw ConfigError(at + ": expected an array of numbers");
        std::vector<double> out;
        for (std::size_t i = 0; i < v.size(); ++i) out.push_back(convert<double>(v[i], at + "/" + std::to_string(i)));
        return out;
      } else if constexpr (std::is_same_v<T, std::vector<int>>) {
        if (!v.is_array()) throw ConfigError(at + ": expected an array of integers");
        std::vector<int> out;
        for (std::size_t i = 0; i < v.size(); ++i) out.push_back(convert<int>(v[i], at + "/" + std::to_string(i)));
        return out;
      } else {
        static_assert(sizeof(T) == 0, "unsupported config type");
      }
    } catch (const json::exception& e) {
      throw ConfigError(at + ": " + e.what());
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

inline Mat matrix_from_json(const json& v, const std::string& at) {
  if (!v.is_array() || v.empty()) throw ConfigError(at + ": expected a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(v.size());
  const auto first = ObjectReader::convert<std::vector<double>>(v[0], at + "/0");
  Mat M(rows, static_cast<Eigen::Index>(first.size()));
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto row = ObjectReader::convert<std::vector<double>>(v[i], at + "/" + std::to_string(i));
    if (row.size() != first.size()) throw ConfigError(at + ": rows have different lengths");
    for (std::size_t j = 0; j < row.size(); ++j) M(i, static_cast<Eigen::Index>(j)) = row[j];
  }
  return M;
}

// A complex matrix: rows of numbers or of [re, im] pairs.
inline CMat cmatrix_from_json(const json& v, const std::string& at) {
  if (!v.is_array() || v.empty()) throw ConfigError(at + ": expected a non-empty array of rows");
  const auto n = static_cast<Eigen::Index>(v.size());
  CMat M(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const json& row = v[i];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n)
      throw ConfigError(at + ": representation matrices must be square");
    for (Eigen::Index j = 0; j < n; ++j) {
      const json& e = row[j];
      const std::string here = at + "/" + std::to_string(i) + "/" + std::to_string(j);
      if (e.is_number()) {
        M(i, j) = e.get<double>();
      } else {
        const auto re_im = ObjectReader::convert<std::vector<double>>(e, here);
        if (re_im.size() != 2) throw ConfigError(here + ": complex entries are [re, im]");
        M(i, j) = cdouble(re_im[0], re_im[1]);
      }
    }
  }
  return M;
}

}  // namespace detail

inline ScenarioConfig parse_config(const json& j) {
  using detail::ObjectReader;
  ObjectReader top(j, "");
  ScenarioConfig c;
  c.schema_version = top.get<int>("schema_version");
  if (c.schema_version != kSchemaVersion)
    throw ConfigError("/schema_version: unsupported version " + std::to_string(c.schema_version) + " (expected " +
                      std::to_string(kSchemaVersion) + ")");
  c.experiment = top.get<std::string>("experiment");
  const auto& names = experiment_names();
  if (std::find(names.begin(), names.end(), c.experiment) == names.end())
    throw ConfigError("/experiment: unknown experiment '" + c.experiment + "'");
  c.description = top.get_or<std::string>("description", "");
  c.algebra = top.at("algebra");
  if (!c.algebra.is_string() && !c.algebra.is_object())
    throw ConfigError("/algebra: expected a built-in name or an inline declaration");
  c.seed = top.get_or<std::uint64_t>("seed", 1);
  c.output_dir = top.get_or<std::string>("output_dir", "out");

  if (top.has("cocycle")) {
    ObjectReader r(j.at("cocycle"), "/cocycle");
    c.cocycle.kind = r.get<std::string>("kind");
    if (c.cocycle.kind == "coboundary") c.cocycle.mu0 = r.get<std::vector<double>>("mu0");
    else if (c.cocycle.kind == "lattice") c.cocycle.level = r.get<double>("level");
    else if (c.cocycle.kind != "zero") throw ConfigError("/cocycle/kind: unknown kind '" + c.cocycle.kind + "'");
    r.finish();
  }
  if (top.has("fiber")) {
    ObjectReader r(j.at("fiber"), "/fiber");
    FiberConfig f;
    f.g_minus = r.get<std::vector<double>>("g_minus");
    f.eta_minus = r.get<std::vector<double>>("eta_minus");
    if (r.has("control_eta_minus")) f.control_eta_minus = r.get<std::vector<double>>("control_eta_minus");
    r.finish();
    c.fiber = f;
  }
  if (top.has("energy")) {
    ObjectReader r(j.at("energy"), "/energy");
    if (r.has("matrix")) {
      c.energy.matrix = detail::matrix_from_json(r.at("matrix"), r.where("matrix"));
      c.energy.preset = "custom";
    } else {
      c.energy.preset = r.get<std::string>("preset");
    }
    r.finish();
  }
  if (top.has("integrator")) {
    ObjectReader r(j.at("integrator"), "/integrator");
    const std::string m = r.get_or<std::string>("method", "rkmk4");
    if (m == "rkmk4") c.integrator.method = Method::rkmk4;
    else if (m == "ambient_rk4") c.integrator.method = Method::ambient_rk4;
    else throw ConfigError("/integrator/method: unknown method '" + m + "'");
    c.integrator_dt_given = r.has("dt");
    c.integrator.dt = r.get_or<double>("dt", c.integrator.dt);
    c.integrator.steps = r.get_or<int>("steps", c.integrator.steps);
    c.integrator.reproject = r.get_or<bool>("reproject", false);
    c.integrator.record_every = r.get_or<int>("record_every", 1);
    r.finish();
  }
  if (top.has("initial")) {
    ObjectReader r(j.at("initial"), "/initial");
    if (r.has("g_plus")) c.initial.g_plus = r.get<std::vector<double>>("g_plus");
    if (r.has("eta_plus")) c.initial.eta_plus = r.get<std::vector<double>>("eta_plus");
    c.initial.scale = r.get_or<double>("scale", c.initial.scale);
    r.finish();
  }
  if (top.has("loop")) {
    ObjectReader r(j.at("loop"), "/loop");
    c.loop.sites = r.get_or<int>("sites", c.loop.sites);
    c.loop.level = r.get_or<double>("level", c.loop.level);
    c.loop.amplitude = r.get_or<double>("amplitude", c.loop.amplitude);
    c.loop.sizes = r.get_or<std::vector<int>>("sizes", c.loop.sizes);
    r.finish();
  }
  if (top.has("samples")) {
    ObjectReader r(j.at("samples"), "/samples");
    c.samples.points = r.get_or<int>("points", c.samples.points);
    c.samples.pairs = r.get_or<int>("pairs", c.samples.pairs);
    c.samples.refinements = r.get_or<int>("refinements", c.samples.refinements);
    r.finish();
    if (c.samples.points < 1 || c.samples.pairs < 1) throw ConfigError("/samples: counts must be positive");
    if (c.samples.refinements < 2) throw ConfigError("/samples/refinements: at least two runs are needed");
  }
  top.finish();
  return c;
}

/// Reads a config file. JSON syntax errors keep the parser's line and column.
inline ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(j);
}

// ---- algebra declarations ----------------------------------------------------------

/// An algebra, with its double group when one is available. Inline
/// declarations without a representation only support structural checks.
struct LoadedAlgebra {
  BasisAlgebra algebra;
  std::optional<DoubleGroup> group;
};

inline LoadedAlgebra load_algebra(const json& decl) {
  using detail::ObjectReader;
  if (decl.is_string()) {
    DoubleGroup G = builtin(decl.get<std::string>());
    return {G.algebra(), G};
  }
  ObjectReader r(decl, "/algebra");
  const std::string name = r.get<std::string>("name");
  const int dim = r.get<int>("dim");
  if (dim < 2 || dim % 2) throw ConfigError("/algebra/dim: must be even and positive");
  std::vector<std::string> labels;
  if (r.has("labels")) {
    const json& l = r.at("labels");
    if (!l.is_array()) throw ConfigError("/algebra/labels: expected an array of strings");
    for (std::size_t i = 0; i < l.size(); ++i)
      labels.push_back(ObjectReader::convert<std::string>(l[i], "/algebra/labels/" + std::to_string(i)));
  }
  std::vector<StructureTriplet> trip;
  const json& sc = r.at("structure_constants");
  if (!sc.is_array()) throw ConfigError("/algebra/structure_constants: expected [i, j, k, value] entries");
  for (std::size_t n = 0; n < sc.size(); ++n) {
    const std::string at = "/algebra/structure_constants/" + std::to_string(n);
    const auto e = ObjectReader::convert<std::vector<double>>(sc[n], at);
    if (e.size() != 4) throw ConfigError(at + ": expected [i, j, k, value]");
    trip.push_back({static_cast<int>(e[0]), static_cast<int>(e[1]), static_cast<int>(e[2]), e[3]});
  }
  const Mat K = detail::matrix_from_json(r.at("pairing"), "/algebra/pairing");
  const auto plus = r.get<std::vector<int>>("plus_indices");
  const auto minus = r.get<std::vector<int>>("minus_indices");
  BasisAlgebra A = algebra_from_triplets(name, labels, dim, trip, K, plus, minus);

  std::optional<DoubleGroup> G;
  if (r.has("representation")) {
    ObjectReader rr(r.at("representation"), "/algebra/representation");
    Representation rep;
    const std::string kind = rr.get<std::string>("factorization");
    if (kind == "iwasawa") rep.kind = FactorizationKind::iwasawa;
    else if (kind == "semidirect") rep.kind = FactorizationKind::semidirect;
    else throw ConfigError("/algebra/representation/factorization: unknown kind '" + kind + "'");
    const json& ms = rr.at("matrices");
    if (!ms.is_array() || static_cast<int>(ms.size()) != dim)
      throw ConfigError("/algebra/representation/matrices: expected one matrix per basis vector");
    for (std::size_t i = 0; i < ms.size(); ++i)
      rep.basis.push_back(detail::cmatrix_from_json(ms[i], "/algebra/representation/matrices/" + std::to_string(i)));
    rr.finish();
    G.emplace(A, std::move(rep));
  }
  r.finish();
  return {std::move(A), std::move(G)};
}

inline Vec to_vec(const std::vector<double>& v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
  return out;
}

inline Vec sized_vec(const std::vector<double>& v, int n, const std::string& what) {
  if (static_cast<int>(v.size()) != n)
    throw ConfigError(what + ": expected " + std::to_string(n) + " coordinates, got " + std::to_string(v.size()));
  return to_vec(v);
}

inline TwoCocycle make_cocycle(const CocycleSpec& s, const BasisAlgebra& A) {
  if (s.kind == "zero") return TwoCocycle::zero();
  if (s.kind == "coboundary") return TwoCocycle::coboundary(DualVector(sized_vec(s.mu0, A.dim(), "/cocycle/mu0")));
  if (s.kind == "lattice") return TwoCocycle::lattice_derivative(s.level);
  throw ConfigError("unknown cocycle kind '" + s.kind + "'");
}

inline EnergyOperator make_energy(const EnergyConfig& e, const BasisAlgebra& A) {
  if (e.matrix) return EnergyOperator::from_matrix(A, *e.matrix, "custom");
  return EnergyOperator::preset(A, e.preset);
}

// ---- deterministic output ------------------------------------------------------------

/// Shortest round-trip-safe text for a double; locale independent.
inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// RFC-4180 CSV with a header row and CRLF record separators.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : out_(path, std::ios::binary) {
    if (!out_) throw ConfigError("cannot write '" + path.string() + "'");
    width_ = header.size();
    write_fields(header);
  }

  void row(const std::vector<std::string>& fields) {
    if (fields.size() != width_) throw StructuralError("csv row width does not match the header");
    write_fields(fields);
  }

  void row(const std::vector<double>& values) {
    std::vector<std::string> f;
    f.reserve(values.size());
    for (double v : values) f.push_back(format_number(v));
    row(f);
  }

  static std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) {
      if (ch == '"') q += '"';
      q += ch;
    }
    return q + "\"";
  }

 private:
  void write_fields(const std::vector<std::string>& f) {
    for (std::size_t i = 0; i < f.size(); ++i) out_ << (i ? "," : "") << quote(f[i]);
    out_ << "\r\n";
  }

  std::ofstream out_;
  std::size_t width_ = 0;
};

/// Column names for the entries of a group point: g{site}_{row}{col}_{re|im}.
inline std::vector<std::string> group_columns(const DoubleGroup& G, const std::string& prefix = "g") {
  std::vector<std::string> cols;
  const int m = G.rep_size();
  for (int j = 0; j < G.sites(); ++j)
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b)
        for (const char* part : {"re", "im"}) {
          std::string s = prefix;
          if (G.sites() > 1) s += std::to_string(j) + "_";
          s += std::to_string(a) + std::to_string(b) + "_" + part;
          cols.push_back(s);
        }
  return cols;
}

inline void append_group(std::vector<double>& row, const GroupPoint& g) {
  for (const auto& M : g.site)
    for (Eigen::Index a = 0; a < M.rows(); ++a)
      for (Eigen::Index b = 0; b < M.cols(); ++b) {
        row.push_back(M(a, b).real());
        row.push_back(M(a, b).imag());
      }
}

inline std::vector<std::string> dual_columns(const BasisAlgebra& A, const std::string& prefix = "eta") {
  std::vector<std::string> cols;
  for (int j = 0; j < A.sites(); ++j)
    for (int i = 0; i < A.base_dim(); ++i) {
      std::string s = prefix + "_";
      if (A.sites() > 1) s += std::to_string(j) + "_";
      cols.push_back(s + A.labels()[i]);
    }
  return cols;
}

/// t, group entries, eta, H, fiber drifts and a per-sample collectivity residual.
inline void write_trajectory_csv(const std::filesystem::path& path, const PhaseSpace& P, const Trajectory& tr,
                                 const std::vector<double>& collectivity = {}) {
  std::vector<std::string> header{"t"};
  for (auto& s : group_columns(P.group())) header.push_back(s);
  for (auto& s : dual_columns(P.algebra())) header.push_back(s);
  for (const char* s : {"H", "drift_gminus", "drift_etaminus", "collectivity_residual"}) header.emplace_back(s);
  CsvWriter w(path, header);
  for (std::size_t n = 0; n < tr.size(); ++n) {
    std::vector<double> row{tr.times[n]};
    append_group(row, tr.points[n].g);
    for (Eigen::Index i = 0; i < tr.points[n].eta.size(); ++i) row.push_back(tr.points[n].eta[i]);
    row.push_back(tr.energy[n]);
    row.push_back(tr.drift_gminus[n]);
    row.push_back(tr.drift_etaminus[n]);
    row.push_back(n < collectivity.size() ? collectivity[n] : std::nan(""));
    w.row(row);
  }
}

/// One row per site: matrix entries of g_j, then eta_j, then any extra per-site columns.
inline void write_lattice_snapshot_csv(const std::filesystem::path& path, const PhaseSpace& P, const PhasePoint& p,
                                       const std::vector<std::pair<std::string, std::vector<double>>>& extra = {}) {
  const DoubleGroup& G = P.group();
  const auto& A = P.algebra();
  std::vector<std::string> header{"site"};
  const int m = G.rep_size();
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b)
      for (const char* part : {"re", "im"}) header.push_back("g_" + std::to_string(a) + std::to_string(b) + "_" + part);
  for (int i = 0; i < A.base_dim(); ++i) header.push_back("eta_" + A.labels()[i]);
  for (const auto& e : extra) header.push_back(e.first);
  CsvWriter w(path, header);
  for (int j = 0; j < A.sites(); ++j) {
    std::vector<double> row{static_cast<double>(j)};
    const CMat& M = p.g[j];
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) {
        row.push_back(M(a, b).real());
        row.push_back(M(a, b).imag());
      }
    for (int i = 0; i < A.base_dim(); ++i) row.push_back(A.site(p.eta.c, j)[i]);
    for (const auto& e : extra) row.push_back(e.second.at(static_cast<std::size_t>(j)));
    w.row(row);
  }
}

/// JSON numbers cannot hold nan or inf; those become strings.
inline json json_number(double x) {
  if (std::isfinite(x)) return x;
  return format_number(x);
}

inline json report_json(const ValidationReport& r) {
  json a = json::array();
  for (const auto& c : r.checks)
    a.push_back({{"name", c.name},
                 {"residual", json_number(c.residual)},
                 {"tolerance", json_number(c.tolerance)},
                 {"bound", c.lower_bound ? "lower" : "upper"},
                 {"passed", c.passed}});
  return a;
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << j.dump(2) << "\n";
}

}  // namespace pldirac
