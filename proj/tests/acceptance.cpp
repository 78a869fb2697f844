// One PASS/FAIL line per acceptance criterion; nonzero exit when any fails.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "pldirac/scenario.hpp"

using namespace pldirac;
namespace fs = std::filesystem;

namespace {

struct Criterion {
  int number;
  std::string title;
  double budget_seconds;  // 0 when unbounded
  std::function<void(ValidationReport&)> body;
};

DualVector dual6(double a, double b, double c, double d, double e, double f) {
  Vec v(6);
  v << a, b, c, d, e, f;
  return DualVector(v);
}

Vec vec6(double a, double b, double c, double d, double e, double f) { return dual6(a, b, c, d, e, f).c; }

double rel(double a, double ref) { return std::abs(a - ref) / std::max(1.0, std::abs(ref)); }

double order(double coarse, double fine) { return std::log2(coarse / fine); }

PhaseSpace isotropic_phase() { return PhaseSpace(sl2c_iwasawa(), TwoCocycle::coboundary(dual6(0, 0, 0, 0.8, 0, 0))); }
PhaseSpace generic_phase() {
  return PhaseSpace(sl2c_iwasawa(), TwoCocycle::coboundary(dual6(0.3, -0.2, 0.5, 0.4, 0.1, -0.3)));
}
FiberSpec admissible(const PhaseSpace& P) {
  return P.make_fiber(P.group().exp(0.3 * P.algebra().basis(3)), dual6(0, 0, 0, 0.5, 0, 0));
}
FiberSpec non_character(const PhaseSpace& P) {
  return P.make_fiber(P.group().exp(0.3 * P.algebra().basis(3)), dual6(0, 0, 0, 0.5, 0.4, 0));
}
PhasePoint fiber_point(const PhaseSpace& P, const FiberSpec& f, Rng& r, double scale = 0.7) {
  return P.fiber_point(f, r.subgroup(P.group(), Side::plus, scale), r.dual(P.algebra(), Side::plus, scale));
}

void structural(ValidationReport& rep) {
  Rng r(1001);
  for (const auto& name : builtin_names()) {
    const DoubleGroup G = builtin(name);
    for (const auto& c : validate_manin(G.algebra()).checks) {
      if (c.name == "pairing condition number") rep.checks.push_back({name + ": " + c.name, c.residual, c.tolerance, c.passed});
      else rep.add(name + ": " + c.name, c.residual, 1e-12);
    }
    double fac = 0;
    for (int t = 0; t < 1000; ++t) {
      const GroupPoint g = r.group(G);
      const Factors f = G.factorize(g);
      fac = std::max(fac, G.distance(G.multiply(f.plus, f.minus), g));
    }
    rep.add(name + ": factorization roundtrip (1000 points)", fac, 1e-10);
  }
}

void dirac_equivalence(ValidationReport& rep) {
  for (const PhaseSpace& P : {isotropic_phase(), generic_phase()}) {
    const auto& A = P.algebra();
    const FiberSpec f = P.make_fiber(P.group().exp(0.3 * A.basis(4)), dual6(0, 0, 0, 0.2, -0.1, 0.3));
    Rng r(1002);
    double worst = 0, shape = 0, oc = 0;
    for (int t = 0; t < 100; ++t) {
      const PhasePoint p = fiber_point(P, f, r, 1.0);
      shape = std::max(shape, (P.dirac_matrix(p) - P.dirac_matrix_assembled(p)).cwiseAbs().maxCoeff());
      const Mat Oc = P.omega_c_block(p, P.constraint_frame(p));
      oc = std::max(oc, (Oc + Oc.transpose()).cwiseAbs().maxCoeff());
      for (int k = 0; k < 20; ++k) {
        const Differential dF{r.dual(A), r.algebra(A)}, dG{r.dual(A), r.algebra(A)};
        worst = std::max(worst, rel(P.dirac_bracket(dF, dG, p, f), P.dirac_oracle(dF, dG, p)));
      }
    }
    const std::string tag = (cocycle_isotropy_defect(P.algebra(), P.cocycle()) <= 1e-10) ? "isotropic cocycle" : "generic cocycle";
    rep.add(tag + ": closed form vs oracle", worst, 1e-7);
    rep.add(tag + ": block shape [[0,I],[-I,Omega_c]]", shape, 1e-12);
    rep.add(tag + ": Omega_c antisymmetry", oc, 1e-12);
  }
}

void no_cocycle_traces(ValidationReport& rep) {
  auto compare = [&](const std::string& tag, const PhaseSpace& P, const FiberSpec& f, std::uint64_t seed) {
    const auto& A = P.algebra();
    Rng r(seed);
    double worst = 0;
    for (int t = 0; t < 10; ++t) {
      const PhasePoint p = fiber_point(P, f, r, 0.5);
      for (int k = 0; k < 10; ++k) {
        const Differential dF{r.dual(A), r.algebra(A)}, dG{r.dual(A), r.algebra(A)};
        worst = std::max(worst, rel(P.dirac_bracket_reduced(dF, dG, p, f), P.dirac_bracket(dF, dG, p, f)));
      }
    }
    rep.add(tag, worst, 1e-7);
  };
  const LoopLattice lat{sl2c_iwasawa(), 8, 1.0};
  const PhaseSpace L = build_loop_phase(lat);
  const FiberSpec lf = L.make_fiber(L.group().exp(constant_loop_vector(L.algebra(), vec6(0, 0, 0, 0.3, 0, 0))),
                                    constant_loop_dual(L.algebra(), vec6(0, 0, 0, 0.5, 0, 0)));
  compare("lattice derivative cocycle, N = 8: reduced vs full", L, lf, 1003);
  const PhaseSpace P = isotropic_phase();
  compare("coboundary with c_hat: g+- -> g-+*: reduced vs full", P, admissible(P), 1004);
}

void symmetry(ValidationReport& rep) {
  const PhaseSpace P = isotropic_phase();
  const DoubleGroup& G = P.group();
  const auto& A = P.algebra();
  const FiberSpec f = admissible(P), bad = non_character(P);
  Rng r(1005);
  double plain = 0, ext = 0, viol = 0, anomaly = 0;
  for (int t = 0; t < 200; ++t) {
    const PhasePoint p = fiber_point(P, f, r);
    const AlgebraVector X = r.algebra(A), Y = r.algebra(A);
    const double a = r.normal(), b = r.normal();
    plain = std::max(plain, std::abs(P.dirac_bracket(P.momentum_fn(X, 0, false), P.momentum_fn(Y, 0, false), p, f) -
                                     P.momentum_fn(A.bracket(X, Y), 0, false)(p)));
    ext = std::max(ext, std::abs(P.dirac_bracket(P.momentum_fn(X, a), P.momentum_fn(Y, b), p, f) -
                                 P.momentum_fn(A.bracket(X, Y), P.c(X, Y))(p)));
    const PhasePoint q = fiber_point(P, bad, r);
    viol = std::max(viol, std::abs(P.dirac_bracket(P.momentum_fn(X, 0, false), P.momentum_fn(Y, 0, false), q, bad) -
                                   P.momentum_fn(A.bracket(X, Y), 0, false)(q)));
    const PhasePoint z{r.group(G), r.dual(A)};
    const double lhs = P.poisson(P.momentum_fn(X), P.momentum_fn(Y), z) - P.momentum_fn(A.bracket(X, Y), P.c(X, Y))(z);
    anomaly = std::max(anomaly, std::abs(lhs - inner(P.C(z.g), A.bracket(X, Y))));
  }
  rep.add("closure {j_X, j_Y}^D = j_[X,Y] over 200 pairs", plain, 1e-8);
  rep.add("centrally extended closure over 200 pairs", ext, 1e-8);
  rep.add_lower("non-character eta- violates closure", viol, 1e-3);
  rep.add("full-space anomaly <C(g),[X,Y]>", anomaly, 1e-8);
}

void action(ValidationReport& rep) {
  const PhaseSpace P = isotropic_phase();
  const DoubleGroup& G = P.group();
  const auto& A = P.algebra();
  const FiberSpec f = admissible(P);
  Rng r(1006);
  double ident = 0, comp = 0, gen = 0, onf = 0;
  for (int t = 0; t < 50; ++t) {
    const PhasePoint p = fiber_point(P, f, r);
    const GroupPoint h1 = r.group(G, 0.5), h2 = r.group(G, 0.5);
    const PhasePoint e = P.action_d(G.identity(), 0, p, f);
    ident = std::max(ident, G.distance(e.g, p.g) + (e.eta - p.eta).max_abs());
    const PhasePoint q12 = P.action_d(G.multiply(h1, h2), 0, p, f);
    const PhasePoint q1q2 = P.action_d(h1, 0, P.action_d(h2, 0, p, f), f);
    comp = std::max(comp, G.distance(q12.g, q1q2.g) + (q12.eta - q1q2.eta).max_abs());
    onf = std::max(onf, std::max(P.fiber_distance(q12, f), P.fiber_distance(q1q2, f)));
    const AlgebraVector X = r.algebra(A);
    const double a = r.normal(), e5 = 1e-5;
    const PhasePoint qp = P.action_d(G.exp(X, e5), 0, p, f), qm = P.action_d(G.exp(X, -e5), 0, p, f);
    std::vector<CMat> dg;
    for (int j = 0; j < G.sites(); ++j) dg.push_back(p.g[j].inverse() * (qp.g[j] - qm.g[j]) / (2 * e5));
    const Tangent fd{G.coords(dg), (qp.eta - qm.eta) / (2 * e5)};
    gen = std::max(gen, (fd - P.fiber_generator(X, a, p, f)).max_abs());
  }
  rep.add("identity acts trivially", ident, 1e-8);
  rep.add("compatibility d(h1 h2) = d(h1) d(h2)", comp, 1e-8);
  rep.add("finite-difference generator matches V^N", gen, 1e-5);
  rep.add("results stay on the fiber", onf, 1e-9);
}

void dynamics(ValidationReport& rep) {
  {
    const PhaseSpace P = generic_phase();
    const QuadraticHamiltonian H(P, EnergyOperator::preset(P.algebra(), "skewed"));
    const Observable Hobs = H.observable();
    const FiberSpec f = P.make_fiber(P.group().exp(0.3 * P.algebra().basis(4)), dual6(0, 0, 0, 0.2, -0.1, 0.3));
    Rng r(1007);
    const PhasePoint p0 = fiber_point(P, f, r);
    IntegratorConfig cfg;
    cfg.dt = 0.05;
    cfg.steps = 40;
    const DriftOrder fib = energy_drift_order([&](const IntegratorConfig& c) { return flow_fiber(P, Hobs, p0, f, c); }, cfg);
    const DriftOrder full = energy_drift_order([&](const IntegratorConfig& c) { return flow_full(P, Hobs, p0, c); }, cfg);
    rep.add_lower("fiber flow energy drift order", fib.order, 3.5);
    rep.add_lower("full flow energy drift order", full.order, 3.5);
    cfg.steps = 100;
    rep.add("fiber coordinates frozen", flow_fiber(P, Hobs, p0, f, cfg).max_fiber_drift(), 1e-10);
  }
  const PhaseSpace P = isotropic_phase();
  const QuadraticHamiltonian H(P, EnergyOperator::preset(P.algebra(), "skewed"));
  const FiberSpec f = admissible(P), bad = non_character(P);
  Rng r(1008);
  const PhasePoint p0 = fiber_point(P, f, r, 0.3), q0 = fiber_point(P, bad, r, 0.3);
  IntegratorConfig cfg;
  cfg.dt = 0.1;
  cfg.steps = 20;
  std::vector<CollectivityReport> runs;
  for (int k = 0; k < 3; ++k) {
    runs.push_back(collectivity_check(H, flow_fiber(P, H.observable(), p0, f, cfg), f));
    if (k < 2) {
      cfg.dt /= 2;
      cfg.steps *= 2;
    }
  }
  rep.add_lower("collectivity d/dt J residual order", order(runs[1].derivative_residual, runs[2].derivative_residual), 1.5);
  rep.add_lower("orbit reconstruction residual order",
                order(runs[1].reconstruction_residual, runs[2].reconstruction_residual), 1.5);
  rep.add("Hamiltonian field equals generator of L(J)", runs[2].generator_residual, 1e-9);
  const CollectivityReport c = collectivity_check(H, flow_fiber(P, H.observable(), q0, bad, cfg), bad, false);
  rep.add_lower("negative-control fiber breaks collectivity", c.derivative_residual, 1e-3);
}

void hamilton_lagrange(ValidationReport& rep) {
  const PhaseSpace P = isotropic_phase();
  const QuadraticHamiltonian H(P, EnergyOperator::preset(P.algebra(), "skewed"));
  const FiberSpec f = admissible(P);
  Rng r(1009);
  const PhasePoint p0 = fiber_point(P, f, r);
  IntegratorConfig cfg;
  cfg.dt = 0.04;
  cfg.steps = 50;
  std::vector<double> el;
  for (int k = 0; k < 3; ++k) {
    el.push_back(el_residual(H, flow_fiber(P, H.observable(), p0, f, cfg), f).max);
    cfg.dt /= 2;
    cfg.steps *= 2;
  }
  rep.add_lower("Euler-Lagrange residual order (dt halving)", order(el[1], el[2]), 1.8);
  double leg = 0;
  for (int t = 0; t < 100; ++t) {
    const GroupPoint gp = r.subgroup(P.group(), Side::plus, 1.0);
    const AlgebraVector v = r.algebra(P.algebra(), Side::plus);
    leg = std::max(leg, rel(lagrangian_legendre(H, gp, v, f), lagrangian_N(H, gp, v, f)));
  }
  rep.add("<eta, g^-1 gdot> - H equals the closed form on the fiber", leg, 1e-9);

  for (const PhaseSpace& Q : {isotropic_phase(), generic_phase()}) {
    const QuadraticHamiltonian K(Q, EnergyOperator::preset(Q.algebra(), "skewed"));
    const auto& A = Q.algebra();
    const FiberSpec g = Q.make_fiber(r.subgroup(Q.group(), Side::minus), r.dual(A, Side::minus, 0.5));
    double rt = 0, forms = 0, op = 0;
    for (int t = 0; t < 100; ++t) {
      const GroupPoint gp = r.subgroup(Q.group(), Side::plus, 1.0);
      const AlgebraVector v = r.algebra(A, Side::plus);
      rt = std::max(rt, (velocity_from_state(K, Q.fiber_point(g, gp, legendre_map(K, gp, v, g))) - v).max_abs());
      const double LN = lagrangian_N(K, gp, v, g);
      forms = std::max({forms, rel(lagrangian_R(K, gp, v, g), LN), rel(lagrangian_KS(K, gp, v, g), LN)});
      op = std::max(op, operator_identity_check(K, gp).max());
    }
    const std::string tag = (cocycle_isotropy_defect(Q.algebra(), Q.cocycle()) <= 1e-10) ? "isotropic cocycle: " : "generic cocycle: ";
    rep.add(tag + "Legendre roundtrip", rt, 1e-9);
    rep.add(tag + "three Lagrangian forms agree", forms, 1e-9);
    rep.add(tag + "operator identity at 100 g+", op, 1e-9);
  }
}

void lattice(ValidationReport& rep) {
  for (const auto& name : builtin_names()) {
    const DoubleGroup G = builtin(name);
    for (int N : {8, 16, 32, 64})
      for (const auto& c : loop_exact_identities(G, N, 1.0).checks)
        rep.checks.push_back({name + " N=" + std::to_string(N) + ": " + c.name, c.residual, c.tolerance, c.passed});
    for (LoopIdentity id : {LoopIdentity::cocycle_jacobi, LoopIdentity::group_cocycle, LoopIdentity::ad_compatibility}) {
      const ConvergenceStudy s = convergence_study(G, id);
      char slope[32];
      std::snprintf(slope, sizeof slope, "%.3f", s.slope);
      const bool ok = s.slope >= 1.7 && s.slope <= 2.3;
      rep.checks.push_back(
          {name + ": |slope - 2| of " + identity_name(id) + " (slope " + slope + ")", std::abs(s.slope - 2.0), 0.3, ok});
    }
  }
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void reproducibility(ValidationReport& rep) {
  const fs::path root = fs::temp_directory_path() / "pldirac_acceptance";
  for (const char* name : {"brackets_isotropic", "flow_sl2c", "collective_sl2c", "sigma_sl2c", "loop_su2_wave"}) {
    std::vector<std::string> artifacts;
    for (const char* run : {"a", "b"}) {
      ScenarioConfig cfg = load_config(fs::path(PLDIRAC_CONFIG_DIR) / (std::string(name) + ".json"));
      cfg.output_dir = (root / name / run).string();
      fs::remove_all(cfg.output_dir);
      Scenario S(cfg);
      RunReport r = run_experiment(S);
      write_reports(S, r, json::object());
      artifacts = r.artifacts;
    }
    int csvs = 0, differ = 0;
    for (const auto& a : artifacts) {
      if (fs::path(a).extension() != ".csv") continue;
      ++csvs;
      if (slurp(root / name / "a" / a) != slurp(root / name / "b" / a)) ++differ;
    }
    rep.add(std::string(name) + ": differing CSV artifacts", differ, 0);
    rep.add_lower(std::string(name) + ": CSV artifacts compared", csvs, 0);
  }
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "structural suite", 5, structural},
      {2, "Dirac bracket equivalence", 30, dirac_equivalence},
      {3, "no traces of the cocycle in the reduced bracket", 0, no_cocycle_traces},
      {4, "symmetry restoration", 0, symmetry},
      {5, "action consistency", 0, action},
      {6, "dynamics", 120, dynamics},
      {7, "Hamilton and Lagrange pictures", 0, hamilton_lagrange},
      {8, "lattice convergence", 120, lattice},
      {9, "reproducibility", 0, reproducibility},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    ValidationReport rep;
    std::string error;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.body(rep);
    } catch (const std::exception& e) {
      error = e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.budget_seconds == 0 || secs <= c.budget_seconds;
    const bool ok = error.empty() && in_time && !rep.checks.empty() && rep.all_passed();
    if (!ok) ++failures;
    std::printf("%s criterion %d: %s (%.2f s%s)\n", ok ? "PASS" : "FAIL", c.number, c.title.c_str(), secs,
                c.budget_seconds > 0 ? (", budget " + std::to_string(static_cast<int>(c.budget_seconds)) + " s").c_str()
                                     : "");
    for (const auto& r : rep.checks)
      std::printf("    %s %-62s %.3e %s %.1e\n", r.passed ? "ok  " : "FAIL", r.name.c_str(), r.residual,
                  r.lower_bound ? ">" : "<=", r.tolerance);
    if (!error.empty()) std::printf("    error: %s\n", error.c_str());
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
