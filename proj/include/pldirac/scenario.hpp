#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "io.hpp"
#include "loop.hpp"

namespace pldirac {

/// Process exit codes of the scenario runner.
enum ExitCode : int { exit_pass = 0, exit_check_failure = 1, exit_config_error = 2, exit_numerical_failure = 3 };

struct RunReport {
  std::string experiment;
  ValidationReport checks;
  json metrics = json::object();
  std::vector<std::string> artifacts;
  double wall_seconds = 0.0;

  bool passed() const { return checks.all_passed(); }
};

namespace detail {

inline ValidationReport prefixed(const std::string& prefix, const ValidationReport& r) {
  ValidationReport out;
  for (auto c : r.checks) {
    c.name = prefix + ": " + c.name;
    out.checks.push_back(std::move(c));
  }
  return out;
}

// Relative error against max(1, |reference|).
inline double rel(double a, double ref) { return std::abs(a - ref) / std::max(1.0, std::abs(ref)); }

// Observed order of a refinement sequence with factor-2 steps, from the last two entries.
inline double last_order(const std::vector<double>& r) {
  if (r.size() < 2 || !(r[r.size() - 1] > 0.0)) return INFINITY;
  return std::log2(r[r.size() - 2] / r[r.size() - 1]);
}

}  // namespace detail

/// Everything a runner needs: the parsed config, the algebra and group, one seeded stream.
class Scenario {
 public:
  explicit Scenario(ScenarioConfig cfg)
      : cfg_(std::move(cfg)), loaded_(load_algebra(cfg_.algebra)), rng_(cfg_.seed), out_(cfg_.output_dir) {}

  const ScenarioConfig& config() const { return cfg_; }
  const BasisAlgebra& algebra() const { return loaded_.algebra; }
  bool has_group() const { return loaded_.group.has_value(); }
  Rng& rng() { return rng_; }
  const std::filesystem::path& output_dir() const { return out_; }

  const DoubleGroup& group() const {
    if (!loaded_.group)
      throw ConfigError("experiment '" + cfg_.experiment +
                        "' needs a double group: use a built-in algebra or declare a representation");
    return *loaded_.group;
  }

  PhaseSpace phase() const {
    if (cfg_.cocycle.kind == "lattice") throw ConfigError("/cocycle: the lattice cocycle is only for loop experiments");
    return PhaseSpace(group(), make_cocycle(cfg_.cocycle, algebra()));
  }

  std::filesystem::path artifact(RunReport& rep, const std::string& name) {
    std::filesystem::create_directories(out_);
    rep.artifacts.push_back(name);
    return out_ / name;
  }

  /// Base-dimension coordinates supported on one side, or a config error.
  Vec side_coords(const std::vector<double>& v, Side s, const std::string& what) const {
    const auto& A = algebra();
    const Vec x = sized_vec(v, A.base_dim(), what);
    for (int i : A.base_indices(opposite(s)))
      if (x[i] != 0.0)
        throw ConfigError(what + ": coordinate " + std::to_string(i) + " lies outside " +
                          (s == Side::plus ? "g+" : "g-"));
    return x;
  }

  /// The configured fiber on a dense phase space; (e, 0) when none is given.
  FiberSpec fiber(const PhaseSpace& P, bool control = false) const {
    const auto& A = P.algebra();
    if (!cfg_.fiber) {
      if (control) throw ConfigError("/fiber/control_eta_minus: no negative-control fiber configured");
      return P.make_fiber(P.group().identity(), A.zero_dual());
    }
    const Vec gm = side_coords(cfg_.fiber->g_minus, Side::minus, "/fiber/g_minus");
    const std::vector<double>& ev =
        control ? cfg_.fiber->control_eta_minus.value() : cfg_.fiber->eta_minus;
    const Vec em = side_coords(ev, Side::minus, control ? "/fiber/control_eta_minus" : "/fiber/eta_minus");
    if (A.is_lattice())
      return P.make_fiber(P.group().exp(constant_loop_vector(A, gm)), constant_loop_dual(A, em));
    return P.make_fiber(P.group().exp(AlgebraVector(gm)), DualVector(em));
  }

  /// Initial point on the fiber: configured coordinates or a seeded draw.
  PhasePoint initial_point(const PhaseSpace& P, const FiberSpec& f) {
    const auto& A = P.algebra();
    const GroupPoint gp = cfg_.initial.g_plus
                              ? P.group().exp(AlgebraVector(side_coords(*cfg_.initial.g_plus, Side::plus, "/initial/g_plus")))
                              : rng_.subgroup(P.group(), Side::plus, cfg_.initial.scale);
    const DualVector ep = cfg_.initial.eta_plus
                              ? DualVector(side_coords(*cfg_.initial.eta_plus, Side::plus, "/initial/eta_plus"))
                              : rng_.dual(A, Side::plus, cfg_.initial.scale);
    return P.fiber_point(f, gp, ep);
  }

  PhasePoint random_fiber_point(const PhaseSpace& P, const FiberSpec& f) {
    return P.fiber_point(f, rng_.subgroup(P.group(), Side::plus), rng_.dual(P.algebra(), Side::plus));
  }

  Differential random_differential(const BasisAlgebra& A) { return {rng_.dual(A), rng_.algebra(A)}; }

 private:
  ScenarioConfig cfg_;
  LoadedAlgebra loaded_;
  Rng rng_;
  std::filesystem::path out_;
};

// ---- check ---------------------------------------------------------------------------------

inline RunReport run_check(Scenario& S) {
  RunReport rep;
  const auto& A = S.algebra();
  rep.checks.merge(detail::prefixed("algebra", validate_manin(A)));

  const TwoCocycle c = make_cocycle(S.config().cocycle, A);
  if (c.kind == CocycleKind::lattice_derivative) throw ConfigError("/cocycle: check runs on dense algebras");
  {
    double anti = 0, cyc = 0;
    for (int i = 0; i < A.dim(); ++i)
      for (int j = 0; j < A.dim(); ++j) {
        anti = std::max(anti, std::abs(c.eval(A, A.basis(i), A.basis(j)) + c.eval(A, A.basis(j), A.basis(i))));
        for (int k = 0; k < A.dim(); ++k) {
          const AlgebraVector X = A.basis(i), Y = A.basis(j), Z = A.basis(k);
          cyc = std::max(cyc, std::abs(c.eval(A, A.bracket(X, Y), Z) + c.eval(A, A.bracket(Y, Z), X) +
                                       c.eval(A, A.bracket(Z, X), Y)));
        }
      }
    rep.checks.add("cocycle: antisymmetry", anti, 1e-12);
    rep.checks.add("cocycle: 2-cocycle identity", cyc, 1e-12);
  }
  rep.metrics["cocycle_isotropy_defect"] = cocycle_isotropy_defect(A, c);
  if (!S.has_group()) {
    rep.metrics["group"] = "none declared; group checks skipped";
    return rep;
  }

  const DoubleGroup& G = S.group();
  Rng& r = S.rng();
  const int n = S.config().samples.points;
  double fac = 0, sub = 0, inv = 0, hom = 0, pinv = 0, ce = 0, law = 0, compat = 0, fd = 0;
  for (int t = 0; t < n; ++t) {
    const GroupPoint g = r.group(G), h = r.group(G);
    const Factors f = G.factorize(g);
    fac = std::max(fac, G.distance(G.multiply(f.plus, f.minus), g));
    sub = std::max(sub, std::max(G.subgroup_defect(f.plus, Side::plus), G.subgroup_defect(f.minus, Side::minus)));
    inv = std::max(inv, G.distance(G.multiply(g, G.inverse(g)), G.identity()));
    const AlgebraVector X = r.algebra(A), Y = r.algebra(A);
    hom = std::max(hom, (G.adjoint(g, A.bracket(X, Y)) - A.bracket(G.adjoint(g, X), G.adjoint(g, Y))).max_abs());
    pinv = std::max(pinv, std::abs(A.pair(G.adjoint(g, X), G.adjoint(g, Y)) - A.pair(X, Y)));
    law = std::max(law, (G.cocycle(c, G.multiply(g, h)) - G.coadjoint_star(G.inverse(g), G.cocycle(c, h)) -
                         G.cocycle(c, g)).max_abs());
    compat = std::max(compat, std::abs(c.eval(A, G.adjoint(g, X), G.adjoint(g, Y)) - c.eval(A, X, Y) -
                                       inner(G.cocycle(c, G.inverse(g)), A.bracket(X, Y))));
    if (t < 20) {
      const double e = 1e-5;
      const DualVector d = (G.cocycle(c, G.exp(X, e)) - G.cocycle(c, G.exp(X, -e))) / (2 * e);
      fd = std::max(fd, (-1.0 * d - c.hat(A, X)).max_abs());
    }
  }
  ce = G.cocycle(c, G.identity()).max_abs();
  rep.checks.add("group: factorization roundtrip", fac, 1e-10);
  rep.checks.add("group: factors in their subgroups", sub, 1e-10);
  rep.checks.add("group: inverse", inv, 1e-10);
  rep.checks.add("group: Ad is a homomorphism", hom, 1e-10);
  rep.checks.add("group: pairing Ad-invariance", pinv, 1e-10);
  rep.checks.add("cocycle: C(e) = 0", ce, 1e-14);
  rep.checks.add("cocycle: group cocycle law", law, 1e-9);
  rep.checks.add("cocycle: Ad compatibility", compat, 1e-9);
  rep.checks.add("cocycle: derivative of C matches c_hat", fd, 1e-6);

  const PhaseSpace P = S.phase();
  const FiberSpec f = S.fiber(P);
  const QuadraticHamiltonian H(P, make_energy(S.config().energy, A));
  double om = 0, hf = 0, pt = 0, shape = 0, oc = 0, dir = 0, da = 0, tan = 0, hg = 0;
  for (int t = 0; t < std::min(n, 20); ++t) {
    const PhasePoint z{r.group(G), r.dual(A)};
    const Differential dF = S.random_differential(A), dG = S.random_differential(A);
    const Tangent u{r.algebra(A), r.dual(A)}, w{r.algebra(A), r.dual(A)};
    om = std::max(om, std::abs(P.omega(z, u, w) + P.omega(z, w, u)));
    hf = std::max(hf, std::abs(P.omega(z, P.ham_field(dF, z), w) - dF.apply(w)));
    pt = std::max(pt, detail::rel(PhaseSpace::stack(dF).dot(P.poisson_tensor(z) * PhaseSpace::stack(dG)),
                                  P.poisson(dF, dG, z)));

    const PhasePoint p = S.random_fiber_point(P, f);
    shape = std::max(shape, (P.dirac_matrix(p) - P.dirac_matrix_assembled(p)).cwiseAbs().maxCoeff());
    const Mat Oc = P.omega_c_block(p, P.constraint_frame(p));
    oc = std::max(oc, (Oc + Oc.transpose()).cwiseAbs().maxCoeff());
    const double b = P.dirac_bracket(dF, dG, p, f);
    dir = std::max(dir, detail::rel(b, P.dirac_oracle(dF, dG, p)));
    da = std::max(da, std::abs(b + P.dirac_bracket(dG, dF, p, f)));
    tan = std::max(tan, P.kernel_defect(p, P.dirac_field(dF, p)));
    const Differential an = H.gradient(p), nu = P.fd_differential(H.observable(), p);
    hg = std::max(hg, std::max((an.dg - nu.dg).max_abs(), (an.delta - nu.delta).max_abs()) /
                          std::max(1.0, std::max(an.dg.max_abs(), an.delta.max_abs())));
  }
  rep.checks.add("phase: omega_c antisymmetry", om, 1e-12);
  rep.checks.add("phase: omega_c(V_F, .) = dF", hf, 1e-8);
  rep.checks.add("phase: Poisson tensor matches bracket", pt, 1e-8);
  rep.checks.add("phase: Dirac matrix closed form vs assembled", shape, 1e-10);
  rep.checks.add("phase: Omega_c antisymmetry", oc, 1e-12);
  rep.checks.add("phase: Dirac bracket closed form vs oracle", dir, 1e-7);
  rep.checks.add("phase: Dirac bracket antisymmetry", da, 1e-12);
  rep.checks.add("phase: Dirac field tangent to fiber", tan, 1e-12);
  rep.checks.merge(detail::prefixed("energy", H.energy().verify()));
  rep.checks.merge(detail::prefixed("energy", H.dressed(r.group(G)).verify(A.pairing_base())));
  rep.checks.add("energy: Hamiltonian differential vs finite differences", hg, 1e-6);
  return rep;
}

// ---- brackets ------------------------------------------------------------------------------

inline RunReport run_brackets(Scenario& S) {
  RunReport rep;
  const PhaseSpace P = S.phase();
  const DoubleGroup& G = P.group();
  const auto& A = P.algebra();
  const FiberSpec f = S.fiber(P);
  const auto& sc = S.config().samples;
  Rng& r = S.rng();

  CsvWriter table(S.artifact(rep, "brackets.csv"),
                  {"observable_i", "observable_j", "poisson_c", "dirac_bracket", "dirac_oracle", "abs_diff"});
  double worst = 0, shape = 0, oc = 0, reduced = 0;
  const bool isotropic = cocycle_isotropy_defect(A, P.cocycle()) <= 1e-10;
  for (int t = 0; t < sc.points; ++t) {
    const PhasePoint p = S.random_fiber_point(P, f);
    const Mat D = P.dirac_matrix(p);
    shape = std::max(shape, (D - P.dirac_matrix_assembled(p)).cwiseAbs().maxCoeff());
    const Mat Oc = P.omega_c_block(p, P.constraint_frame(p));
    oc = std::max(oc, (Oc + Oc.transpose()).cwiseAbs().maxCoeff());
    for (int k = 0; k < sc.pairs; ++k) {
      const Differential dF = S.random_differential(A), dG = S.random_differential(A);
      const double pc = P.poisson(dF, dG, p), db = P.dirac_bracket(dF, dG, p, f), dorc = P.dirac_oracle(dF, dG, p);
      worst = std::max(worst, detail::rel(db, dorc));
      if (isotropic) reduced = std::max(reduced, detail::rel(P.dirac_bracket_reduced(dF, dG, p, f), db));
      const std::string id = "p" + std::to_string(t) + "_";
      table.row({id + "F" + std::to_string(k), id + "G" + std::to_string(k), format_number(pc), format_number(db),
                 format_number(dorc), format_number(std::abs(db - dorc))});
    }
  }
  rep.checks.add("closed-form Dirac bracket vs oracle (relative)", worst, 1e-7);
  rep.checks.add("Dirac matrix block shape [[0,I],[-I,Omega_c]]", shape, 1e-10);
  rep.checks.add("Omega_c antisymmetry", oc, 1e-12);
  if (isotropic) rep.checks.add("reduced bracket equals full bracket", reduced, 1e-7);
  else rep.metrics["reduced_bracket"] = "not applicable: cocycle does not vanish on g+ and g-";

  // The centrally extended momentum closes on the full space only up to <C(g), [X, Y]>.
  double anomaly = 0;
  for (int t = 0; t < 2 * sc.points; ++t) {
    const PhasePoint z{r.group(G), r.dual(A)};
    const AlgebraVector X = r.algebra(A), Y = r.algebra(A);
    const double lhs = P.poisson(P.momentum_fn(X), P.momentum_fn(Y), z) -
                       P.momentum_fn(A.bracket(X, Y), P.c(X, Y))(z);
    anomaly = std::max(anomaly, std::abs(lhs - inner(P.C(z.g), A.bracket(X, Y))));
  }
  rep.checks.add("full-space anomaly <C(g), [X,Y]>", anomaly, 1e-8);

  if (f.character && f.in_kernel) {
    double plain = 0, ext = 0, ident = 0, comp = 0, gen = 0, onf = 0;
    for (int t = 0; t < 2 * sc.points; ++t) {
      const PhasePoint p = S.random_fiber_point(P, f);
      const AlgebraVector X = r.algebra(A), Y = r.algebra(A);
      const double a = r.normal(), b = r.normal();
      plain = std::max(plain, std::abs(P.dirac_bracket(P.momentum_fn(X, 0, false), P.momentum_fn(Y, 0, false), p, f) -
                                       P.momentum_fn(A.bracket(X, Y), 0, false)(p)));
      ext = std::max(ext, std::abs(P.dirac_bracket(P.momentum_fn(X, a), P.momentum_fn(Y, b), p, f) -
                                   P.momentum_fn(A.bracket(X, Y), P.c(X, Y))(p)));
      if (t < sc.points / 2 + 1) {
        const GroupPoint h1 = r.group(G, 0.5), h2 = r.group(G, 0.5);
        const PhasePoint e = P.action_d(G.identity(), 0, p, f);
        ident = std::max(ident, G.distance(e.g, p.g) + (e.eta - p.eta).max_abs());
        const PhasePoint q12 = P.action_d(G.multiply(h1, h2), 0, p, f);
        const PhasePoint q1q2 = P.action_d(h1, 0, P.action_d(h2, 0, p, f), f);
        comp = std::max(comp, G.distance(q12.g, q1q2.g) + (q12.eta - q1q2.eta).max_abs());
        onf = std::max(onf, P.fiber_distance(q12, f));
        const double e5 = 1e-5;
        const PhasePoint qp = P.action_d(G.exp(X, e5), 0, p, f), qm = P.action_d(G.exp(X, -e5), 0, p, f);
        std::vector<CMat> dg;
        for (int j = 0; j < G.sites(); ++j) dg.push_back(p.g[j].inverse() * (qp.g[j] - qm.g[j]) / (2 * e5));
        const Tangent fd{G.coords(dg), (qp.eta - qm.eta) / (2 * e5)};
        gen = std::max(gen, (fd - P.fiber_generator(X, a, p, f)).max_abs());
      }
    }
    rep.checks.add("momentum closure {j_X, j_Y}^D = j_[X,Y]", plain, 1e-8);
    rep.checks.add("extended momentum closure", ext, 1e-8);
    rep.checks.add("action: identity", ident, 1e-8);
    rep.checks.add("action: compatibility", comp, 1e-8);
    rep.checks.add("action: generator matches V^N", gen, 1e-5);
    rep.checks.add("action: stays on the fiber", onf, 1e-9);
  } else {
    rep.metrics["symmetry"] = "fiber is not admissible (eta- a character and g- in ker C needed); closure skipped";
  }

  if (S.config().fiber && S.config().fiber->control_eta_minus) {
    const FiberSpec bad = S.fiber(P, true);
    double viol = 0;
    for (int t = 0; t < sc.points; ++t) {
      const PhasePoint p = S.random_fiber_point(P, bad);
      const AlgebraVector X = r.algebra(A), Y = r.algebra(A);
      viol = std::max(viol, std::abs(P.dirac_bracket(P.momentum_fn(X, 0, false), P.momentum_fn(Y, 0, false), p, bad) -
                                     P.momentum_fn(A.bracket(X, Y), 0, false)(p)));
    }
    rep.metrics["control_fiber_character"] = bad.character;
    rep.checks.add_lower("negative control: closure violated off the character fibers", viol, 1e-3);
  }
  rep.metrics["fiber_character"] = f.character;
  rep.metrics["fiber_in_kernel"] = f.in_kernel;
  return rep;
}

// ---- flow ------------------------------------------------------------------------------------

inline RunReport run_flow(Scenario& S) {
  RunReport rep;
  const PhaseSpace P = S.phase();
  const FiberSpec f = S.fiber(P);
  const QuadraticHamiltonian H(P, make_energy(S.config().energy, P.algebra()));
  const Observable Hobs = H.observable();
  const PhasePoint p0 = S.initial_point(P, f);
  const IntegratorConfig cfg = S.config().integrator;

  const Trajectory fib = flow_fiber(P, Hobs, p0, f, cfg);
  const Trajectory full = flow_full(P, Hobs, p0, cfg);
  std::vector<double> coll;
  if (f.character && f.in_kernel && fib.size() >= 3) coll = collectivity_check(H, fib, f).series;
  write_trajectory_csv(S.artifact(rep, "trajectory_fiber.csv"), P, fib, coll);
  write_trajectory_csv(S.artifact(rep, "trajectory_full.csv"), P, full);

  auto order_check = [&](const std::string& name, const std::function<Trajectory(const IntegratorConfig&)>& run,
                         const Trajectory& base) {
    const double d = base.max_energy_drift();
    rep.metrics[name + "_energy_drift"] = d;
    if (d <= 1e-12 * std::max(1.0, std::abs(base.energy.front()))) {
      rep.checks.add(name + " flow energy drift at roundoff", d, 1e-12 * std::max(1.0, std::abs(base.energy.front())));
      return;
    }
    const DriftOrder o = energy_drift_order(run, cfg);
    rep.metrics[name + "_energy_drift_half_dt"] = o.drift_fine;
    rep.checks.add_lower(name + " flow energy drift order (dt halving)", o.order, 3.5);
  };
  order_check("fiber", [&](const IntegratorConfig& c) { return flow_fiber(P, Hobs, p0, f, c); }, fib);
  order_check("full", [&](const IntegratorConfig& c) { return flow_full(P, Hobs, p0, c); }, full);
  rep.checks.add("fiber coordinates frozen", fib.max_fiber_drift(), 1e-10);
  rep.metrics["method"] = method_name(cfg.method);
  rep.metrics["dt"] = cfg.dt;
  rep.metrics["steps"] = cfg.steps;
  return rep;
}

// ---- collective ----------------------------------------------------------------------------

inline RunReport run_collective(Scenario& S) {
  RunReport rep;
  const PhaseSpace P = S.phase();
  const FiberSpec f = S.fiber(P);
  if (!(f.character && f.in_kernel))
    throw ConfigError("/fiber: collectivity needs eta- a character and g- in ker C");
  const QuadraticHamiltonian H(P, make_energy(S.config().energy, P.algebra()));
  const PhasePoint p0 = S.initial_point(P, f);
  IntegratorConfig cfg = S.config().integrator;

  CsvWriter res(S.artifact(rep, "collectivity.csv"),
                {"dt", "derivative_residual", "reconstruction_residual", "orbit_residual", "generator_residual"});
  std::vector<double> der, recon, orbit;
  double gen = 0;
  Trajectory last;
  CollectivityReport last_rep;
  for (int k = 0; k < S.config().samples.refinements; ++k) {
    last = flow_fiber(P, H.observable(), p0, f, cfg);
    last_rep = collectivity_check(H, last, f);
    res.row(std::vector<double>{cfg.dt, last_rep.derivative_residual, last_rep.reconstruction_residual,
                                last_rep.orbit_residual, last_rep.generator_residual});
    der.push_back(last_rep.derivative_residual);
    recon.push_back(last_rep.reconstruction_residual);
    orbit.push_back(last_rep.orbit_residual);
    gen = std::max(gen, last_rep.generator_residual);
    // Samples stay every record_every steps, so their spacing halves with dt.
    cfg.dt *= 0.5;
    cfg.steps *= 2;
  }
  write_trajectory_csv(S.artifact(rep, "trajectory.csv"), P, last, last_rep.series);
  rep.checks.add_lower("momentum derivative residual order", detail::last_order(der), 1.5);
  rep.checks.add_lower("orbit reconstruction residual order", detail::last_order(recon), 1.5);
  rep.checks.add_lower("induced action orbit residual order", detail::last_order(orbit), 1.5);
  rep.checks.add("Hamiltonian field equals generator of L(J)", gen, 1e-9);
  rep.metrics["derivative_residuals"] = der;
  rep.metrics["reconstruction_residuals"] = recon;
  rep.metrics["orbit_residuals"] = orbit;

  if (S.config().fiber && S.config().fiber->control_eta_minus) {
    const FiberSpec bad = S.fiber(P, true);
    const IntegratorConfig fine = [&] {
      IntegratorConfig c = cfg;
      c.dt *= 2;
      c.steps /= 2;
      return c;
    }();
    const Trajectory tr = flow_fiber(P, H.observable(), S.initial_point(P, bad), bad, fine);
    const CollectivityReport cr = collectivity_check(H, tr, bad, false);
    rep.metrics["control_derivative_residual"] = cr.derivative_residual;
    rep.checks.add_lower("negative control: collectivity fails off the admissible fibers", cr.derivative_residual,
                         1e-3);
  }
  return rep;
}

// ---- legendre --------------------------------------------------------------------------------

inline RunReport run_legendre(Scenario& S) {
  RunReport rep;
  const PhaseSpace P = S.phase();
  const auto& A = P.algebra();
  const FiberSpec f = S.fiber(P);
  const QuadraticHamiltonian H(P, make_energy(S.config().energy, A));
  Rng& r = S.rng();

  CsvWriter out(S.artifact(rep, "lagrangians.csv"),
                {"sample", "L_N", "L_R", "L_KS", "L_legendre", "roundtrip_error", "operator_identity_residual"});
  const bool isotropic = cocycle_isotropy_defect(A, P.cocycle()) <= 1e-10;
  const bool admissible = f.character && f.in_kernel;
  double rt = 0, rt2 = 0, lr = 0, lks = 0, lleg = 0, op = 0;
  for (int t = 0; t < S.config().samples.points; ++t) {
    const GroupPoint gp = r.subgroup(P.group(), Side::plus);
    const AlgebraVector v = r.algebra(A, Side::plus);
    const DualVector ep = legendre_map(H, gp, v, f);
    const double e1 = (velocity_from_state(H, P.fiber_point(f, gp, ep)) - v).max_abs();
    rt = std::max(rt, e1);
    const DualVector ep2 = r.dual(A, Side::plus);
    const AlgebraVector v2 = velocity_from_state(H, P.fiber_point(f, gp, ep2));
    rt2 = std::max(rt2, (A.project(legendre_map(H, gp, v2, f), Side::plus) - ep2).max_abs());
    const double LN = lagrangian_N(H, gp, v, f), LR = lagrangian_R(H, gp, v, f);
    const double LK = lagrangian_KS(H, gp, v, f), LL = lagrangian_legendre(H, gp, v, f);
    lr = std::max(lr, detail::rel(LR, LN));
    lks = std::max(lks, detail::rel(LK, LN));
    // Off isotropy the transform carries the extra linear term <C(g+^-1), v>.
    const double extra = isotropic ? 0.0 : inner(P.C(P.group().inverse(gp)), v);
    lleg = std::max(lleg, detail::rel(LL, LN + extra));
    const double oi = operator_identity_check(H, gp).max();
    op = std::max(op, oi);
    out.row(std::vector<double>{static_cast<double>(t), LN, LR, LK, LL, e1, oi});
  }
  rep.checks.add("Legendre roundtrip velocity -> momentum -> velocity", rt, 1e-9);
  rep.checks.add("Legendre roundtrip momentum -> velocity -> momentum", rt2, 1e-9);
  rep.checks.add("Lagrangian R-product form equals L_N", lr, 1e-9);
  rep.checks.add("Lagrangian pi-form equals L_N", lks, 1e-9);
  if (admissible)
    rep.checks.add(isotropic ? "Lagrangian from the Legendre transform equals L_N"
                             : "Legendre transform equals L_N + <C(g+^-1), v>",
                   lleg, 1e-9);
  else
    rep.metrics["legendre_consistency"] = "not applicable: eta- must be a character and g- in ker C";
  rep.checks.add("operator identity", op, 1e-9);

  // Exactness of the restricted 1-form needs c to vanish on g+ and g-.
  if (isotropic) {
    double th = 0;
    for (int t = 0; t < 5; ++t) th = std::max(th, theta_exactness_residual(P, S.random_fiber_point(P, f)));
    rep.checks.add("dTheta = -omega_c on the fiber", th, 1e-6);
  } else {
    rep.metrics["theta_exactness"] = "not applicable: cocycle does not vanish on g+ and g-";
  }
  return rep;
}

// ---- sigma -------------------------------------------------------------------------------------

inline RunReport run_sigma(Scenario& S) {
  RunReport rep;
  const PhaseSpace P = S.phase();
  const DoubleGroup& G = P.group();
  const FiberSpec f = S.fiber(P);
  const QuadraticHamiltonian H(P, make_energy(S.config().energy, P.algebra()));
  const PhasePoint p0 = S.initial_point(P, f);
  IntegratorConfig cfg = S.config().integrator;
  const bool identity_fiber = G.distance(f.g_minus, G.identity()) <= 1e-12 && f.eta_minus.max_abs() == 0.0;

  CsvWriter conv(S.artifact(rep, "el_convergence.csv"),
                 {"dt", "grouped_residual", "alternative_residual", "identity_fiber_residual"});
  std::vector<double> grouped, alternative, reduced;
  Trajectory last;
  ElSeries last_series;
  for (int k = 0; k < S.config().samples.refinements; ++k) {
    last = flow_fiber(P, H.observable(), p0, f, cfg);
    last_series = el_residual(H, last, f, ElReading::grouped);
    grouped.push_back(last_series.max);
    alternative.push_back(el_residual(H, last, f, ElReading::alternative).max);
    reduced.push_back(identity_fiber ? el_residual_identity_fiber(H, last, f).max : std::nan(""));
    conv.row(std::vector<double>{cfg.dt, grouped.back(), alternative.back(), reduced.back()});
    // Samples stay every record_every steps, so their spacing halves with dt.
    cfg.dt *= 0.5;
    cfg.steps *= 2;
  }

  CsvWriter el(S.artifact(rep, "el_residual.csv"),
               {"t", "el_residual_norm", "lagrangian_value", "hamiltonian_value"});
  for (std::size_t i = 0; i < last_series.times.size(); ++i) {
    // el_residual skips two samples at each end.
    const PhasePoint& p = last.points[i + 2];
    const GroupPoint gp = G.factorize(p.g).plus;
    el.row(std::vector<double>{last_series.times[i], last_series.residual[i],
                               lagrangian_N(H, gp, velocity_from_state(H, p), f), H.value(p)});
  }

  // The Lagrange equation is derived for c vanishing on g+ and g-; otherwise only report the data.
  if (cocycle_isotropy_defect(P.algebra(), P.cocycle()) <= 1e-10) {
    rep.checks.add_lower("Euler-Lagrange residual order (dt halving)", detail::last_order(grouped), 1.8);
    if (identity_fiber)
      rep.checks.add_lower("reduced Euler-Lagrange residual order on N(e,0)", detail::last_order(reduced), 1.8);
  } else {
    rep.metrics["euler_lagrange"] = "not asserted: cocycle does not vanish on g+ and g-";
  }
  rep.metrics["grouped_reading_order"] = json_number(detail::last_order(grouped));
  rep.metrics["grouped_residuals"] = grouped;
  rep.metrics["alternative_residuals"] = alternative;
  rep.metrics["alternative_reading_order"] = json_number(detail::last_order(alternative));
  return rep;
}

// ---- loop --------------------------------------------------------------------------------------

namespace detail {

inline DoubleGroup dense_base(const Scenario& S) {
  const DoubleGroup& G = S.group();
  if (G.algebra().is_lattice()) throw ConfigError("/algebra: loop experiments need a dense base algebra");
  const auto& cc = S.config().cocycle;
  if (cc.kind != "zero" && cc.kind != "lattice")
    throw ConfigError("/cocycle: loop experiments use the lattice derivative cocycle set by /loop/level");
  return G;
}

}  // namespace detail

inline RunReport run_loop(Scenario& S) {
  RunReport rep;
  const auto& lc = S.config().loop;
  const LoopLattice lat{detail::dense_base(S), lc.sites, lc.level};
  const PhaseSpace P = build_loop_phase(lat);
  const auto& A = P.algebra();
  const QuadraticHamiltonian H(P, make_energy(S.config().energy, A));
  const FiberSpec f = S.fiber(P);
  if (!(f.character && f.in_kernel)) throw ConfigError("/fiber: loop flows need eta- a character and g- constant");

  const std::uint64_t seed = S.config().seed;
  const PhasePoint p0 = P.fiber_point(f, P.group().exp(smooth_loop_vector(A, seed, lc.amplitude, Side::plus, 1)),
                                      DualVector(smooth_loop_vector(A, seed + 1, lc.amplitude, Side::plus, 1).c /
                                                 A.sites()));
  IntegratorConfig cfg = S.config().integrator;
  if (!S.config().integrator_dt_given) cfg.dt = lat.delta_s() / (4.0 * std::max(std::abs(lc.level), 1e-300));
  const FieldFlowResult res = field_flow(H, p0, f, cfg);

  write_trajectory_csv(S.artifact(rep, "trajectory.csv"), P, res.trajectory);
  {
    CsvWriter w(S.artifact(rep, "energy.csv"), {"t", "H", "even_sites", "odd_sites"});
    for (std::size_t n = 0; n < res.trajectory.size(); ++n)
      w.row(std::vector<double>{res.trajectory.times[n], res.trajectory.energy[n], res.even_energy[n],
                                res.odd_energy[n]});
  }
  write_lattice_snapshot_csv(S.artifact(rep, "snapshot_initial.csv"), P, p0);
  write_lattice_snapshot_csv(S.artifact(rep, "snapshot_final.csv"), P, res.trajectory.points.back(),
                             {{"density", res.final_density}});

  rep.checks.merge(detail::prefixed("lattice", loop_exact_identities(lat.base, lat.sites, lat.level, seed)));
  rep.checks.add("lattice energy drift", res.trajectory.max_energy_drift(), 1e-6);
  rep.checks.add("lattice fiber coordinates frozen", res.trajectory.max_fiber_drift(), 1e-9);

  // Isotropic lattice cocycle: it leaves no trace in the reduced bracket.
  double worst = 0;
  for (int t = 0; t < std::min(5, S.config().samples.points); ++t) {
    const PhasePoint p = S.random_fiber_point(P, f);
    const Differential dF = S.random_differential(A), dG = S.random_differential(A);
    worst = std::max(worst, detail::rel(P.dirac_bracket_reduced(dF, dG, p, f), P.dirac_bracket(dF, dG, p, f)));
  }
  rep.checks.add("lattice reduced bracket equals full bracket", worst, 1e-7);

  rep.metrics["N"] = lat.sites;
  rep.metrics["k"] = lat.level;
  rep.metrics["dt"] = cfg.dt;
  rep.metrics["steps"] = cfg.steps;
  rep.metrics["energy_drift"] = res.trajectory.max_energy_drift();
  rep.metrics["fiber_drift"] = res.trajectory.max_fiber_drift();
  rep.metrics["lagrangian_total_final"] = [&] {
    double s = 0;
    for (double d : res.final_density) s += d / A.sites();
    return s;
  }();
  return rep;
}

// ---- converge ----------------------------------------------------------------------------------

inline RunReport run_converge(Scenario& S) {
  RunReport rep;
  const auto& lc = S.config().loop;
  const DoubleGroup base = detail::dense_base(S);
  CsvWriter res(S.artifact(rep, "convergence.csv"), {"identity", "N", "residual"});
  CsvWriter sl(S.artifact(rep, "slopes.csv"), {"identity", "slope"});
  json slopes = json::object();
  for (LoopIdentity id : {LoopIdentity::cocycle_jacobi, LoopIdentity::group_cocycle, LoopIdentity::ad_compatibility}) {
    const ConvergenceStudy st = convergence_study(base, id, lc.level, lc.sizes, S.config().seed);
    const std::string name = identity_name(id);
    for (std::size_t i = 0; i < st.sizes.size(); ++i)
      res.row({name, std::to_string(st.sizes[i]), format_number(st.residuals[i])});
    sl.row({name, format_number(st.slope)});
    slopes[name] = st.slope;
    rep.checks.add("slope of " + name + " within [1.7, 2.3]", std::abs(st.slope - 2.0), 0.3);
  }
  for (int N : lc.sizes)
    rep.checks.merge(
        detail::prefixed("N=" + std::to_string(N), loop_exact_identities(base, N, lc.level, S.config().seed)));
  rep.metrics["sizes"] = lc.sizes;
  rep.metrics["k"] = lc.level;
  rep.metrics["slopes"] = slopes;
  return rep;
}

// ---- dispatch ----------------------------------------------------------------------------------

inline RunReport run_experiment(Scenario& S) {
  static const std::map<std::string, std::function<RunReport(Scenario&)>> table{
      {"check", run_check},           {"brackets", run_brackets}, {"flow", run_flow},   {"collective", run_collective},
      {"legendre", run_legendre},     {"sigma", run_sigma},       {"loop", run_loop},   {"converge", run_converge}};
  const auto it = table.find(S.config().experiment);
  if (it == table.end()) throw ConfigError("unknown experiment '" + S.config().experiment + "'");
  const auto t0 = std::chrono::steady_clock::now();
  RunReport rep = it->second(S);
  rep.experiment = S.config().experiment;
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

/// Deterministic summary (no timing) and the full report with environment data.
inline void write_reports(Scenario& S, RunReport& rep, const json& environment) {
  json summary;
  summary["schema_version"] = kSchemaVersion;
  summary["experiment"] = rep.experiment;
  summary["seed"] = S.config().seed;
  summary["passed"] = rep.passed();
  summary["checks"] = report_json(rep.checks);
  summary["metrics"] = rep.metrics;
  const auto summary_path = S.artifact(rep, "summary.json");
  summary["artifacts"] = rep.artifacts;
  write_json(summary_path, summary);

  json full = summary;
  full["wall_seconds"] = rep.wall_seconds;
  full["environment"] = environment;
  write_json(S.artifact(rep, "report.json"), full);
}

}  // namespace pldirac
