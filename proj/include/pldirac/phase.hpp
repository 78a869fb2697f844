#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "group.hpp"

namespace pldirac {

/// (g, eta) in G x g*, left trivialized.
struct PhasePoint {
  GroupPoint g;
  DualVector eta;
};

/// Tangent vector (g A, rho) stored as (A, rho).
struct Tangent {
  AlgebraVector A;
  DualVector rho;

  friend Tangent operator+(const Tangent& a, const Tangent& b) { return {a.A + b.A, a.rho + b.rho}; }
  friend Tangent operator-(const Tangent& a, const Tangent& b) { return {a.A - b.A, a.rho - b.rho}; }
  friend Tangent operator*(double s, const Tangent& a) { return {s * a.A, s * a.rho}; }
  double max_abs() const { return std::max(A.max_abs(), rho.max_abs()); }
};

/// dF = (dg, delta): dg is the left-trivialized group derivative,
/// <dg, A> = d/dt F(g exp(tA), eta); delta is the fiber derivative.
struct Differential {
  DualVector dg;
  AlgebraVector delta;

  double apply(const Tangent& t) const { return inner(dg, t.A) + inner(t.rho, delta); }
  friend Differential operator+(const Differential& a, const Differential& b) {
    return {a.dg + b.dg, a.delta + b.delta};
  }
  friend Differential operator*(double s, const Differential& a) { return {s * a.dg, s * a.delta}; }
};

struct Observable {
  std::string name;
  std::function<double(const PhasePoint&)> value;
  std::function<Differential(const PhasePoint&)> gradient;  // may be empty

  double operator()(const PhasePoint& p) const { return value(p); }
  bool has_gradient() const { return static_cast<bool>(gradient); }
};

/// The frozen data (g-, eta-) of a constrained fiber N(g-, eta-).
struct FiberSpec {
  GroupPoint g_minus;
  DualVector eta_minus;
  bool character = false;  // eta- vanishes on [g-, g-]
  bool in_kernel = false;  // C(g-) = 0
};

struct ConstraintFrame {
  std::vector<AlgebraVector> T_lower;  // basis of g+
  std::vector<AlgebraVector> T_upper;  // dual basis of g-: (T_a, T^b) = delta
  std::vector<Differential> alpha;     // alpha_a(A, xi) = (T_a, Ad_{g-^-1} Pi- Ad_{g-} A)
  std::vector<Differential> beta;      // beta^a(A, xi) = <xi, T^a>

  std::vector<Differential> all() const {
    std::vector<Differential> v(alpha);
    v.insert(v.end(), beta.begin(), beta.end());
    return v;
  }
};

/// The phase space (G x g*, omega_c) with its Poisson and Dirac structures.
class PhaseSpace {
 public:
  PhaseSpace(DoubleGroup G, TwoCocycle c) : G_(std::move(G)), c_(std::move(c)) {
    if (c_.kind == CocycleKind::coboundary) algebra().check(c_.mu0);
    if (c_.kind == CocycleKind::lattice_derivative && !algebra().is_lattice())
      throw ConfigError("lattice cocycle requires a lattice algebra");
  }

  const DoubleGroup& group() const { return G_; }
  const BasisAlgebra& algebra() const { return G_.algebra(); }
  const TwoCocycle& cocycle() const { return c_; }

  DualVector C(const GroupPoint& g) const { return G_.cocycle(c_, g); }
  DualVector c_hat(const AlgebraVector& X) const { return c_.hat(algebra(), X); }
  double c(const AlgebraVector& X, const AlgebraVector& Y) const { return c_.eval(algebra(), X, Y); }

  // ---- fibration ---------------------------------------------------------

  FiberSpec make_fiber(GroupPoint g_minus, DualVector eta_minus) const {
    const auto& A = algebra();
    if (!G_.in_subgroup(g_minus, Side::minus, 1e-9)) throw PreconditionError("fiber g- is not in G-");
    FiberSpec f{std::move(g_minus), std::move(eta_minus), false, false};
    f.character = character_defect(A, f.eta_minus) <= 1e-12;
    f.in_kernel = G_.cocycle(c_, f.g_minus).max_abs() < 1e-10;
    return f;
  }

  /// Psi(g, eta) = (Pi_{G-} g, Pi_{g-*} eta).
  FiberSpec fibration(const PhasePoint& p) const {
    return make_fiber(G_.project(p.g, Side::minus), algebra().project(p.eta, Side::minus));
  }

  double fiber_distance(const PhasePoint& p, const FiberSpec& f) const {
    const GroupPoint gm = G_.project(p.g, Side::minus);
    return G_.distance(gm, f.g_minus) + (algebra().project(p.eta, Side::minus) - f.eta_minus).norm();
  }

  void require_on_fiber(const PhasePoint& p, const FiberSpec& f, double tol = 1e-9) const {
    const double d = fiber_distance(p, f);
    if (!(d <= tol)) throw PreconditionError("point is off the fiber (distance " + std::to_string(d) + ")");
  }

  /// (g+ g-, eta+ + eta-) for g+ in G+ and eta+ in g+*.
  PhasePoint fiber_point(const FiberSpec& f, const GroupPoint& g_plus, const DualVector& eta_plus) const {
    return {G_.multiply(g_plus, f.g_minus), algebra().project(eta_plus, Side::plus) + f.eta_minus};
  }

  /// Tangent in ker Psi_*: A = Ad_{g-^-1} X+, xi in g+*.
  Tangent kernel_tangent(const PhasePoint& p, const AlgebraVector& X_plus, const DualVector& xi) const {
    const GroupPoint gm = G_.project(p.g, Side::minus);
    return {G_.adjoint(G_.inverse(gm), algebra().project(X_plus, Side::plus)), algebra().project(xi, Side::plus)};
  }

  /// Size of Psi_* applied to a tangent (0 exactly for fiber tangents).
  double kernel_defect(const PhasePoint& p, const Tangent& t) const {
    const GroupPoint gm = G_.project(p.g, Side::minus);
    const AlgebraVector u = algebra().project(G_.adjoint(gm, t.A), Side::minus);
    return std::max(u.max_abs(), algebra().project(t.rho, Side::minus).max_abs());
  }

  // ---- symplectic structure ------------------------------------------------

  /// omega_c((A, rho), (B, xi)) = -<rho, B> + <xi, A> + <eta, [A, B]> + c(Ad_g A, Ad_g B).
  double omega(const PhasePoint& p, const Tangent& u, const Tangent& v) const {
    return -inner(u.rho, v.A) + inner(v.rho, u.A) + inner(p.eta, algebra().bracket(u.A, v.A)) +
           c(G_.adjoint(p.g, u.A), G_.adjoint(p.g, v.A));
  }

  /// Central differences along g exp(t b_i) and eta + t e^i.
  Differential fd_differential(const Observable& F, const PhasePoint& p, double h = 1e-5) const {
    const auto& A = algebra();
    Differential d{A.zero_dual(), A.zero()};
    for (int i = 0; i < A.dim(); ++i) {
      const AlgebraVector b = A.basis(i);
      const double fp = F({G_.multiply(p.g, G_.exp(b, h)), p.eta});
      const double fm = F({G_.multiply(p.g, G_.exp(b, -h)), p.eta});
      d.dg.c[i] = (fp - fm) / (2 * h);
      const double he = h * (1.0 + std::abs(p.eta.c[i]));
      DualVector ep = p.eta, em = p.eta;
      ep.c[i] += he;
      em.c[i] -= he;
      d.delta.c[i] = (F({p.g, ep}) - F({p.g, em})) / (2 * he);
    }
    if (!d.dg.c.allFinite() || !d.delta.c.allFinite()) throw NumericalError("non-finite differential of " + F.name);
    return d;
  }

  Differential differential(const Observable& F, const PhasePoint& p) const {
    return F.has_gradient() ? F.gradient(p) : fd_differential(F, p);
  }

  /// V_F = (delta F, ad*_{delta F} eta - dF + Ad*_g c_hat(Ad_g delta F)); omega_c(V_F, .) = dF.
  Tangent ham_field(const Differential& dF, const PhasePoint& p) const {
    const auto& A = algebra();
    return {dF.delta, A.ad_star(dF.delta, p.eta) - dF.dg + G_.coadjoint_star(p.g, c_hat(G_.adjoint(p.g, dF.delta)))};
  }
  Tangent ham_field(const Observable& F, const PhasePoint& p) const { return ham_field(differential(F, p), p); }

  /// {F, G}_c = dF(V_G).
  double poisson(const Differential& dF, const Differential& dG, const PhasePoint& p) const {
    return dF.apply(ham_field(dG, p));
  }
  double poisson(const Observable& F, const Observable& G, const PhasePoint& p) const {
    return poisson(differential(F, p), differential(G, p), p);
  }

  /// Gram matrix of omega_c on the basis tangents, ordered (A, rho): [[K, I], [-I, 0]].
  Mat omega_matrix(const PhasePoint& p) const {
    const auto& A = algebra();
    const int n = A.dim();
    Mat O = Mat::Zero(2 * n, 2 * n);
    for (int i = 0; i < n; ++i) {
      const AlgebraVector ei = A.basis(i);
      const DualVector ch = G_.coadjoint_star(p.g, c_hat(G_.adjoint(p.g, ei)));
      for (int j = 0; j < n; ++j) O(i, j) = inner(p.eta, A.bracket(ei, A.basis(j))) + ch.c[j];
    }
    O.topRightCorner(n, n) = Mat::Identity(n, n);
    O.bottomLeftCorner(n, n) = -Mat::Identity(n, n);
    return O;
  }

  /// Poisson tensor -Omega^{-1}, so that {F, G} = dF^T P dG.
  Mat poisson_tensor(const PhasePoint& p) const { return -omega_matrix(p).inverse(); }

  static Vec stack(const Differential& d) {
    Vec v(d.dg.size() + d.delta.size());
    v << d.dg.c, d.delta.c;
    return v;
  }

  // ---- constraints and Dirac structure -----------------------------------

  ConstraintFrame constraint_frame(const PhasePoint& p) const {
    const auto& A = algebra();
    const GroupPoint gm = G_.project(p.g, Side::minus);
    const GroupPoint gmi = G_.inverse(gm);
    ConstraintFrame fr;
    for (int ia : A.indices(Side::plus)) {
      const AlgebraVector Ta = A.basis(ia);
      fr.T_lower.push_back(Ta);
      // psi(T^a) is the dual basis covector e^a, so T^a = psibar(e^a).
      fr.T_upper.push_back(A.psi_bar(A.dual_basis(ia)));
      const DualVector w =
          G_.coadjoint_star(gm, A.project(G_.coadjoint_star(gmi, A.psi(Ta)), Side::minus));
      fr.alpha.push_back({w, A.zero()});
      fr.beta.push_back({A.zero_dual(), fr.T_upper.back()});
    }
    return fr;
  }

  /// Omega_c^{ab} = -<eta + C(g^-1), [T^a, T^b]> - c(T^a, T^b).
  Mat omega_c_block(const PhasePoint& p, const ConstraintFrame& fr) const {
    const auto& A = algebra();
    const DualVector e = p.eta + C(G_.inverse(p.g));
    const int m = static_cast<int>(fr.T_upper.size());
    Mat O(m, m);
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b)
        O(a, b) = -inner(e, A.bracket(fr.T_upper[a], fr.T_upper[b])) - c(fr.T_upper[a], fr.T_upper[b]);
    return O;
  }

  /// Closed-form Dirac matrix [[0, I], [-I, Omega_c]] in the (alpha, beta) ordering.
  Mat dirac_matrix(const PhasePoint& p) const {
    const ConstraintFrame fr = constraint_frame(p);
    const int m = static_cast<int>(fr.T_lower.size());
    Mat D = Mat::Zero(2 * m, 2 * m);
    D.topRightCorner(m, m) = Mat::Identity(m, m);
    D.bottomLeftCorner(m, m) = -Mat::Identity(m, m);
    D.bottomRightCorner(m, m) = omega_c_block(p, fr);
    return D;
  }

  static Mat dirac_matrix_inverse(const Mat& D) {
    const Eigen::Index m = D.rows() / 2;
    Mat Di = Mat::Zero(2 * m, 2 * m);
    Di.topLeftCorner(m, m) = D.bottomRightCorner(m, m);
    Di.topRightCorner(m, m) = -Mat::Identity(m, m);
    Di.bottomLeftCorner(m, m) = Mat::Identity(m, m);
    return Di;
  }

  /// Dirac matrix assembled as phi_i(V_{phi_j}) from the constraint forms.
  Mat dirac_matrix_assembled(const PhasePoint& p) const {
    const auto phis = constraint_frame(p).all();
    const int k = static_cast<int>(phis.size());
    std::vector<Tangent> V;
    for (const auto& f : phis) V.push_back(ham_field(f, p));
    Mat D(k, k);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) D(i, j) = phis[i].apply(V[j]);
    return D;
  }

  /// Textbook Dirac bracket {F,G} - {F,phi_a} (D^-1)^{ab} {phi_b,G} with a
  /// numerically inverted, independently assembled Dirac matrix.
  double dirac_oracle(const Differential& dF, const Differential& dG, const PhasePoint& p) const {
    const auto phis = constraint_frame(p).all();
    const int k = static_cast<int>(phis.size());
    Mat D(k, k);
    std::vector<Tangent> V;
    for (const auto& f : phis) V.push_back(ham_field(f, p));
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) D(i, j) = phis[i].apply(V[j]);
    const Tangent VG = ham_field(dG, p);
    Vec a(k), b(k);
    for (int i = 0; i < k; ++i) {
      a[i] = dF.apply(V[i]);       // {F, phi_i}
      b[i] = phis[i].apply(VG);    // {phi_i, G}
    }
    Eigen::FullPivLU<Mat> lu(D);
    if (!lu.isInvertible()) throw NumericalError("singular Dirac matrix");
    return dF.apply(VG) - a.dot(lu.solve(b));
  }
  double dirac_oracle(const Observable& F, const Observable& G, const PhasePoint& p) const {
    return dirac_oracle(differential(F, p), differential(G, p), p);
  }

  /// P = Ad_{g-^-1} Pi+ Ad_{g-}, the projector onto the fiber's group directions.
  AlgebraVector fiber_projector(const GroupPoint& gm, const AlgebraVector& X) const {
    return G_.adjoint(G_.inverse(gm), algebra().project(G_.adjoint(gm, X), Side::plus));
  }

  /// Closed-form Dirac bracket on N(g-, eta-).
  double dirac_bracket(const Differential& dF, const Differential& dG, const PhasePoint& p, const FiberSpec& f,
                       bool check_fiber = true) const {
    if (check_fiber) require_on_fiber(p, f);
    const auto& A = algebra();
    const Factors fac = G_.factorize(p.g);
    const GroupPoint& gm = fac.minus;
    const AlgebraVector PF = fiber_projector(gm, dF.delta), PG = fiber_projector(gm, dG.delta);
    const AlgebraVector XF = A.project(G_.adjoint(gm, dF.delta), Side::plus);
    const AlgebraVector XG = A.project(G_.adjoint(gm, dG.delta), Side::plus);
    return inner(dF.dg, PG) - inner(dG.dg, PF) - inner(p.eta, A.bracket(PF, PG)) -
           inner(C(G_.inverse(fac.plus)), A.bracket(XF, XG)) - c(XF, XG);
  }
  double dirac_bracket(const Observable& F, const Observable& G, const PhasePoint& p, const FiberSpec& f) const {
    return dirac_bracket(differential(F, p), differential(G, p), p, f);
  }

  /// Cocycle-free form, valid when c vanishes on each factor.
  double dirac_bracket_reduced(const Differential& dF, const Differential& dG, const PhasePoint& p,
                               const FiberSpec& f, double hyp_tol = 1e-10) const {
    const double defect = cocycle_isotropy_defect(algebra(), c_);
    if (defect > hyp_tol)
      throw PreconditionError("reduced Dirac bracket needs c_hat(g+-) in the annihilator of g+- (defect " +
                              std::to_string(defect) + ")");
    require_on_fiber(p, f);
    const GroupPoint gm = G_.project(p.g, Side::minus);
    const AlgebraVector PF = fiber_projector(gm, dF.delta), PG = fiber_projector(gm, dG.delta);
    return inner(dF.dg, PG) - inner(dG.dg, PF) - inner(p.eta, algebra().bracket(PF, PG));
  }
  double dirac_bracket_reduced(const Observable& F, const Observable& G, const PhasePoint& p,
                               const FiberSpec& f) const {
    return dirac_bracket_reduced(differential(F, p), differential(G, p), p, f);
  }

  /// Hamiltonian field of F for the Dirac bracket; tangent to the fiber.
  Tangent dirac_field(const Differential& dF, const PhasePoint& p) const {
    const auto& A = algebra();
    const GroupPoint gm = G_.project(p.g, Side::minus);
    const AlgebraVector w = fiber_projector(gm, dF.delta);
    const DualVector r = A.ad_star(w, p.eta) - dF.dg + G_.coadjoint_star(p.g, c_hat(G_.adjoint(p.g, w)));
    return {w, G_.coadjoint_star(gm, A.project(G_.coadjoint_star(G_.inverse(gm), r), Side::plus))};
  }
  Tangent dirac_field(const Observable& F, const PhasePoint& p) const { return dirac_field(differential(F, p), p); }

  // ---- momentum maps and the restored left action ------------------------

  /// J^L = Ad*_{g^-1} eta.
  DualVector momentum_left(const PhasePoint& p) const { return G_.coadjoint_star(G_.inverse(p.g), p.eta); }

  /// J^{L^} = (Ad*_{g^-1} eta + C(g), 1).
  std::pair<DualVector, double> momentum_ext(const PhasePoint& p) const {
    return {momentum_left(p) + C(p.g), 1.0};
  }

  /// j^{L^}_{(X,a)} = <eta, Ad_{g^-1} X> + <C(g), X> + a; with extended = false, the plain j_X.
  Observable momentum_fn(const AlgebraVector& X, double a = 0.0, bool extended = true) const {
    Observable o;
    o.name = extended ? "j_ext" : "j";
    // Captures a copy so the observable may outlive this phase space.
    o.value = [P = *this, X, a, extended](const PhasePoint& p) {
      const double base = inner(p.eta, P.group().adjoint(P.group().inverse(p.g), X));
      return extended ? base + inner(P.C(p.g), X) + a : base;
    };
    o.gradient = [P = *this, X, extended](const PhasePoint& p) { return P.momentum_differential(X, p, extended); };
    return o;
  }

  /// d j = (ad*_{X~} eta [+ c_hat(X~)], X~), X~ = Ad_{g^-1} X.
  Differential momentum_differential(const AlgebraVector& X, const PhasePoint& p, bool extended = true) const {
    const AlgebraVector Xt = G_.adjoint(G_.inverse(p.g), X);
    DualVector dg = algebra().ad_star(Xt, p.eta);
    if (extended) dg += c_hat(Xt);
    return {dg, Xt};
  }

  /// V^N_{(X,a)}: the Dirac Hamiltonian field of j^{L^}_{(X,a)}.
  Tangent fiber_generator(const AlgebraVector& X, double /*a*/, const PhasePoint& p, const FiberSpec& f) const {
    require_on_fiber(p, f);
    return dirac_field(momentum_differential(X, p, true), p);
  }

  /// Induced left action of G^ on N(g-, eta-) for (g-, eta-) in ker C x Char.
  /// With g+^-1 h g+ = k+ k-: g' = g+ k+ g-,
  /// eta' = eta- + Ad*_{g-} Pi+* (Ad*_{k-^-1} Ad*_{g-^-1} eta + C(k-)).
  PhasePoint action_d(const GroupPoint& h, double /*a*/, const PhasePoint& p, const FiberSpec& f) const {
    if (!f.character) throw PreconditionError("action_d: eta- is not a character of g-");
    if (!f.in_kernel) throw PreconditionError("action_d: g- is not in ker C");
    require_on_fiber(p, f);
    return action_d_formula(h, p, f);
  }

  /// The same formula without the admissibility checks; only for negative controls.
  PhasePoint action_d_formula(const GroupPoint& h, const PhasePoint& p, const FiberSpec& f) const {
    const auto& A = algebra();
    const Factors gf = G_.factorize(p.g);
    const Factors kf = G_.factorize(G_.multiply(G_.inverse(gf.plus), G_.multiply(h, gf.plus)));
    const DualVector inner_part =
        G_.coadjoint_star(G_.inverse(kf.minus), G_.coadjoint_star(G_.inverse(gf.minus), p.eta)) + C(kf.minus);
    return {G_.multiply(gf.plus, G_.multiply(kf.plus, gf.minus)),
            f.eta_minus + G_.coadjoint_star(gf.minus, A.project(inner_part, Side::plus))};
  }

 private:
  DoubleGroup G_;
  TwoCocycle c_;
};

}  // namespace pldirac
