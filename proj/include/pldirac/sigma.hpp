#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dynamics.hpp"

namespace pldirac {

// ---- the restricted canonical 1-form ---------------------------------------------

/// Theta(A, xi) = <eta, A> for a tangent of the fiber through p.
inline double theta(const PhaseSpace& P, const PhasePoint& p, const Tangent& t, double tol = 1e-9) {
  const double d = P.kernel_defect(p, t);
  if (d > tol) throw PreconditionError("theta: tangent is not tangent to the fiber (defect " + std::to_string(d) + ")");
  return inner(p.eta, t.A);
}

/// exp(-x) d/ds exp(x + s e) at s = 0, by its power series in ad_x.
inline AlgebraVector dexp_left(const BasisAlgebra& A, const AlgebraVector& x, const AlgebraVector& e) {
  AlgebraVector term = e, sum = e;
  double fact = 1.0;
  for (int k = 1; k < 30; ++k) {
    term = -1.0 * A.bracket(x, term);
    fact *= (k + 1);
    const AlgebraVector add = term / fact;
    sum += add;
    if (add.max_abs() < 1e-18) break;
  }
  return sum;
}

/// max |dTheta(U, V) + omega_c(U, V)| over the coordinate fields of the chart
/// (x, y) -> (g+ exp(x) g-, eta + y), x in g+, y in g+*; dTheta by central differences.
/// Vanishes when c is isotropic on g+-; otherwise the residual is c(Ad_{g+} X, Ad_{g+} Y).
inline double theta_exactness_residual(const PhaseSpace& P, const PhasePoint& p, double h = 1e-5) {
  const DoubleGroup& G = P.group();
  const auto& A = P.algebra();
  const Factors fac = G.factorize(p.g);
  const auto& ip = A.indices(Side::plus);
  const int m = static_cast<int>(ip.size());

  auto theta_x = [&](const AlgebraVector& x, const DualVector& y, int i) {
    const PhasePoint q{G.multiply(fac.plus, G.multiply(G.exp(x), fac.minus)), p.eta + y};
    const Tangent t{G.adjoint(G.inverse(fac.minus), dexp_left(A, x, A.basis(ip[i]))), A.zero_dual()};
    return theta(P, q, t);
  };
  auto tangent_x = [&](int i) { return Tangent{G.adjoint(G.inverse(fac.minus), A.basis(ip[i])), A.zero_dual()}; };
  auto tangent_y = [&](int a) { return Tangent{A.zero(), A.dual_basis(ip[a])}; };

  double worst = 0.0;
  const AlgebraVector x0 = A.zero();
  const DualVector y0 = A.zero_dual();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      // d_i Theta_j - d_j Theta_i
      const AlgebraVector ei = A.basis(ip[i]), ej = A.basis(ip[j]);
      const double di = (theta_x(h * ei, y0, j) - theta_x(-h * ei, y0, j)) / (2 * h);
      const double dj = (theta_x(h * ej, y0, i) - theta_x(-h * ej, y0, i)) / (2 * h);
      worst = std::max(worst, std::abs((di - dj) + P.omega(p, tangent_x(i), tangent_x(j))));
      // Theta_y = 0, so dTheta(x_i, y_a) = -d_{y_a} Theta_{x_i}.
      const DualVector ya = h * A.dual_basis(ip[j]);
      const double dy = (theta_x(x0, ya, i) - theta_x(x0, -1.0 * ya, i)) / (2 * h);
      worst = std::max(worst, std::abs(-dy + P.omega(p, tangent_x(i), tangent_y(j))));
    }
  return worst;
}

// ---- Lagrangians on N(g-, eta-) ------------------------------------------------

/// b = Pi+ psibar(C(g+^-1) - eta-), the shift appearing in every form of L_N.
inline AlgebraVector sigma_shift(const QuadraticHamiltonian& H, const GroupPoint& g_plus, const FiberSpec& fiber) {
  const PhaseSpace& P = H.phase();
  const auto& A = P.algebra();
  return A.project(A.psi_bar(P.C(P.group().inverse(g_plus)) - fiber.eta_minus), Side::plus);
}

/// 1/2 (G v, v) - (B b, v) - 1/2 (G b, b).
inline double lagrangian_N(const QuadraticHamiltonian& H, const GroupPoint& g_plus, const AlgebraVector& v,
                           const FiberSpec& fiber) {
  const auto& A = H.phase().algebra();
  const DressedOperator D = H.dressed(g_plus);
  const AlgebraVector b = sigma_shift(H, g_plus, fiber);
  const AlgebraVector vp = A.project(v, Side::plus);
  return 0.5 * A.pair(D.G_apply(vp), vp) - A.pair(D.B_apply(b), vp) - 0.5 * A.pair(D.G_apply(b), b);
}

/// 1/2 (R+_{g+} (v - b), v + b).
inline double lagrangian_R(const QuadraticHamiltonian& H, const GroupPoint& g_plus, const AlgebraVector& v,
                           const FiberSpec& fiber) {
  const auto& A = H.phase().algebra();
  const DressedOperator D = H.dressed(g_plus);
  const AlgebraVector b = sigma_shift(H, g_plus, fiber);
  const AlgebraVector vp = A.project(v, Side::plus);
  return 0.5 * A.pair(D.R_apply(vp - b, +1), vp + b);
}

/// <eta, g^-1 gdot> - H on the fiber, with eta+ from the Legendre map.
inline double lagrangian_legendre(const QuadraticHamiltonian& H, const GroupPoint& g_plus, const AlgebraVector& v,
                                  const FiberSpec& fiber) {
  const PhaseSpace& P = H.phase();
  const DoubleGroup& G = P.group();
  const AlgebraVector vp = P.algebra().project(v, Side::plus);
  const PhasePoint p = P.fiber_point(fiber, g_plus, legendre_map(H, g_plus, vp, fiber));
  return inner(p.eta, G.adjoint(G.inverse(fiber.g_minus), vp)) - H.value(p);
}

/// Right-translated Poisson-Lie bivector on one site as a base-algebra map:
/// pi(g+) = -Pi+ Ad_{g+} Pi+ Ad_{g+^-1} Pi-.
inline Mat bivector_pi_site(const DoubleGroup& G, const CMat& g_plus) {
  const auto& A = G.algebra();
  const int n = A.base_dim();
  Mat Pp = Mat::Zero(n, n), Pm = Mat::Zero(n, n);
  for (int i : A.plus_base()) Pp(i, i) = 1.0;
  for (int i : A.minus_base()) Pm(i, i) = 1.0;
  return -Pp * G.adjoint_site(g_plus) * Pp * G.adjoint_site(g_plus.inverse()) * Pm;
}

inline AlgebraVector bivector_pi(const DoubleGroup& G, const GroupPoint& g_plus, const AlgebraVector& X) {
  const auto& A = G.algebra();
  AlgebraVector out = A.zero();
  for (int j = 0; j < G.sites(); ++j) A.site(out.c, j) = bivector_pi_site(G, g_plus[j]) * A.site(X.c, j);
  return out;
}

namespace detail {

// Per-site (R_e^{s})^-1 - pi(g+) restricted to g- -> g+.
inline Mat pi_form_operator_site(const DressedOperator& De, const DoubleGroup& G, const CMat& g_plus, int sign, int j) {
  const auto& A = G.algebra();
  return Mat(De.R(sign, j).inverse()) - sub(bivector_pi_site(G, g_plus), A.plus_base(), A.minus_base());
}

}  // namespace detail

/// 1/2 (((R_e+)^-1 - pi(g+))^-1 Ad_{g+}(v - b), Ad_{g+}(v + b)).
inline double lagrangian_KS(const QuadraticHamiltonian& H, const GroupPoint& g_plus, const AlgebraVector& v,
                            const FiberSpec& fiber) {
  const PhaseSpace& P = H.phase();
  const DoubleGroup& G = P.group();
  const auto& A = P.algebra();
  const DressedOperator De = H.dressed(G.identity());
  const AlgebraVector b = sigma_shift(H, g_plus, fiber);
  const AlgebraVector vp = A.project(v, Side::plus);
  const AlgebraVector x = G.adjoint(g_plus, vp - b), y = G.adjoint(g_plus, vp + b);
  AlgebraVector Mx = A.zero();
  for (int j = 0; j < G.sites(); ++j) {
    const Mat K = detail::pi_form_operator_site(De, G, g_plus[j], +1, j);
    if (!(detail::condition(K) < 1e12)) throw NumericalError("pi-form operator is singular");
    detail::scatter(A.site(Mx.c, j), A.minus_base(), K.inverse() * detail::gather(A.site(x.c, j), A.plus_base()));
  }
  return 0.5 * A.pair(Mx, y);
}

/// Max residual of Ad_{g+} (R^s_{g+})^-1 Pi- Ad_{g+^-1} X- = ((R^s_e)^-1 - pi(g+)) X-
/// over a basis of g-, for s = +1 and s = -1.
struct OperatorIdentityResidual {
  double plus = 0.0, minus = 0.0;
  double max() const { return std::max(plus, minus); }
};

inline OperatorIdentityResidual operator_identity_check(const QuadraticHamiltonian& H, const GroupPoint& g_plus) {
  const DoubleGroup& G = H.phase().group();
  const auto& A = G.algebra();
  if (!G.in_subgroup(g_plus, Side::plus, 1e-9)) throw PreconditionError("operator identity: g+ is not in G+");
  const DressedOperator Dg = H.dressed(g_plus), De = H.dressed(G.identity());
  OperatorIdentityResidual r;
  for (int s : {+1, -1}) {
    double worst = 0.0;
    for (int i : A.indices(Side::minus)) {
      const AlgebraVector X = A.basis(i);
      const AlgebraVector lhs =
          G.adjoint(g_plus, Dg.R_inverse_apply(A.project(G.adjoint(G.inverse(g_plus), X), Side::minus), s));
      const AlgebraVector rhs = De.R_inverse_apply(X, s) - bivector_pi(G, g_plus, X);
      worst = std::max(worst, (lhs - rhs).max_abs());
    }
    (s > 0 ? r.plus : r.minus) = worst;
  }
  return r;
}

// ---- Euler-Lagrange residual ----------------------------------------------------

/// How the first bracket argument of the Lagrange equation is read:
/// grouped: G v - B psibar(C(g+^-1) - eta-); alternative: G v - B psibar C(g+^-1).
enum class ElReading { grouped, alternative };

struct ElSeries {
  std::vector<double> times;
  std::vector<double> residual;
  double max = 0.0;
  double scale = 0.0;  // max |dQ/dt|
};

namespace detail {

struct ElSample {
  GroupPoint g_plus;
  AlgebraVector v;
};

inline std::vector<ElSample> el_samples(const PhaseSpace& P, const Trajectory& tr) {
  const DoubleGroup& G = P.group();
  std::vector<ElSample> out;
  for (const auto& p : tr.points) out.push_back({G.factorize(p.g).plus, P.algebra().zero()});
  const double h = tr.sample_spacing();
  // v = g+^-1 g+dot by central differences of the sampled path.
  for (std::size_t n = 1; n + 1 < out.size(); ++n) {
    std::vector<CMat> d;
    for (int j = 0; j < G.sites(); ++j)
      d.push_back(out[n].g_plus[j].inverse() * (out[n + 1].g_plus[j] - out[n - 1].g_plus[j]) / (2.0 * h));
    out[n].v = P.algebra().project(G.coords(d), Side::plus);
  }
  return out;
}

}  // namespace detail

/// Residual of the Lagrange equation on N(g-, eta-) along a fiber trajectory.
/// Both the velocity and d/dt use centered differences of the samples.
inline ElSeries el_residual(const QuadraticHamiltonian& H, const Trajectory& tr, const FiberSpec& fiber,
                            ElReading reading = ElReading::grouped) {
  const PhaseSpace& P = H.phase();
  const auto& A = P.algebra();
  const DoubleGroup& G = P.group();
  if (tr.size() < 5) throw PreconditionError("el_residual needs at least five samples");
  const auto s = detail::el_samples(P, tr);
  const double h = tr.sample_spacing();
  const AlgebraVector em = A.psi_bar(fiber.eta_minus);

  auto pieces = [&](std::size_t n) {
    const DressedOperator D = H.dressed(s[n].g_plus);
    const AlgebraVector cm = A.project(A.psi_bar(P.C(G.inverse(s[n].g_plus))), Side::plus);
    const AlgebraVector Q = D.G_apply(s[n].v) - D.B_apply(cm) + D.B_apply(em);
    const AlgebraVector a = reading == ElReading::grouped ? Q : D.G_apply(s[n].v) - D.B_apply(cm);
    const AlgebraVector b = D.B_apply(s[n].v) - D.G_apply(cm - em);
    const AlgebraVector rhs = -1.0 * A.project(A.bracket(a, b), Side::minus) -
                              A.project(A.bracket(em, b), Side::minus) - A.psi_bar(P.c_hat(b));
    return std::pair{Q, rhs};
  };

  ElSeries out;
  std::vector<AlgebraVector> Q(s.size(), A.zero()), R(s.size(), A.zero());
  for (std::size_t n = 1; n + 1 < s.size(); ++n) std::tie(Q[n], R[n]) = pieces(n);
  for (std::size_t n = 2; n + 2 < s.size(); ++n) {
    const AlgebraVector dQ = (Q[n + 1] - Q[n - 1]) / (2.0 * h);
    const double r = (dQ - R[n]).max_abs();
    out.times.push_back(tr.times[n]);
    out.residual.push_back(r);
    out.max = std::max(out.max, r);
    out.scale = std::max(out.scale, dQ.max_abs());
  }
  return out;
}

/// The form printed for N(e, 0):
/// d/dt psi(G v - B cm) + c_hat(B v - G cm) + psi[G v - B cm, B v - G cm], cm = psibar C(g+^-1).
inline ElSeries el_residual_identity_fiber(const QuadraticHamiltonian& H, const Trajectory& tr,
                                          const FiberSpec& fiber) {
  const PhaseSpace& P = H.phase();
  const auto& A = P.algebra();
  const DoubleGroup& G = P.group();
  if (G.distance(fiber.g_minus, G.identity()) > 1e-12 || fiber.eta_minus.max_abs() > 0.0)
    throw PreconditionError("the reduced Lagrange equation holds on N(e, 0) only");
  if (tr.size() < 5) throw PreconditionError("el_residual needs at least five samples");
  const auto s = detail::el_samples(P, tr);
  const double h = tr.sample_spacing();
  std::vector<DualVector> Q(s.size(), A.zero_dual()), R(s.size(), A.zero_dual());
  for (std::size_t n = 1; n + 1 < s.size(); ++n) {
    const DressedOperator D = H.dressed(s[n].g_plus);
    const AlgebraVector cm = A.project(A.psi_bar(P.C(G.inverse(s[n].g_plus))), Side::plus);
    const AlgebraVector a = D.G_apply(s[n].v) - D.B_apply(cm);
    const AlgebraVector b = D.B_apply(s[n].v) - D.G_apply(cm);
    Q[n] = A.psi(a);
    R[n] = P.c_hat(b) + A.psi(A.bracket(a, b));
  }
  ElSeries out;
  for (std::size_t n = 2; n + 2 < s.size(); ++n) {
    const DualVector dQ = (Q[n + 1] - Q[n - 1]) / (2.0 * h);
    const double r = (dQ + R[n]).max_abs();
    out.times.push_back(tr.times[n]);
    out.residual.push_back(r);
    out.max = std::max(out.max, r);
    out.scale = std::max(out.scale, dQ.max_abs());
  }
  return out;
}

// ---- lattice density ---------------------------------------------------------------

struct LoopDensity {
  std::vector<double> density;  // per site, in units of the base pairing
  double total = 0.0;           // (1/N) sum, the lattice Lagrangian
};

/// 1/2 (R+_{g+}(g+^-1 d+ g+ + psibar eta-), g+^-1 d- g+ - psibar eta-) per site with
/// d+- = d_t +- k d_s. With the lattice cocycle, v -+ b supplies exactly these
/// arguments, so the sum reproduces lagrangian_R; at k = 0 the sites decouple.
inline LoopDensity lagrangian_density_loop(const QuadraticHamiltonian& H, const GroupPoint& g_plus,
                                           const AlgebraVector& v, const FiberSpec& fiber) {
  const PhaseSpace& P = H.phase();
  const auto& A = P.algebra();
  if (!A.is_lattice()) throw StructuralError("lagrangian_density_loop needs a lattice phase space");
  const DressedOperator D = H.dressed(g_plus);
  const AlgebraVector b = sigma_shift(H, g_plus, fiber);
  const AlgebraVector vp = A.project(v, Side::plus);
  const AlgebraVector x = D.R_apply(vp - b, +1), y = vp + b;
  LoopDensity out;
  for (int j = 0; j < A.sites(); ++j) {
    const double d = 0.5 * A.site(x.c, j).dot(A.pairing_base() * A.site(y.c, j));
    out.density.push_back(d);
    out.total += d / A.sites();
  }
  return out;
}

}  // namespace pldirac
