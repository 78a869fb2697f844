#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "phase.hpp"

namespace pldirac {

namespace detail {

inline Vec gather(const Eigen::Ref<const Vec>& x, const std::vector<int>& idx) {
  Vec out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = x[idx[i]];
  return out;
}

inline void scatter(Eigen::Ref<Vec> x, const std::vector<int>& idx, const Vec& v) {
  for (std::size_t i = 0; i < idx.size(); ++i) x[idx[i]] = v[static_cast<Eigen::Index>(i)];
}

inline Mat sub(const Mat& M, const std::vector<int>& r, const std::vector<int>& c) {
  Mat out(r.size(), c.size());
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t j = 0; j < c.size(); ++j) out(i, j) = M(r[i], c[j]);
  return out;
}

inline void put(Mat& M, const std::vector<int>& r, const std::vector<int>& c, const Mat& B) {
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t j = 0; j < c.size(); ++j) M(r[i], c[j]) = B(i, j);
}

inline double condition(const Mat& M) {
  Eigen::JacobiSVD<Mat> svd(M);
  const auto& s = svd.singularValues();
  return s(s.size() - 1) > 0 ? s(0) / s(s.size() - 1) : INFINITY;
}

}  // namespace detail

/// Involutive, pairing-symmetric operator E on the base algebra h, applied
/// site by site on lattices.
class EnergyOperator {
 public:
  /// E from its blocks at the identity: G = Kpm^-1 S and B = Kpm^-1 Askew,
  /// where Kpm is the g+/g- block of the pairing, S symmetric and Askew
  /// antisymmetric, so (GX, Y) = Y^T S X and (BX, Y) = Y^T Askew X.
  static EnergyOperator from_blocks(const BasisAlgebra& A, const Mat& S, const Mat& Askew, std::string name) {
    const auto &p = A.plus_base(), &m = A.minus_base();
    const int h = A.half_dim();
    if (S.rows() != h || S.cols() != h || Askew.rows() != h || Askew.cols() != h)
      throw ConfigError("energy operator blocks must be " + std::to_string(h) + "x" + std::to_string(h));
    if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-14) throw ConfigError("energy block S must be symmetric");
    if ((Askew + Askew.transpose()).cwiseAbs().maxCoeff() > 1e-14)
      throw ConfigError("energy block A must be antisymmetric");
    const Mat Kpm = detail::sub(A.pairing_base(), p, m);
    const Mat G = Kpm.lu().solve(S), B = Kpm.lu().solve(Askew);
    if (detail::condition(G) > 1e12) throw ConfigError("energy block S is singular");
    const Mat Gi = G.inverse();
    Mat E = Mat::Zero(A.base_dim(), A.base_dim());
    detail::put(E, p, p, -Gi * B);
    detail::put(E, p, m, Gi);
    detail::put(E, m, p, G - B * Gi * B);
    detail::put(E, m, m, B * Gi);
    return EnergyOperator(A, std::move(E), std::move(name));
  }

  static EnergyOperator from_matrix(const BasisAlgebra& A, Mat E, std::string name = "custom") {
    if (E.rows() != A.base_dim() || E.cols() != A.base_dim()) throw ConfigError("energy operator has wrong shape");
    EnergyOperator op(A, std::move(E), std::move(name));
    const auto rep = op.verify(1e-10);
    if (!rep.all_passed()) throw ConfigError("energy operator is not a pairing-symmetric involution");
    return op;
  }

  static std::vector<std::string> preset_names() { return {"identity", "skewed"}; }

  /// "identity": S = 1, Askew = 0. "skewed": a fixed positive S with nonzero Askew.
  static EnergyOperator preset(const BasisAlgebra& A, const std::string& name) {
    const int h = A.half_dim();
    if (name == "identity") return from_blocks(A, Mat::Identity(h, h), Mat::Zero(h, h), name);
    if (name == "skewed") {
      if (h != 3) throw ConfigError("the skewed preset needs dim g+ = 3");
      Mat S(3, 3), K(3, 3);
      S << 2.0, 0.3, 0.1, 0.3, 1.5, 0.2, 0.1, 0.2, 1.2;
      K << 0.0, 0.4, -0.2, -0.4, 0.0, 0.3, 0.2, -0.3, 0.0;
      return from_blocks(A, S, K, name);
    }
    throw ConfigError("unknown energy preset '" + name + "'");
  }

  const Mat& base() const { return E_; }
  const std::string& name() const { return name_; }

  AlgebraVector apply(const BasisAlgebra& A, const AlgebraVector& X) const {
    A.check(X);
    AlgebraVector out = A.zero();
    for (int j = 0; j < A.sites(); ++j) A.site(out.c, j) = E_ * A.site(X.c, j);
    return out;
  }

  ValidationReport verify(double tol = 1e-12) const {
    ValidationReport r;
    const int n = static_cast<int>(E_.rows());
    r.add("E involution", (E_ * E_ - Mat::Identity(n, n)).cwiseAbs().maxCoeff(), tol);
    const Mat KE = K_ * E_;
    r.add("E pairing symmetry", (KE - KE.transpose()).cwiseAbs().maxCoeff(), tol);
    return r;
  }

 private:
  EnergyOperator(const BasisAlgebra& A, Mat E, std::string name)
      : E_(std::move(E)), K_(A.pairing_base()), name_(std::move(name)) {}

  Mat E_;
  Mat K_;
  std::string name_;
};

/// E_g = Ad_{g^-1} E Ad_g with blocks G_g = (Pi+ E_g Pi-)^-1 : g+ -> g- and
/// B_g = -G_g Pi+ E_g Pi+, stored per site.
class DressedOperator {
 public:
  DressedOperator(const DoubleGroup& G, const EnergyOperator& E, const GroupPoint& g) : A_(&G.algebra()) {
    G.same_sites(g);
    const auto &p = A_->plus_base(), &m = A_->minus_base();
    for (int j = 0; j < G.sites(); ++j) {
      Mat Eg = G.adjoint_site(g[j].inverse()) * E.base() * G.adjoint_site(g[j]);
      const Mat Epm = detail::sub(Eg, p, m);
      const double cond = detail::condition(Epm);
      if (!(cond < 1e12))
        throw NumericalError("degenerate energy operator: Pi+ E_g Pi- has condition " + std::to_string(cond));
      Mat Gj = Epm.inverse();
      Mat Bj = -Gj * detail::sub(Eg, p, p);
      Eg_.push_back(std::move(Eg));
      G_.push_back(std::move(Gj));
      B_.push_back(std::move(Bj));
    }
  }

  int sites() const { return static_cast<int>(Eg_.size()); }
  const Mat& Eg(int j = 0) const { return Eg_[j]; }
  const Mat& G(int j = 0) const { return G_[j]; }
  const Mat& B(int j = 0) const { return B_[j]; }
  /// R^{+-}_g = B_g +- G_g on one site.
  Mat R(int sign, int j = 0) const { return B_[j] + (sign >= 0 ? 1.0 : -1.0) * G_[j]; }

  AlgebraVector apply(const AlgebraVector& X) const {
    AlgebraVector out = A_->zero();
    for (int j = 0; j < sites(); ++j) A_->site(out.c, j) = Eg_[j] * A_->site(X.c, j);
    return out;
  }

  /// Block maps g+ -> g- (the g- part of the argument is ignored).
  AlgebraVector G_apply(const AlgebraVector& X) const { return plus_to_minus(X, [&](int j) { return G_[j]; }); }
  AlgebraVector B_apply(const AlgebraVector& X) const { return plus_to_minus(X, [&](int j) { return B_[j]; }); }
  AlgebraVector R_apply(const AlgebraVector& X, int sign) const {
    return plus_to_minus(X, [&](int j) { return R(sign, j); });
  }

  /// Inverses g- -> g+.
  AlgebraVector G_inverse_apply(const AlgebraVector& Y) const {
    return minus_to_plus(Y, [&](int j) { return Mat(G_[j].inverse()); });
  }
  AlgebraVector R_inverse_apply(const AlgebraVector& Y, int sign) const {
    return minus_to_plus(Y, [&](int j) {
      const Mat Rj = R(sign, j);
      if (!(detail::condition(Rj) < 1e12)) throw NumericalError("R operator is singular");
      return Mat(Rj.inverse());
    });
  }

  /// Block invariants of the dressed operator on every site.
  ValidationReport verify(const Mat& K, double tol = 1e-10) const {
    ValidationReport r;
    const auto &p = A_->plus_base(), &m = A_->minus_base();
    const Mat Kpm = detail::sub(K, p, m);
    double inv = 0, sym = 0, gs = 0, ba = 0, rec = 0;
    for (int j = 0; j < sites(); ++j) {
      const Mat& Eg = Eg_[j];
      const int n = static_cast<int>(Eg.rows());
      inv = std::max(inv, (Eg * Eg - Mat::Identity(n, n)).cwiseAbs().maxCoeff());
      const Mat KE = K * Eg;
      sym = std::max(sym, (KE - KE.transpose()).cwiseAbs().maxCoeff());
      // (G X, Y) = Y^T Kpm G X must be symmetric, (B X, Y) antisymmetric.
      const Mat SG = Kpm * G_[j], SB = Kpm * B_[j];
      gs = std::max(gs, (SG - SG.transpose()).cwiseAbs().maxCoeff());
      ba = std::max(ba, (SB + SB.transpose()).cwiseAbs().maxCoeff());
      const Mat Gi = G_[j].inverse();
      Mat Rc = Mat::Zero(n, n);
      detail::put(Rc, p, p, -Gi * B_[j]);
      detail::put(Rc, p, m, Gi);
      detail::put(Rc, m, p, G_[j] - B_[j] * Gi * B_[j]);
      detail::put(Rc, m, m, B_[j] * Gi);
      rec = std::max(rec, (Rc - Eg).cwiseAbs().maxCoeff());
    }
    r.add("E_g involution", inv, tol);
    r.add("E_g pairing symmetry", sym, tol);
    r.add("G_g symmetric", gs, tol);
    r.add("B_g antisymmetric", ba, tol);
    r.add("E_g block reconstruction", rec, tol);
    return r;
  }

  /// Bases of E+(g) and E-(g): X = X+ + (B_g +- G_g) X+ over unit X+.
  std::pair<std::vector<AlgebraVector>, std::vector<AlgebraVector>> eigenspaces() const {
    std::pair<std::vector<AlgebraVector>, std::vector<AlgebraVector>> out;
    for (int i : A_->indices(Side::plus)) {
      const AlgebraVector X = A_->basis(i);
      out.first.push_back(X + R_apply(X, +1));
      out.second.push_back(X + R_apply(X, -1));
    }
    return out;
  }

 private:
  template <class F>
  AlgebraVector plus_to_minus(const AlgebraVector& X, F&& M) const {
    A_->check(X);
    AlgebraVector out = A_->zero();
    for (int j = 0; j < sites(); ++j) {
      const Vec xp = detail::gather(A_->site(X.c, j), A_->plus_base());
      detail::scatter(A_->site(out.c, j), A_->minus_base(), M(j) * xp);
    }
    return out;
  }
  template <class F>
  AlgebraVector minus_to_plus(const AlgebraVector& Y, F&& M) const {
    A_->check(Y);
    AlgebraVector out = A_->zero();
    for (int j = 0; j < sites(); ++j) {
      const Vec ym = detail::gather(A_->site(Y.c, j), A_->minus_base());
      detail::scatter(A_->site(out.c, j), A_->plus_base(), M(j) * ym);
    }
    return out;
  }

  const BasisAlgebra* A_;
  std::vector<Mat> Eg_, G_, B_;
};

/// H(g, eta) = 1/2 (u, E_g u) with u = psibar(eta - C(g^-1)), i.e. the
/// collective Hamiltonian 1/2 (psibar J, E psibar J) of the extended momentum.
class QuadraticHamiltonian {
 public:
  QuadraticHamiltonian(PhaseSpace P, EnergyOperator E) : P_(std::move(P)), E_(std::move(E)) {}

  const PhaseSpace& phase() const { return P_; }
  const EnergyOperator& energy() const { return E_; }

  DressedOperator dressed(const GroupPoint& g) const { return DressedOperator(P_.group(), E_, g); }

  /// E_g X alone; unlike dressed() it never needs the g+/g- blocks to be invertible.
  AlgebraVector apply_dressed(const GroupPoint& g, const AlgebraVector& X) const {
    const DoubleGroup& G = P_.group();
    const auto& A = P_.algebra();
    G.same_sites(g);
    AlgebraVector out = A.zero();
    for (int j = 0; j < G.sites(); ++j)
      A.site(out.c, j) = G.adjoint_site(g[j].inverse()) * (E_.base() * (G.adjoint_site(g[j]) * A.site(X.c, j)));
    return out;
  }

  AlgebraVector u(const PhasePoint& p) const {
    return P_.algebra().psi_bar(p.eta - P_.C(P_.group().inverse(p.g)));
  }

  double value(const PhasePoint& p) const {
    const AlgebraVector x = u(p);
    return 0.5 * P_.algebra().pair(x, apply_dressed(p.g, x));
  }

  /// delta H = E_g u, dH = psi[u, E_g u] - gamma, where gamma is the
  /// variation of <C(g^-1), E_g u> (= -(ad*_w C(g^-1) + c_hat(w)) for exact cocycles).
  Differential gradient(const PhasePoint& p) const {
    const auto& A = P_.algebra();
    const AlgebraVector x = u(p);
    const AlgebraVector w = apply_dressed(p.g, x);
    return {A.psi(A.bracket(x, w)) - P_.group().cocycle_inverse_variation(P_.cocycle(), p.g, w), w};
  }

  /// L(J) = E psibar J on the extended momentum J = Ad*_{g^-1} eta + C(g).
  AlgebraVector collective_velocity(const DualVector& J) const {
    return E_.apply(P_.algebra(), P_.algebra().psi_bar(J));
  }

  Observable observable() const {
    Observable o;
    o.name = "H";
    o.value = [self = *this](const PhasePoint& p) { return self.value(p); };
    o.gradient = [self = *this](const PhasePoint& p) { return self.gradient(p); };
    return o;
  }

 private:
  PhaseSpace P_;
  EnergyOperator E_;
};

// ---- integration ------------------------------------------------------------

enum class Method { rkmk4, ambient_rk4 };

inline std::string method_name(Method m) { return m == Method::rkmk4 ? "rkmk4" : "ambient_rk4_reproject"; }

struct IntegratorConfig {
  Method method = Method::rkmk4;
  double dt = 0.01;
  int steps = 100;
  bool reproject = false;  // snap back onto the fiber after every step (fiber flows only)
  int record_every = 1;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<PhasePoint> points;
  std::vector<double> energy;
  std::vector<double> drift_gminus;
  std::vector<double> drift_etaminus;

  std::size_t size() const { return points.size(); }
  double sample_spacing() const { return times.size() > 1 ? times[1] - times[0] : 0.0; }

  double max_energy_drift() const {
    double d = 0.0;
    for (double e : energy) d = std::max(d, std::abs(e - energy.front()));
    return d;
  }
  double max_fiber_drift() const {
    double d = 0.0;
    for (std::size_t i = 0; i < drift_gminus.size(); ++i) d = std::max(d, drift_gminus[i] + drift_etaminus[i]);
    return d;
  }
};

/// Left-trivialized field: gdot = g A, etadot = rho.
using VectorField = std::function<Tangent(const PhasePoint&)>;

/// dexp^{-1}_Theta(u) truncated after the order-4 relevant terms.
inline AlgebraVector dexpinv(const BasisAlgebra& A, const AlgebraVector& Th, const AlgebraVector& u) {
  const AlgebraVector tu = A.bracket(Th, u);
  return u + 0.5 * tu + (1.0 / 12.0) * A.bracket(Th, tu);
}

/// Runge-Kutta-Munthe-Kaas of order 4 on g (g = g0 exp Theta) with classical
/// RK4 on eta in lockstep.
inline PhasePoint rkmk4_step(const DoubleGroup& G, const VectorField& f, const PhasePoint& p, double dt) {
  const auto& A = G.algebra();
  const Tangent k1 = f(p);
  const AlgebraVector u1 = k1.A;

  const AlgebraVector T2 = (0.5 * dt) * u1;
  const Tangent k2 = f({G.multiply(p.g, G.exp(T2)), p.eta + (0.5 * dt) * k1.rho});
  const AlgebraVector u2 = dexpinv(A, T2, k2.A);

  const AlgebraVector T3 = (0.5 * dt) * u2;
  const Tangent k3 = f({G.multiply(p.g, G.exp(T3)), p.eta + (0.5 * dt) * k2.rho});
  const AlgebraVector u3 = dexpinv(A, T3, k3.A);

  const AlgebraVector T4 = dt * u3;
  const Tangent k4 = f({G.multiply(p.g, G.exp(T4)), p.eta + dt * k3.rho});
  const AlgebraVector u4 = dexpinv(A, T4, k4.A);

  const AlgebraVector Th = (dt / 6.0) * (u1 + 2.0 * u2 + 2.0 * u3 + u4);
  return {G.multiply(p.g, G.exp(Th)), p.eta + (dt / 6.0) * (k1.rho + 2.0 * k2.rho + 2.0 * k3.rho + k4.rho)};
}

/// Classical RK4 on the matrix entries of g followed by a retraction onto G.
inline PhasePoint ambient_rk4_step(const DoubleGroup& G, const VectorField& f, const PhasePoint& p, double dt) {
  auto gdot = [&](const GroupPoint& g, const AlgebraVector& A) {
    const auto Ms = G.to_matrices(A);
    GroupPoint out;
    for (int j = 0; j < G.sites(); ++j) out.site.push_back(g[j] * Ms[j]);
    return out;
  };
  auto axpy = [&](const GroupPoint& g, double s, const GroupPoint& d) {
    GroupPoint out = g;
    for (int j = 0; j < G.sites(); ++j) out.site[j] += s * d[j];
    return out;
  };
  // Stage matrices leave G at O(dt^2); the field is read at their retraction,
  // which is a smooth extension of the ODE to the ambient matrices.
  auto fr = [&](const PhasePoint& q) { return f({G.retract(q.g), q.eta}); };
  const Tangent k1 = f(p);
  const GroupPoint d1 = gdot(p.g, k1.A);
  const PhasePoint p2{axpy(p.g, 0.5 * dt, d1), p.eta + (0.5 * dt) * k1.rho};
  const Tangent k2 = fr(p2);
  const GroupPoint d2 = gdot(p2.g, k2.A);
  const PhasePoint p3{axpy(p.g, 0.5 * dt, d2), p.eta + (0.5 * dt) * k2.rho};
  const Tangent k3 = fr(p3);
  const GroupPoint d3 = gdot(p3.g, k3.A);
  const PhasePoint p4{axpy(p.g, dt, d3), p.eta + dt * k3.rho};
  const Tangent k4 = fr(p4);
  const GroupPoint d4 = gdot(p4.g, k4.A);
  GroupPoint g = p.g;
  for (int j = 0; j < G.sites(); ++j) g.site[j] += (dt / 6.0) * (d1[j] + 2.0 * d2[j] + 2.0 * d3[j] + d4[j]);
  return {G.retract(g), p.eta + (dt / 6.0) * (k1.rho + 2.0 * k2.rho + 2.0 * k3.rho + k4.rho)};
}

namespace detail {

inline void check_config(const IntegratorConfig& cfg) {
  if (!(cfg.dt > 0.0) || !std::isfinite(cfg.dt)) throw ConfigError("integrator dt must be positive and finite");
  if (cfg.steps < 0) throw ConfigError("integrator steps must be non-negative");
  if (cfg.record_every < 1) throw ConfigError("record_every must be >= 1");
}

inline bool finite(const PhasePoint& p) {
  for (const auto& m : p.g.site)
    if (!m.allFinite()) return false;
  return p.eta.c.allFinite();
}

}  // namespace detail

/// Integrates f from p0, recording H and, when a fiber is given, the drift of
/// (g-, eta-) away from it.
inline Trajectory integrate(const PhaseSpace& P, const VectorField& f, const Observable& H, const PhasePoint& p0,
                            const IntegratorConfig& cfg, const FiberSpec* fiber = nullptr) {
  detail::check_config(cfg);
  const DoubleGroup& G = P.group();
  const auto& A = P.algebra();
  Trajectory tr;
  auto record = [&](double t, const PhasePoint& p) {
    tr.times.push_back(t);
    tr.points.push_back(p);
    tr.energy.push_back(H(p));
    if (fiber) {
      tr.drift_gminus.push_back(G.distance(G.project(p.g, Side::minus), fiber->g_minus));
      tr.drift_etaminus.push_back((A.project(p.eta, Side::minus) - fiber->eta_minus).norm());
    } else {
      tr.drift_gminus.push_back(0.0);
      tr.drift_etaminus.push_back(0.0);
    }
  };
  PhasePoint p = p0;
  record(0.0, p);
  for (int s = 1; s <= cfg.steps; ++s) {
    p = cfg.method == Method::rkmk4 ? rkmk4_step(G, f, p, cfg.dt) : ambient_rk4_step(G, f, p, cfg.dt);
    if (cfg.reproject && fiber) {
      p.g = G.multiply(G.project(p.g, Side::plus), fiber->g_minus);
      p.eta = A.project(p.eta, Side::plus) + fiber->eta_minus;
    }
    if (!detail::finite(p)) throw NumericalError("non-finite state at step " + std::to_string(s));
    if (s % cfg.record_every == 0) record(s * cfg.dt, p);
  }
  return tr;
}

/// Hamilton equations on the whole of (G x g*, omega_c).
inline Trajectory flow_full(const PhaseSpace& P, const Observable& H, const PhasePoint& p0,
                            const IntegratorConfig& cfg) {
  const VectorField f = [&](const PhasePoint& p) { return P.ham_field(P.differential(H, p), p); };
  return integrate(P, f, H, p0, cfg);
}

/// Hamilton equations of the Dirac bracket on N(g-, eta-).
inline Trajectory flow_fiber(const PhaseSpace& P, const Observable& H, const PhasePoint& p0, const FiberSpec& fiber,
                             const IntegratorConfig& cfg) {
  P.require_on_fiber(p0, fiber);
  const VectorField f = [&](const PhasePoint& p) { return P.dirac_field(P.differential(H, p), p); };
  return integrate(P, f, H, p0, cfg, &fiber);
}

/// Observed convergence order of max |H(t) - H(0)| when dt is halved.
struct DriftOrder {
  double drift_coarse = 0.0, drift_fine = 0.0, order = 0.0;
};

inline DriftOrder energy_drift_order(const std::function<Trajectory(const IntegratorConfig&)>& run,
                                     IntegratorConfig cfg) {
  DriftOrder d;
  d.drift_coarse = run(cfg).max_energy_drift();
  cfg.dt *= 0.5;
  cfg.steps *= 2;
  cfg.record_every *= 2;
  d.drift_fine = run(cfg).max_energy_drift();
  d.order = std::log2(d.drift_coarse / d.drift_fine);
  return d;
}

// ---- collectivity -------------------------------------------------------------

struct CollectivityReport {
  double derivative_residual = 0.0;      // |dJ/dt + ad*_L J + c_hat(L)|, central differences
  double reconstruction_residual = 0.0;  // |J(t) - (Ad*_{h^-1} J0 + C(h))|, hdot h^-1 = L(J)
  double orbit_residual = 0.0;           // |d(h(t), p0) - p(t)|
  double generator_residual = 0.0;       // |V_H - fiber generator of L(J)|
  std::vector<double> series;            // per-sample derivative residual (0 at the endpoints)

  ValidationReport report(double tol_fd, double tol_exact) const {
    ValidationReport r;
    r.add("collective momentum derivative", derivative_residual, tol_fd);
    r.add("collective reconstruction", reconstruction_residual, tol_fd);
    r.add("collective orbit", orbit_residual, tol_fd);
    r.add("collective generator", generator_residual, tol_exact);
    return r;
  }
};

/// Tests that a fiber trajectory of the quadratic Hamiltonian is collective:
/// the extended momentum moves on a coadjoint orbit driven by L(J), and the
/// orbit is traced by the induced action. Requires an admissible fiber unless
/// `enforce` is false (negative controls).
inline CollectivityReport collectivity_check(const QuadraticHamiltonian& H, const Trajectory& tr,
                                             const FiberSpec& fiber, bool enforce = true) {
  const PhaseSpace& P = H.phase();
  const DoubleGroup& G = P.group();
  const auto& A = P.algebra();
  if (enforce && !(fiber.character && fiber.in_kernel))
    throw PreconditionError("collectivity needs eta- a character and g- in ker C");
  if (tr.size() < 3) throw PreconditionError("collectivity needs at least three samples");
  CollectivityReport rep;
  const double h = tr.sample_spacing();
  std::vector<DualVector> J;
  std::vector<AlgebraVector> L;
  for (const auto& p : tr.points) {
    J.push_back(P.momentum_ext(p).first);
    L.push_back(H.collective_velocity(J.back()));
  }
  rep.series.assign(tr.size(), 0.0);
  for (std::size_t n = 1; n + 1 < tr.size(); ++n) {
    const DualVector dJ = (J[n + 1] - J[n - 1]) / (2.0 * h);
    const double r = (dJ + A.ad_star(L[n], J[n]) + P.c_hat(L[n])).max_abs();
    rep.series[n] = r;
    rep.derivative_residual = std::max(rep.derivative_residual, r);
  }
  GroupPoint hg = G.identity();
  for (std::size_t n = 0; n < tr.size(); ++n) {
    if (n > 0) hg = G.multiply(G.exp((0.5 * h) * (L[n - 1] + L[n])), hg);
    const DualVector Jr = G.coadjoint_star(G.inverse(hg), J[0]) + P.C(hg);
    rep.reconstruction_residual = std::max(rep.reconstruction_residual, (J[n] - Jr).max_abs());
    const PhasePoint q = P.action_d_formula(hg, tr.points[0], fiber);
    rep.orbit_residual =
        std::max(rep.orbit_residual, G.distance(q.g, tr.points[n].g) + (q.eta - tr.points[n].eta).max_abs());
    const Tangent VH = P.dirac_field(H.gradient(tr.points[n]), tr.points[n]);
    const Tangent VL = P.dirac_field(P.momentum_differential(L[n], tr.points[n], true), tr.points[n]);
    rep.generator_residual = std::max(rep.generator_residual, (VH - VL).max_abs());
  }
  return rep;
}

// ---- Legendre relation ----------------------------------------------------------

/// g+^-1 g+dot = Pi+ Ad_{g-} delta H, the group half of the fiber equations.
inline AlgebraVector velocity_from_state(const QuadraticHamiltonian& H, const PhasePoint& p) {
  const PhaseSpace& P = H.phase();
  const GroupPoint gm = P.group().project(p.g, Side::minus);
  return P.algebra().project(P.group().adjoint(gm, H.gradient(p).delta), Side::plus);
}

/// eta+ = Ad*_{g-} psi( G v + B Pi+ s - Pi- s ) for v = g+^-1 g+dot, with
/// s = Ad_{g-} psibar eta- - psibar C(g+^-1) + psibar C(g-) the known part of Ad_{g-} u.
inline DualVector legendre_map(const QuadraticHamiltonian& H, const GroupPoint& g_plus, const AlgebraVector& v,
                               const FiberSpec& fiber) {
  const PhaseSpace& P = H.phase();
  const DoubleGroup& G = P.group();
  const auto& A = P.algebra();
  if (!G.in_subgroup(g_plus, Side::plus, 1e-9)) throw PreconditionError("legendre_map: g+ is not in G+");
  const DressedOperator D = H.dressed(g_plus);
  const AlgebraVector s = G.adjoint(fiber.g_minus, A.psi_bar(fiber.eta_minus)) - A.psi_bar(P.C(G.inverse(g_plus))) +
                          A.psi_bar(P.C(fiber.g_minus));
  const AlgebraVector val = D.G_apply(v) + D.B_apply(s) - A.project(s, Side::minus);
  return A.project(G.coadjoint_star(fiber.g_minus, A.psi(val)), Side::plus);
}

/// Second-order form of the full flow with Q = E_g w + psibar C(g^-1), w = g^-1 gdot:
/// the residuals of dQ/dt + [w, psibar C(g^-1)] and dQ/dt - [w, psibar C(g^-1)],
/// maximum over interior samples. Only one of them can vanish.
struct WzResidual {
  double add_bracket = 0.0, subtract_bracket = 0.0, scale = 0.0;
};

inline WzResidual wz_residual(const QuadraticHamiltonian& H, const Trajectory& tr) {
  const PhaseSpace& P = H.phase();
  const auto& A = P.algebra();
  const DoubleGroup& G = P.group();
  WzResidual r;
  if (tr.size() < 3) return r;
  const double h = tr.sample_spacing();
  std::vector<AlgebraVector> Q, W, Cb;
  for (const auto& p : tr.points) {
    const AlgebraVector w = H.gradient(p).delta;
    const AlgebraVector cb = A.psi_bar(P.C(G.inverse(p.g)));
    Q.push_back(H.apply_dressed(p.g, w) + cb);
    W.push_back(w);
    Cb.push_back(cb);
  }
  for (std::size_t n = 1; n + 1 < tr.size(); ++n) {
    const AlgebraVector dQ = (Q[n + 1] - Q[n - 1]) / (2.0 * h);
    const AlgebraVector br = A.bracket(W[n], Cb[n]);
    r.add_bracket = std::max(r.add_bracket, (dQ + br).max_abs());
    r.subtract_bracket = std::max(r.subtract_bracket, (dQ - br).max_abs());
    r.scale = std::max(r.scale, dQ.max_abs());
  }
  return r;
}

}  // namespace pldirac
