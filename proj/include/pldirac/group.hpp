#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <complex>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "algebra.hpp"

namespace pldirac {

using cdouble = std::complex<double>;
using CMat = Eigen::MatrixXcd;

enum class FactorizationKind {
  semidirect,  // [[R, v], [0, 1]] = [[R, 0], [0, 1]] [[I, R^T v], [0, 1]]
  iwasawa,     // SL(2,C) = SU(2) . SB(2,C) via QR with positive real diagonal
};

/// Faithful matrix representation of the base algebra.
struct Representation {
  std::vector<CMat> basis;  // image of each base basis vector
  FactorizationKind kind = FactorizationKind::iwasawa;

  int size() const { return basis.empty() ? 0 : static_cast<int>(basis.front().rows()); }
};

/// Group element: one representation matrix per lattice site (one site when dense).
struct GroupPoint {
  std::vector<CMat> site;

  int sites() const { return static_cast<int>(site.size()); }
  const CMat& operator[](int j) const { return site[j]; }
  CMat& operator[](int j) { return site[j]; }
};

struct Factors {
  GroupPoint plus, minus;
  double residual = 0.0;
};

/// The double group G = G+ G- of a registered algebra, realized by matrices.
class DoubleGroup {
 public:
  DoubleGroup(BasisAlgebra alg, Representation rep)
      : alg_(std::make_shared<const BasisAlgebra>(std::move(alg))), rep_(std::move(rep)) {
    const int n = alg_->base_dim();
    if (static_cast<int>(rep_.basis.size()) != n) throw ConfigError("representation size does not match algebra");
    const int m = rep_.size();
    Mat B(2 * m * m, n);
    for (int i = 0; i < n; ++i) {
      if (rep_.basis[i].rows() != m || rep_.basis[i].cols() != m)
        throw ConfigError("representation matrices must share one square shape");
      B.col(i) = flatten(rep_.basis[i]);
    }
    Eigen::ColPivHouseholderQR<Mat> qr(B);
    if (qr.rank() != n) throw ConfigError("representation is not faithful on the basis");
    pinv_ = (B.transpose() * B).ldlt().solve(B.transpose());
    flat_basis_ = B;
  }

  const BasisAlgebra& algebra() const { return *alg_; }
  const Representation& representation() const { return rep_; }
  int rep_size() const { return rep_.size(); }
  int sites() const { return alg_->sites(); }

  /// Loop group over this group on N periodic sites.
  DoubleGroup lattice(int N) const { return DoubleGroup(alg_->lattice(N), rep_); }

  CMat matrix_site(const Eigen::Ref<const Vec>& x) const {
    CMat M = CMat::Zero(rep_size(), rep_size());
    for (int i = 0; i < alg_->base_dim(); ++i)
      if (x[i] != 0.0) M += x[i] * rep_.basis[i];
    return M;
  }

  std::vector<CMat> to_matrices(const AlgebraVector& X) const {
    alg_->check(X);
    std::vector<CMat> out;
    for (int j = 0; j < sites(); ++j) out.push_back(matrix_site(alg_->site(X.c, j)));
    return out;
  }

  /// Least-squares coordinates of a matrix in the real Frobenius inner product.
  Vec coords_site(const CMat& M) const { return pinv_ * flatten(M); }

  double representability_residual(const CMat& M) const { return (M - matrix_site(coords_site(M))).norm(); }

  AlgebraVector coords(const std::vector<CMat>& Ms) const {
    if (static_cast<int>(Ms.size()) != sites()) throw StructuralError("coords: wrong site count");
    AlgebraVector out = alg_->zero();
    for (int j = 0; j < sites(); ++j) alg_->site(out.c, j) = coords_site(Ms[j]);
    return out;
  }

  GroupPoint identity() const {
    return GroupPoint{std::vector<CMat>(sites(), CMat::Identity(rep_size(), rep_size()))};
  }

  /// exp(t X), scaling and squaring with Pade on each site.
  GroupPoint exp(const AlgebraVector& X, double t = 1.0) const {
    alg_->check(X);
    GroupPoint g;
    for (int j = 0; j < sites(); ++j) g.site.push_back(CMat(t * matrix_site(alg_->site(X.c, j))).exp());
    return g;
  }

  GroupPoint multiply(const GroupPoint& a, const GroupPoint& b) const {
    same_sites(a);
    same_sites(b);
    GroupPoint g;
    for (int j = 0; j < sites(); ++j) g.site.push_back(a[j] * b[j]);
    return g;
  }

  GroupPoint inverse(const GroupPoint& a) const {
    same_sites(a);
    GroupPoint g;
    for (int j = 0; j < sites(); ++j) g.site.push_back(a[j].inverse());
    return g;
  }

  /// Ad_g on the base algebra for one site matrix (columns are Ad_g b_i).
  Mat adjoint_site(const CMat& g) const {
    const int n = alg_->base_dim();
    const CMat gi = g.inverse();
    Mat A(n, n);
    for (int i = 0; i < n; ++i) A.col(i) = coords_site(g * rep_.basis[i] * gi);
    return A;
  }

  AlgebraVector adjoint(const GroupPoint& g, const AlgebraVector& X) const {
    same_sites(g);
    alg_->check(X);
    AlgebraVector out = alg_->zero();
    for (int j = 0; j < sites(); ++j)
      alg_->site(out.c, j) = coords_site(g[j] * matrix_site(alg_->site(X.c, j)) * g[j].inverse());
    return out;
  }

  /// Ad*_g with <Ad*_g eta, X> = <eta, Ad_g X>.
  DualVector coadjoint_star(const GroupPoint& g, const DualVector& eta) const {
    same_sites(g);
    alg_->check(eta);
    DualVector out = alg_->zero_dual();
    for (int j = 0; j < sites(); ++j) alg_->site(out.c, j) = adjoint_site(g[j]).transpose() * alg_->site(eta.c, j);
    return out;
  }

  Mat adjoint_matrix(const GroupPoint& g) const {
    const int n = alg_->base_dim();
    Mat A = Mat::Zero(alg_->dim(), alg_->dim());
    for (int j = 0; j < sites(); ++j) A.block(j * n, j * n, n, n) = adjoint_site(g[j]);
    return A;
  }

  /// g = g+ g-. Throws FactorizationError when g is not in the factorizable
  /// locus or the factors fail their membership predicates.
  Factors factorize(const GroupPoint& g) const {
    same_sites(g);
    Factors f;
    for (int j = 0; j < sites(); ++j) {
      auto [p, m] = factorize_site(g[j]);
      f.residual = std::max(f.residual, (g[j] - p * m).norm());
      f.plus.site.push_back(std::move(p));
      f.minus.site.push_back(std::move(m));
    }
    const double scale = 1.0 + norm(g);
    if (!(f.residual <= 1e-10 * scale)) throw FactorizationError("factorization does not reproduce g", f.residual);
    const double dp = subgroup_defect(f.plus, Side::plus), dm = subgroup_defect(f.minus, Side::minus);
    if (!(dp <= 1e-9 * scale && dm <= 1e-9 * scale))
      throw FactorizationError("factor outside its subgroup (g not in G?)", std::max(dp, dm));
    return f;
  }

  GroupPoint project(const GroupPoint& g, Side s) const {
    Factors f = factorize(g);
    return s == Side::plus ? std::move(f.plus) : std::move(f.minus);
  }

  /// Distance of g from the subgroup G+ or G- (0 for members).
  double subgroup_defect(const GroupPoint& g, Side s) const {
    same_sites(g);
    double worst = 0.0;
    for (int j = 0; j < sites(); ++j) worst = std::max(worst, site_defect(g[j], s));
    return worst;
  }

  bool in_subgroup(const GroupPoint& g, Side s, double tol = 1e-10) const { return subgroup_defect(g, s) <= tol; }

  /// Dressing action (h, g) -> Pi_{G_target}(h g), with h and g in opposite factors.
  GroupPoint dressing(const GroupPoint& h, const GroupPoint& g, Side target) const {
    if (!in_subgroup(h, opposite(target), 1e-9) || !in_subgroup(g, target, 1e-9))
      throw PreconditionError("dressing: arguments must lie in opposite factors");
    return project(multiply(h, g), target);
  }

  /// Group 1-cocycle C: G -> g* of the same kind as `c`.
  DualVector cocycle(const TwoCocycle& c, const GroupPoint& g) const {
    same_sites(g);
    switch (c.kind) {
      case CocycleKind::zero: return alg_->zero_dual();
      case CocycleKind::coboundary: return coadjoint_star(inverse(g), c.mu0) - c.mu0;
      case CocycleKind::lattice_derivative: {
        if (!alg_->is_lattice()) throw StructuralError("lattice cocycle used on a dense group");
        const int N = sites();
        std::vector<CMat> dg;
        for (int j = 0; j < N; ++j) {
          const CMat D = (g[(j + 1) % N] - g[(j + N - 1) % N]) / (2.0 * alg_->delta_s());
          dg.push_back(D * g[j].inverse());
        }
        return c.level * alg_->psi(coords(dg));
      }
    }
    return alg_->zero_dual();
  }

  /// gamma with <gamma, A> = d/dt <C(exp(-tA) g^-1), w> at t = 0. For exact
  /// cocycles this is -(ad*_w C(g^-1) + c_hat(w)); the lattice C only obeys
  /// the cocycle law up to O(ds^2), so there it is differentiated directly.
  DualVector cocycle_inverse_variation(const TwoCocycle& c, const GroupPoint& g, const AlgebraVector& w) const {
    same_sites(g);
    if (c.kind != CocycleKind::lattice_derivative)
      return -(alg_->ad_star(w, cocycle(c, inverse(g))) + c.hat(*alg_, w));
    if (!alg_->is_lattice()) throw StructuralError("lattice cocycle used on a dense group");
    const int N = sites(), m = rep_size();
    const double h2 = 2.0 * alg_->delta_s();
    const GroupPoint hinv = inverse(g);
    // W_j represents the functional M -> (k/N) w_j^T K coords(M) as Re tr(W^H M).
    std::vector<CMat> W(N);
    for (int j = 0; j < N; ++j) {
      const Vec phi = pinv_.transpose() * (alg_->pairing_base() * alg_->site(w.c, j)) * (c.level / N);
      W[j] = CMat(m, m);
      for (int k = 0; k < m * m; ++k) W[j].data()[k] = cdouble(phi[k], phi[m * m + k]);
    }
    DualVector out = alg_->zero_dual();
    for (int i = 0; i < N; ++i) {
      const int ip = (i + 1) % N, im = (i + N - 1) % N;
      const CMat D = (hinv[ip] - hinv[im]) * g[i] / h2;
      const CMat Gam = (W[ip] * (hinv[i] * g[ip]).adjoint() - W[im] * (hinv[i] * g[im]).adjoint()) / h2 +
                       D.adjoint() * W[i];
      alg_->site(out.c, i) = flat_basis_.transpose() * flatten(Gam);
    }
    return out;
  }

  bool kernel_check(const TwoCocycle& c, const GroupPoint& g_minus, double tol = 1e-10) const {
    if (!in_subgroup(g_minus, Side::minus, 1e-9)) throw PreconditionError("kernel_check: point is not in G-");
    return cocycle(c, g_minus).max_abs() < tol;
  }

  /// Nearest-point map back onto G for matrices that drifted off it
  /// (ambient integration). Identity on group elements up to roundoff.
  GroupPoint retract(const GroupPoint& g) const {
    same_sites(g);
    GroupPoint out;
    for (int j = 0; j < sites(); ++j) out.site.push_back(retract_site(g[j]));
    return out;
  }

  double distance(const GroupPoint& a, const GroupPoint& b) const {
    same_sites(a);
    same_sites(b);
    double s = 0.0;
    for (int j = 0; j < sites(); ++j) s += (a[j] - b[j]).squaredNorm();
    return std::sqrt(s);
  }

  double norm(const GroupPoint& a) const {
    double s = 0.0;
    for (const auto& m : a.site) s += m.squaredNorm();
    return std::sqrt(s);
  }

  void same_sites(const GroupPoint& g) const {
    if (g.sites() != sites()) throw StructuralError("group point has the wrong number of sites");
    for (const auto& m : g.site)
      if (m.rows() != rep_size() || m.cols() != rep_size()) throw StructuralError("group point has wrong matrix size");
  }

 private:
  static Vec flatten(const CMat& M) {
    const Eigen::Index mm = M.size();
    Vec v(2 * mm);
    for (Eigen::Index k = 0; k < mm; ++k) {
      v[k] = M.data()[k].real();
      v[mm + k] = M.data()[k].imag();
    }
    return v;
  }

  std::pair<CMat, CMat> factorize_site(const CMat& g) const {
    const int m = rep_size();
    if (rep_.kind == FactorizationKind::semidirect) {
      const int d = m - 1;
      CMat p = CMat::Identity(m, m), q = CMat::Identity(m, m);
      p.topLeftCorner(d, d) = g.topLeftCorner(d, d);
      q.topRightCorner(d, 1) = g.topLeftCorner(d, d).adjoint() * g.topRightCorner(d, 1);
      return {p, q};
    }
    Eigen::HouseholderQR<CMat> qr(g);
    CMat Q = qr.householderQ();
    CMat R = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int i = 0; i < m; ++i) {
      const cdouble r = R(i, i);
      if (std::abs(r) < 1e-300) throw FactorizationError("singular matrix in Iwasawa factorization", 0.0);
      const cdouble ph = r / std::abs(r);
      Q.col(i) *= ph;
      R.row(i) *= std::conj(ph);
    }
    return {Q, R};
  }

  double site_defect(const CMat& g, Side s) const {
    const int m = rep_size();
    const CMat I = CMat::Identity(m, m);
    if (rep_.kind == FactorizationKind::semidirect) {
      const int d = m - 1;
      double def = g.imag().cwiseAbs().maxCoeff();
      def = std::max(def, (g.row(d) - I.row(d)).cwiseAbs().maxCoeff());
      if (s == Side::plus) {
        const CMat R = g.topLeftCorner(d, d);
        def = std::max(def, (R.adjoint() * R - CMat::Identity(d, d)).cwiseAbs().maxCoeff());
        def = std::max(def, std::abs(R.determinant() - 1.0));
        def = std::max(def, g.topRightCorner(d, 1).cwiseAbs().maxCoeff());
      } else {
        def = std::max(def, (g.topLeftCorner(d, d) - CMat::Identity(d, d)).cwiseAbs().maxCoeff());
      }
      return def;
    }
    if (s == Side::plus) {
      return std::max((g.adjoint() * g - I).cwiseAbs().maxCoeff(), std::abs(g.determinant() - 1.0));
    }
    double def = std::abs(g.determinant() - 1.0);
    for (int i = 0; i < m; ++i) {
      def = std::max(def, std::abs(g(i, i).imag()));
      if (g(i, i).real() <= 0) def = std::max(def, 1.0 - g(i, i).real());
      for (int k = 0; k < i; ++k) def = std::max(def, std::abs(g(i, k)));
    }
    return def;
  }

  CMat retract_site(const CMat& g) const {
    const int m = rep_size();
    if (rep_.kind == FactorizationKind::semidirect) {
      const int d = m - 1;
      Mat R = g.topLeftCorner(d, d).real();
      Eigen::JacobiSVD<Mat> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
      Mat U = svd.matrixU();
      if ((U * svd.matrixV().transpose()).determinant() < 0) U.col(d - 1) *= -1.0;
      CMat out = CMat::Identity(m, m);
      out.topLeftCorner(d, d) = (U * svd.matrixV().transpose()).cast<cdouble>();
      out.topRightCorner(d, 1) = g.topRightCorner(d, 1).real().cast<cdouble>();
      return out;
    }
    return g / std::pow(g.determinant(), 1.0 / m);
  }

  std::shared_ptr<const BasisAlgebra> alg_;
  Representation rep_;
  Mat pinv_;
  Mat flat_basis_;
};

}  // namespace pldirac
