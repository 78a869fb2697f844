#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace pldirac {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class Side { plus, minus };

inline Side opposite(Side s) { return s == Side::plus ? Side::minus : Side::plus; }

namespace detail {

// Shared coordinate arithmetic for the two strong vector types. Hidden
// friends keep AlgebraVector + DualVector from compiling.
template <class Derived>
struct CoordOps {
  Vec c;

  CoordOps() = default;
  explicit CoordOps(Vec v) : c(std::move(v)) {}

  Eigen::Index size() const { return c.size(); }
  double norm() const { return c.norm(); }
  double max_abs() const { return c.size() ? c.cwiseAbs().maxCoeff() : 0.0; }
  double operator[](Eigen::Index i) const { return c[i]; }
  double& operator[](Eigen::Index i) { return c[i]; }

  static Derived zero(Eigen::Index n) { return Derived(Vec::Zero(n)); }
  static Derived unit(Eigen::Index n, Eigen::Index i) { return Derived(Vec::Unit(n, i)); }

  friend Derived operator+(const Derived& a, const Derived& b) {
    same_size(a, b);
    return Derived(a.c + b.c);
  }
  friend Derived operator-(const Derived& a, const Derived& b) {
    same_size(a, b);
    return Derived(a.c - b.c);
  }
  friend Derived operator-(const Derived& a) { return Derived(-a.c); }
  friend Derived operator*(double s, const Derived& a) { return Derived(s * a.c); }
  friend Derived operator*(const Derived& a, double s) { return Derived(s * a.c); }
  friend Derived operator/(const Derived& a, double s) { return Derived(a.c / s); }
  Derived& operator+=(const Derived& o) {
    same_size(self(), o);
    c += o.c;
    return self();
  }
  Derived& operator-=(const Derived& o) {
    same_size(self(), o);
    c -= o.c;
    return self();
  }

 private:
  Derived& self() { return static_cast<Derived&>(*this); }
  static void same_size(const Derived& a, const Derived& b) {
    if (a.c.size() != b.c.size())
      throw StructuralError("dimension mismatch: " + std::to_string(a.c.size()) + " vs " +
                            std::to_string(b.c.size()));
  }
};

}  // namespace detail

/// Element of the Lie algebra, in basis coordinates.
struct AlgebraVector : detail::CoordOps<AlgebraVector> {
  using CoordOps::CoordOps;
};

/// Element of the dual, in dual-basis coordinates.
struct DualVector : detail::CoordOps<DualVector> {
  using CoordOps::CoordOps;
};

/// <eta, X>: the duality pairing is the Euclidean dot of coordinates.
inline double inner(const DualVector& eta, const AlgebraVector& X) {
  if (eta.size() != X.size()) throw StructuralError("inner: dimension mismatch");
  return eta.c.dot(X.c);
}

struct CheckResult {
  std::string name;
  double residual = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  bool lower_bound = false;  // negative controls pass when residual > tolerance
};

struct ValidationReport {
  std::vector<CheckResult> checks;

  void add(std::string name, double residual, double tolerance) {
    const bool ok = std::isfinite(residual) && residual <= tolerance;
    checks.push_back({std::move(name), residual, tolerance, ok});
  }
  /// A negative control: passes when the measured violation exceeds `threshold`.
  void add_lower(std::string name, double violation, double threshold) {
    const bool ok = std::isfinite(violation) && violation > threshold;
    checks.push_back({std::move(name), violation, threshold, ok, true});
  }
  void add_flag(std::string name, bool ok) { checks.push_back({std::move(name), ok ? 0.0 : 1.0, 0.0, ok}); }
  void merge(const ValidationReport& o) { checks.insert(checks.end(), o.checks.begin(), o.checks.end()); }
  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
  }
  const CheckResult* find(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }
};

/// A Manin triple (g, g+, g-) in a fixed basis.
///
/// With sites() == 1 this is the dense structure-constant backend. With
/// sites() == N > 1 it is the periodic lattice loop algebra over the base
/// triple: coordinates are site-major (index = site * base_dim + i), the
/// bracket acts pointwise, and the pairing is (1/N) sum_j (X_j, Y_j).
class BasisAlgebra {
 public:
  /// `ad[i]` is the matrix of ad_{b_i}, i.e. ad[i](k, j) = c[i][j][k].
  BasisAlgebra(std::string name, std::vector<std::string> labels, std::vector<Mat> ad, Mat pairing,
               std::vector<int> plus, std::vector<int> minus, int sites = 1)
      : name_(std::move(name)),
        labels_(std::move(labels)),
        ad_(std::move(ad)),
        K_(std::move(pairing)),
        plus_(std::move(plus)),
        minus_(std::move(minus)),
        sites_(sites) {
    const int n = static_cast<int>(ad_.size());
    if (n == 0) throw ConfigError("algebra '" + name_ + "' has dimension 0");
    if (static_cast<int>(labels_.size()) != n) throw ConfigError("label count does not match dimension");
    for (const auto& m : ad_)
      if (m.rows() != n || m.cols() != n) throw StructuralError("structure constant block has wrong shape");
    if (K_.rows() != n || K_.cols() != n) throw ConfigError("pairing matrix has wrong shape");
    if (sites_ < 1) throw ConfigError("site count must be positive");

    std::vector<int> seen(n, 0);
    for (int i : plus_) {
      if (i < 0 || i >= n) throw ConfigError("plus index out of range");
      ++seen[i];
    }
    for (int i : minus_) {
      if (i < 0 || i >= n) throw ConfigError("minus index out of range");
      ++seen[i];
    }
    if (std::any_of(seen.begin(), seen.end(), [](int s) { return s != 1; }))
      throw ConfigError("plus and minus index sets must partition the basis");
    if (plus_.size() != minus_.size()) throw ConfigError("g+ and g- must have equal dimension");

    Eigen::JacobiSVD<Mat> svd(K_);
    const auto& sv = svd.singularValues();
    cond_ = sv(sv.size() - 1) > 0 ? sv(0) / sv(sv.size() - 1) : INFINITY;
    if (!(cond_ < 1e12)) throw ConfigError("pairing matrix is singular (condition " + std::to_string(cond_) + ")");
    Kinv_ = K_.inverse();

    for (int j = 0; j < sites_; ++j) {
      for (int i : plus_) plus_full_.push_back(j * n + i);
      for (int i : minus_) minus_full_.push_back(j * n + i);
    }
    std::sort(plus_full_.begin(), plus_full_.end());
    std::sort(minus_full_.begin(), minus_full_.end());
    side_of_.assign(n, Side::plus);
    for (int i : minus_) side_of_[i] = Side::minus;
  }

  /// Loop double over this (dense) triple on N periodic sites.
  BasisAlgebra lattice(int N) const {
    if (sites_ != 1) throw ConfigError("lattice(): base must be a dense algebra");
    if (N < 4 || N % 2 != 0) throw ConfigError("lattice site count must be even and >= 4");
    return BasisAlgebra(name_ + "/L" + std::to_string(N), labels_, ad_, K_, plus_, minus_, N);
  }

  const std::string& name() const { return name_; }
  const std::vector<std::string>& labels() const { return labels_; }
  int base_dim() const { return static_cast<int>(ad_.size()); }
  int sites() const { return sites_; }
  bool is_lattice() const { return sites_ > 1; }
  int dim() const { return base_dim() * sites_; }
  int half_dim() const { return static_cast<int>(plus_.size()); }
  double delta_s() const { return 2.0 * std::numbers::pi / sites_; }
  double pairing_condition() const { return cond_; }

  double structure(int i, int j, int k) const { return ad_[i](k, j); }
  const Mat& ad_base(int i) const { return ad_[i]; }
  const Mat& pairing_base() const { return K_; }
  const Mat& pairing_base_inverse() const { return Kinv_; }
  const std::vector<int>& plus_base() const { return plus_; }
  const std::vector<int>& minus_base() const { return minus_; }
  const std::vector<int>& indices(Side s) const { return s == Side::plus ? plus_full_ : minus_full_; }
  const std::vector<int>& base_indices(Side s) const { return s == Side::plus ? plus_ : minus_; }
  Side side_of_base(int i) const { return side_of_[i]; }

  AlgebraVector zero() const { return AlgebraVector::zero(dim()); }
  DualVector zero_dual() const { return DualVector::zero(dim()); }
  AlgebraVector basis(int i) const { return AlgebraVector::unit(dim(), i); }
  DualVector dual_basis(int i) const { return DualVector::unit(dim(), i); }

  auto site(const Vec& v, int j) const { return v.segment(j * base_dim(), base_dim()); }
  auto site(Vec& v, int j) const { return v.segment(j * base_dim(), base_dim()); }

  /// Matrix of ad_x on the base algebra for base coordinates x.
  Mat ad_site(const Eigen::Ref<const Vec>& x) const {
    const int n = base_dim();
    Mat m = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i)
      if (x[i] != 0.0) m.noalias() += x[i] * ad_[i];
    return m;
  }

  AlgebraVector bracket(const AlgebraVector& X, const AlgebraVector& Y) const {
    check(X);
    check(Y);
    AlgebraVector out = zero();
    for (int j = 0; j < sites_; ++j) site(out.c, j) = ad_site(site(X.c, j)) * site(Y.c, j);
    return out;
  }

  double pair(const AlgebraVector& X, const AlgebraVector& Y) const {
    check(X);
    check(Y);
    double s = 0.0;
    for (int j = 0; j < sites_; ++j) s += site(X.c, j).dot(K_ * site(Y.c, j));
    return s / sites_;
  }

  /// psi: g -> g*, <psi(X), Y> = (X, Y).
  DualVector psi(const AlgebraVector& X) const {
    check(X);
    DualVector out = zero_dual();
    for (int j = 0; j < sites_; ++j) site(out.c, j) = K_ * site(X.c, j) / sites_;
    return out;
  }

  AlgebraVector psi_bar(const DualVector& eta) const {
    check(eta);
    AlgebraVector out = zero();
    for (int j = 0; j < sites_; ++j) site(out.c, j) = sites_ * (Kinv_ * site(eta.c, j));
    return out;
  }

  AlgebraVector project(const AlgebraVector& X, Side s) const {
    check(X);
    AlgebraVector out = zero();
    for (int i : indices(s)) out.c[i] = X.c[i];
    return out;
  }

  /// Dual projection onto g+* (the annihilator of g-) or g-* (annihilator of g+).
  DualVector project(const DualVector& eta, Side s) const {
    check(eta);
    DualVector out = zero_dual();
    for (int i : indices(s)) out.c[i] = eta.c[i];
    return out;
  }

  /// Coadjoint action of the algebra: <ad*_X eta, Y> = <eta, [X, Y]>.
  DualVector ad_star(const AlgebraVector& X, const DualVector& eta) const {
    check(X);
    check(eta);
    DualVector out = zero_dual();
    for (int j = 0; j < sites_; ++j) site(out.c, j) = ad_site(site(X.c, j)).transpose() * site(eta.c, j);
    return out;
  }

  /// Periodic central difference in the loop parameter (lattice backend only).
  AlgebraVector derivative(const AlgebraVector& X) const {
    check(X);
    if (!is_lattice()) throw StructuralError("derivative() requires the lattice backend");
    AlgebraVector out = zero();
    const double inv2ds = 1.0 / (2.0 * delta_s());
    for (int j = 0; j < sites_; ++j) {
      const int jp = (j + 1) % sites_, jm = (j + sites_ - 1) % sites_;
      site(out.c, j) = (site(X.c, jp) - site(X.c, jm)) * inv2ds;
    }
    return out;
  }

  /// Full dim x dim matrix of ad_X (block diagonal on the lattice).
  Mat ad_matrix(const AlgebraVector& X) const {
    check(X);
    const int n = base_dim();
    Mat m = Mat::Zero(dim(), dim());
    for (int j = 0; j < sites_; ++j) m.block(j * n, j * n, n, n) = ad_site(site(X.c, j));
    return m;
  }

  /// Gram matrix of the pairing in the full basis.
  Mat pairing_matrix() const {
    const int n = base_dim();
    Mat m = Mat::Zero(dim(), dim());
    for (int j = 0; j < sites_; ++j) m.block(j * n, j * n, n, n) = K_ / sites_;
    return m;
  }

  template <class V>
  void check(const V& v) const {
    if (v.size() != dim())
      throw StructuralError("vector of length " + std::to_string(v.size()) + " used with algebra '" + name_ +
                            "' of dimension " + std::to_string(dim()));
  }

 private:
  std::string name_;
  std::vector<std::string> labels_;
  std::vector<Mat> ad_;
  Mat K_, Kinv_;
  std::vector<int> plus_, minus_, plus_full_, minus_full_;
  std::vector<Side> side_of_;
  int sites_ = 1;
  double cond_ = 1.0;
};

/// Build a dense algebra from triplets c[i][j][k] = value. Entries are taken
/// literally; nothing is antisymmetrized, so corrupted data stays visible to
/// validate_manin.
struct StructureTriplet {
  int i, j, k;
  double value;
};

inline BasisAlgebra algebra_from_triplets(std::string name, std::vector<std::string> labels, int dim,
                                          const std::vector<StructureTriplet>& triplets, Mat pairing,
                                          std::vector<int> plus, std::vector<int> minus) {
  std::vector<Mat> ad(dim, Mat::Zero(dim, dim));
  for (const auto& t : triplets) {
    if (t.i < 0 || t.j < 0 || t.k < 0 || t.i >= dim || t.j >= dim || t.k >= dim)
      throw ConfigError("structure constant index out of range");
    ad[t.i](t.k, t.j) = t.value;
  }
  if (labels.empty())
    for (int i = 0; i < dim; ++i) labels.push_back("e" + std::to_string(i + 1));
  return BasisAlgebra(std::move(name), std::move(labels), std::move(ad), std::move(pairing), std::move(plus),
                      std::move(minus));
}

enum class CocycleKind { zero, coboundary, lattice_derivative };

/// Algebraic 2-cocycle c(X,Y) = <c_hat(X), Y> and, through the same kind
/// tag, the matching group 1-cocycle C evaluated in group.hpp.
struct TwoCocycle {
  CocycleKind kind = CocycleKind::zero;
  DualVector mu0;      // coboundary only
  double level = 0.0;  // lattice only

  static TwoCocycle zero() { return {}; }
  static TwoCocycle coboundary(DualVector mu0) { return {CocycleKind::coboundary, std::move(mu0), 0.0}; }
  static TwoCocycle lattice_derivative(double k) { return {CocycleKind::lattice_derivative, {}, k}; }

  std::string describe() const {
    switch (kind) {
      case CocycleKind::zero: return "zero";
      case CocycleKind::coboundary: return "coboundary";
      case CocycleKind::lattice_derivative: return "lattice(k=" + std::to_string(level) + ")";
    }
    return "?";
  }

  DualVector hat(const BasisAlgebra& A, const AlgebraVector& X) const {
    A.check(X);
    switch (kind) {
      case CocycleKind::zero: return A.zero_dual();
      case CocycleKind::coboundary: return A.ad_star(X, mu0);
      case CocycleKind::lattice_derivative:
        if (!A.is_lattice()) throw StructuralError("lattice cocycle used on a dense algebra");
        return -level * A.psi(A.derivative(X));
    }
    return A.zero_dual();
  }

  double eval(const BasisAlgebra& A, const AlgebraVector& X, const AlgebraVector& Y) const {
    return inner(hat(A, X), Y);
  }

  /// M(i, j) = c(b_i, b_j).
  Mat matrix(const BasisAlgebra& A) const {
    Mat M(A.dim(), A.dim());
    for (int i = 0; i < A.dim(); ++i) M.row(i) = hat(A, A.basis(i)).c.transpose();
    return M;
  }
};

/// Largest |<eta, [X, Y]>| over basis pairs of g-. Throws when eta has a g+* part.
inline double character_defect(const BasisAlgebra& A, const DualVector& eta_minus, double support_tol = 1e-12) {
  A.check(eta_minus);
  const double leak = A.project(eta_minus, Side::plus).max_abs();
  if (leak > support_tol)
    throw PreconditionError("eta_minus has a g+* component of size " + std::to_string(leak));
  double worst = 0.0;
  const int n = A.base_dim();
  const auto& mi = A.minus_base();
  for (int j = 0; j < A.sites(); ++j) {
    auto e = A.site(eta_minus.c, j);
    for (std::size_t a = 0; a < mi.size(); ++a)
      for (std::size_t b = a + 1; b < mi.size(); ++b) {
        double s = 0.0;
        for (int k = 0; k < n; ++k) s += e[k] * A.structure(mi[a], mi[b], k);
        worst = std::max(worst, std::abs(s));
      }
  }
  return worst;
}

inline bool is_character(const BasisAlgebra& A, const DualVector& eta_minus, double tol = 1e-12) {
  return character_defect(A, eta_minus) <= tol;
}

/// Largest violation of c_hat(g+-) inside the annihilator of g+-, i.e. of the
/// hypothesis that c vanishes on each factor.
inline double cocycle_isotropy_defect(const BasisAlgebra& A, const TwoCocycle& c) {
  if (c.kind == CocycleKind::zero) return 0.0;
  double worst = 0.0;
  for (Side s : {Side::plus, Side::minus})
    for (int i : A.indices(s)) worst = std::max(worst, A.project(c.hat(A, A.basis(i)), s).max_abs());
  return worst;
}

namespace detail {

// Iterate over basis triples when small, otherwise over seeded random triples.
template <class F>
void for_triples(const BasisAlgebra& A, F&& f) {
  const int d = A.dim();
  if (d <= 64) {
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        for (int k = 0; k < d; ++k) f(A.basis(i), A.basis(j), A.basis(k));
    return;
  }
  std::mt19937_64 gen(0x5eed);
  std::normal_distribution<double> nd;
  auto rnd = [&] {
    AlgebraVector v = A.zero();
    for (int i = 0; i < d; ++i) v.c[i] = nd(gen);
    return v;
  };
  for (int t = 0; t < 64; ++t) f(rnd(), rnd(), rnd());
}

}  // namespace detail

/// Runs every structural invariant of a Manin triple and reports each residual.
inline ValidationReport validate_manin(const BasisAlgebra& A, double tol = 1e-12) {
  ValidationReport rep;
  double anti = 0.0, jac = 0.0, inv = 0.0;
  detail::for_triples(A, [&](const AlgebraVector& X, const AlgebraVector& Y, const AlgebraVector& Z) {
    anti = std::max(anti, (A.bracket(X, Y) + A.bracket(Y, X)).max_abs());
    const AlgebraVector J = A.bracket(X, A.bracket(Y, Z)) + A.bracket(Y, A.bracket(Z, X)) + A.bracket(Z, A.bracket(X, Y));
    jac = std::max(jac, J.max_abs());
    inv = std::max(inv, std::abs(A.pair(A.bracket(X, Y), Z) + A.pair(Y, A.bracket(X, Z))));
  });
  rep.add("bracket antisymmetry", anti, tol);
  rep.add("jacobi identity", jac, tol);

  const Mat& K = A.pairing_base();
  rep.add("pairing symmetry", (K - K.transpose()).cwiseAbs().maxCoeff(), tol);
  // Reported as a condition number; passes below 1e12.
  rep.checks.push_back({"pairing condition number", A.pairing_condition(), 1e12, A.pairing_condition() < 1e12});
  rep.add("pairing ad-invariance", inv, tol);

  for (Side s : {Side::plus, Side::minus}) {
    const std::string tag = s == Side::plus ? "g+" : "g-";
    const auto& idx = A.base_indices(s);
    double iso = 0.0, sub = 0.0;
    for (int i : idx)
      for (int j : idx) {
        iso = std::max(iso, std::abs(K(i, j)));
        for (int k : A.base_indices(opposite(s))) sub = std::max(sub, std::abs(A.structure(i, j, k)));
      }
    rep.add("isotropy " + tag, iso, tol);
    rep.add("subalgebra " + tag, sub, tol);
  }
  return rep;
}

}  // namespace pldirac
