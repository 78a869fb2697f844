#pragma once

#include <functional>
#include <string>
#include <vector>

#include "group.hpp"

namespace pldirac {

/// Structure constants and pairing read off a matrix representation:
/// [B_i, B_j] is expanded in the basis and (X, Y) = form(X, Y).
inline DoubleGroup group_from_representation(std::string name, std::vector<std::string> labels, Representation rep,
                                             const std::function<double(const CMat&, const CMat&)>& form,
                                             std::vector<int> plus, std::vector<int> minus) {
  const int n = static_cast<int>(rep.basis.size());
  // Coordinate extraction only needs the representation, so bootstrap with a
  // trivial algebra of the right size first.
  std::vector<Mat> zero_ad(n, Mat::Zero(n, n));
  const DoubleGroup probe(BasisAlgebra(name, labels, zero_ad, Mat::Identity(n, n), plus, minus), rep);

  std::vector<Mat> ad(n, Mat::Zero(n, n));
  Mat K(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const CMat C = rep.basis[i] * rep.basis[j] - rep.basis[j] * rep.basis[i];
      if (probe.representability_residual(C) > 1e-12)
        throw StructuralError("representation basis does not close under the commutator");
      ad[i].col(j) = probe.coords_site(C);
      K(i, j) = form(rep.basis[i], rep.basis[j]);
    }
  return DoubleGroup(BasisAlgebra(std::move(name), std::move(labels), std::move(ad), K, std::move(plus),
                                  std::move(minus)),
                     std::move(rep));
}

/// e(3) = so(3) + R^3 as the cotangent double of so(3): g+ = so(3), g- = R^3
/// (abelian), pairing (X, xi).(Y, zeta) = X.zeta + xi.Y, 4x4 affine matrices.
inline DoubleGroup so3_cotangent() {
  Representation rep;
  rep.kind = FactorizationKind::semidirect;
  for (int k = 0; k < 3; ++k) {
    CMat M = CMat::Zero(4, 4);
    const int a = (k + 1) % 3, b = (k + 2) % 3;
    M(a, b) = -1.0;
    M(b, a) = 1.0;
    rep.basis.push_back(M);
  }
  for (int k = 0; k < 3; ++k) {
    CMat M = CMat::Zero(4, 4);
    M(k, 3) = 1.0;
    rep.basis.push_back(M);
  }
  // The pairing is not a trace form in this representation; read it from
  // the block structure instead.
  auto form = [](const CMat& X, const CMat& Y) {
    const Eigen::Vector3d wx(X(2, 1).real(), X(0, 2).real(), X(1, 0).real());
    const Eigen::Vector3d wy(Y(2, 1).real(), Y(0, 2).real(), Y(1, 0).real());
    const Eigen::Vector3d vx = X.topRightCorner(3, 1).real(), vy = Y.topRightCorner(3, 1).real();
    return wx.dot(vy) + vx.dot(wy);
  };
  return group_from_representation("so3-cotangent", {"e1", "e2", "e3", "f1", "f2", "f3"}, std::move(rep), form,
                                   {0, 1, 2}, {3, 4, 5});
}

/// sl(2,C) = su(2) + sb(2,C) with (X, Y) = Im tr(XY). Basis: i sigma_k / 2,
/// then b1 = diag(1,-1), b2 = E12, b3 = i E12.
inline DoubleGroup sl2c_iwasawa() {
  const cdouble I(0.0, 1.0);
  Representation rep;
  rep.kind = FactorizationKind::iwasawa;
  CMat s1(2, 2), s2(2, 2), s3(2, 2);
  s1 << 0, 1, 1, 0;
  s2 << 0, -I, I, 0;
  s3 << 1, 0, 0, -1;
  rep.basis = {0.5 * I * s1, 0.5 * I * s2, 0.5 * I * s3};
  CMat b1(2, 2), b2(2, 2), b3(2, 2);
  b1 << 1, 0, 0, -1;
  b2 << 0, 1, 0, 0;
  b3 << 0, I, 0, 0;
  rep.basis.insert(rep.basis.end(), {b1, b2, b3});
  auto form = [](const CMat& X, const CMat& Y) { return (X * Y).trace().imag(); };
  return group_from_representation("sl2c-iwasawa", {"X1", "X2", "X3", "b1", "b2", "b3"}, std::move(rep), form,
                                   {0, 1, 2}, {3, 4, 5});
}

inline std::vector<std::string> builtin_names() { return {"so3-cotangent", "sl2c-iwasawa"}; }

inline DoubleGroup builtin(const std::string& name) {
  if (name == "so3-cotangent") return so3_cotangent();
  if (name == "sl2c-iwasawa") return sl2c_iwasawa();
  throw ConfigError("unknown built-in algebra '" + name + "'");
}

}  // namespace pldirac
