#pragma once

#include <cstdint>
#include <random>

#include "group.hpp"

namespace pldirac {

/// The single seeded stream used by randomized checks. mt19937_64 plus a
/// hand-rolled Box-Muller keeps sequences identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 1) : gen_(seed) {}

  double uniform() { return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u = uniform(), v = uniform();
    const double r = std::sqrt(-2.0 * std::log(u));
    spare_ = r * std::sin(2.0 * std::numbers::pi * v);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * v);
  }

  Vec normal_vec(Eigen::Index n, double scale = 1.0) {
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * normal();
    return v;
  }

  AlgebraVector algebra(const BasisAlgebra& A, double scale = 1.0) { return AlgebraVector(normal_vec(A.dim(), scale)); }
  DualVector dual(const BasisAlgebra& A, double scale = 1.0) { return DualVector(normal_vec(A.dim(), scale)); }

  AlgebraVector algebra(const BasisAlgebra& A, Side s, double scale = 1.0) { return A.project(algebra(A, scale), s); }
  DualVector dual(const BasisAlgebra& A, Side s, double scale = 1.0) { return A.project(dual(A, scale), s); }

  GroupPoint group(const DoubleGroup& G, double scale = 0.7) { return G.exp(algebra(G.algebra(), scale)); }

  /// Random element of G+ or G-: the exponential of the subalgebra.
  GroupPoint subgroup(const DoubleGroup& G, Side s, double scale = 0.7) {
    return G.exp(algebra(G.algebra(), s, scale));
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace pldirac
