#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pldirac/builtins.hpp"
#include "pldirac/loop.hpp"

using namespace pldirac;

namespace {

const DoubleGroup& sl2c() {
  static const DoubleGroup G = sl2c_iwasawa();
  return G;
}

Vec vec6(double a, double b, double c, double d, double e, double f) {
  Vec v(6);
  v << a, b, c, d, e, f;
  return v;
}

}  // namespace

TEST(Loop, ExactLatticeIdentitiesHoldAtMachinePrecision) {
  for (const auto& name : builtin_names())
    for (int N : {8, 16, 32, 64}) {
      const auto rep = loop_exact_identities(builtin(name), N, 1.0);
      for (const auto& c : rep.checks) EXPECT_TRUE(c.passed) << name << " N=" << N << " " << c.name << " " << c.residual;
    }
}

TEST(Loop, LatticeCocycleOnFourierModesMatchesClosedForm) {
  // X = a cos(m s) e_i, Y = b sin(m s) e_j gives c_k = k a b K_ij sin(m ds) / (2 ds).
  const double k = 1.7, a = 0.6, b = -1.1;
  const int i = 0, j = 3, m = 2;
  for (int N : {8, 16, 32}) {
    const auto A = sl2c().algebra().lattice(N);
    AlgebraVector X = A.zero(), Y = A.zero();
    for (int s = 0; s < N; ++s) {
      X.c[s * 6 + i] = a * std::cos(m * s * A.delta_s());
      Y.c[s * 6 + j] = b * std::sin(m * s * A.delta_s());
    }
    const double expect = k * a * b * A.pairing_base()(i, j) * std::sin(m * A.delta_s()) / (2 * A.delta_s());
    EXPECT_NEAR(loop_two_cocycle(A, k, X, Y), expect, 1e-13);
  }
}

TEST(Loop, ApproximateIdentitiesConvergeAtSecondOrder) {
  for (const auto& name : builtin_names())
    for (LoopIdentity id : {LoopIdentity::cocycle_jacobi, LoopIdentity::group_cocycle, LoopIdentity::ad_compatibility}) {
      const ConvergenceStudy s = convergence_study(builtin(name), id);
      EXPECT_NEAR(s.slope, oracle::loglog_slope(s.sizes, s.residuals), 1e-12);
      EXPECT_GE(s.slope, 1.7) << name << " " << identity_name(id);
      EXPECT_LE(s.slope, 2.3) << name << " " << identity_name(id);
      for (std::size_t n = 1; n < s.residuals.size(); ++n) EXPECT_LT(s.residuals[n], s.residuals[n - 1]);
    }
}

TEST(Loop, IsotropicCocycleOnTheEightSiteLoop) {
  const LoopLattice lat{sl2c(), 8, 1.0};
  const PhaseSpace P = build_loop_phase(lat);
  const auto& A = P.algebra();
  const FiberSpec f = P.make_fiber(P.group().exp(constant_loop_vector(A, vec6(0, 0, 0, 0.3, 0, 0))),
                                   constant_loop_dual(A, vec6(0, 0, 0, 0.5, 0, 0)));
  ASSERT_TRUE(f.character);
  ASSERT_TRUE(f.in_kernel);
  Rng r(71);
  double worst = 0;
  for (int t = 0; t < 5; ++t) {
    const PhasePoint p = P.fiber_point(f, r.subgroup(P.group(), Side::plus, 0.5), r.dual(A, Side::plus));
    for (int k = 0; k < 5; ++k) {
      const Differential dF{r.dual(A), r.algebra(A)}, dG{r.dual(A), r.algebra(A)};
      const double full = P.dirac_bracket(dF, dG, p, f);
      worst = std::max(worst, std::abs(P.dirac_bracket_reduced(dF, dG, p, f) - full) / std::max(1.0, std::abs(full)));
      EXPECT_NEAR(full, P.dirac_oracle(dF, dG, p), 1e-7 * std::max(1.0, std::abs(full)));
    }
  }
  EXPECT_LT(worst, 1e-7);
}

TEST(Loop, FieldFlowConservesEnergyAndRespectsCfl) {
  const LoopLattice lat{sl2c(), 32, 1.0};
  const PhaseSpace P = build_loop_phase(lat);
  const auto& A = P.algebra();
  const QuadraticHamiltonian H(P, EnergyOperator::preset(A, "skewed"));
  const FiberSpec f = P.make_fiber(P.group().exp(constant_loop_vector(A, vec6(0, 0, 0, 0.3, 0, 0))),
                                   constant_loop_dual(A, vec6(0, 0, 0, 0.3, 0, 0)));
  const PhasePoint p0 = P.fiber_point(f, P.group().exp(smooth_loop_vector(A, 7, 0.05, Side::plus, 1)),
                                      DualVector(smooth_loop_vector(A, 8, 0.05, Side::plus, 1).c / A.sites()));
  IntegratorConfig cfg;
  cfg.dt = lat.delta_s() / 4;
  cfg.steps = 200;
  cfg.record_every = 20;
  const FieldFlowResult res = field_flow(H, p0, f, cfg);
  EXPECT_LT(res.trajectory.max_energy_drift(), 1e-6);
  EXPECT_LT(res.trajectory.max_fiber_drift(), 1e-9);
  for (std::size_t n = 0; n < res.trajectory.size(); ++n)
    EXPECT_NEAR(res.even_energy[n] + res.odd_energy[n], res.trajectory.energy[n], 1e-12);
  EXPECT_EQ(res.final_density.size(), 32u);

  cfg.dt = 1.01 * lat.delta_s();
  EXPECT_THROW(field_flow(H, p0, f, cfg), ConfigError);
  const PhaseSpace dense(sl2c(), TwoCocycle::zero());
  EXPECT_THROW(field_flow(QuadraticHamiltonian(dense, EnergyOperator::preset(dense.algebra(), "skewed")),
                          PhasePoint{dense.group().identity(), dense.algebra().zero_dual()},
                          dense.make_fiber(dense.group().identity(), dense.algebra().zero_dual()), cfg),
               ConfigError);
}

TEST(LoopDensity, DecouplesIntoSiteLagrangiansAtLevelZero) {
  const LoopLattice lat{sl2c(), 8, 0.0};
  const PhaseSpace P = build_loop_phase(lat);
  const auto& A = P.algebra();
  const EnergyOperator E = EnergyOperator::preset(A, "skewed");
  const QuadraticHamiltonian H(P, E);
  const PhaseSpace Pd(sl2c(), TwoCocycle::zero());
  const QuadraticHamiltonian Hd(Pd, EnergyOperator::preset(Pd.algebra(), "skewed"));
  const Vec gm = vec6(0, 0, 0, 0.2, 0, 0), em = vec6(0, 0, 0, 0.4, 0, 0);
  const FiberSpec f = P.make_fiber(P.group().exp(constant_loop_vector(A, gm)), constant_loop_dual(A, em));
  const FiberSpec fd = Pd.make_fiber(Pd.group().exp(AlgebraVector(gm)), DualVector(em));
  Rng r(72);
  const GroupPoint gp = r.subgroup(P.group(), Side::plus);
  const AlgebraVector v = r.algebra(A, Side::plus);
  const LoopDensity d = lagrangian_density_loop(H, gp, v, f);
  double mean = 0;
  for (int j = 0; j < 8; ++j) {
    const double site = lagrangian_R(Hd, GroupPoint{{gp[j]}}, AlgebraVector(Vec(A.site(v.c, j))), fd);
    EXPECT_NEAR(d.density[j], site, 1e-12);
    mean += site / 8;
  }
  EXPECT_NEAR(d.total, mean, 1e-12);
}

TEST(LoopDensity, TotalIsTheLatticeLagrangian) {
  const LoopLattice lat{sl2c(), 16, 1.3};
  const PhaseSpace P = build_loop_phase(lat);
  const auto& A = P.algebra();
  const QuadraticHamiltonian H(P, EnergyOperator::preset(A, "skewed"));
  const FiberSpec f = P.make_fiber(P.group().exp(constant_loop_vector(A, vec6(0, 0, 0, 0.3, 0, 0))),
                                   constant_loop_dual(A, vec6(0, 0, 0, 0.2, 0, 0)));
  const GroupPoint gp = P.group().exp(smooth_loop_vector(A, 3, 0.3, Side::plus));
  const AlgebraVector v = smooth_loop_vector(A, 4, 0.3, Side::plus);
  EXPECT_NEAR(lagrangian_density_loop(H, gp, v, f).total, lagrangian_N(H, gp, v, f), 1e-12);
}

TEST(LoopDensity, ConstantFieldsGiveUniformDensityAndRestGivesZero) {
  const LoopLattice lat{sl2c(), 8, 1.0};
  const PhaseSpace P = build_loop_phase(lat);
  const auto& A = P.algebra();
  const QuadraticHamiltonian H(P, EnergyOperator::preset(A, "skewed"));
  const FiberSpec f0 = P.make_fiber(P.group().identity(), A.zero_dual());
  const GroupPoint gc = P.group().exp(constant_loop_vector(A, vec6(0.2, -0.4, 0.3, 0, 0, 0)));
  const AlgebraVector vc = constant_loop_vector(A, vec6(0.5, 0.1, -0.2, 0, 0, 0));
  const LoopDensity d = lagrangian_density_loop(H, gc, vc, f0);
  for (double x : d.density) EXPECT_NEAR(x, d.density[0], 1e-13);
  EXPECT_GT(std::abs(d.density[0]), 1e-3);
  const LoopDensity z = lagrangian_density_loop(H, gc, A.zero(), f0);
  for (double x : z.density) EXPECT_EQ(x, 0.0);
  const PhaseSpace dense(sl2c(), TwoCocycle::zero());
  const QuadraticHamiltonian Hd(dense, EnergyOperator::preset(dense.algebra(), "skewed"));
  EXPECT_THROW(lagrangian_density_loop(Hd, dense.group().identity(), dense.algebra().zero(),
                                       dense.make_fiber(dense.group().identity(), dense.algebra().zero_dual())),
               StructuralError);
}
