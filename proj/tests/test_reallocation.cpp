#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mlift/reallocation.hpp"
#include "support.hpp"

using namespace mlift;

namespace {

GridSpec two_point() { return make_grid(1, 2, 1.0, 2); }

DensityField two_point_target() {
  return DensityField(ScalarField(make_site_grid(1, 1.0, 2), {0.6, 0.4}));
}

/// One step of the scheme on plain arrays, N = 2, d = 1.
std::vector<double> dense_step(const std::vector<double>& phi, const std::vector<double>& rho,
                               int M, double h) {
  std::vector<double> sigma(static_cast<std::size_t>(M), 0.0);
  for (int x = 0; x < M; ++x) {
    for (int y = 0; y < M; ++y) {
      const double v = phi[static_cast<std::size_t>(x * M + y)];
      sigma[static_cast<std::size_t>(x)] += v * v * h;
    }
  }
  std::vector<double> r(static_cast<std::size_t>(M), 0.0);
  for (std::size_t x = 0; x < r.size(); ++x) {
    if (sigma[x] > rho[x]) r[x] = (sigma[x] - rho[x]) / sigma[x];
  }
  std::vector<double> out(phi.size());
  for (int x = 0; x < M; ++x) {
    for (int y = 0; y < M; ++y) {
      const double s = 0.5 * (r[static_cast<std::size_t>(x)] + r[static_cast<std::size_t>(y)]);
      out[static_cast<std::size_t>(x * M + y)] =
          phi[static_cast<std::size_t>(x * M + y)] * std::sqrt(1.0 - s);
    }
  }
  return out;
}

}  // namespace

TEST(Reallocation, TwoPointFirstStep) {
  const RealConfig phi = RealConfig::constant(two_point(), 0.5);
  const DensityField rho_n = two_point_target();
  ReallocState s = initial_state(phi, rho_n);
  EXPECT_DOUBLE_EQ(s.sigma[0], 0.5);
  EXPECT_EQ(s.excess, (ExcessMask{false, true}));

  const RealConfig S = shrink_factor(phi.grid(), s.sigma, rho_n, s.excess);
  EXPECT_NEAR(S[0], 0.0, 1e-16);
  EXPECT_NEAR(S[1], 0.1, 1e-16);
  EXPECT_NEAR(S[2], 0.1, 1e-16);
  EXPECT_NEAR(S[3], 0.2, 1e-16);

  s = realloc_step(s, rho_n);
  const double expect[] = {0.25, 0.225, 0.225, 0.2};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(s.phi[i] * s.phi[i], expect[i], 1e-15);
  EXPECT_NEAR(s.sigma[0], 0.475, 1e-15);
  EXPECT_NEAR(s.sigma[1], 0.425, 1e-15);
  EXPECT_NEAR(excess_residual(s.sigma, rho_n, s.excess), 0.025, 1e-15);
}

TEST(Reallocation, CorrectionRefillsDeficitAsProduct) {
  const GridSpec g = two_point();
  const ScalarField sigma(make_site_grid(1, 1.0, 2), {0.6, 0.2});
  const Correction c = correction(g, sigma, two_point_target());
  EXPECT_NEAR(c.q_n, 0.2, 1e-15);
  EXPECT_EQ(c.alpha[0], 0.0);
  EXPECT_EQ(c.alpha[1], 0.0);
  EXPECT_EQ(c.alpha[2], 0.0);
  EXPECT_NEAR(c.alpha[3], 0.2, 1e-15);
}

TEST(Reallocation, CorrectionBelowFloorIsZero) {
  const GridSpec g = two_point();
  const ScalarField sigma(make_site_grid(1, 1.0, 2), {0.6, 0.4 - 1e-15});
  const Correction c = correction(g, sigma, two_point_target());
  EXPECT_EQ(c.q_n, 0.0);
  for (double v : c.alpha.values()) EXPECT_EQ(v, 0.0);
}

TEST(Reallocation, CorrectionMarginalIsTheDeficit) {
  std::mt19937_64 rng(11);
  const GridSpec g = make_grid(1, 3, 1.0, 5);
  const GridSpec s = make_site_grid(1, 1.0, 5);
  const DensityField rho = testkit::random_density(rng, g);
  const DensityField sig = testkit::random_density(rng, g);
  std::vector<double> half(rho.size());
  for (std::size_t i = 0; i < half.size(); ++i) half[i] = 0.5 * sig[i];
  const ScalarField sigma(s, half);
  const Correction c = correction(g, sigma, rho);
  const ScalarField m = density_marginal(c.alpha);
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_NEAR(m[i], std::max(rho[i] - sigma[i], 0.0), 1e-14);
  }
}

TEST(Reallocation, MatchesDenseOracle) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const GridSpec g = make_grid(1, 2, 1.0, 3);
    const RealConfig phi = testkit::random_symmetric_phi(rng, g);
    const DensityField rho_n = testkit::random_target(rng, marginal(phi));
    std::vector<double> ref(phi.values().begin(), phi.values().end());
    std::vector<double> rho(rho_n.values().begin(), rho_n.values().end());
    ReallocState s = initial_state(phi, rho_n);
    for (int k = 1; k <= 30; ++k) {
      ref = dense_step(ref, rho, g.M, g.h);
      s = realloc_step(s, rho_n);
      for (std::size_t i = 0; i < ref.size(); ++i) {
        ASSERT_NEAR(s.phi[i], ref[i], 1e-13 * std::max(1.0, std::abs(ref[i])))
            << "trial " << trial << " k " << k;
      }
    }
  }
}

TEST(Reallocation, PropertiesOnRandomInstances) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const GridSpec g = make_grid(1, 2, 4.0, 32);
    const RealConfig phi = testkit::random_symmetric_phi(rng, g);
    const DensityField rho(marginal(phi));
    const DensityField rho_n = testkit::random_target(rng, rho);
    const double l1 = relative_l1_error(rho, rho_n) * integrate(rho_n.field());
    const double root_l2 = sqrt_density_l2_distance(rho, rho_n);

    ReallocState s = initial_state(phi, rho_n);
    for (int k = 1; k <= 40; ++k) {
      const ReallocState next = realloc_step(s, rho_n);
      for (std::size_t i = 0; i < phi.size(); ++i) {
        ASSERT_GE(next.phi[i], 0.0);
        ASSERT_LE(next.phi[i], s.phi[i] + 1e-15);
      }
      for (std::size_t i = 0; i < s.excess.size(); ++i) {
        ASSERT_TRUE(!next.excess[i] || s.excess[i]) << "excess set grew at k = " << k;
      }
      const double res = excess_residual(next.sigma, rho_n, next.excess);
      ASSERT_LE(res, std::ldexp(l1, -k) + 1e-13) << "trial " << trial << " k " << k;
      ASSERT_LE(mass(phi) - mass(next.phi), 4.0 * root_l2 + 1e-10);
      ASSERT_LE(symmetry_defect(next.phi), 1e-15);
      s = next;
    }

    const ReallocResult r = l2_match(phi, rho_n, {.tol = 1e-12, .k_max = 0, .hook = {}});
    const double dev = l2_distance(r.phi_out, phi);
    EXPECT_LE(dev * dev, 10.0 * root_l2 + 1e-10);
    EXPECT_LE(r.marginal_error, 1e-10);
    EXPECT_NEAR(mass(r.phi_out), 1.0, 1e-13);
  }
}

TEST(Reallocation, ThreeParticleDecayRate) {
  std::mt19937_64 rng(9);
  const GridSpec g = make_grid(1, 3, 3.0, 10);
  const RealConfig phi = testkit::random_symmetric_phi(rng, g);
  const DensityField rho(marginal(phi));
  const DensityField rho_n = testkit::random_target(rng, rho);
  const double l1 = relative_l1_error(rho, rho_n) * integrate(rho_n.field());
  ReallocState s = initial_state(phi, rho_n);
  for (int k = 1; k <= 30; ++k) {
    s = realloc_step(s, rho_n);
    EXPECT_LE(excess_residual(s.sigma, rho_n, s.excess),
              std::pow(2.0 / 3.0, k) * l1 + 1e-13);
  }
  const ReallocResult r = l2_match(phi, rho_n, {.tol = 1e-12, .k_max = 0, .hook = {}});
  EXPECT_LE(r.marginal_error, 1e-10);
}

TEST(Reallocation, FixedPointWhenMarginalAlreadyMatches) {
  std::mt19937_64 rng(1);
  const GridSpec g = make_grid(1, 2, 3.0, 12);
  const RealConfig phi = testkit::random_symmetric_phi(rng, g);
  const DensityField rho(marginal(phi));
  const ReallocResult r = l2_match(phi, rho);
  EXPECT_EQ(r.iterations, 0);
  EXPECT_LE(l2_distance(r.phi_out, phi), 1e-14);
}

TEST(Reallocation, IterationBudget) {
  EXPECT_EQ(default_iteration_budget(2, 1e-10), 51);
  EXPECT_EQ(default_iteration_budget(3, 1e-10),
            static_cast<int>(std::ceil(std::log(5e-11) / std::log(2.0 / 3.0))) + 16);
}

TEST(Reallocation, TraceHookSeesEveryIterate) {
  const RealConfig phi = RealConfig::constant(two_point(), 0.5);
  std::vector<StepTrace> seen;
  LimitOptions opt;
  opt.tol = 1e-6;
  opt.hook = [&](const StepTrace& t) { seen.push_back(t); };
  const LimitResult r = realloc_limit(phi, two_point_target(), opt);
  ASSERT_EQ(static_cast<int>(seen.size()), r.iterations + 1);
  EXPECT_EQ(seen.front().k, 0);
  EXPECT_NEAR(seen.front().residual, 0.1, 1e-15);
  EXPECT_NEAR(seen[1].residual, 0.025, 1e-15);
  EXPECT_LE(seen.back().residual, 1e-6);
}

TEST(Reallocation, Errors) {
  const GridSpec g = two_point();
  EXPECT_THROW(l2_match(RealConfig::constant(g, 1.0), two_point_target()), ArgumentError);

  LimitOptions opt;
  opt.tol = 1e-14;
  opt.k_max = 2;
  try {
    realloc_limit(RealConfig::constant(g, 0.5), two_point_target(), opt);
    FAIL() << "expected a convergence error";
  } catch (const ConvergenceError& e) {
    EXPECT_EQ(e.iterations(), 2);
    EXPECT_GT(e.residual(), 1e-14);
  }

  const RealConfig neg(g, {0.5, -0.5, -0.5, 0.5});
  EXPECT_THROW(initial_state(neg, two_point_target()), ArgumentError);

  const DensityField other(ScalarField(make_site_grid(1, 2.0, 2), {0.3, 0.2}));
  EXPECT_THROW(initial_state(RealConfig::constant(g, 0.5), other), ArgumentError);
}
