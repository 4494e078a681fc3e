#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mlift/sign_lift.hpp"
#include "support.hpp"

using namespace mlift;

namespace {

RealConfig signed_psi(const GridSpec& g) {
  return normalized(sample_config(g, [](std::span<const double> X) {
    double lin = 0.0, r2 = 0.0;
    for (double x : X) {
      lin += x;
      r2 += x * x;
    }
    return lin * std::exp(-r2);
  }));
}

}  // namespace

TEST(SignLift, OmegaEndpoints) {
  EXPECT_EQ(omega(1.0), Complex(1.0, 0.0));
  EXPECT_EQ(omega(-1.0), Complex(-1.0, 0.0));
  EXPECT_EQ(omega(0.0), Complex(0.0, 1.0));
}

TEST(SignLift, OmegaIsUnimodularAndLipschitz) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double s = u(rng), t = u(rng);
    EXPECT_NEAR(std::abs(omega(s)), 1.0, 1e-15);
    // Agrees with exp(i (1 - s) pi / 2).
    const Complex ref = std::exp(Complex(0.0, (1.0 - s) * std::numbers::pi / 2.0));
    EXPECT_NEAR(std::abs(omega(s) - ref), 0.0, 1e-15);
    if (s != t) worst = std::max(worst, std::abs(omega(s) - omega(t)) / std::abs(s - t));
  }
  EXPECT_LE(worst, std::numbers::pi / 2.0 + 1e-12);
}

TEST(SignLift, LiftRangeAndClamp) {
  const GridSpec g = make_grid(1, 2, 1.0, 2);
  const PhaseField p = lift(RealConfig(g, {1.0 + 1e-13, -1.0, 0.0, 0.5}));
  EXPECT_EQ(p.clamped, 1u);
  EXPECT_EQ(p.w[0], Complex(1.0, 0.0));
  EXPECT_THROW(lift(RealConfig(g, {1.0 + 1e-11, 0.0, 0.0, 0.0})), RangeError);
}

TEST(SignLift, ExtractSign) {
  const GridSpec g = make_grid(1, 2, 2.0, 8);
  const SignField pos = extract_sign(normalized(RealConfig::constant(g, 1.0)));
  for (double v : pos.e.values()) EXPECT_EQ(v, 1.0);
  const SignField zero = extract_sign(RealConfig::constant(g, 0.0));
  for (double v : zero.e.values()) EXPECT_EQ(v, 1.0);

  const RealConfig lin =
      sample_config(g, [](std::span<const double> X) { return X[0] + X[1]; });
  const SignField s = extract_sign(lin);
  EXPECT_EQ(symmetry_defect(s.e), 0.0);
  std::size_t i = 0;
  sample_config(g, [&](std::span<const double> X) {
    const double sum = X[0] + X[1];
    if (std::abs(sum) > 1e-12) {
      EXPECT_EQ(s.e[i], sum < 0.0 ? -1.0 : 1.0);
      EXPECT_EQ(s.e[i] * s.lambda[i], lin[i]);
    }
    ++i;
    return 0.0;
  });
}

TEST(SignLift, CutoffShape) {
  const GridSpec g = make_grid(1, 2, 4.0, 64);
  const int n_max = 6;
  const double unit = cutoff_unit(g, n_max);
  for (int n = 1; n <= n_max; ++n) {
    const RealConfig c = cutoff(n, g, n_max);
    for (double v : c.values()) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
    // Forward differences along different axes sit at different points.
    EXPECT_LE(lipschitz_estimate(c), 1.1 * 2.0 / unit) << "n " << n;
    EXPECT_EQ(symmetry_defect(c), 0.0);
  }
  const RealConfig all = cutoff(n_max + 2, g, n_max);
  for (double v : all.values()) EXPECT_EQ(v, 1.0);
  EXPECT_THROW(cutoff(0, g, n_max), ArgumentError);
}

TEST(SignLift, SmoothStepProfile) {
  EXPECT_EQ(detail::smooth_step(-0.5), 0.0);
  EXPECT_EQ(detail::smooth_step(1.5), 1.0);
  EXPECT_NEAR(detail::smooth_step(0.5), 0.5, 1e-15);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double t = i / 10000.0, dt = 1e-6;
    worst = std::max(worst, (detail::smooth_step(t + dt) - detail::smooth_step(t)) / dt);
  }
  EXPECT_LE(worst, 2.0 + 1e-5);
  EXPECT_GE(worst, 1.99);
}

TEST(SignLift, SmoothSignPreservesOddness) {
  const GridSpec g = make_grid(1, 2, 4.0, 32);
  const RealConfig e = sample_config(g, [](std::span<const double> X) {
    return X[0] > 0.0 ? 1.0 : -1.0;
  });
  const SignField s{e, RealConfig::constant(g, 1.0)};
  const SmoothedSign sm = smooth_sign(s, 3, 0.5, 4);
  const std::size_t M = static_cast<std::size_t>(g.M);
  for (std::size_t a = 0; a < M; ++a) {
    for (std::size_t b = 0; b < M; ++b) {
      const double v = sm.e_n[a * M + b];
      ASSERT_LE(std::abs(v), 1.0 + 1e-15);
      EXPECT_NEAR(v, -sm.e_n[(M - 1 - a) * M + b], 1e-14);
    }
  }
}

TEST(SignLift, SmoothSignOfConstantIsOneInside) {
  const GridSpec g = make_grid(1, 2, 4.0, 32);
  const SignField s{RealConfig::constant(g, 1.0), RealConfig::constant(g, 1.0)};
  const int n_max = 2;
  // Inner radius (n - 1) * unit covers the box for n = n_max + 2.
  const SmoothedSign sm = smooth_sign(s, n_max + 2, 0.5, n_max);
  const int r = static_cast<int>(std::floor(0.5 / g.h));
  for (int a = r; a < g.M - r; ++a) {
    for (int b = r; b < g.M - r; ++b) {
      EXPECT_NEAR(sm.e_n[static_cast<std::size_t>(a * g.M + b)], 1.0, 1e-14);
    }
  }
}

TEST(SignLift, LipschitzBoundOfMollifiedSign) {
  // A forward difference of J * f is bounded by sum |w_{t+1} - w_t| / h per
  // axis when |f| <= 1.
  const GridSpec g = make_grid(1, 2, 4.0, 64);
  const SignField s = extract_sign(signed_psi(g));
  for (double eps : {0.25, 0.5, 1.0}) {
    const SmoothedSign sm = smooth_sign(s, 4, eps, 4);
    const Mollifier j = bump_stencil(eps, g);
    double tv = 0.0;
    for (int t = -j.radius - 1; t <= j.radius; ++t) {
      tv += std::abs(j.at(t + 1) - j.at(t)) * g.h;
    }
    EXPECT_LE(sm.lip, std::sqrt(2.0) * tv / g.h + 1e-12) << "eps " << eps;
    EXPECT_GT(sm.lip, 0.0);
  }
}

TEST(SignLift, LipschitzEstimateOfLinearField) {
  const GridSpec g = make_grid(1, 2, 1.0, 8);
  const RealConfig f =
      sample_config(g, [](std::span<const double> X) { return 3.0 * X[0] - 4.0 * X[1]; });
  EXPECT_NEAR(lipschitz_estimate(f), 5.0, 1e-12);
}

TEST(SignLift, BumpStencilGuard) {
  const GridSpec g = make_grid(1, 2, 4.0, 32);
  EXPECT_THROW(bump_stencil(g.h, g), ResolutionError);
  const Mollifier j = bump_stencil(2.0 * g.h, g);
  EXPECT_EQ(j.radius, 1);
  double sum = 0.0;
  for (double v : j.stencil) sum += v * g.h;
  EXPECT_NEAR(sum, 1.0, 1e-15);
}

TEST(SignLift, WidthSelection) {
  const GridSpec g = make_grid(1, 2, 4.0, 64);
  const SignField s = extract_sign(signed_psi(g));
  const SignWidth w1 = select_sign_width(s, 1, 4);
  EXPECT_GE(w1.epsilon, 2.0 * g.h);
  if (w1.met) {
    EXPECT_LE(w1.gap, 0.5);
    if (w1.epsilon * 2.0 <= 4.0) {
      EXPECT_GT(weighted_h1_gap(s, 1, 2.0 * w1.epsilon, 4), 0.5);
    }
  }
  // Gap shrinks with the width.
  EXPECT_LT(weighted_h1_gap(s, 3, 0.25, 4), weighted_h1_gap(s, 3, 1.0, 4));
}

TEST(SignLift, WeightedResidualOfConstantVanishes) {
  // Zero in the continuum; second order on the grid.
  const std::vector<double> c{0.3, -0.2};
  double prev = 0.0;
  for (int M : {32, 64, 128, 256}) {
    const GridSpec g = make_grid(1, 2, 4.0, M);
    const RealConfig lam = modulus(signed_psi(g));
    const RealConfig test = bump_function(g, c, 1.0);
    const double r = weighted_gradient_residual(RealConfig::constant(g, 1.0), lam, test);
    if (prev > 0.0) {
      EXPECT_GT(prev / r, 3.5) << "M " << M;
    }
    prev = r;
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(SignLift, WeightedResidualOfSmoothField) {
  // For C^1 f the identity gives -int grad(f) test lambda^2 per axis.
  const std::vector<double> c{0.2, 0.1};
  double prev = 1e300;
  for (int M : {32, 64, 128}) {
    const GridSpec g = make_grid(1, 2, 4.0, M);
    const RealConfig lam = modulus(signed_psi(g));
    const RealConfig test = bump_function(g, c, 1.2);
    const RealConfig f = sample_config(g, [](std::span<const double> X) {
      return std::sin(X[0]) + 0.5 * X[1];
    });
    double ax = 0.0, ay = 0.0;
    std::size_t i = 0;
    sample_config(g, [&](std::span<const double> X) {
      const double w = test[i] * lam[i] * lam[i];
      ax += std::cos(X[0]) * w;
      ay += 0.5 * w;
      ++i;
      return 0.0;
    });
    ax *= test.cell();
    ay *= test.cell();
    const double expect = std::hypot(ax, ay);
    const double err = std::abs(weighted_gradient_residual(f, lam, test) - expect) / expect;
    if (prev < 1e300) {
      EXPECT_GT(prev / err, 3.0) << "M " << M;
    }
    prev = err;
  }
  EXPECT_LT(prev, 1e-2);
}

TEST(SignLift, WeightedResidualOfSignShrinksUnderRefinement) {
  const std::vector<std::vector<double>> centres{
      {0.0, 0.0}, {0.5, -0.5}, {1.0, 0.3}, {-0.8, 0.6}, {0.4, 0.9}};
  std::vector<double> totals;
  for (int M : {32, 64, 128}) {
    const GridSpec g = make_grid(1, 2, 4.0, M);
    const RealConfig psi = signed_psi(g);
    const SignField s = extract_sign(psi);
    double t = 0.0;
    for (const auto& c : centres) {
      t += weighted_gradient_residual(s.e, s.lambda, bump_function(g, c, 1.0));
    }
    totals.push_back(t);
  }
  EXPECT_GE(totals[0] / totals[1], 1.3);
  EXPECT_GE(totals[1] / totals[2], 1.3);
}

TEST(SignLift, SubsequenceWithZeroConstants) {
  const std::vector<double> M(5, 0.0);
  const std::vector<double> a{1.0, 0.5, 0.25, 0.125, 0.0625};
  const Subsequence s = subsequence_select(M, a);
  EXPECT_EQ(s.indices, (std::vector<int>{1, 2, 3, 4, 5}));
  EXPECT_EQ(s.thresholds, (std::vector<int>{1, 2, 3, 4, 5}));
  EXPECT_EQ(s.deepest, 5);
}

TEST(SignLift, SubsequenceFactorialExample) {
  std::vector<double> M, a;
  double f = 1.0;
  for (int k = 1; k <= 10; ++k) {
    M.push_back(static_cast<double>(k) * k);
    f *= k;
    a.push_back(1.0 / f);
  }
  const Subsequence s = subsequence_select(M, a);
  EXPECT_EQ(s.thresholds, (std::vector<int>{3, 4, 5, 6, 7, 8, 9, 10}));
  EXPECT_EQ(s.indices, (std::vector<int>{1, 1, 1, 2, 3, 4, 5, 6, 7, 8}));
  // Direct check of the defining inequality from K(1) on.
  for (int k = s.thresholds[0]; k <= 10; ++k) {
    const int n = s.indices[static_cast<std::size_t>(k - 1)];
    EXPECT_LT(M[static_cast<std::size_t>(n - 1)] * a[static_cast<std::size_t>(k - 1)],
              std::ldexp(1.0, -n));
  }
}

TEST(SignLift, SubsequenceErrors) {
  const std::vector<double> M{1.0, 1.0};
  EXPECT_THROW(subsequence_select(M, std::vector<double>{1.0, 2.0}), TruncationError);
  EXPECT_THROW(subsequence_select(M, std::vector<double>{4.0, 3.0}), TruncationError);
  EXPECT_THROW(subsequence_select(std::vector<double>{-1.0}, std::vector<double>{0.1}),
               ArgumentError);
  try {
    subsequence_select(std::vector<double>{1.0, 1e6}, std::vector<double>{0.4, 0.1});
  } catch (...) {
    FAIL() << "K(1) exists; the construction should stop at depth 1";
  }
}

TEST(SignLift, AssembleKeepsModulus) {
  std::mt19937_64 rng(31);
  const GridSpec g = make_grid(1, 2, 4.0, 32);
  const RealConfig psi = signed_psi(g);
  const SignField s = extract_sign(psi);
  const RealConfig phi = testkit::random_symmetric_phi(rng, g);
  const SmoothedSign sm = smooth_sign(s, 3, 0.5, 4);
  const std::vector<RealConfig> es{sm.e_n}, ps{phi};
  const std::vector<ComplexConfig> out = assemble(es, ps, psi);
  ASSERT_EQ(out.size(), 1u);
  for (std::size_t i = 0; i < phi.size(); ++i) {
    EXPECT_NEAR(std::abs(out[0][i]), phi[i], 1e-14 * std::max(1.0, phi[i]));
  }
  EXPECT_THROW(assemble(es, std::vector<RealConfig>{}, psi), ArgumentError);
}

TEST(SignLift, AssembleWithConstantSigns) {
  std::mt19937_64 rng(32);
  const GridSpec g = make_grid(1, 2, 2.0, 8);
  const RealConfig phi = testkit::random_symmetric_phi(rng, g);
  const std::vector<RealConfig> ps{phi};
  const auto plus = assemble(std::vector<RealConfig>{RealConfig::constant(g, 1.0)}, ps, phi);
  const auto minus = assemble(std::vector<RealConfig>{RealConfig::constant(g, -1.0)}, ps, phi);
  for (std::size_t i = 0; i < phi.size(); ++i) {
    EXPECT_EQ(plus[0][i], Complex(phi[i], 0.0));
    EXPECT_EQ(minus[0][i], Complex(-phi[i], 0.0));
  }
}
