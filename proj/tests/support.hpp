#pragma once

// Seeded instance generators shared by the unit and acceptance tests.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "mlift/grid.hpp"

namespace mlift::testkit {

/// Symmetric, non-negative, unit-norm field: a Gaussian envelope with
/// multiplicative noise, symmetrized over particles.
inline RealConfig random_symmetric_phi(std::mt19937_64& rng, const GridSpec& g,
                                       double width = 1.5) {
  std::uniform_real_distribution<double> noise(0.5, 1.5);
  const double s2 = 2.0 * width * width;
  RealConfig raw = sample_config(g, [&](std::span<const double> X) {
    double r2 = 0.0;
    for (double x : X) r2 += x * x;
    return std::exp(-r2 / s2) * noise(rng);
  });
  return normalized(symmetrize(raw));
}

/// A unit-mass positive density on the site grid of `g`.
inline DensityField random_density(std::mt19937_64& rng, const GridSpec& g) {
  const GridSpec s = make_site_grid(g.d, g.L, g.M);
  std::uniform_real_distribution<double> u(0.2, 1.0);
  std::vector<double> v(s.sites());
  for (double& x : v) x = u(rng);
  double z = 0.0;
  for (double x : v) z += x;
  z *= s.cell(s.d);
  for (double& x : v) x /= z;
  return DensityField(ScalarField(s, std::move(v)));
}

/// t rho + (1 - t) q for a random density q and t in [0.3, 0.9].
inline DensityField random_target(std::mt19937_64& rng, const ScalarField& rho) {
  std::uniform_real_distribution<double> tt(0.3, 0.9);
  const double t = tt(rng);
  const DensityField q = random_density(rng, rho.grid());
  std::vector<double> v(rho.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = t * rho[i] + (1.0 - t) * q[i];
  double z = 0.0;
  for (double x : v) z += x;
  z *= rho.cell();
  for (double& x : v) x /= z;
  return DensityField(ScalarField(rho.grid(), std::move(v)));
}

/// Symmetric field vanishing outside [-w, w]^(Nd), random inside.
inline RealConfig random_compact_phi(std::mt19937_64& rng, const GridSpec& g, double w) {
  std::uniform_real_distribution<double> noise(0.1, 1.0);
  RealConfig raw = sample_config(g, [&](std::span<const double> X) {
    for (double x : X) {
      if (std::abs(x) > w) return 0.0;
    }
    return noise(rng);
  });
  return normalized(symmetrize(raw));
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace mlift::testkit
