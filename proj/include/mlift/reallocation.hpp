#pragma once

// Iterative proportional reallocation: starting from a symmetric
// non-negative phi with marginal rho, repeatedly shave mass from
// configurations whose particles sit where the current marginal exceeds
// the target rho_n, then refill the remaining deficit with a product-form
// correction. The result has marginal exactly rho_n and stays L2-close
// to phi.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "mlift/errors.hpp"
#include "mlift/grid.hpp"

namespace mlift {

/// Smallest admissible marginal value at an excess node.
inline constexpr double kSigmaFloor = 1e-300;
/// Deficit mass below which the correction term is dropped.
inline constexpr double kDeficitFloor = 1e-14;
/// Largest mass the final renormalization may absorb.
inline constexpr double kMaxMassDefect = 1e-8;

using ExcessMask = std::vector<bool>;

/// One iterate (k, phi^k, sigma^k, E^k) of the scheme.
struct ReallocState {
  int k = 0;
  RealConfig phi;
  ScalarField sigma;
  ExcessMask excess;
};

/// Nodes where sigma strictly exceeds rho_n.
inline ExcessMask excess_set(const ScalarField& sigma, const ScalarField& rho_n) {
  if (!sigma.grid().same_sites(rho_n.grid())) {
    throw ArgumentError("excess_set: grids differ");
  }
  ExcessMask mask(sigma.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = sigma[i] > rho_n[i];
  return mask;
}

/// Integral of (sigma - rho_n) over the excess set.
inline double excess_residual(const ScalarField& sigma, const ScalarField& rho_n,
                              const ExcessMask& mask) {
  double s = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) s += sigma[i] - rho_n[i];
  }
  return s * sigma.cell();
}

namespace detail {

/// Per-site shave ratio (sigma - rho_n)/sigma on the mask, 0 elsewhere.
inline std::vector<double> shave_ratio(const ScalarField& sigma,
                                       const ScalarField& rho_n,
                                       const ExcessMask& mask) {
  std::vector<double> r(sigma.size(), 0.0);
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (!mask[i]) continue;
    if (!(sigma[i] >= kSigmaFloor)) {
      throw InvariantError("shrink_factor: marginal underflow at an excess node");
    }
    r[i] = (sigma[i] - rho_n[i]) / sigma[i];
  }
  return r;
}

}  // namespace detail

/// S(X) = (1/N) sum_j ratio(x_j), ratio = (sigma - rho_n)/sigma on the mask.
inline RealConfig shrink_factor(const GridSpec& grid, const ScalarField& sigma,
                                const ScalarField& rho_n, const ExcessMask& mask) {
  if (!grid.same_sites(sigma.grid()) || !grid.same_sites(rho_n.grid()) ||
      mask.size() != grid.sites()) {
    throw ArgumentError("shrink_factor: grids differ");
  }
  const std::vector<double> ratio = detail::shave_ratio(sigma, rho_n, mask);
  const std::size_t S = grid.sites();
  std::vector<double> out(grid.nodes());
  for (std::size_t flat = 0; flat < out.size(); ++flat) {
    double s = 0.0;
    std::size_t r = flat;
    for (int j = 0; j < grid.N; ++j) {
      s += ratio[r % S];
      r /= S;
    }
    out[flat] = s / grid.N;
  }
  return RealConfig(grid, std::move(out));
}

namespace detail {

inline void check_target(const GridSpec& grid, const ScalarField& rho_n) {
  if (!grid.same_sites(rho_n.grid())) {
    throw ArgumentError("reallocation: target density lives on another grid");
  }
}

/// Validates phi and returns |phi| (strips -0.0).
inline RealConfig nonnegative_input(const RealConfig& phi) {
  std::vector<double> v(phi.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (phi[i] < 0.0) {
      throw ArgumentError("reallocation: phi must be non-negative");
    }
    v[i] = std::fabs(phi[i]);
  }
  return RealConfig(phi.grid(), std::move(v));
}

}  // namespace detail

inline ReallocState initial_state(const RealConfig& phi, const ScalarField& rho_n) {
  detail::check_target(phi.grid(), rho_n);
  RealConfig p = detail::nonnegative_input(phi);
  ScalarField sigma = marginal(p);
  ExcessMask mask = excess_set(sigma, rho_n);
  return ReallocState{0, std::move(p), std::move(sigma), std::move(mask)};
}

/// phi^{k+1} = phi^k sqrt(1 - S^k); sigma and the excess set are recomputed.
inline ReallocState realloc_step(const ReallocState& state,
                                 const ScalarField& rho_n) {
  const GridSpec& g = state.phi.grid();
  detail::check_target(g, rho_n);
  const RealConfig S = shrink_factor(g, state.sigma, rho_n, state.excess);
  std::vector<double> next(state.phi.size());
  for (std::size_t i = 0; i < next.size(); ++i) {
    next[i] = state.phi[i] * std::sqrt(std::max(0.0, 1.0 - S[i]));
  }
  RealConfig phi(g, std::move(next));
  ScalarField sigma = marginal(phi);
  ExcessMask mask = excess_set(sigma, rho_n);
  return ReallocState{state.k + 1, std::move(phi), std::move(sigma),
                      std::move(mask)};
}

/// Values streamed once per iterate by realloc_limit.
struct StepTrace {
  int k;
  double residual;     // integral over E^k of (sigma^k - rho_n)
  double mass;         // ||phi^k||^2
  double min_deficit;  // min over sites of (rho_n - sigma^k)
};

using StepHook = std::function<void(const StepTrace&)>;

/// Iteration cap guaranteed by the geometric decay of the residual, plus a
/// fixed margin of 16 steps.
inline int default_iteration_budget(int N, double tol) {
  const double ratio = static_cast<double>(N - 1) / N;
  return static_cast<int>(std::ceil(std::log(tol / 2.0) / std::log(ratio))) + 16;
}

struct LimitOptions {
  double tol = 1e-10;
  int k_max = 0;  // 0 selects default_iteration_budget(N, tol)
  StepHook hook;
};

struct LimitResult {
  RealConfig phi_inf;
  ScalarField sigma_inf;
  int iterations = 0;
  double residual = 0.0;
};

namespace detail {

inline void check_unit_marginal(const ScalarField& sigma) {
  const double m = integrate(sigma);
  if (std::abs(m - 1.0) > DensityField::kMassTolerance) {
    throw ArgumentError("reallocation: marginal of phi has mass " +
                        std::to_string(m) + ", expected 1");
  }
}

inline void emit(const StepHook& hook, const ReallocState& s,
                 const ScalarField& rho_n, double residual) {
  if (!hook) return;
  double min_def = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < s.sigma.size(); ++i) {
    min_def = std::min(min_def, rho_n[i] - s.sigma[i]);
  }
  hook(StepTrace{s.k, residual, mass(s.phi), min_def});
}

}  // namespace detail

/// Iterates realloc_step until the excess residual drops to `tol`.
inline LimitResult realloc_limit(const RealConfig& phi, const ScalarField& rho_n,
                                 const LimitOptions& opt = {}) {
  if (!(opt.tol > 0.0)) throw ArgumentError("realloc_limit: tol must be > 0");
  ReallocState s = initial_state(phi, rho_n);
  detail::check_unit_marginal(s.sigma);
  const int k_max =
      opt.k_max > 0 ? opt.k_max : default_iteration_budget(phi.grid().N, opt.tol);
  double residual = excess_residual(s.sigma, rho_n, s.excess);
  detail::emit(opt.hook, s, rho_n, residual);
  while (residual > opt.tol) {
    if (s.k >= k_max) {
      throw ConvergenceError("realloc_limit: residual " + std::to_string(residual) +
                                 " above tolerance after " + std::to_string(s.k) +
                                 " iterations",
                             residual, s.k);
    }
    s = realloc_step(s, rho_n);
    residual = excess_residual(s.sigma, rho_n, s.excess);
    detail::emit(opt.hook, s, rho_n, residual);
  }
  return LimitResult{std::move(s.phi), std::move(s.sigma), s.k, residual};
}

struct Correction {
  RealConfig alpha;
  double q_n = 0.0;
};

/// Product-form refill alpha(X) = prod_j g(x_j) / q^{N-1} with
/// g = max(rho_n - sigma_inf, 0) and q = integral of g. Dropped (alpha = 0)
/// when q is below kDeficitFloor.
inline Correction correction(const GridSpec& grid, const ScalarField& sigma_inf,
                             const ScalarField& rho_n) {
  if (!grid.same_sites(sigma_inf.grid()) || !grid.same_sites(rho_n.grid())) {
    throw ArgumentError("correction: grids differ");
  }
  std::vector<double> gap(sigma_inf.size());
  for (std::size_t i = 0; i < gap.size(); ++i) {
    gap[i] = std::max(rho_n[i] - sigma_inf[i], 0.0);
  }
  const double q = integrate(ScalarField(sigma_inf.grid(), gap));
  if (q <= kDeficitFloor) {
    return Correction{RealConfig::constant(grid, 0.0), 0.0};
  }
  // Scale one factor by q^{-(N-1)} so the product never underflows early.
  const double scale = std::pow(q, -(grid.N - 1));
  const std::size_t S = grid.sites();
  std::vector<double> alpha(grid.nodes());
  for (std::size_t flat = 0; flat < alpha.size(); ++flat) {
    double p = scale;
    std::size_t r = flat;
    for (int j = 0; j < grid.N; ++j) {
      p *= gap[r % S];
      r /= S;
    }
    alpha[flat] = p;
  }
  return Correction{RealConfig(grid, std::move(alpha)), q};
}

struct ReallocResult {
  RealConfig phi_inf;
  ScalarField sigma_inf;
  double q_n = 0.0;
  RealConfig phi_out;
  int iterations = 0;
  double residual = 0.0;
  /// |1 - ||sqrt(phi_inf^2 + alpha)||^2| before renormalization.
  double mass_defect = 0.0;
  /// Relative L1 distance of marginal(phi_out) to rho_n.
  double marginal_error = 0.0;
  /// ||phi||^2 - ||phi_inf||^2, the mass shaved by the iteration.
  double mass_loss = 0.0;
};

/// Builds phi_out with marginal rho_n, L2-close to phi:
/// phi_out = sqrt(phi_inf^2 + alpha), renormalized to unit mass.
inline ReallocResult l2_match(const RealConfig& phi, const DensityField& rho_n,
                              const LimitOptions& opt = {}) {
  const double phi_mass = mass(phi);
  if (std::abs(phi_mass - 1.0) > DensityField::kMassTolerance) {
    throw ArgumentError("l2_match: phi must have unit L2 norm");
  }
  LimitResult lim = realloc_limit(phi, rho_n, opt);
  const GridSpec& g = phi.grid();
  Correction corr = correction(g, lim.sigma_inf, rho_n);

  std::vector<double> out(phi.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double sq = lim.phi_inf[i] * lim.phi_inf[i] + corr.alpha[i];
    out[i] = std::sqrt(sq);
    sum += sq;
  }
  const double raw_mass = sum * phi.cell();
  const double defect = std::abs(1.0 - raw_mass);
  if (defect > kMaxMassDefect) {
    throw MassError("l2_match: renormalization would absorb mass " +
                    std::to_string(defect));
  }
  if (raw_mass != 1.0) {
    const double s = 1.0 / std::sqrt(raw_mass);
    for (double& v : out) v *= s;
  }
  RealConfig phi_out(g, std::move(out));
  const double err = relative_l1_error(marginal(phi_out), rho_n);
  const double loss = phi_mass - mass(lim.phi_inf);
  return ReallocResult{std::move(lim.phi_inf), std::move(lim.sigma_inf), corr.q_n,
                       std::move(phi_out),     lim.iterations,
                       lim.residual,           defect,
                       err,                    loss};
}

}  // namespace mlift
