#pragma once

// Marginal-preserving Gaussian smoothing.
//
// Given u on the product grid, |u|^2 is blurred with the product Gaussian
// (Lambda), and the blur is then transported back so that the one-body
// marginal is exactly rho[u] again:
//
//   Theta(X) = prod_j rho(x_j) * sum_Y G(Y) phi(Y - X) h^{Nd},
//   G(Y)     = Lambda(Y) / prod_j rho_eps(y_j),   rho_eps = rho * eta.
//
// This is the double integral  int Lambda(Y) P(X, Y) dY  with the product
// kernel P factored out, so the (nodes x nodes) plan is never formed.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mlift/errors.hpp"
#include "mlift/grid.hpp"

namespace mlift {

/// Kernel radius in standard deviations.
inline constexpr double kGaussTruncation = 6.0;
/// rho_eps below this where Lambda carries mass is a hard error.
inline constexpr double kRhoEpsFloor = 1e-300;
/// Relative mass allowed to leave the box through zero padding.
inline constexpr double kMaxLeakage = 1e-8;
/// Dual-path tolerance for rho_eps before it becomes a ConsistencyError.
inline constexpr double kRhoEpsConsistency = 1e-9;

/// Symmetric one-axis stencil; the d- and Nd-dimensional kernels are its
/// tensor powers. stencil[radius + t] is the kernel value at offset t*h and
/// sum(stencil) * h == 1.
struct Mollifier {
  double epsilon = 0.0;
  GridSpec grid;
  int radius = 0;
  std::vector<double> stencil;

  double at(int t) const {
    return std::abs(t) > radius ? 0.0
                                : stencil[static_cast<std::size_t>(t + radius)];
  }
  double second_moment() const {
    double s = 0.0;
    for (int t = -radius; t <= radius; ++t) {
      s += (t * grid.h) * (t * grid.h) * at(t) * grid.h;
    }
    return s;
  }
};

inline Mollifier normalized_stencil(double epsilon, const GridSpec& grid,
                                    std::vector<double> raw) {
  double sum = 0.0;
  for (double v : raw) sum += v;
  for (double& v : raw) v /= sum * grid.h;
  const int radius = static_cast<int>(raw.size() / 2);
  return Mollifier{epsilon, grid, radius, std::move(raw)};
}

/// Discrete Gaussian of variance epsilon, truncated at r_trunc * sqrt(eps)
/// and renormalized to unit discrete mass.
inline Mollifier gauss_stencil(double epsilon, const GridSpec& grid,
                               double r_trunc = kGaussTruncation) {
  if (!(epsilon > 0.0)) throw ArgumentError("gauss_stencil: epsilon must be > 0");
  const double sd = std::sqrt(epsilon);
  if (sd < grid.h / 2.0) {
    throw ResolutionError("gauss_stencil: sqrt(epsilon) = " + std::to_string(sd) +
                          " is below half the grid spacing");
  }
  const int radius =
      std::min(static_cast<int>(std::floor(r_trunc * sd / grid.h)), grid.M - 1);
  std::vector<double> raw(static_cast<std::size_t>(2 * radius + 1));
  for (int t = -radius; t <= radius; ++t) {
    const double z = t * grid.h;
    raw[static_cast<std::size_t>(t + radius)] = std::exp(-z * z / (2.0 * epsilon));
  }
  return normalized_stencil(epsilon, grid, std::move(raw));
}

/// Single-tap stencil: convolution with it is the identity.
inline Mollifier identity_stencil(const GridSpec& grid) {
  return Mollifier{0.0, grid, 0, {1.0 / grid.h}};
}

namespace detail {

/// In-place separable convolution of a row-major array with `axes` axes of
/// M points, zero padded.
inline void convolve_axes(std::vector<double>& v, int axes, const Mollifier& m) {
  const std::size_t M = static_cast<std::size_t>(m.grid.M);
  const int R = m.radius;
  if (R == 0) {
    const double w = m.stencil[0] * m.grid.h;
    if (w != 1.0) {
      for (double& x : v) x *= w;
    }
    return;
  }
  std::vector<double> w(m.stencil.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = m.stencil[i] * m.grid.h;
  std::vector<double> line(M), out(M);
  std::size_t stride = 1;
  for (int a = axes - 1; a >= 0; --a) {
    const std::size_t block = stride * M;
    for (std::size_t base = 0; base < v.size(); base += block) {
      for (std::size_t off = 0; off < stride; ++off) {
        for (std::size_t i = 0; i < M; ++i) line[i] = v[base + off + i * stride];
        for (std::size_t i = 0; i < M; ++i) {
          const long lo = std::max<long>(0, static_cast<long>(i) - R);
          const long hi = std::min<long>(static_cast<long>(M) - 1,
                                         static_cast<long>(i) + R);
          double s = 0.0;
          for (long k = lo; k <= hi; ++k) {
            s += w[static_cast<std::size_t>(static_cast<long>(i) - k + R)] *
                 line[static_cast<std::size_t>(k)];
          }
          out[i] = s;
        }
        for (std::size_t i = 0; i < M; ++i) v[base + off + i * stride] = out[i];
      }
    }
    stride = block;
  }
}

inline void check_grid(const GridSpec& g, const Mollifier& m) {
  if (!g.same_sites(m.grid)) throw ArgumentError("mollifier built for another grid");
}

}  // namespace detail

/// Lambda = |u|^2 convolved with the product kernel.
template <class T>
RealConfig lambda_eps(const ConfigField<T>& u, const Mollifier& m) {
  detail::check_grid(u.grid(), m);
  std::vector<double> v(u.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = detail::abs2(u[i]);
  detail::convolve_axes(v, u.axes(), m);
  return RealConfig(u.grid(), std::move(v));
}

/// rho convolved with the d-dimensional kernel.
inline ScalarField convolve_density(const ScalarField& rho, const Mollifier& m) {
  detail::check_grid(rho.grid(), m);
  std::vector<double> v(rho.values().begin(), rho.values().end());
  detail::convolve_axes(v, rho.axes(), m);
  return ScalarField(rho.grid(), std::move(v));
}

/// Both evaluations of the blurred marginal.
struct RhoEpsPaths {
  ScalarField via_lambda;       // marginal(Lambda)
  ScalarField via_convolution;  // rho[u] * eta
  double max_gap = 0.0;
};

template <class T>
RhoEpsPaths rho_eps_paths(const ConfigField<T>& u, const Mollifier& m) {
  ScalarField a = density_marginal(lambda_eps(u, m));
  ScalarField b = convolve_density(marginal(u), m);
  double gap = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) gap = std::max(gap, std::abs(a[i] - b[i]));
  return RhoEpsPaths{std::move(a), std::move(b), gap};
}

/// rho_eps[u], returned as rho[u] * eta after cross-checking it against the
/// marginal of Lambda.
template <class T>
ScalarField rho_eps(const ConfigField<T>& u, const Mollifier& m) {
  RhoEpsPaths p = rho_eps_paths(u, m);
  if (p.max_gap > kRhoEpsConsistency) {
    throw ConsistencyError("rho_eps: marginal of Lambda and rho * eta differ by " +
                           std::to_string(p.max_gap));
  }
  return std::move(p.via_convolution);
}

struct SmoothingOutput {
  RealConfig u_eps;  // sqrt(theta)
  RealConfig theta;
  ScalarField rho_eps;
  /// Relative L1 distance between marginal(theta) and rho[u].
  double marginal_error = 0.0;
  /// Fraction of |u|^2 mass lost through the box boundary by Lambda.
  double leakage = 0.0;
};

template <class T>
SmoothingOutput theta_eps(const ConfigField<T>& u, const Mollifier& m) {
  const GridSpec& g = u.grid();
  detail::check_grid(g, m);
  const ScalarField rho = marginal(u);
  const RealConfig lam = lambda_eps(u, m);

  const double m0 = mass(u);
  const double leakage = m0 > 0.0 ? (m0 - integrate(lam)) / m0 : 0.0;
  if (leakage > kMaxLeakage) {
    throw MassError("theta_eps: kernel leaks mass fraction " +
                    std::to_string(leakage) + " out of the box");
  }

  ScalarField rho_e = convolve_density(rho, m);
  {
    const ScalarField alt = density_marginal(lam);
    double gap = 0.0;
    for (std::size_t i = 0; i < alt.size(); ++i) {
      gap = std::max(gap, std::abs(alt[i] - rho_e[i]));
    }
    if (gap > kRhoEpsConsistency) {
      throw ConsistencyError("theta_eps: rho_eps paths differ by " +
                             std::to_string(gap));
    }
  }

  const std::size_t S = g.sites();
  std::vector<double> G(lam.size());
  for (std::size_t flat = 0; flat < G.size(); ++flat) {
    double v = lam[flat];
    if (v == 0.0) {
      G[flat] = 0.0;
      continue;
    }
    std::size_t r = flat;
    for (int j = 0; j < g.N; ++j) {
      const double den = rho_e[r % S];
      if (!(den >= kRhoEpsFloor)) {
        throw DivisionFloorError("theta_eps: rho_eps below floor where Lambda > 0");
      }
      v /= den;
      r /= S;
    }
    G[flat] = v;
  }
  detail::convolve_axes(G, g.config_axes(), m);

  std::vector<double> theta(G.size());
  for (std::size_t flat = 0; flat < theta.size(); ++flat) {
    double p = G[flat];
    std::size_t r = flat;
    for (int j = 0; j < g.N; ++j) {
      p *= rho[r % S];
      r /= S;
    }
    theta[flat] = p;
  }
  std::vector<double> root(theta.size());
  for (std::size_t i = 0; i < root.size(); ++i) root[i] = std::sqrt(theta[i]);

  RealConfig th(g, std::move(theta));
  RealConfig ue(g, std::move(root));
  const double err = relative_l1_error(density_marginal(th), rho);
  return SmoothingOutput{std::move(ue), std::move(th), std::move(rho_e), err,
                         leakage};
}

/// u_eps = sqrt(Theta_eps[u]).
template <class T>
RealConfig smooth_sqrt(const ConfigField<T>& u, const Mollifier& m) {
  return theta_eps(u, m).u_eps;
}

/// Dyadic levels 2^{-k}, k = 1..K.
inline std::vector<double> dyadic_levels(int K) {
  std::vector<double> v;
  for (int k = 1; k <= K; ++k) v.push_back(std::ldexp(1.0, -k));
  return v;
}

/// Levels 2^{-k}, k >= 1, whose Gaussian stencil resolves on `grid`.
inline std::vector<double> resolvable_dyadic_levels(const GridSpec& grid) {
  std::vector<double> v;
  for (int k = 1; k < 60; ++k) {
    const double e = std::ldexp(1.0, -k);
    if (std::sqrt(e) < grid.h / 2.0) break;
    v.push_back(e);
  }
  return v;
}

struct DiagonalSchedule {
  /// thresholds[k]: first (1-based) sequence index from which level k's
  /// distance stays within delta * eps_levels[k]. Nondecreasing in k.
  std::vector<int> thresholds;
  /// epsilon_of_n[n - 1]: smoothing width assigned to sequence index n.
  std::vector<double> epsilon_of_n;
  /// distances[k][n - 1] = ||sqrt(Theta^{eps_k}[phi_n]) - sqrt(Theta^{eps_k}[phi])||_{H1}.
  std::vector<std::vector<double>> distances;
};

/// Pairs each index n with a width eps(n) so that the smoothed sequence
/// converges in H1: level k becomes active from the first index N_k after
/// which every smoothed term is within delta * eps_k of the smoothed limit,
/// and eps(n) is the finest level active at n (the coarsest before N_1).
inline DiagonalSchedule diagonal_schedule(std::span<const RealConfig> phi_seq,
                                          const RealConfig& phi,
                                          std::span<const double> eps_levels,
                                          double delta) {
  if (eps_levels.empty()) throw ArgumentError("diagonal_schedule: no levels");
  if (phi_seq.empty()) throw ArgumentError("diagonal_schedule: empty sequence");
  if (!(delta > 0.0)) throw ArgumentError("diagonal_schedule: delta must be > 0");
  for (std::size_t k = 1; k < eps_levels.size(); ++k) {
    if (!(eps_levels[k] < eps_levels[k - 1])) {
      throw ArgumentError("diagonal_schedule: levels must strictly decrease");
    }
  }
  const std::size_t K = eps_levels.size();
  const std::size_t n_len = phi_seq.size();
  DiagonalSchedule out;
  out.distances.assign(K, std::vector<double>(n_len, 0.0));
  std::vector<int> achieved;
  int prev = 1;
  bool complete = true;
  for (std::size_t k = 0; k < K; ++k) {
    const Mollifier m = gauss_stencil(eps_levels[k], phi.grid());
    const RealConfig target = smooth_sqrt(phi, m);
    for (std::size_t n = 0; n < n_len; ++n) {
      out.distances[k][n] = h1_distance(smooth_sqrt(phi_seq[n], m), target);
    }
    const double bound = delta * eps_levels[k];
    // Smallest n such that every later term is within the bound.
    std::size_t first = n_len;
    while (first > 0 && out.distances[k][first - 1] <= bound) --first;
    if (first == n_len) {
      complete = false;
      out.thresholds.push_back(0);
      continue;
    }
    prev = std::max(prev, static_cast<int>(first) + 1);
    out.thresholds.push_back(prev);
    achieved.push_back(static_cast<int>(k));
  }
  if (!complete) {
    std::string lv;
    for (int k : achieved) lv += (lv.empty() ? "" : ",") + std::to_string(k);
    throw ScheduleIncompleteError(
        "diagonal_schedule: no admissible index for some levels; achieved {" + lv +
            "}",
        achieved);
  }
  out.epsilon_of_n.assign(n_len, eps_levels[0]);
  for (std::size_t n = 1; n <= n_len; ++n) {
    for (std::size_t k = 0; k < K; ++k) {
      if (out.thresholds[k] <= static_cast<int>(n)) out.epsilon_of_n[n - 1] = eps_levels[k];
    }
  }
  return out;
}

}  // namespace mlift
