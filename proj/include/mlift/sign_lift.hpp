#pragma once

// Signs of real wavefunctions and their lifting to unit-modulus phases.
//
// A real psi factors as e * |psi| with e in {-1, +1}. The sign is cut off
// radially and mollified into e_n in [-1, 1], then mapped onto the upper
// half circle by omega(s) = exp(i (1 - s) pi / 2), which fixes +1 and -1.
// psi_n = omega(e_n) * phi_n then has |psi_n| = phi_n, so marginals survive.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "mlift/errors.hpp"
#include "mlift/grid.hpp"
#include "mlift/smoothing.hpp"

namespace mlift {

/// Relative threshold below which psi counts as zero for sign extraction.
inline constexpr double kSignFloor = 1e-13;
/// Values of e_n this far outside [-1, 1] are clamped rather than rejected.
inline constexpr double kLiftClamp = 1e-12;

struct SignField {
  RealConfig e;       // values in {-1, +1}
  RealConfig lambda;  // |psi|
};

/// e = sign(psi) where |psi| > kSignFloor * max|psi|, +1 elsewhere.
inline SignField extract_sign(const RealConfig& psi) {
  double peak = 0.0;
  for (double v : psi.values()) peak = std::max(peak, std::abs(v));
  const double floor = kSignFloor * peak;
  std::vector<double> e(psi.size()), lam(psi.size());
  for (std::size_t i = 0; i < e.size(); ++i) {
    e[i] = (psi[i] < 0.0 && -psi[i] > floor) ? -1.0 : 1.0;
    lam[i] = std::abs(psi[i]);
  }
  return SignField{RealConfig(psi.grid(), std::move(e)),
                   RealConfig(psi.grid(), std::move(lam))};
}

namespace detail {

inline void same_grid(const GridSpec& a, const GridSpec& b, const char* who) {
  if (!(a == b)) throw ArgumentError(std::string(who) + ": grids differ");
}

}  // namespace detail

/// Norm over axes of  int f grad(test) lambda^2 + 2 int f test lambda grad(lambda),
/// the defining identity of the lambda-weighted gradient with grad_lambda f
/// set to zero. Central differences throughout.
inline double weighted_gradient_residual(const RealConfig& f, const RealConfig& lambda,
                                         const RealConfig& test) {
  detail::same_grid(f.grid(), lambda.grid(), "weighted_gradient_residual");
  detail::same_grid(f.grid(), test.grid(), "weighted_gradient_residual");
  double total = 0.0;
  for (int a = 0; a < f.axes(); ++a) {
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double lam = lambda[i];
      s += f[i] * central_difference(test, i, a) * lam * lam +
           2.0 * f[i] * test[i] * lam * central_difference(lambda, i, a);
    }
    s *= f.cell();
    total += s * s;
  }
  return std::sqrt(total);
}

/// Smooth bump exp(1 - 1/(1 - |X - c|^2 / r^2)) supported in the ball
/// B(c, r) of configuration space; peak value 1.
inline RealConfig bump_function(const GridSpec& grid, std::span<const double> center,
                                double radius) {
  if (static_cast<int>(center.size()) != grid.config_axes()) {
    throw ArgumentError("bump_function: center has the wrong dimension");
  }
  std::vector<double> c(center.begin(), center.end());
  return sample_config(grid, [&](std::span<const double> X) {
    double r2 = 0.0;
    for (std::size_t a = 0; a < X.size(); ++a) r2 += (X[a] - c[a]) * (X[a] - c[a]);
    const double t = r2 / (radius * radius);
    return t < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - t)) : 0.0;
  });
}

/// Radius scale of the cut-offs: the circumscribed radius of the
/// configuration box divided by n_max + 1.
inline double cutoff_unit(const GridSpec& grid, int n_max) {
  return grid.L * std::sqrt(static_cast<double>(grid.config_axes())) / (n_max + 1);
}

namespace detail {

/// C-infinity step: 0 for t <= 0, 1 for t >= 1, max slope 2 at t = 1/2.
inline double smooth_step(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  const double a = std::exp(-1.0 / t), b = std::exp(-1.0 / (1.0 - t));
  return a / (a + b);
}

}  // namespace detail

/// Radial cut-off c_n: 1 on |X| <= (n-1) r_unit, 0 on |X| >= n r_unit,
/// Lipschitz constant 2 / r_unit.
inline RealConfig cutoff(int n, const GridSpec& grid, int n_max) {
  if (n < 1 || n_max < 1) throw ArgumentError("cutoff: need n >= 1 and n_max >= 1");
  const double unit = cutoff_unit(grid, n_max);
  return sample_config(grid, [&](std::span<const double> X) {
    double r2 = 0.0;
    for (double x : X) r2 += x * x;
    return detail::smooth_step((n * unit - std::sqrt(r2)) / unit);
  });
}

/// Compactly supported one-axis bump (1 - (z/eps)^2)^2 on |z| < eps.
inline Mollifier bump_stencil(double epsilon, const GridSpec& grid) {
  if (!(epsilon >= 2.0 * grid.h)) {
    throw ResolutionError("bump_stencil: epsilon must be at least twice the spacing");
  }
  int radius = static_cast<int>(std::floor(epsilon / grid.h));
  if (radius * grid.h >= epsilon) --radius;
  radius = std::min(radius, grid.M - 1);
  std::vector<double> raw(static_cast<std::size_t>(2 * radius + 1));
  for (int t = -radius; t <= radius; ++t) {
    const double z = t * grid.h / epsilon;
    raw[static_cast<std::size_t>(t + radius)] = (1.0 - z * z) * (1.0 - z * z);
  }
  return normalized_stencil(epsilon, grid, std::move(raw));
}

/// Largest Euclidean norm of the forward-difference gradient over nodes,
/// skipping differences that would reach past the box.
inline double lipschitz_estimate(const RealConfig& f) {
  const std::size_t M = static_cast<std::size_t>(f.grid().M);
  const int A = f.axes();
  std::vector<std::size_t> stride(static_cast<std::size_t>(A));
  std::size_t s = 1;
  for (int a = A - 1; a >= 0; --a) {
    stride[static_cast<std::size_t>(a)] = s;
    s *= M;
  }
  double best = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    double g2 = 0.0;
    for (int a = 0; a < A; ++a) {
      const std::size_t st = stride[static_cast<std::size_t>(a)];
      if ((i / st) % M + 1 >= M) continue;
      const double d = (f[i + st] - f[i]) / f.grid().h;
      g2 += d * d;
    }
    best = std::max(best, g2);
  }
  return std::sqrt(best);
}

struct SmoothedSign {
  RealConfig e_n;
  double lip = 0.0;
  int n = 0;
  double epsilon = 0.0;
};

namespace detail {

inline RealConfig cut_sign(const SignField& e, int n, int n_max) {
  const RealConfig c = cutoff(n, e.e.grid(), n_max);
  std::vector<double> v(c.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = e.e[i] * c[i];
  return RealConfig(c.grid(), std::move(v));
}

inline RealConfig mollify(const RealConfig& f, const Mollifier& j) {
  std::vector<double> v(f.values().begin(), f.values().end());
  convolve_axes(v, f.axes(), j);
  return RealConfig(f.grid(), std::move(v));
}

}  // namespace detail

/// e_n = J_eps * (e c_n) with J the product of one-axis bumps.
inline SmoothedSign smooth_sign(const SignField& e, int n, double epsilon, int n_max) {
  const Mollifier j = bump_stencil(epsilon, e.e.grid());
  RealConfig en = detail::mollify(detail::cut_sign(e, n, n_max), j);
  const double lip = lipschitz_estimate(en);
  return SmoothedSign{std::move(en), lip, n, epsilon};
}

/// Distance in H1(lambda^2 dX) between J_eps * (e c_n) and e c_n. The
/// weighted gradient of e c_n is e grad(c_n), that of the mollified field
/// its ordinary gradient.
inline double weighted_h1_gap(const SignField& e, int n, double epsilon, int n_max) {
  const GridSpec& g = e.e.grid();
  const RealConfig c = cutoff(n, g, n_max);
  const RealConfig ec = detail::cut_sign(e, n, n_max);
  const RealConfig sm = detail::mollify(ec, bump_stencil(epsilon, g));
  double s = 0.0;
  for (std::size_t i = 0; i < ec.size(); ++i) {
    const double lam2 = e.lambda[i] * e.lambda[i];
    if (lam2 == 0.0) continue;
    const double diff = sm[i] - ec[i];
    double grad2 = 0.0;
    for (int a = 0; a < ec.axes(); ++a) {
      const double d = forward_difference(sm, i, a) - e.e[i] * forward_difference(c, i, a);
      grad2 += d * d;
    }
    s += (diff * diff + grad2) * lam2;
  }
  return std::sqrt(s * ec.cell());
}

struct SignWidth {
  double epsilon = 0.0;
  double gap = 0.0;
  bool met = false;  // gap <= 2^{-n}
};

/// Largest dyadic eps >= 2h whose weighted gap is at most 2^{-n}; the
/// smallest resolvable dyadic eps (with met = false) when none qualifies.
inline SignWidth select_sign_width(const SignField& e, int n, int n_max) {
  const GridSpec& g = e.e.grid();
  const double target = std::ldexp(1.0, -n);
  double eps = std::ldexp(1.0, static_cast<int>(std::floor(std::log2(g.L))));
  if (eps < 2.0 * g.h) throw ResolutionError("select_sign_width: box too coarse");
  SignWidth last;
  for (; eps >= 2.0 * g.h; eps /= 2.0) {
    const double gap = weighted_h1_gap(e, n, eps, n_max);
    last = SignWidth{eps, gap, gap <= target};
    if (last.met) return last;
  }
  return last;
}

struct Subsequence {
  /// indices[k - 1] = n_k, 1-based, for k = 1..a.size().
  std::vector<int> indices;
  /// thresholds[n - 1] = K(n), 1-based, for n = 1..deepest.
  std::vector<int> thresholds;
  int deepest = 0;
};

/// Picks indices n_k -> infinity with M_{n_k} a_k -> 0: K(n) is the first
/// k after K(n-1) from which M_n a_k < 2^{-n} holds for every remaining k,
/// and n_k = n on [K(n), K(n+1)), n_k = 1 before K(1).
inline Subsequence subsequence_select(std::span<const double> M,
                                      std::span<const double> a) {
  if (M.empty() || a.empty()) throw ArgumentError("subsequence_select: empty input");
  for (double v : M) {
    if (!(v >= 0.0)) throw ArgumentError("subsequence_select: M must be >= 0");
  }
  for (double v : a) {
    if (!(v >= 0.0)) throw ArgumentError("subsequence_select: a must be >= 0");
  }
  if (a.size() > 1 && !(a.back() < a.front())) {
    throw TruncationError("subsequence_select: a does not decrease toward 0", 0);
  }
  Subsequence out;
  const int len = static_cast<int>(a.size());
  int prev_k = 0;
  for (int n = 1; n <= static_cast<int>(M.size()); ++n) {
    const double bound = std::ldexp(1.0, -n);
    const double Mn = M[static_cast<std::size_t>(n - 1)];
    int k = len + 1;
    while (k - 1 >= 1 && Mn * a[static_cast<std::size_t>(k - 2)] < bound) --k;
    // k is now the first index of the tail on which the bound holds.
    k = std::max(k, prev_k + 1);
    if (k > len) break;
    out.thresholds.push_back(k);
    prev_k = k;
    out.deepest = n;
  }
  if (out.deepest == 0) {
    throw TruncationError("subsequence_select: no K(1) within the sequence", 0);
  }
  out.indices.assign(a.size(), 1);
  for (int k = 1; k <= len; ++k) {
    for (int n = 1; n <= out.deepest; ++n) {
      if (out.thresholds[static_cast<std::size_t>(n - 1)] <= k) {
        out.indices[static_cast<std::size_t>(k - 1)] = n;
      }
    }
  }
  return out;
}

/// omega(s) = exp(i (1 - s) pi / 2), evaluated so that omega(+-1) = +-1
/// and omega(0) = i exactly.
inline Complex omega(double s) {
  using std::numbers::pi;
  return {std::sin(pi * s / 2.0), std::sin(pi * (1.0 - std::abs(s)) / 2.0)};
}

struct PhaseField {
  ComplexConfig w;
  std::size_t clamped = 0;  // nodes pulled back into [-1, 1]
};

inline PhaseField lift(const RealConfig& e_n) {
  std::vector<Complex> w(e_n.size());
  std::size_t clamped = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    double s = e_n[i];
    if (std::abs(s) > 1.0) {
      if (std::abs(s) > 1.0 + kLiftClamp) {
        throw RangeError("lift: value " + std::to_string(s) + " outside [-1, 1]");
      }
      s = std::clamp(s, -1.0, 1.0);
      ++clamped;
    }
    w[i] = omega(s);
  }
  return PhaseField{ComplexConfig(e_n.grid(), std::move(w)), clamped};
}

/// psi_k = omega(e_k) phi_k for each pair of the (already paired) sequences.
inline std::vector<ComplexConfig> assemble(std::span<const RealConfig> e_n_seq,
                                           std::span<const RealConfig> phi_n_seq,
                                           const RealConfig& psi) {
  if (e_n_seq.size() != phi_n_seq.size()) {
    throw ArgumentError("assemble: sequences differ in length");
  }
  std::vector<ComplexConfig> out;
  out.reserve(e_n_seq.size());
  for (std::size_t k = 0; k < e_n_seq.size(); ++k) {
    detail::same_grid(e_n_seq[k].grid(), psi.grid(), "assemble");
    detail::same_grid(phi_n_seq[k].grid(), psi.grid(), "assemble");
    const PhaseField w = lift(e_n_seq[k]);
    std::vector<Complex> v(psi.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = w.w[i] * phi_n_seq[k][i];
    out.emplace_back(psi.grid(), std::move(v));
  }
  return out;
}

}  // namespace mlift
