#pragma once

// Uniform cell-midpoint grids on [-L, L]^d and the N-fold product grid,
// fields living on them, midpoint quadrature, discrete L2/H1 norms,
// one-body marginals and permutation-symmetry checks.
//
// Layout: a product-grid node is the tuple (s_0, ..., s_{N-1}) of site
// indices, s_j in [0, M^d), flattened row-major, so particle j's block has
// stride (M^d)^(N-1-j). Inside a block the d axes are row-major as well,
// which makes the whole array row-major over the N*d axes.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "mlift/errors.hpp"

namespace mlift {

using Complex = std::complex<double>;

/// Default cap on M^(N*d) nodes (128 MiB of doubles).
inline constexpr std::size_t kDefaultNodeBudget = std::size_t{1} << 24;

namespace detail {

/// base^exp, or 0 if the result would exceed `cap`.
inline std::size_t capped_pow(std::size_t base, int exp, std::size_t cap) {
  std::size_t r = 1;
  for (int i = 0; i < exp; ++i) {
    if (base != 0 && r > cap / base) return 0;
    r *= base;
  }
  return r;
}

inline double abs2(double v) { return v * v; }
inline double abs2(const Complex& v) { return std::norm(v); }

}  // namespace detail

/// Discretization of the box [-L, L]^d and its N-fold product.
///
/// Node coordinates are cell midpoints x_i = -L + (i + 1/2) h, h = 2L/M.
/// A GridSpec with N == 1 describes a single-particle grid only; it is what
/// single-particle field files carry.
struct GridSpec {
  int d = 1;
  int N = 2;
  double L = 1.0;
  int M = 2;
  double h = 1.0;

  int config_axes() const { return N * d; }
  /// Nodes of the d-dimensional grid, M^d.
  std::size_t sites() const {
    std::size_t s = 1;
    for (int i = 0; i < d; ++i) s *= static_cast<std::size_t>(M);
    return s;
  }
  /// Nodes of the product grid, M^(N d).
  std::size_t nodes() const {
    std::size_t n = 1;
    for (int i = 0; i < N; ++i) n *= sites();
    return n;
  }
  double coord(int i) const { return -L + (i + 0.5) * h; }
  /// Quadrature weight h^dim.
  double cell(int dim) const { return std::pow(h, dim); }

  /// Same single-particle grid (d, M, L); N may differ.
  bool same_sites(const GridSpec& o) const {
    return d == o.d && M == o.M && L == o.L;
  }
  bool operator==(const GridSpec& o) const {
    return same_sites(o) && N == o.N;
  }
};

inline GridSpec make_grid(int d, int N, double L, int M,
                          std::size_t node_budget = kDefaultNodeBudget) {
  if (d < 1 || N < 2 || M < 2 || !(L > 0.0) || !std::isfinite(L)) {
    throw ArgumentError("make_grid: need d >= 1, N >= 2, M >= 2, L > 0");
  }
  if (detail::capped_pow(static_cast<std::size_t>(M), N * d, node_budget) ==
      0) {
    throw SizeError("make_grid: M^(N*d) exceeds the node budget of " +
                    std::to_string(node_budget));
  }
  return GridSpec{d, N, L, M, 2.0 * L / M};
}

/// Single-particle grid (N = 1), used for densities read on their own.
inline GridSpec make_site_grid(int d, double L, int M) {
  if (d < 1 || M < 2 || !(L > 0.0) || !std::isfinite(L)) {
    throw ArgumentError("make_site_grid: need d >= 1, M >= 2, L > 0");
  }
  if (detail::capped_pow(static_cast<std::size_t>(M), d, kDefaultNodeBudget) ==
      0) {
    throw SizeError("make_site_grid: M^d exceeds the node budget");
  }
  return GridSpec{d, 1, L, M, 2.0 * L / M};
}

/// Values on a uniform grid with `axes` axes of M points each, row-major.
template <class T>
class BasicField {
 public:
  using value_type = T;

  BasicField(GridSpec grid, int axes, std::vector<T> values)
      : grid_(grid), axes_(axes), values_(std::move(values)) {
    std::size_t expect = 1;
    for (int a = 0; a < axes_; ++a) expect *= static_cast<std::size_t>(grid_.M);
    if (values_.size() != expect) {
      throw ArgumentError("field: expected " + std::to_string(expect) +
                          " values, got " + std::to_string(values_.size()));
    }
    for (const T& v : values_) {
      if (!std::isfinite(detail::abs2(v))) {
        throw ArgumentError("field: non-finite value");
      }
    }
  }

  const GridSpec& grid() const { return grid_; }
  int axes() const { return axes_; }
  std::size_t size() const { return values_.size(); }
  std::span<const T> values() const { return values_; }
  const T& operator[](std::size_t i) const { return values_[i]; }
  /// Quadrature weight of one cell, h^axes.
  double cell() const { return grid_.cell(axes_); }

 protected:
  GridSpec grid_;
  int axes_;
  std::vector<T> values_;
};

/// Real function on the d-dimensional grid.
class ScalarField : public BasicField<double> {
 public:
  ScalarField(GridSpec grid, std::vector<double> values)
      : BasicField(grid, grid.d, std::move(values)) {}

  static ScalarField constant(const GridSpec& grid, double c) {
    return ScalarField(grid, std::vector<double>(grid.sites(), c));
  }
};

/// Real or complex function on the product grid (R^d)^N.
template <class T>
class ConfigField : public BasicField<T> {
 public:
  ConfigField(GridSpec grid, std::vector<T> values)
      : BasicField<T>(grid, grid.config_axes(), std::move(values)) {}

  static ConfigField constant(const GridSpec& grid, T c) {
    return ConfigField(grid, std::vector<T>(grid.nodes(), c));
  }
};

using RealConfig = ConfigField<double>;
using ComplexConfig = ConfigField<Complex>;

/// Coordinates of site `s` of the d-dimensional grid.
inline void site_coords(const GridSpec& g, std::size_t s, std::span<double> out) {
  for (int c = g.d - 1; c >= 0; --c) {
    out[static_cast<std::size_t>(c)] =
        g.coord(static_cast<int>(s % static_cast<std::size_t>(g.M)));
    s /= static_cast<std::size_t>(g.M);
  }
}

/// Site index of particle j at product node `flat`.
inline std::size_t particle_site(const GridSpec& g, std::size_t flat, int j) {
  const std::size_t S = g.sites();
  for (int i = g.N - 1; i > j; --i) flat /= S;
  return flat % S;
}

/// Samples f(x) with x in R^d at every site.
template <class F>
ScalarField sample_scalar(const GridSpec& g, F&& f) {
  std::vector<double> vals(g.sites());
  std::vector<double> x(static_cast<std::size_t>(g.d));
  for (std::size_t s = 0; s < vals.size(); ++s) {
    site_coords(g, s, x);
    vals[s] = f(std::span<const double>(x));
  }
  return ScalarField(g, std::move(vals));
}

/// Samples f(X) with X = (x_1, ..., x_N) flattened to N*d coordinates.
template <class F>
auto sample_config(const GridSpec& g, F&& f) {
  using T = std::decay_t<decltype(f(std::span<const double>{}))>;
  const int A = g.config_axes();
  std::vector<T> vals(g.nodes());
  std::vector<double> X(static_cast<std::size_t>(A));
  for (std::size_t flat = 0; flat < vals.size(); ++flat) {
    std::size_t r = flat;
    for (int a = A - 1; a >= 0; --a) {
      X[static_cast<std::size_t>(a)] =
          g.coord(static_cast<int>(r % static_cast<std::size_t>(g.M)));
      r /= static_cast<std::size_t>(g.M);
    }
    vals[flat] = f(std::span<const double>(X));
  }
  return ConfigField<T>(g, std::move(vals));
}

// ---------------------------------------------------------------------------
// Quadrature and norms

/// Midpoint rule: h^dim * sum of values.
template <class T>
T integrate(const BasicField<T>& f) {
  T s{};
  for (const T& v : f.values()) s += v;
  return s * f.cell();
}

/// Integral of |f|^2.
template <class T>
double mass(const BasicField<T>& f) {
  double s = 0.0;
  for (const T& v : f.values()) s += detail::abs2(v);
  return s * f.cell();
}

template <class T>
double l2_norm(const BasicField<T>& f) {
  return std::sqrt(mass(f));
}

/// Forward difference along `axis` at `flat`, zero past the last node.
template <class T>
T forward_difference(const BasicField<T>& f, std::size_t flat, int axis) {
  std::size_t stride = 1;
  for (int a = f.axes() - 1; a > axis; --a) {
    stride *= static_cast<std::size_t>(f.grid().M);
  }
  const std::size_t i = (flat / stride) % static_cast<std::size_t>(f.grid().M);
  const T next = (i + 1 < static_cast<std::size_t>(f.grid().M))
                     ? f[flat + stride]
                     : T{};
  return (next - f[flat]) / f.grid().h;
}

/// Central difference along `axis` at `flat`, zero past either end.
template <class T>
T central_difference(const BasicField<T>& f, std::size_t flat, int axis) {
  std::size_t stride = 1;
  for (int a = f.axes() - 1; a > axis; --a) {
    stride *= static_cast<std::size_t>(f.grid().M);
  }
  const std::size_t M = static_cast<std::size_t>(f.grid().M);
  const std::size_t i = (flat / stride) % M;
  const T next = i + 1 < M ? f[flat + stride] : T{};
  const T prev = i > 0 ? f[flat - stride] : T{};
  return (next - prev) / (2.0 * f.grid().h);
}

namespace detail {

/// Sum over nodes and axes of |forward difference|^2, unscaled.
template <class T>
double gradient_sum(std::span<const T> v, int axes, int M, double h) {
  const std::size_t Ms = static_cast<std::size_t>(M);
  double total = 0.0;
  std::size_t stride = 1;
  for (int a = axes - 1; a >= 0; --a) {
    for (std::size_t flat = 0; flat < v.size(); ++flat) {
      const std::size_t i = (flat / stride) % Ms;
      const T next = (i + 1 < Ms) ? v[flat + stride] : T{};
      total += abs2(next - v[flat]);
    }
    stride *= Ms;
  }
  return total / (h * h);
}

}  // namespace detail

template <class T>
double h1_seminorm(const BasicField<T>& f) {
  return std::sqrt(detail::gradient_sum(f.values(), f.axes(), f.grid().M,
                                        f.grid().h) *
                   f.cell());
}

template <class T>
double h1_norm(const BasicField<T>& f) {
  const double g = detail::gradient_sum(f.values(), f.axes(), f.grid().M,
                                        f.grid().h);
  return std::sqrt((mass(f) / f.cell() + g) * f.cell());
}

namespace detail {

template <class A, class B>
auto difference(const BasicField<A>& a, const BasicField<B>& b) {
  using T = std::common_type_t<A, B>;
  if (!(a.grid().same_sites(b.grid())) || a.axes() != b.axes()) {
    throw ArgumentError("field difference: grids differ");
  }
  std::vector<T> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = static_cast<T>(a[i]) - static_cast<T>(b[i]);
  }
  return BasicField<T>(a.grid(), a.axes(), std::move(v));
}

}  // namespace detail

template <class A, class B>
double l2_distance(const BasicField<A>& a, const BasicField<B>& b) {
  return l2_norm(detail::difference(a, b));
}

template <class A, class B>
double h1_distance(const BasicField<A>& a, const BasicField<B>& b) {
  return h1_norm(detail::difference(a, b));
}

// ---------------------------------------------------------------------------
// Densities

/// Non-negative ScalarField with unit integral.
class DensityField {
 public:
  static constexpr double kMassTolerance = 1e-12;

  explicit DensityField(ScalarField f) : field_(std::move(f)) {
    for (double v : field_.values()) {
      if (v < 0.0) throw ArgumentError("density: negative value");
    }
    const double m = integrate(field_);
    if (std::abs(m - 1.0) > kMassTolerance) {
      throw ArgumentError("density: integral " + std::to_string(m) +
                          " is not 1");
    }
  }

  const ScalarField& field() const { return field_; }
  operator const ScalarField&() const { return field_; }
  const GridSpec& grid() const { return field_.grid(); }
  std::span<const double> values() const { return field_.values(); }
  double operator[](std::size_t i) const { return field_[i]; }
  std::size_t size() const { return field_.size(); }

 private:
  ScalarField field_;
};

/// h1_norm(sqrt(rho1) - sqrt(rho2)).
inline double sqrt_density_h1_distance(const ScalarField& r1,
                                       const ScalarField& r2) {
  if (!r1.grid().same_sites(r2.grid())) {
    throw ArgumentError("sqrt_density_h1_distance: grids differ");
  }
  std::vector<double> v(r1.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = std::sqrt(std::max(r1[i], 0.0)) - std::sqrt(std::max(r2[i], 0.0));
  }
  return h1_norm(ScalarField(r1.grid(), std::move(v)));
}

inline double sqrt_density_l2_distance(const ScalarField& r1,
                                       const ScalarField& r2) {
  if (!r1.grid().same_sites(r2.grid())) {
    throw ArgumentError("sqrt_density_l2_distance: grids differ");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < r1.size(); ++i) {
    const double t =
        std::sqrt(std::max(r1[i], 0.0)) - std::sqrt(std::max(r2[i], 0.0));
    s += t * t;
  }
  return std::sqrt(s * r1.cell());
}

/// Integral of |r1 - r2| divided by the integral of |r2|.
inline double relative_l1_error(const ScalarField& r1, const ScalarField& r2) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < r1.size(); ++i) {
    num += std::abs(r1[i] - r2[i]);
    den += std::abs(r2[i]);
  }
  return den > 0.0 ? num / den : num;
}

// ---------------------------------------------------------------------------
// Marginals and symmetry

/// One-body density of |u|^2 taken along particle j (the other N-1 blocks
/// are integrated out).
template <class T>
ScalarField marginal_along(const ConfigField<T>& u, int j) {
  const GridSpec& g = u.grid();
  if (j < 0 || j >= g.N) throw ArgumentError("marginal_along: bad particle");
  const std::size_t S = g.sites();
  std::size_t stride = 1;
  for (int i = g.N - 1; i > j; --i) stride *= S;
  std::vector<double> m(S, 0.0);
  const auto v = u.values();
  for (std::size_t flat = 0; flat < v.size(); ++flat) {
    m[(flat / stride) % S] += detail::abs2(v[flat]);
  }
  const double w = g.cell((g.N - 1) * g.d);
  for (double& x : m) x *= w;
  return ScalarField(g, std::move(m));
}

/// Per-particle marginals may differ by at most this much (scaled by the
/// larger of 1 and the peak density) before marginal() reports asymmetry.
inline constexpr double kMarginalSymmetryTolerance = 1e-10;

namespace detail {

/// Per-particle marginals of w(u) with w = |.|^2 (wavefunctions) or the
/// identity (densities on configuration space), checked for agreement.
template <class T, class W>
ScalarField checked_marginal(const ConfigField<T>& u, W weight) {
  const GridSpec& g = u.grid();
  const std::size_t S = g.sites();
  std::vector<std::vector<double>> m(static_cast<std::size_t>(g.N),
                                     std::vector<double>(S, 0.0));
  const auto v = u.values();
  for (std::size_t flat = 0; flat < v.size(); ++flat) {
    const double p = weight(v[flat]);
    std::size_t r = flat;
    for (int j = g.N - 1; j >= 0; --j) {
      m[static_cast<std::size_t>(j)][r % S] += p;
      r /= S;
    }
  }
  const double w = g.cell((g.N - 1) * g.d);
  double peak = 0.0, gap = 0.0;
  for (auto& mj : m) {
    for (double& x : mj) x *= w;
  }
  for (std::size_t s = 0; s < S; ++s) {
    peak = std::max(peak, std::abs(m[0][s]));
    for (std::size_t j = 1; j < m.size(); ++j) {
      gap = std::max(gap, std::abs(m[j][s] - m[0][s]));
    }
  }
  if (gap > kMarginalSymmetryTolerance * std::max(1.0, peak)) {
    throw SymmetryError("marginal: per-particle marginals differ by " +
                        std::to_string(gap));
  }
  return ScalarField(g, std::move(m[0]));
}

}  // namespace detail

/// rho[u]: the marginal of |u|^2. Every particle's marginal is computed and
/// they must agree, since for symmetric u the choice of particle is free.
template <class T>
ScalarField marginal(const ConfigField<T>& u) {
  return detail::checked_marginal(u, [](const T& x) { return detail::abs2(x); });
}

/// Marginal of a density P on configuration space (no squaring).
inline ScalarField density_marginal(const RealConfig& p) {
  return detail::checked_marginal(p, [](double x) { return x; });
}

namespace detail {

/// Node index after permuting particle blocks: particle j of the result
/// takes the site of particle perm[j] of the input.
inline std::size_t permute_node(std::size_t flat, std::span<const int> perm,
                                std::size_t S, std::span<std::size_t> scratch) {
  const std::size_t N = perm.size();
  for (std::size_t j = N; j-- > 0;) {
    scratch[j] = flat % S;
    flat /= S;
  }
  std::size_t out = 0;
  for (std::size_t j = 0; j < N; ++j) {
    out = out * S + scratch[static_cast<std::size_t>(perm[j])];
  }
  return out;
}

}  // namespace detail

/// Max over adjacent block transpositions tau of max |u - u o tau|.
template <class T>
double symmetry_defect(const ConfigField<T>& u) {
  const GridSpec& g = u.grid();
  const std::size_t S = g.sites();
  std::vector<int> perm(static_cast<std::size_t>(g.N));
  std::vector<std::size_t> scratch(perm.size());
  double worst = 0.0;
  for (int j = 0; j + 1 < g.N; ++j) {
    std::iota(perm.begin(), perm.end(), 0);
    std::swap(perm[static_cast<std::size_t>(j)],
              perm[static_cast<std::size_t>(j) + 1]);
    for (std::size_t flat = 0; flat < u.size(); ++flat) {
      const std::size_t other = detail::permute_node(flat, perm, S, scratch);
      worst = std::max(worst, std::abs(u[flat] - u[other]));
    }
  }
  return worst;
}

/// Average over all N! particle permutations. Supports N <= 3.
template <class T>
ConfigField<T> symmetrize(const ConfigField<T>& u) {
  const GridSpec& g = u.grid();
  if (g.N > 3) throw ArgumentError("symmetrize: N > 3 is not supported");
  const std::size_t S = g.sites();
  std::vector<int> perm(static_cast<std::size_t>(g.N));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::vector<int>> perms;
  do {
    perms.push_back(perm);
  } while (std::next_permutation(perm.begin(), perm.end()));
  std::vector<std::size_t> scratch(perm.size());
  std::vector<T> out(u.size());
  // Summing the orbit in a fixed canonical order makes every node of the
  // orbit receive a bitwise-identical value.
  std::vector<std::size_t> orbit(perms.size());
  for (std::size_t flat = 0; flat < u.size(); ++flat) {
    for (std::size_t p = 0; p < perms.size(); ++p) {
      orbit[p] = detail::permute_node(flat, perms[p], S, scratch);
    }
    std::sort(orbit.begin(), orbit.end());
    T s{};
    for (std::size_t idx : orbit) s += u[idx];
    out[flat] = s / static_cast<double>(perms.size());
  }
  return ConfigField<T>(g, std::move(out));
}

/// |u| pointwise.
template <class T>
RealConfig modulus(const ConfigField<T>& u) {
  std::vector<double> v(u.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::abs(u[i]);
  return RealConfig(u.grid(), std::move(v));
}

inline ComplexConfig to_complex(const RealConfig& u) {
  std::vector<Complex> v(u.values().begin(), u.values().end());
  return ComplexConfig(u.grid(), std::move(v));
}

/// f / l2_norm(f).
template <class T>
ConfigField<T> normalized(const ConfigField<T>& f) {
  const double n = l2_norm(f);
  if (!(n > 0.0)) throw ArgumentError("normalized: zero field");
  std::vector<T> v(f.values().begin(), f.values().end());
  for (T& x : v) x /= n;
  return ConfigField<T>(f.grid(), std::move(v));
}

}  // namespace mlift
