#pragma once

// End-to-end driver: canonical test instances, perturbed density
// sequences, the three-stage construction (reallocation, diagonal
// smoothing, optional sign lifting) and CSV convergence reports.

#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <istream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mlift/errors.hpp"
#include "mlift/grid.hpp"
#include "mlift/reallocation.hpp"
#include "mlift/sign_lift.hpp"
#include "mlift/smoothing.hpp"
#include "mlift/wff.hpp"

namespace mlift {

enum class Mode { nonneg, signed_ };

inline const char* to_string(Mode m) { return m == Mode::nonneg ? "nonneg" : "signed"; }

struct ExperimentConfig {
  int d = 1;
  int N = 2;
  double L = 8.0;
  int M = 64;
  int n_max = 6;
  /// Perturbation amplitude of the n-th density is alpha0 / n.
  double alpha0 = 0.02;
  double realloc_tol = 1e-12;
  double marginal_tol = 1e-9;
  double bound_slack = 1e-10;
  /// Empty selects every dyadic level the grid resolves.
  std::vector<double> eps_levels;
  /// Level k is admissible once the smoothed distances stay below delta 2^{-k}.
  double delta = 8.0;
  Mode mode = Mode::nonneg;
  std::uint64_t seed = 1;
  std::string output_dir = ".";

  void validate() const {
    if (!(realloc_tol > 0.0 && marginal_tol > 0.0 && bound_slack > 0.0 && delta > 0.0)) {
      throw ArgumentError("config: tolerances must be positive");
    }
    if (n_max < 3) throw ArgumentError("config: n_max must be at least 3");
    if (!(alpha0 >= 0.0)) throw ArgumentError("config: alpha0 must be >= 0");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || !std::isfinite(x)) {
    throw ArgumentError("config: bad number for " + key + ": '" + v + "'");
  }
  return x;
}

inline long long parse_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size()) {
    throw ArgumentError("config: bad integer for " + key + ": '" + v + "'");
  }
  return x;
}

}  // namespace detail

/// Reads `key = value` lines; `#` starts a comment; unknown keys are errors.
inline ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ArgumentError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    if (key == "d") c.d = static_cast<int>(detail::parse_int(key, val));
    else if (key == "N") c.N = static_cast<int>(detail::parse_int(key, val));
    else if (key == "L") c.L = detail::parse_real(key, val);
    else if (key == "M") c.M = static_cast<int>(detail::parse_int(key, val));
    else if (key == "n_max") c.n_max = static_cast<int>(detail::parse_int(key, val));
    else if (key == "alpha0") c.alpha0 = detail::parse_real(key, val);
    else if (key == "realloc_tol") c.realloc_tol = detail::parse_real(key, val);
    else if (key == "marginal_tol") c.marginal_tol = detail::parse_real(key, val);
    else if (key == "bound_slack") c.bound_slack = detail::parse_real(key, val);
    else if (key == "delta") c.delta = detail::parse_real(key, val);
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(detail::parse_int(key, val));
    else if (key == "output_dir") c.output_dir = val;
    else if (key == "mode") {
      if (val == "nonneg") c.mode = Mode::nonneg;
      else if (val == "signed") c.mode = Mode::signed_;
      else throw ArgumentError("config: mode must be nonneg or signed");
    } else if (key == "eps_levels") {
      c.eps_levels.clear();
      std::string v = val;
      for (char& ch : v) {
        if (ch == ',') ch = ' ';
      }
      std::istringstream ls(v);
      std::string tok;
      while (ls >> tok) c.eps_levels.push_back(detail::parse_real(key, tok));
    } else {
      throw ArgumentError("config: unknown key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("config: cannot open " + path);
  return parse_config(in);
}

inline GridSpec config_grid(const ExperimentConfig& c) {
  return make_grid(c.d, c.N, c.L, c.M);
}

/// Width of the Gaussian factors of the canonical instances.
inline constexpr double kNonnegWidth = 0.5;
inline constexpr double kSignedWidth = 0.7;
/// Mass of psi^2 allowed outside the core [-L/2, L/2]^(Nd).
inline constexpr double kMaxOuterMass = 1e-10;

struct Target {
  RealConfig psi;
  DensityField rho;
};

/// Mass of |u|^2 at nodes with some coordinate outside [-L/2, L/2].
inline double outer_mass(const RealConfig& u) {
  const GridSpec& g = u.grid();
  const double half = g.L / 2.0;
  double s = 0.0;
  std::size_t i = 0;
  sample_config(g, [&](std::span<const double> X) {
    bool out = false;
    for (double x : X) out = out || std::abs(x) > half;
    if (out) s += u[i] * u[i];
    ++i;
    return 0.0;
  });
  return s * u.cell();
}

/// The canonical psi for the configured mode and its density.
///
/// nonneg: the symmetrized product of Gaussians centred at N evenly spaced
/// points on the first axis, i.e. a correlated non-negative state.
/// signed: (sum of first coordinates) times an isotropic Gaussian.
inline Target generate_target(const ExperimentConfig& c) {
  const GridSpec g = config_grid(c);
  if (g.N > 3) throw ArgumentError("generate_target: N > 3 is not supported");
  RealConfig raw = RealConfig::constant(g, 0.0);
  if (c.mode == Mode::nonneg) {
    const double s2 = 2.0 * kNonnegWidth * kNonnegWidth;
    raw = sample_config(g, [&](std::span<const double> X) {
      double e = 0.0;
      for (int j = 0; j < g.N; ++j) {
        const double centre = -1.0 + 2.0 * j / (g.N - 1);
        for (int a = 0; a < g.d; ++a) {
          const double x = X[static_cast<std::size_t>(j * g.d + a)] - (a == 0 ? centre : 0.0);
          e += x * x;
        }
      }
      return std::exp(-e / s2);
    });
  } else {
    const double s2 = 2.0 * kSignedWidth * kSignedWidth;
    raw = sample_config(g, [&](std::span<const double> X) {
      double lin = 0.0, r2 = 0.0;
      for (int j = 0; j < g.N; ++j) lin += X[static_cast<std::size_t>(j * g.d)];
      for (double x : X) r2 += x * x;
      return lin * std::exp(-r2 / s2);
    });
  }
  RealConfig psi = normalized(symmetrize(raw));
  const double outer = outer_mass(psi);
  if (outer > kMaxOuterMass) {
    throw SupportError("generate_target: mass " + std::to_string(outer) +
                       " outside the core of the box; increase L");
  }
  DensityField rho(marginal(psi));
  return Target{std::move(psi), std::move(rho)};
}

/// rho_n = (sqrt(rho) (1 + alpha_n p))^2 / Z with alpha_n = alpha0 / n and a
/// seeded smooth profile p(x) = sin(k . x + b), |p| <= 1.
inline std::vector<DensityField> generate_density_sequence(const ScalarField& rho,
                                                           const ExperimentConfig& c) {
  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> freq(0.6, 1.2), phase(0.0, 2.0 * std::numbers::pi);
  std::vector<double> k(static_cast<std::size_t>(rho.grid().d));
  for (double& v : k) v = freq(rng);
  const double b = phase(rng);
  const ScalarField p = sample_scalar(rho.grid(), [&](std::span<const double> x) {
    double t = b;
    for (std::size_t a = 0; a < x.size(); ++a) t += k[a] * x[a];
    return std::sin(t);
  });

  std::vector<DensityField> out;
  for (int n = 1; n <= c.n_max; ++n) {
    const double alpha = c.alpha0 / n;
    std::vector<double> v(rho.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double root = std::sqrt(rho[i]);
      const double pert = root + alpha * root * p[i];
      if (pert < 0.0) {
        throw AmplitudeError("generate_density_sequence: sqrt(rho_n) negative at n = " +
                             std::to_string(n) + "; reduce alpha0");
      }
      v[i] = pert * pert;
    }
    double z = 0.0;
    for (double x : v) z += x;
    z *= rho.cell();
    for (double& x : v) x /= z;
    out.emplace_back(ScalarField(rho.grid(), std::move(v)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

struct ConvergenceRow {
  int n = 0;
  double sqrt_rho_h1 = 0.0;     // ||sqrt(rho_n) - sqrt(rho)||_H1
  double phi_l2 = 0.0;          // ||phi_n - |psi|||_L2, phi_n the smoothed modulus
  double psi_l2 = 0.0;          // ||psi_n - psi||_L2
  double psi_h1 = 0.0;          // ||psi_n - psi||_H1
  double marginal_l1 = 0.0;     // relative L1 error of rho[psi_n] against rho_n
  double kestimate_slack = 0.0; // 2N ||.|| - (||phi||^2 - ||phi_inf||^2)
  double final_slack = 0.0;     // 2(2N+1) ||.|| - ||phi_out - phi||^2
  int iterations = 0;
  double epsilon = 0.0;
};

struct ConvergenceReport {
  std::vector<ConvergenceRow> rows;
};

inline const char* report_header() {
  return "n,sqrt_rho_h1,phi_l2,psi_l2,psi_h1,marginal_l1,kestimate_slack,final_slack,"
         "iterations,epsilon";
}

inline void write_report(std::ostream& os, const ConvergenceReport& r) {
  os << report_header() << '\n';
  for (const ConvergenceRow& row : r.rows) {
    os << row.n << ',' << format_double(row.sqrt_rho_h1) << ',' << format_double(row.phi_l2)
       << ',' << format_double(row.psi_l2) << ',' << format_double(row.psi_h1) << ','
       << format_double(row.marginal_l1) << ',' << format_double(row.kestimate_slack) << ','
       << format_double(row.final_slack) << ',' << row.iterations << ','
       << format_double(row.epsilon) << '\n';
  }
}

inline void emit_report(const ConvergenceReport& r, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path + ": " + std::strerror(errno));
  write_report(out, r);
  out.flush();
  if (!out) throw Error(path + ": " + std::strerror(errno));
}

inline ConvergenceReport read_report(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != report_header()) {
    throw FormatError("report: missing or unexpected header");
  }
  ConvergenceReport r;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 10) throw FormatError("report: expected 10 columns in '" + line + "'");
    ConvergenceRow row;
    try {
      row.n = std::stoi(f[0]);
      row.sqrt_rho_h1 = std::stod(f[1]);
      row.phi_l2 = std::stod(f[2]);
      row.psi_l2 = std::stod(f[3]);
      row.psi_h1 = std::stod(f[4]);
      row.marginal_l1 = std::stod(f[5]);
      row.kestimate_slack = std::stod(f[6]);
      row.final_slack = std::stod(f[7]);
      row.iterations = std::stoi(f[8]);
      row.epsilon = std::stod(f[9]);
    } catch (const std::exception&) {
      throw FormatError("report: bad value in '" + line + "'");
    }
    r.rows.push_back(row);
  }
  return r;
}

inline ConvergenceReport read_report_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(path + ": " + std::strerror(errno));
  return read_report(in);
}

// ---------------------------------------------------------------------------
// Driver

/// A stage failed at sequence index n.
class PipelineError : public Error {
 public:
  PipelineError(std::string stage, int n, const std::string& what)
      : Error(stage + " (n = " + std::to_string(n) + "): " + what),
        stage_(std::move(stage)),
        n_(n) {}
  const std::string& stage() const noexcept { return stage_; }
  int n() const noexcept { return n_; }

 private:
  std::string stage_;
  int n_;
};

/// Receives tab-separated trace lines, first field naming the stage.
using TraceSink = std::function<void(const std::string&)>;

struct PipelineResult {
  ConvergenceReport report;
  RealConfig psi;
  DensityField rho;
  std::vector<DensityField> rho_seq;
  std::vector<RealConfig> phi_l2;   // reallocation outputs
  std::vector<RealConfig> phi_h1;   // smoothed moduli |psi_n|
  std::vector<ComplexConfig> psi_n;
  std::vector<RealConfig> sign_seq; // paired e_{n_k} (signed mode)
  std::vector<int> sign_index;      // n_k (signed mode)
};

namespace detail {

template <class F>
auto staged(const char* stage, int n, F&& f) {
  try {
    return f();
  } catch (const PipelineError&) {
    throw;
  } catch (const Error& e) {
    throw PipelineError(stage, n, e.what());
  }
}

inline std::string tsv(std::initializer_list<std::string> f) {
  std::string s;
  for (const auto& x : f) s += (s.empty() ? "" : "\t") + x;
  return s;
}

/// ||e_n - e|| in L2(lambda^2 dX).
inline double weighted_l2(const RealConfig& a, const RealConfig& b, const RealConfig& lam) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d * lam[i] * lam[i];
  }
  return std::sqrt(s * a.cell());
}

}  // namespace detail

inline PipelineResult run_pipeline(const ExperimentConfig& c, const TraceSink& trace = {}) {
  c.validate();
  Target tgt = detail::staged("generate", 0, [&] { return generate_target(c); });
  std::vector<DensityField> rho_seq =
      detail::staged("generate", 0, [&] { return generate_density_sequence(tgt.rho, c); });
  const GridSpec& g = tgt.psi.grid();
  const RealConfig phi = modulus(tgt.psi);
  const int N = g.N;

  std::vector<double> levels = c.eps_levels;
  if (levels.empty()) levels = resolvable_dyadic_levels(g);

  ConvergenceReport report;
  std::vector<RealConfig> phi_l2;
  for (int n = 1; n <= c.n_max; ++n) {
    const DensityField& rn = rho_seq[static_cast<std::size_t>(n - 1)];
    LimitOptions opt;
    opt.tol = c.realloc_tol;
    if (trace) {
      opt.hook = [&](const StepTrace& s) {
        trace(detail::tsv({"realloc", std::to_string(n), std::to_string(s.k),
                           format_double(s.residual), format_double(s.mass),
                           format_double(s.min_deficit)}));
      };
    }
    ReallocResult rr = detail::staged("reallocate", n, [&] { return l2_match(phi, rn, opt); });
    const double root_l2 = sqrt_density_l2_distance(tgt.rho, rn);
    ConvergenceRow row;
    row.n = n;
    row.sqrt_rho_h1 = sqrt_density_h1_distance(rn, tgt.rho);
    row.kestimate_slack = 2.0 * N * root_l2 - rr.mass_loss;
    const double dev = l2_distance(rr.phi_out, phi);
    row.final_slack = 2.0 * (2 * N + 1) * root_l2 - dev * dev;
    row.iterations = rr.iterations;
    if (row.kestimate_slack < -c.bound_slack || row.final_slack < -c.bound_slack) {
      throw PipelineError("check", n, "L2 reallocation bound violated");
    }
    report.rows.push_back(row);
    phi_l2.push_back(std::move(rr.phi_out));
  }

  const DiagonalSchedule sched = detail::staged(
      "smooth", 0, [&] { return diagonal_schedule(phi_l2, phi, levels, c.delta); });

  std::vector<RealConfig> phi_h1;
  for (int n = 1; n <= c.n_max; ++n) {
    const double eps = sched.epsilon_of_n[static_cast<std::size_t>(n - 1)];
    SmoothingOutput so = detail::staged("smooth", n, [&] {
      return theta_eps(phi_l2[static_cast<std::size_t>(n - 1)], gauss_stencil(eps, g));
    });
    ConvergenceRow& row = report.rows[static_cast<std::size_t>(n - 1)];
    row.epsilon = eps;
    row.phi_l2 = l2_distance(so.u_eps, phi);
    if (trace) {
      trace(detail::tsv({"smooth", std::to_string(n), format_double(eps),
                         format_double(so.marginal_error),
                         format_double(h1_distance(so.u_eps, phi))}));
    }
    phi_h1.push_back(std::move(so.u_eps));
  }

  PipelineResult res{std::move(report), tgt.psi, tgt.rho, std::move(rho_seq),
                     std::move(phi_l2), std::move(phi_h1), {}, {}, {}};

  if (c.mode == Mode::nonneg) {
    for (const RealConfig& u : res.phi_h1) res.psi_n.push_back(to_complex(u));
  } else {
    const SignField sign = extract_sign(res.psi);
    std::vector<SmoothedSign> signs;
    std::vector<double> lips, a;
    for (int n = 1; n <= c.n_max; ++n) {
      signs.push_back(detail::staged("sign", n, [&] {
        const SignWidth w = select_sign_width(sign, n, c.n_max);
        return smooth_sign(sign, n, w.epsilon, c.n_max);
      }));
      lips.push_back(signs.back().lip);
    }
    for (const RealConfig& u : res.phi_h1) a.push_back(l2_distance(u, phi));
    // e_k pairs with phi_k. On a handful of terms the K(n) construction stalls
    // at n_k = 1, whose cut-off removes most of the support, so it is only
    // traced here.
    std::vector<int> constructed(a.size(), 0);
    try {
      const Subsequence sub = subsequence_select(lips, a);
      constructed = sub.indices;
    } catch (const TruncationError&) {
    }
    for (std::size_t k = 0; k < a.size(); ++k) {
      res.sign_index.push_back(static_cast<int>(k + 1));
      res.sign_seq.push_back(signs[k].e_n);
      if (trace) {
        trace(detail::tsv({"pair", std::to_string(k + 1), format_double(lips[k]),
                           format_double(a[k]), std::to_string(constructed[k])}));
      }
    }
    res.psi_n = detail::staged("lift", 0,
                               [&] { return assemble(res.sign_seq, res.phi_h1, res.psi); });
  }

  for (int n = 1; n <= c.n_max; ++n) {
    const std::size_t i = static_cast<std::size_t>(n - 1);
    ConvergenceRow& row = res.report.rows[i];
    const ComplexConfig& pn = res.psi_n[i];
    row.psi_l2 = l2_distance(pn, res.psi);
    row.psi_h1 = h1_distance(pn, res.psi);
    row.marginal_l1 = detail::staged("check", n, [&] {
      return relative_l1_error(marginal(pn), res.rho_seq[i]);
    });
    if (row.marginal_l1 > c.marginal_tol) {
      throw PipelineError("check", n,
                          "marginal error " + format_double(row.marginal_l1) + " above tolerance");
    }
    if (c.mode == Mode::signed_) {
      const SignField sign = extract_sign(res.psi);
      const double bound = row.phi_l2 + std::numbers::pi / 2.0 *
                                            detail::weighted_l2(res.sign_seq[i], sign.e,
                                                                sign.lambda);
      if (row.psi_l2 > bound + c.bound_slack) {
        throw PipelineError("check", n, "L2 decomposition bound violated");
      }
      if (trace) {
        trace(detail::tsv({"sign", std::to_string(n),
                           format_double(lipschitz_estimate(res.sign_seq[i])),
                           format_double(row.phi_l2), format_double(row.psi_l2),
                           format_double(row.psi_h1)}));
      }
    }
  }
  return res;
}

}  // namespace mlift
