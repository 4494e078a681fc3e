// mlift command-line driver.
//
//   mlift run <config>                     full pipeline, report + fields
//   mlift reallocate <phi.wff> <rho_n.wff> L2 reallocation onto rho_n
//   mlift smooth <u.wff> --eps <e>         marginal-preserving smoothing
//   mlift lift <psi.wff> <phi_n.wff...>    sign lift of smoothed moduli
//   mlift report <dir>                     re-check a written report
//
// Exit status 0 only when every checked invariant held. --trace writes
// tab-separated stage lines to stderr.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mlift/pipeline.hpp"
#include "mlift/wff.hpp"

namespace fs = std::filesystem;
using namespace mlift;

namespace {

constexpr int kOk = 0;
constexpr int kViolated = 1;
constexpr int kFailed = 2;

bool g_trace = false;

void trace_line(const std::string& s) {
  if (g_trace) std::cerr << s << '\n';
}

std::string field_name(const char* stem, int n) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%02d.wff", stem, n);
  return buf;
}

RealConfig load_modulus(const std::string& path) {
  const WffData w = read_wff_file(path);
  if (w.complex) return modulus(to_complex_config(w));
  return to_real_config(w);
}

int cmd_run(const std::string& config_path) {
  const ExperimentConfig c = load_config(config_path);
  const PipelineResult r = run_pipeline(c, trace_line);
  const fs::path dir(c.output_dir);
  fs::create_directories(dir);
  emit_report(r.report, (dir / "report.csv").string());
  save_wff((dir / "psi.wff").string(), r.psi);
  save_wff((dir / "rho.wff").string(), r.rho.field());
  for (std::size_t i = 0; i < r.psi_n.size(); ++i) {
    const int n = static_cast<int>(i + 1);
    save_wff((dir / field_name("rho_n", n)).string(), r.rho_seq[i].field());
    save_wff((dir / field_name("phi_n", n)).string(), r.phi_h1[i]);
    save_wff((dir / field_name("psi_n", n)).string(), r.psi_n[i]);
  }
  std::cout << "n\tpsi_h1\tpsi_l2\tmarginal_l1\tepsilon\n";
  for (const ConvergenceRow& row : r.report.rows) {
    std::cout << row.n << '\t' << format_double(row.psi_h1) << '\t'
              << format_double(row.psi_l2) << '\t' << format_double(row.marginal_l1) << '\t'
              << format_double(row.epsilon) << '\n';
  }
  std::cout << "wrote " << (dir / "report.csv").string() << '\n';
  return kOk;
}

int cmd_reallocate(const std::string& phi_path, const std::string& rho_path,
                   const std::string& out, double tol, double marginal_tol) {
  const RealConfig phi = load_modulus(phi_path);
  const DensityField rho_n(to_scalar(read_wff_file(rho_path), phi.grid()));
  LimitOptions opt;
  opt.tol = tol;
  opt.hook = [](const StepTrace& s) {
    trace_line("realloc\t" + std::to_string(s.k) + '\t' + format_double(s.residual) + '\t' +
               format_double(s.mass) + '\t' + format_double(s.min_deficit));
  };
  const ReallocResult r = l2_match(phi, rho_n, opt);
  save_wff(out, r.phi_out);
  std::cout << "iterations\t" << r.iterations << "\nresidual\t" << format_double(r.residual)
            << "\nmarginal_l1\t" << format_double(r.marginal_error) << "\nmass_loss\t"
            << format_double(r.mass_loss) << "\nwrote\t" << out << '\n';
  if (r.marginal_error > marginal_tol) {
    std::cerr << "mlift: marginal error " << format_double(r.marginal_error)
              << " above tolerance\n";
    return kViolated;
  }
  return kOk;
}

int cmd_smooth(const std::string& path, double eps, const std::string& out,
               double marginal_tol) {
  const WffData w = read_wff_file(path);
  const ComplexConfig u = to_complex_config(w);
  const SmoothingOutput s = theta_eps(u, gauss_stencil(eps, u.grid()));
  save_wff(out, s.u_eps);
  trace_line("smooth\t" + format_double(eps) + '\t' + format_double(s.marginal_error) + '\t' +
             format_double(s.leakage));
  std::cout << "epsilon\t" << format_double(eps) << "\nmarginal_l1\t"
            << format_double(s.marginal_error) << "\nleakage\t" << format_double(s.leakage)
            << "\nwrote\t" << out << '\n';
  if (s.marginal_error > marginal_tol) {
    std::cerr << "mlift: marginal error " << format_double(s.marginal_error)
              << " above tolerance\n";
    return kViolated;
  }
  return kOk;
}

int cmd_lift(const std::string& psi_path, const std::vector<std::string>& phi_paths,
             const std::string& out_dir, double marginal_tol) {
  const WffData pw = read_wff_file(psi_path);
  if (pw.complex) throw FormatError("lift: psi must be real-valued");
  const RealConfig psi = to_real_config(pw);
  const SignField sign = extract_sign(psi);
  const int n_max = static_cast<int>(phi_paths.size());

  std::vector<RealConfig> phi_n, e_n;
  for (int n = 1; n <= n_max; ++n) {
    phi_n.push_back(load_modulus(phi_paths[static_cast<std::size_t>(n - 1)]));
    const SignWidth sw = select_sign_width(sign, n, n_max);
    const SmoothedSign sm = smooth_sign(sign, n, sw.epsilon, n_max);
    trace_line("sign\t" + std::to_string(n) + '\t' + format_double(sw.epsilon) + '\t' +
               format_double(sw.gap) + '\t' + (sw.met ? "met" : "unmet") + '\t' +
               format_double(sm.lip));
    e_n.push_back(sm.e_n);
  }
  const std::vector<ComplexConfig> psi_n = assemble(e_n, phi_n, psi);

  fs::create_directories(out_dir);
  int status = kOk;
  std::cout << "n\tpsi_l2\tpsi_h1\tmodulus_gap\tmarginal_l1\n";
  for (std::size_t i = 0; i < psi_n.size(); ++i) {
    const int n = static_cast<int>(i + 1);
    double gap = 0.0;
    for (std::size_t j = 0; j < psi_n[i].size(); ++j) {
      gap = std::max(gap, std::abs(std::abs(psi_n[i][j]) - phi_n[i][j]));
    }
    const double marg = relative_l1_error(marginal(psi_n[i]), marginal(phi_n[i]));
    std::cout << n << '\t' << format_double(l2_distance(psi_n[i], psi)) << '\t'
              << format_double(h1_distance(psi_n[i], psi)) << '\t' << format_double(gap)
              << '\t' << format_double(marg) << '\n';
    save_wff((fs::path(out_dir) / field_name("psi_n", n)).string(), psi_n[i]);
    if (gap > 1e-14 || marg > marginal_tol) status = kViolated;
  }
  return status;
}

int cmd_report(const std::string& dir, double marginal_tol, double slack) {
  const ConvergenceReport r = read_report_file((fs::path(dir) / "report.csv").string());
  if (r.rows.empty()) {
    std::cerr << "mlift: report has no rows\n";
    return kViolated;
  }
  int status = kOk;
  for (const ConvergenceRow& row : r.rows) {
    std::vector<std::string> bad;
    if (!(row.marginal_l1 <= marginal_tol)) bad.push_back("marginal");
    if (!(row.kestimate_slack >= -slack)) bad.push_back("mass-loss bound");
    if (!(row.final_slack >= -slack)) bad.push_back("deviation bound");
    std::cout << "row " << row.n << '\t' << format_double(row.psi_h1);
    for (const std::string& b : bad) std::cout << "\tFAIL " << b;
    std::cout << '\n';
    if (!bad.empty()) status = kViolated;
  }
  const double first = r.rows.front().psi_h1, last = r.rows.back().psi_h1;
  std::cout << "psi_h1 ratio\t" << format_double(first > 0.0 ? last / first : 0.0) << '\n';
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wavefunctions with prescribed one-body densities"};
  app.require_subcommand(1);
  app.add_flag("--trace", g_trace, "Stream stage lines (TSV) to stderr");

  std::string config;
  auto* run = app.add_subcommand("run", "Run the full pipeline from a config file");
  run->add_option("config", config)->required()->check(CLI::ExistingFile);

  std::string phi_path, rho_path, out = "phi_n.wff";
  double tol = 1e-12, marginal_tol = 1e-9;
  auto* re = app.add_subcommand("reallocate", "Reallocate |phi| onto a target density");
  re->add_option("phi", phi_path)->required()->check(CLI::ExistingFile);
  re->add_option("rho_n", rho_path)->required()->check(CLI::ExistingFile);
  re->add_option("-o,--out", out, "Output field file")->capture_default_str();
  re->add_option("--tol", tol, "Excess residual tolerance")->capture_default_str();
  re->add_option("--marginal-tol", marginal_tol)->capture_default_str();

  std::string u_path, smooth_out = "u_eps.wff";
  double eps = 0.0;
  auto* sm = app.add_subcommand("smooth", "Marginal-preserving smoothing of sqrt|u|^2");
  sm->add_option("u", u_path)->required()->check(CLI::ExistingFile);
  sm->add_option("--eps", eps, "Gaussian variance")->required()->check(CLI::PositiveNumber);
  sm->add_option("-o,--out", smooth_out, "Output field file")->capture_default_str();
  sm->add_option("--marginal-tol", marginal_tol)->capture_default_str();

  std::string psi_path, lift_dir = ".";
  std::vector<std::string> phi_paths;
  auto* li = app.add_subcommand("lift", "Attach smoothed signs of psi to moduli phi_n");
  li->add_option("psi", psi_path)->required()->check(CLI::ExistingFile);
  li->add_option("phi_n", phi_paths)->required()->check(CLI::ExistingFile);
  li->add_option("-o,--out-dir", lift_dir, "Directory for psi_n files")->capture_default_str();
  li->add_option("--marginal-tol", marginal_tol)->capture_default_str();

  std::string report_dir;
  double slack = 1e-10;
  auto* rp = app.add_subcommand("report", "Check the invariants recorded in <dir>/report.csv");
  rp->add_option("dir", report_dir)->required()->check(CLI::ExistingDirectory);
  rp->add_option("--marginal-tol", marginal_tol)->capture_default_str();
  rp->add_option("--slack", slack, "Slack on the bound columns")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config);
    if (*re) return cmd_reallocate(phi_path, rho_path, out, tol, marginal_tol);
    if (*sm) return cmd_smooth(u_path, eps, smooth_out, marginal_tol);
    if (*li) return cmd_lift(psi_path, phi_paths, lift_dir, marginal_tol);
    if (*rp) return cmd_report(report_dir, marginal_tol, slack);
  } catch (const PipelineError& e) {
    std::cerr << "mlift: stage " << e.stage() << ": " << e.what() << '\n';
    return kViolated;
  } catch (const std::exception& e) {
    std::cerr << "mlift: " << e.what() << '\n';
    return kFailed;
  }
  return kFailed;
}
