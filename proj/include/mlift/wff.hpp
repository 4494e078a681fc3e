#pragma once

// "wff1" field files: one ASCII header line
//   wff1 <d> <N_or_1> <M> <L> <real|complex>
// then whitespace-separated values in row-major order, complex values as
// interleaved "re im". Numbers are written with 17 significant digits.

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mlift/errors.hpp"
#include "mlift/grid.hpp"

namespace mlift {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Raw contents of a field file, before it is bound to a field type.
struct WffData {
  int d = 1;
  int n = 1;  // particle count, 1 for single-particle fields
  int M = 2;
  double L = 1.0;
  bool complex = false;
  std::vector<double> raw;  // interleaved re/im when complex

  GridSpec grid() const {
    return n == 1 ? make_site_grid(d, L, M) : make_grid(d, n, L, M);
  }
};

namespace detail {

template <class T>
void write_wff(std::ostream& os, const GridSpec& g, int n, std::span<const T> v) {
  constexpr bool is_complex = std::is_same_v<T, Complex>;
  os << "wff1 " << g.d << ' ' << n << ' ' << g.M << ' ' << format_double(g.L)
     << ' ' << (is_complex ? "complex" : "real") << '\n';
  for (const T& x : v) {
    if constexpr (is_complex) {
      os << format_double(x.real()) << ' ' << format_double(x.imag()) << '\n';
    } else {
      os << format_double(x) << '\n';
    }
  }
  if (!os) throw FormatError("wff: write failed");
}

}  // namespace detail

inline void write_wff(std::ostream& os, const ScalarField& f) {
  detail::write_wff(os, f.grid(), 1, f.values());
}

template <class T>
void write_wff(std::ostream& os, const ConfigField<T>& f) {
  detail::write_wff(os, f.grid(), f.grid().N, f.values());
}

inline WffData read_wff(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("wff: missing header");
  std::istringstream hs(line);
  std::string magic, kind;
  WffData out;
  if (!(hs >> magic >> out.d >> out.n >> out.M >> out.L >> kind) ||
      magic != "wff1") {
    throw FormatError("wff: malformed header '" + line + "'");
  }
  if (kind != "real" && kind != "complex") {
    throw FormatError("wff: unknown scalar kind '" + kind + "'");
  }
  out.complex = kind == "complex";
  const GridSpec g = out.grid();
  const std::size_t count =
      (out.n == 1 ? g.sites() : g.nodes()) * (out.complex ? 2 : 1);
  out.raw.reserve(count);
  std::string tok;
  while (is >> tok) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      throw FormatError("wff: bad number '" + tok + "'");
    }
    if (used != tok.size() || !std::isfinite(v)) {
      throw FormatError("wff: bad number '" + tok + "'");
    }
    out.raw.push_back(v);
  }
  if (out.raw.size() != count) {
    throw FormatError("wff: expected " + std::to_string(count) +
                      " numbers, got " + std::to_string(out.raw.size()));
  }
  return out;
}

inline WffData read_wff_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("wff: cannot open " + path);
  return read_wff(in);
}

/// Binds a single-particle file to `grid` (which may carry any N).
inline ScalarField to_scalar(const WffData& w, const GridSpec& grid) {
  if (w.n != 1 || w.complex) {
    throw FormatError("wff: expected a real single-particle field");
  }
  if (!grid.same_sites(w.grid())) {
    throw FormatError("wff: grid does not match");
  }
  return ScalarField(grid, w.raw);
}

inline ScalarField to_scalar(const WffData& w) { return to_scalar(w, w.grid()); }

inline RealConfig to_real_config(const WffData& w) {
  if (w.n < 2 || w.complex) throw FormatError("wff: expected a real N-particle field");
  return RealConfig(w.grid(), w.raw);
}

inline ComplexConfig to_complex_config(const WffData& w) {
  if (w.n < 2) throw FormatError("wff: expected an N-particle field");
  if (!w.complex) return to_complex(to_real_config(w));
  std::vector<Complex> v(w.raw.size() / 2);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = {w.raw[2 * i], w.raw[2 * i + 1]};
  return ComplexConfig(w.grid(), std::move(v));
}

template <class Field>
void save_wff(const std::string& path, const Field& f) {
  std::ofstream out(path);
  if (!out) throw FormatError("wff: cannot open " + path + " for writing");
  write_wff(out, f);
}

}  // namespace mlift
