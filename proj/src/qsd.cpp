#include "vegdyn/qsd.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <sstream>

#include "vegdyn/errors.hpp"

namespace vegdyn::qsd {

std::string to_string(TimeScale s) { return s == TimeScale::printed ? "printed" : "per_event"; }

TimeScale time_scale_from_string(std::string_view s) {
  if (s == "printed") return TimeScale::printed;
  if (s == "per_event") return TimeScale::per_event;
  throw InvalidInput("unknown time scale '" + std::string(s) + "'");
}

double RestrictedGenerator::at(std::size_t i, std::size_t j) const {
  if (i >= n || j >= n) throw InvalidInput("generator index out of range");
  if (i == j) return diag[i];
  if (j == i + 1) return super[i];
  if (i == j + 1) return sub[i];
  return 0.0;
}

RestrictedGenerator build_restricted_generator(std::size_t n, double jbar, const SigmoidParams& phi,
                                               TimeScale scale) {
  if (n == 0) throw InvalidInput("restricted generator needs N >= 1");
  if (!(jbar > 0.0) || !std::isfinite(jbar)) throw InvalidInput("restricted generator needs jbar > 0");
  if (!(eval_sigmoid(phi, 0.0) > 0.0)) throw InvalidInput("QSD existence needs phi(0) > 0");
  RestrictedGenerator g;
  g.n = n;
  g.jbar = jbar;
  g.scale = scale;
  g.diag.resize(n);
  g.sub.resize(n);
  g.super.assign(n > 1 ? n - 1 : 0, 0.0);
  const double nn = static_cast<double>(n);
  const double f = scale == TimeScale::per_event ? nn : 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double k = static_cast<double>(i + 1);
    const double grass = (nn - k) / nn;
    const double down = (k / nn) * eval_sigmoid(phi, grass) * f;
    const double up = (k * jbar / nn) * grass * f;
    g.sub[i] = down;
    if (i + 1 < n) g.super[i] = up;
    g.diag[i] = -(down + (i + 1 < n ? up : 0.0));
  }
  return g;
}

namespace {

// Tridiagonal solve with partial pivoting (LAPACK gtsv scheme); dl is reused
// for the second superdiagonal created by row swaps.
std::vector<double> solve_pivoting(std::vector<double> dl, std::vector<double> d, std::vector<double> du,
                                   std::vector<double> b) {
  const std::size_t n = d.size();
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (std::abs(d[i]) >= std::abs(dl[i])) {
      if (d[i] == 0.0) throw NumericAbort("singular restricted generator");
      const double m = dl[i] / d[i];
      d[i + 1] -= m * du[i];
      b[i + 1] -= m * b[i];
      dl[i] = 0.0;
    } else {
      const double m = d[i] / dl[i];
      d[i] = dl[i];
      const double t = d[i + 1];
      d[i + 1] = du[i] - m * t;
      if (i + 2 < n) {
        dl[i] = du[i + 1];
        du[i + 1] = -m * dl[i];
      } else {
        dl[i] = 0.0;
      }
      du[i] = t;
      const double bi = b[i];
      b[i] = b[i + 1];
      b[i + 1] = bi - m * b[i];
    }
  }
  if (d[n - 1] == 0.0) throw NumericAbort("singular restricted generator");
  std::vector<double> x(n);
  x[n - 1] = b[n - 1] / d[n - 1];
  if (n > 1) x[n - 2] = (b[n - 2] - du[n - 2] * x[n - 1]) / d[n - 2];
  for (std::size_t i = n >= 2 ? n - 2 : 0; i-- > 0;) x[i] = (b[i] - du[i] * x[i + 1] - dl[i] * x[i + 2]) / d[i];
  return x;
}

}  // namespace

std::vector<double> solve_negative_transpose(const RestrictedGenerator& gen, std::span<const double> b) {
  const std::size_t n = gen.n;
  if (b.size() != n) throw InvalidInput("right-hand side has the wrong size");
  // A = -Q^T is an M-matrix whose column sums are the row leaks of -Q. The
  // Schur-complement leaks stay nonnegative and every pivot is a sum of
  // nonnegative terms, so elimination needs no subtraction.
  std::vector<double> piv(n), z(n);
  double leak = gen.leak();
  bool ok = true;
  for (std::size_t i = 0; i < n; ++i) {
    const double up = i + 1 < n ? gen.super[i] : 0.0;
    if (i > 0) leak = gen.sub[i] * leak / piv[i - 1];
    piv[i] = leak + up;
    if (!(piv[i] > 0.0) || !std::isfinite(piv[i])) {
      ok = false;
      break;
    }
  }
  if (ok) {
    z[0] = b[0];
    for (std::size_t i = 1; i < n; ++i) z[i] = b[i] + gen.super[i - 1] / piv[i - 1] * z[i - 1];
    std::vector<double> y(n);
    y[n - 1] = z[n - 1] / piv[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) y[i] = (z[i] + gen.sub[i + 1] * y[i + 1]) / piv[i];
    return y;
  }
  // -Q^T: diagonal -diag, (i, i+1) = -sub[i+1], (i+1, i) = -super[i]
  std::vector<double> dl(n > 1 ? n - 1 : 0), d(n), du(n > 1 ? n - 1 : 0);
  for (std::size_t i = 0; i < n; ++i) d[i] = -gen.diag[i];
  for (std::size_t i = 0; i + 1 < n; ++i) {
    du[i] = -gen.sub[i + 1];
    dl[i] = -gen.super[i];
  }
  return solve_pivoting(dl, d, du, std::vector<double>(b.begin(), b.end()));
}

double grass_fraction(std::size_t n, std::size_t i) {
  return static_cast<double>(n - (i + 1)) / static_cast<double>(n);
}

namespace {

double residual_of(const RestrictedGenerator& g, const std::vector<double>& x, double rho) {
  double worst = 0.0;
  for (std::size_t j = 0; j < g.n; ++j) {
    // (xQ)_j = x_{j-1} Q(j-1, j) + x_j Q(j, j) + x_{j+1} Q(j+1, j)
    double v = x[j] * g.diag[j];
    if (j > 0) v += x[j - 1] * g.super[j - 1];
    if (j + 1 < g.n) v += x[j + 1] * g.sub[j + 1];
    worst = std::max(worst, std::abs(v + rho * x[j]));
  }
  return worst;
}

}  // namespace

QsdResult dominant_eigenpair(const RestrictedGenerator& gen, double tol, std::size_t max_iterations) {
  const std::size_t n = gen.n;
  QsdResult res;
  std::vector<double> x(n, 1.0 / static_cast<double>(n));
  double rho = 0.0, prev = -1.0;
  for (std::size_t it = 1; it <= max_iterations; ++it) {
    auto y = solve_negative_transpose(gen, x);
    // keep the sign that makes the largest-magnitude entry positive
    const auto big = std::max_element(y.begin(), y.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
    if (*big < 0.0)
      for (auto& v : y) v = -v;
    const double ysum = std::accumulate(y.begin(), y.end(), 0.0);
    const double xsum = std::accumulate(x.begin(), x.end(), 0.0);
    if (!(ysum > 0.0) || !std::isfinite(ysum)) throw NumericAbort("inverse iteration broke down");
    rho = xsum / ysum;
    for (auto& v : y) v /= ysum;
    x = std::move(y);
    res.residual = residual_of(gen, x, rho);
    res.iterations = it;
    if (res.residual < tol && std::abs(rho - prev) <= 1e-14 * rho) {
      res.rho = rho;
      res.qsd = std::move(x);
      for (auto& v : res.qsd) v = std::max(v, 0.0);
      return res;
    }
    prev = rho;
  }
  std::ostringstream os;
  os << "inverse iteration did not converge for N=" << n << ", jbar=" << gen.jbar;
  throw ConvergenceError(os.str(), res.residual);
}

Sweep qsd_sweep(std::span<const std::size_t> n_list, std::span<const double> jbar_grid, const SigmoidParams& phi,
                TimeScale scale, double tol) {
  if (n_list.empty() || jbar_grid.empty()) throw InvalidInput("qsd sweep needs nonempty grids");
  Sweep sweep;
  sweep.rows.resize(n_list.size() * jbar_grid.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t idx = 0; idx < sweep.rows.size(); ++idx) {
    const std::size_t a = idx / jbar_grid.size();
    const std::size_t b = idx % jbar_grid.size();
    auto& row = sweep.rows[idx];
    row.n = n_list[a];
    row.jbar = jbar_grid[b];
    try {
      row.result = dominant_eigenpair(build_restricted_generator(row.n, row.jbar, phi, scale), tol);
    } catch (...) {
#pragma omp critical(vegdyn_qsd_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  for (std::size_t a = 0; a < n_list.size(); ++a)
    for (std::size_t b = 1; b < jbar_grid.size(); ++b) {
      const auto& lo = sweep.rows[a * jbar_grid.size() + b - 1];
      const auto& hi = sweep.rows[a * jbar_grid.size() + b];
      if (hi.jbar > lo.jbar && hi.result.rho > lo.result.rho * (1.0 + 1e-12))
        sweep.monotonicity_violations.emplace_back(hi.n, hi.jbar);
    }
  return sweep;
}

}  // namespace vegdyn::qsd
