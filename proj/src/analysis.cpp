#include "vegdyn/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "vegdyn/errors.hpp"
#include "vegdyn/gke.hpp"
#include "vegdyn/ssa.hpp"

namespace vegdyn::analysis {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::size_t kScanPoints = 10000;
constexpr double kMergeTol = 1e-6;
constexpr double kDiffStep = 1e-6;
}  // namespace

std::string to_string(Stability s) { return s == Stability::stable ? "stable" : "unstable"; }
std::string to_string(EquilibriumKind k) { return k == EquilibriumKind::trivial ? "trivial" : "nontrivial"; }

double rhs_2state(double grass, double jbar, const SigmoidParams& phi, double density) {
  const double u = density * grass;
  return (1.0 - grass) * (eval_sigmoid(phi, u) - jbar * u);
}

std::vector<EquilibriumPoint> equilibria_2state(double jbar, const SigmoidParams& phi, double density) {
  if (!(jbar >= 0.0) || !std::isfinite(jbar)) throw InvalidInput("equilibria need jbar >= 0");
  if (!(density > 0.0) || !std::isfinite(density)) throw InvalidInput("equilibria need a positive density");
  const auto h = [&](double g) { return eval_sigmoid(phi, density * g) - jbar * density * g; };

  std::vector<EquilibriumPoint> out;
  EquilibriumPoint trivial;
  trivial.jbar = jbar;
  trivial.grass = 1.0;
  trivial.kind = EquilibriumKind::trivial;
  // f'(1) = -h(1)
  trivial.stability = h(1.0) > 0.0 ? Stability::stable : Stability::unstable;
  out.push_back(trivial);

  std::vector<double> roots;
  double g0 = 0.0, h0 = h(0.0);
  for (std::size_t k = 1; k <= kScanPoints; ++k) {
    const double g1 = static_cast<double>(k) / kScanPoints;
    const double h1 = h(g1);
    if (h0 == 0.0) {
      roots.push_back(g0);
    } else if ((h0 < 0.0) != (h1 < 0.0) && h1 != 0.0) {
      double lo = g0, hi = g1, hlo = h0;
      for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double hm = h(mid);
        if (hm == 0.0) {
          lo = hi = mid;
          break;
        }
        if ((hm < 0.0) == (hlo < 0.0)) {
          lo = mid;
          hlo = hm;
        } else {
          hi = mid;
        }
      }
      roots.push_back(0.5 * (lo + hi));
    }
    g0 = g1;
    h0 = h1;
  }
  for (double r : roots) {
    if (r > 1.0 - kMergeTol) continue;
    if (out.size() > 1 && std::abs(r - out.back().grass) < kMergeTol) continue;
    EquilibriumPoint e;
    e.jbar = jbar;
    e.grass = r;
    e.kind = EquilibriumKind::nontrivial;
    const double lo = std::max(0.0, r - kDiffStep), hi = std::min(1.0, r + kDiffStep);
    const double slope = (rhs_2state(hi, jbar, phi, density) - rhs_2state(lo, jbar, phi, density)) / (hi - lo);
    e.stability = slope < 0.0 ? Stability::stable : Stability::unstable;
    e.residual = std::abs(rhs_2state(r, jbar, phi, density));
    out.push_back(e);
  }
  return out;
}

BifurcationSweep bifurcation_sweep(std::span<const double> jbar_grid, const SigmoidParams& phi) {
  if (jbar_grid.empty()) throw InvalidInput("bifurcation sweep needs a nonempty grid");
  for (std::size_t k = 1; k < jbar_grid.size(); ++k)
    if (!(jbar_grid[k] > jbar_grid[k - 1])) throw InvalidInput("jbar grid must increase");
  BifurcationSweep out;
  const auto nontrivial = [&](double j) {
    auto eq = equilibria_2state(j, phi);
    eq.erase(eq.begin());
    return eq;
  };
  std::vector<std::size_t> counts;
  for (double j : jbar_grid) {
    auto eq = equilibria_2state(j, phi);
    counts.push_back(eq.size() - 1);
    out.branches.insert(out.branches.end(), eq.begin(), eq.end());
  }
  const double tc = eval_sigmoid(phi, 1.0);
  if (tc >= jbar_grid.front() && tc <= jbar_grid.back())
    out.bifurcations.push_back({Bifurcation::Kind::transcritical, tc, 1.0});
  for (std::size_t k = 1; k < jbar_grid.size(); ++k) {
    const long diff = static_cast<long>(counts[k]) - static_cast<long>(counts[k - 1]);
    if (std::abs(diff) < 2) continue;
    double lo = jbar_grid[k - 1], hi = jbar_grid[k];
    const std::size_t c_lo = counts[k - 1];
    while (hi - lo > 1e-6) {
      const double mid = 0.5 * (lo + hi);
      if (nontrivial(mid).size() == c_lo)
        lo = mid;
      else
        hi = mid;
    }
    // the colliding pair: closest neighbours on the side that still has them
    const auto eq = nontrivial(diff > 0 ? hi : lo);
    double grass = kNaN, gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < eq.size(); ++i)
      if (eq[i].grass - eq[i - 1].grass < gap) {
        gap = eq[i].grass - eq[i - 1].grass;
        grass = 0.5 * (eq[i].grass + eq[i - 1].grass);
      }
    out.bifurcations.push_back({Bifurcation::Kind::saddle_node, 0.5 * (lo + hi), grass});
  }
  std::sort(out.bifurcations.begin(), out.bifurcations.end(),
            [](const Bifurcation& a, const Bifurcation& b) { return a.jbar < b.jbar; });
  return out;
}

// ---------------------------------------------------------------------------

LineFit fit_line(std::span<const double> x, std::span<const double> y, double confidence) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidInput("line fit needs at least two points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw InvalidInput("line fit needs distinct abscissae");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (x.size() > 2) {
    double ss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = y[i] - f.intercept - f.slope * x[i];
      ss += r * r;
    }
    const double df = n - 2.0;
    f.slope_stderr = std::sqrt(ss / df / sxx);
    boost::math::students_t dist(df);
    const double q = boost::math::quantile(boost::math::complement(dist, 0.5 * (1.0 - confidence)));
    f.ci_low = f.slope - q * f.slope_stderr;
    f.ci_high = f.slope + q * f.slope_stderr;
  } else {
    f.slope_stderr = std::numeric_limits<double>::infinity();
    f.ci_low = -std::numeric_limits<double>::infinity();
    f.ci_high = std::numeric_limits<double>::infinity();
  }
  return f;
}

ConvergenceResult convergence_study(const ModelSpec& model, std::span<const std::size_t> n_list,
                                    const ConvergenceOptions& options) {
  if (model.domain().continuous()) throw InvalidInput("convergence study runs on patch domains");
  if (n_list.empty() || options.replicas == 0) throw InvalidInput("convergence study needs N values and replicas");
  std::vector<double> snaps = options.snapshot_times;
  if (snaps.empty())
    for (double t = 1.0; t <= options.t_end + 1e-12; t += 1.0) snaps.push_back(t);

  const auto grid = gke::make_grid(model.measure(), 0, gke::Boundary::none);
  const auto ref = gke::integrate(model, grid, gke::initial_field(model, grid), options.gke_step, options.t_end, snaps);
  const std::size_t m = grid.size();
  const std::size_t k = model.state_count();

  ConvergenceResult out;
  out.n_list.assign(n_list.begin(), n_list.end());
  out.rows.resize(n_list.size() * options.replicas);
  ssa::Options sim;
  sim.record_events = false;
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t idx = 0; idx < out.rows.size(); ++idx) {
    try {
      const std::size_t n = n_list[idx / options.replicas];
      const std::size_t rep = idx % options.replicas;
      const auto res = ssa::simulate(model, n, options.t_end, options.seed, snaps, sim, mix64(n) ^ rep);
      std::vector<std::size_t> patch_of(n);
      std::vector<std::size_t> per_patch(m, 0);
      for (std::size_t i = 0; i < n; ++i) {
        patch_of[i] = static_cast<std::size_t>(std::llround(res.trajectory.positions[i]));
        ++per_patch[patch_of[i]];
      }
      double err = 0.0;
      std::vector<std::size_t> counts(m * k);
      for (std::size_t s = 0; s < snaps.size(); ++s) {
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) ++counts[patch_of[i] * k + res.snapshots[s].states[i]];
        for (std::size_t p = 0; p < m; ++p) {
          if (!per_patch[p]) continue;
          for (std::size_t x = 0; x < k; ++x) {
            const double emp = static_cast<double>(counts[p * k + x]) / static_cast<double>(per_patch[p]);
            err = std::max(err, std::abs(emp - ref.snapshots[s].at(p, x)));
          }
        }
      }
      out.rows[idx] = {n, rep, err, res.trajectory.absorbed};
    } catch (...) {
#pragma omp critical(vegdyn_convergence_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<double> lx, ly;
  bool positive = true;
  for (std::size_t a = 0; a < n_list.size(); ++a) {
    double sum = 0.0, sq = 0.0;
    std::size_t used = 0;
    for (std::size_t r = 0; r < options.replicas; ++r) {
      const auto& row = out.rows[a * options.replicas + r];
      if (options.exclude_absorbed && row.absorbed) continue;
      sum += row.error;
      sq += row.error * row.error;
      ++used;
    }
    const double mean = used ? sum / static_cast<double>(used) : kNaN;
    const double var = used > 1 ? (sq - static_cast<double>(used) * mean * mean) / static_cast<double>(used - 1) : 0.0;
    out.mean_error.push_back(mean);
    out.stderr_error.push_back(used ? std::sqrt(std::max(var, 0.0) / static_cast<double>(used)) : kNaN);
    if (!(mean > 0.0)) positive = false;
    lx.push_back(std::log(static_cast<double>(n_list[a])));
    ly.push_back(std::log(mean));
  }
  if (positive && n_list.size() >= 2) {
    const auto fit = fit_line(lx, ly);
    out.slope = fit.slope;
    out.slope_stderr = fit.slope_stderr;
    out.slope_ci_low = fit.ci_low;
    out.slope_ci_high = fit.ci_high;
  } else {
    out.slope = out.slope_stderr = out.slope_ci_low = out.slope_ci_high = kNaN;
  }
  return out;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw InvalidInput("pearson needs two equal-length samples");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) return kNaN;
  return sab / std::sqrt(saa * sbb);
}

CorrelationResult pairwise_correlation(const ModelSpec& model, std::size_t n, const CorrelationOptions& options) {
  if (n < 2) throw InvalidInput("pairwise correlation needs N >= 2");
  if (options.replicas < 2 || options.site_pairs == 0) throw InvalidInput("need pairs and at least two replicas");
  const std::size_t np = options.site_pairs;
  const std::size_t reps = options.replicas;
  const std::size_t k = model.state_count();

  Rng pick = make_stream(options.seed, 0x5eed0fa115ULL);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t p = 0; p < np; ++p) {
    const auto i = std::min(n - 1, static_cast<std::size_t>(uniform01(pick) * static_cast<double>(n)));
    auto j = std::min(n - 2, static_cast<std::size_t>(uniform01(pick) * static_cast<double>(n - 1)));
    if (j >= i) ++j;
    pairs.emplace_back(i, j);
  }

  // [rep][pair][0|1]
  std::vector<StateIndex> obs(reps * np * 2);
  ssa::Options sim;
  sim.record_events = false;
  const double snap[] = {options.t};
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t r = 0; r < reps; ++r) {
    try {
      const auto res = ssa::simulate(model, n, options.t, options.seed, snap, sim, r + 1);
      const auto& st = res.snapshots.front().states;
      for (std::size_t p = 0; p < np; ++p) {
        obs[(r * np + p) * 2] = st[pairs[p].first];
        obs[(r * np + p) * 2 + 1] = st[pairs[p].second];
      }
    } catch (...) {
#pragma omp critical(vegdyn_correlation_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  CorrelationResult out;
  std::vector<double> a(reps * np), b(reps * np), bn(reps * np);
  for (StateIndex x = 0; x < k; ++x) {
    for (std::size_t r = 0; r < reps; ++r)
      for (std::size_t p = 0; p < np; ++p) {
        a[r * np + p] = obs[(r * np + p) * 2] == x ? 1.0 : 0.0;
        b[r * np + p] = obs[(r * np + p) * 2 + 1] == x ? 1.0 : 0.0;
        bn[r * np + p] = obs[(((r + 1) % reps) * np + p) * 2 + 1] == x ? 1.0 : 0.0;
      }
    const double c = pearson(a, b);
    out.pooled.push_back(c);
    if (std::isfinite(c)) out.max_abs_pooled = std::max(out.max_abs_pooled, std::abs(c));
    const double cn = pearson(a, bn);
    if (std::isfinite(cn)) out.null_max_abs_pooled = std::max(out.null_max_abs_pooled, std::abs(cn));
  }
  std::vector<double> pa(reps), pb(reps), pn(reps);
  for (std::size_t p = 0; p < np; ++p) {
    bool used = false;
    for (StateIndex x = 0; x < k; ++x) {
      for (std::size_t r = 0; r < reps; ++r) {
        pa[r] = obs[(r * np + p) * 2] == x ? 1.0 : 0.0;
        pb[r] = obs[(r * np + p) * 2 + 1] == x ? 1.0 : 0.0;
        pn[r] = obs[(((r + 1) % reps) * np + p) * 2 + 1] == x ? 1.0 : 0.0;
      }
      const double c = pearson(pa, pb);
      if (!std::isfinite(c)) continue;
      used = true;
      out.max_abs_pair = std::max(out.max_abs_pair, std::abs(c));
      const double cn = pearson(pa, pn);
      if (std::isfinite(cn)) out.null_max_abs_pair = std::max(out.null_max_abs_pair, std::abs(cn));
    }
    if (used)
      ++out.pairs_used;
    else
      ++out.pairs_skipped;
  }
  return out;
}

// ---------------------------------------------------------------------------

std::optional<Front> front_position(std::span<const double> x, std::span<const double> forest, double threshold) {
  if (x.size() != forest.size()) throw InvalidInput("front: positions and values differ in length");
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidInput("front threshold must lie in (0, 1)");
  for (std::size_t k = 0; k + 1 < x.size(); ++k) {
    const double a = forest[k] - threshold;
    const double b = forest[k + 1] - threshold;
    if (!std::isfinite(a) || !std::isfinite(b)) continue;
    if ((a < 0.0) == (b < 0.0)) continue;
    Front f;
    f.position = x[k] + (x[k + 1] - x[k]) * (-a) / (b - a);
    f.forest_on_right = b > a;
    return f;
  }
  return std::nullopt;
}

std::optional<double> wave_speed(std::span<const double> times, std::span<const double> positions,
                                 bool forest_on_right) {
  if (times.size() != positions.size()) throw InvalidInput("wave speed: times and positions differ in length");
  std::vector<double> t, p;
  for (std::size_t i = 0; i < times.size(); ++i)
    if (std::isfinite(positions[i]) && std::isfinite(times[i])) {
      t.push_back(times[i]);
      p.push_back(positions[i]);
    }
  if (t.size() < 2) return std::nullopt;
  if (std::all_of(t.begin(), t.end(), [&](double v) { return v == t.front(); })) return std::nullopt;
  const double slope = fit_line(t, p).slope;
  return forest_on_right ? -slope : slope;
}

std::optional<PeriodEstimate> estimate_period(std::span<const double> times, std::span<const double> values,
                                              double t_from, double t_to, double hysteresis) {
  if (times.size() != values.size()) throw InvalidInput("period: times and values differ in length");
  std::vector<double> t, v;
  for (std::size_t i = 0; i < times.size(); ++i)
    if (times[i] >= t_from && times[i] <= t_to && std::isfinite(values[i])) {
      t.push_back(times[i]);
      v.push_back(values[i]);
    }
  if (t.size() < 3) return std::nullopt;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  PeriodEstimate est;
  bool armed = hysteresis <= 0.0;
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    if (v[i] < mean - hysteresis) armed = true;
    if (armed && v[i] < mean && v[i + 1] >= mean) {
      est.crossings.push_back(t[i] + (t[i + 1] - t[i]) * (mean - v[i]) / (v[i + 1] - v[i]));
      armed = hysteresis <= 0.0;
    }
  }
  if (est.crossings.size() < 3) return std::nullopt;
  std::vector<double> gaps;
  for (std::size_t i = 1; i < est.crossings.size(); ++i) gaps.push_back(est.crossings[i] - est.crossings[i - 1]);
  const double mg = std::accumulate(gaps.begin(), gaps.end(), 0.0) / static_cast<double>(gaps.size());
  double ss = 0.0, change = 0.0;
  for (std::size_t i = 0; i < gaps.size(); ++i) {
    ss += (gaps[i] - mg) * (gaps[i] - mg);
    if (i) change = std::max(change, std::abs(gaps[i] - gaps[i - 1]));
  }
  est.period = mg;
  est.relative_spread = std::sqrt(ss / static_cast<double>(gaps.size())) / mg;
  est.max_consecutive_change = change / mg;
  return est;
}

}  // namespace vegdyn::analysis
