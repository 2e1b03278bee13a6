#include "vegdyn/ssa.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <sstream>

#include "vegdyn/errors.hpp"

namespace vegdyn::ssa {

namespace {

StateIndex draw_categorical(std::span<const double> probs, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t s = 0; s < probs.size(); ++s) {
    if (probs[s] <= 0.0) continue;
    acc += probs[s];
    last = s;
    if (u < acc) return s;
  }
  return last;
}

// Fisher-Yates with our own uniform draws so shuffles match across platforms.
template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    j = std::min(j, i - 1);
    std::swap(v[i - 1], v[j]);
  }
}

// Largest-remainder apportionment of n items over probs.
std::vector<std::size_t> apportion(std::span<const double> probs, std::size_t n) {
  std::vector<std::size_t> out(probs.size(), 0);
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t used = 0;
  for (std::size_t s = 0; s < probs.size(); ++s) {
    const double exact = probs[s] * static_cast<double>(n);
    out[s] = static_cast<std::size_t>(std::floor(exact));
    used += out[s];
    rem.emplace_back(exact - std::floor(exact), s);
  }
  std::stable_sort(rem.begin(), rem.end(), [](auto& a, auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; used < n && k < rem.size(); ++k, ++used) ++out[rem[k].second];
  return out;
}

double separation(const Kernel& k, Location a, Location b) {
  if (auto* g = std::get_if<Kernel::GaussianRing>(&k.shape())) return ring_distance(a, b, g->length);
  return std::abs(a - b);
}

}  // namespace

// ---------------------------------------------------------------------------

SiteSystem::SiteSystem(ModelSpec model, std::vector<Location> positions, std::vector<StateIndex> states,
                       Rng rng, Options options)
    : model_(std::move(model)),
      options_(options),
      positions_(std::move(positions)),
      states_(std::move(states)),
      rng_(std::move(rng)) {
  if (states_.empty()) throw InvalidInput("a site system needs N >= 1");
  if (positions_.size() != states_.size()) throw InvalidInput("positions and states differ in length");
  if (states_.size() > std::numeric_limits<std::uint32_t>::max())
    throw InvalidInput("too many sites");
  const std::size_t k = model_.state_count();
  counts_.assign(k, 0);
  for (auto s : states_) {
    if (s >= k) throw InvalidInput("site state out of range");
    ++counts_[s];
  }
  patch_mode_ = !model_.domain().continuous();
  if (patch_mode_) {
    patches_ = model_.domain().patches;
    patch_of_.resize(size());
    for (std::size_t i = 0; i < size(); ++i) {
      const auto p = std::llround(positions_[i]);
      if (p < 0 || static_cast<std::size_t>(p) >= patches_) throw InvalidInput("site patch out of range");
      patch_of_[i] = static_cast<std::size_t>(p);
    }
  } else {
    build_rows();
  }
  refresh();
}

void SiteSystem::build_rows() {
  const auto& keys = model_.field_keys();
  const std::size_t n = size();
  key_shape_.assign(keys.size(), 0);
  key_amplitude_.assign(keys.size(), 1.0);
  for (std::size_t q = 0; q < keys.size(); ++q) {
    const Kernel& k = model_.kernels()[keys[q].kernel].kernel;
    if (k.is_patch()) throw InvalidInput("patch kernel on a continuous domain");
    if (k.sup_norm() == 0.0) {
      shapes_.push_back(Kernel::constant(0.0));
      key_shape_[q] = shapes_.size() - 1;
      key_amplitude_[q] = 0.0;
      continue;
    }
    // kernels that differ only by amplitude share one row store
    std::size_t found = shapes_.size();
    for (std::size_t s = 0; s < shapes_.size(); ++s)
      if (shapes_[s].shape() == k.shape() && shapes_[s].amplitude() > 0.0) found = s;
    if (found == shapes_.size()) shapes_.push_back(k);
    key_shape_[q] = found;
    key_amplitude_[q] = k.amplitude() / shapes_[found].amplitude();
  }

  std::size_t gaussian_shapes = 0;
  for (const auto& s : shapes_) gaussian_shapes += s.is_gaussian() ? 1 : 0;
  const double dense_bytes = static_cast<double>(gaussian_shapes) * static_cast<double>(n) *
                             static_cast<double>(n) * sizeof(double);
  const bool dense_fits = dense_bytes <= static_cast<double>(options_.memory_budget_bytes);

  row_mode_.assign(shapes_.size(), RowMode::constant);
  dense_.assign(shapes_.size(), {});
  sparse_offsets_.assign(shapes_.size(), {});
  sparse_index_.assign(shapes_.size(), {});
  sparse_weight_.assign(shapes_.size(), {});
  for (std::size_t s = 0; s < shapes_.size(); ++s) {
    const Kernel& k = shapes_[s];
    if (!k.is_gaussian()) continue;
    if (options_.cutoff_sigmas) {
      row_mode_[s] = RowMode::sparse;
      const double rc = *options_.cutoff_sigmas * *k.sigma();
      auto& off = sparse_offsets_[s];
      auto& idx = sparse_index_[s];
      auto& w = sparse_weight_[s];
      off.assign(1, 0);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const double d = separation(k, positions_[i], positions_[j]);
          if (d > rc) continue;
          idx.push_back(static_cast<std::uint32_t>(j));
          w.push_back(k.at_distance(d));
        }
        off.push_back(idx.size());
      }
    } else if (dense_fits) {
      row_mode_[s] = RowMode::dense;
      auto& d = dense_[s];
      d.assign(n * n, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) d[i * n + j] = d[j * n + i] = k(positions_[i], positions_[j]);
    } else {
      row_mode_[s] = RowMode::on_demand;
    }
  }
}

double SiteSystem::kernel_weight(std::size_t key, std::size_t i, std::size_t j) const {
  const Kernel& k = shapes_[key_shape_[key]];
  const double d = separation(k, positions_[i], positions_[j]);
  if (row_mode_[key_shape_[key]] == RowMode::sparse && d > *options_.cutoff_sigmas * *k.sigma()) return 0.0;
  return key_amplitude_[key] * k(positions_[i], positions_[j]);
}

double SiteSystem::patch_field(std::size_t key, std::size_t patch) const {
  const auto& fk = model_.field_keys()[key];
  const Kernel& w = model_.kernels()[fk.kernel].kernel;
  const std::size_t k = model_.state_count();
  double acc = 0.0;
  for (std::size_t q = 0; q < patches_; ++q) {
    const auto c = members_[q * k + fk.depends_on].size();
    if (c) acc += w(static_cast<Location>(patch), static_cast<Location>(q)) * static_cast<double>(c);
  }
  return acc / static_cast<double>(size());
}

std::vector<double> SiteSystem::recompute_field(std::size_t key) const {
  const auto& fk = model_.field_keys().at(key);
  const std::size_t n = size();
  std::vector<double> out(n, 0.0);
  if (patch_mode_) {
    const Kernel& w = model_.kernels()[fk.kernel].kernel;
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        if (states_[j] == fk.depends_on) acc += w(positions_[i], positions_[j]);
      out[i] = acc / static_cast<double>(n);
    }
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (states_[j] == fk.depends_on) acc += kernel_weight(key, i, j);
    out[i] = acc / static_cast<double>(n);
  }
  return out;
}

double SiteSystem::field(std::size_t key, std::size_t site) const {
  if (patch_mode_) return patch_fields_[key * patches_ + patch_of_[site]];
  return fields_[key][site];
}

double SiteSystem::max_field_error() const {
  double worst = 0.0;
  for (std::size_t key = 0; key < model_.field_keys().size(); ++key) {
    const auto exact = recompute_field(key);
    const double scale = std::max(1e-300, *std::max_element(exact.begin(), exact.end()));
    for (std::size_t i = 0; i < size(); ++i) {
      const double denom = std::max(std::abs(exact[i]), 1e-12 * scale);
      const double err = std::abs(field(key, i) - exact[i]);
      if (err > 0.0) worst = std::max(worst, err / denom);
    }
  }
  return worst;
}

double SiteSystem::site_total_rate(std::size_t site) const {
  double total = 0.0;
  for (auto t : model_.outgoing(states_[site])) {
    const auto key = model_.field_of(t);
    total += model_.transitions()[t].rate(key ? field(*key, site) : 0.0);
  }
  return total;
}

std::vector<std::pair<StateIndex, double>> SiteSystem::transition_rates(std::size_t site) const {
  if (site >= size()) throw InvalidInput("site index out of range");
#ifndef NDEBUG
  for (std::size_t key = 0; key < model_.field_keys().size(); ++key) {
    const auto exact = recompute_field(key)[site];
    assert(std::abs(exact - field(key, site)) <= 1e-9 * std::max(1.0, std::abs(exact)));
  }
#endif
  std::vector<std::pair<StateIndex, double>> out;
  for (auto t : model_.outgoing(states_[site])) {
    const auto key = model_.field_of(t);
    const double r = model_.transitions()[t].rate(key ? field(*key, site) : 0.0);
    if (!std::isfinite(r)) throw NumericAbort("non-finite transition rate");
    assert(r <= model_.rate_bound(t) * (1.0 + 1e-9) + 1e-12);
    if (r > 0.0) out.emplace_back(model_.transitions()[t].to, r);
  }
  return out;
}

void SiteSystem::recompute_patch_rates() {
  const std::size_t k = model_.state_count();
  const std::size_t nkeys = model_.field_keys().size();
  patch_fields_.assign(nkeys * patches_, 0.0);
  for (std::size_t key = 0; key < nkeys; ++key)
    for (std::size_t p = 0; p < patches_; ++p) patch_fields_[key * patches_ + p] = patch_field(key, p);
  group_rate_.assign(patches_ * k, 0.0);
  patch_total_ = 0.0;
  for (std::size_t p = 0; p < patches_; ++p) {
    for (std::size_t s = 0; s < k; ++s) {
      double r = 0.0;
      for (auto t : model_.outgoing(s)) {
        const auto key = model_.field_of(t);
        r += model_.transitions()[t].rate(key ? patch_fields_[*key * patches_ + p] : 0.0);
      }
      group_rate_[p * k + s] = r;
      patch_total_ += r * static_cast<double>(members_[p * k + s].size());
    }
  }
  if (!std::isfinite(patch_total_)) throw NumericAbort("non-finite total event rate");
}

void SiteSystem::rebuild_tree() {
  const std::size_t n = size();
  tree_.assign(n + 1, 0.0);
  nonzero_sites_ = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tree_[i + 1] += site_rate_[i];
    if (site_rate_[i] > 0.0) ++nonzero_sites_;
    const std::size_t parent = (i + 1) + ((i + 1) & (~(i + 1) + 1));
    if (parent <= n) tree_[parent] += tree_[i + 1];
  }
}

void SiteSystem::update_site_rate(std::size_t site) {
  const double r = site_total_rate(site);
  if (!std::isfinite(r)) throw NumericAbort("non-finite transition rate");
  const double delta = r - site_rate_[site];
  if (delta == 0.0) return;
  if (site_rate_[site] > 0.0) --nonzero_sites_;
  if (r > 0.0) ++nonzero_sites_;
  site_rate_[site] = r;
  for (std::size_t i = site + 1; i < tree_.size(); i += i & (~i + 1)) tree_[i] += delta;
}

std::size_t SiteSystem::find_site(double target) const {
  // smallest index whose inclusive prefix sum exceeds target
  std::size_t pos = 0;
  std::size_t step = 1;
  while (step * 2 < tree_.size()) step *= 2;
  for (; step > 0; step /= 2) {
    if (pos + step < tree_.size() && tree_[pos + step] <= target) {
      pos += step;
      target -= tree_[pos];
    }
  }
  return std::min(pos, size() - 1);
}

void SiteSystem::refresh() {
  const std::size_t k = model_.state_count();
  const std::size_t n = size();
  since_refresh_ = 0;
  if (patch_mode_) {
    members_.assign(patches_ * k, {});
    slot_.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto& m = members_[patch_of_[i] * k + states_[i]];
      slot_[i] = m.size();
      m.push_back(i);
    }
    recompute_patch_rates();
    return;
  }
  const auto& keys = model_.field_keys();
  fields_.assign(keys.size(), std::vector<double>(n, 0.0));
  for (std::size_t key = 0; key < keys.size(); ++key) {
    const auto psi = keys[key].depends_on;
    auto& f = fields_[key];
    const std::size_t s = key_shape_[key];
    const double amp = key_amplitude_[key] / static_cast<double>(n);
    switch (row_mode_[s]) {
      case RowMode::constant:
        std::fill(f.begin(), f.end(), amp * shapes_[s].sup_norm() * static_cast<double>(counts_[psi]));
        break;
      case RowMode::dense:
        for (std::size_t j = 0; j < n; ++j) {
          if (states_[j] != psi) continue;
          const double* row = dense_[s].data() + j * n;
          for (std::size_t i = 0; i < n; ++i) f[i] += amp * row[i];
        }
        break;
      case RowMode::sparse:
        for (std::size_t j = 0; j < n; ++j) {
          if (states_[j] != psi) continue;
          for (auto e = sparse_offsets_[s][j]; e < sparse_offsets_[s][j + 1]; ++e)
            f[sparse_index_[s][e]] += amp * sparse_weight_[s][e];
        }
        break;
      case RowMode::on_demand:
        f = recompute_field(key);
        break;
    }
  }
  site_rate_.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    site_rate_[i] = site_total_rate(i);
    if (!std::isfinite(site_rate_[i])) throw NumericAbort("non-finite transition rate");
  }
  rebuild_tree();
  touched_.assign(n, 0);
  touch_stamp_ = 0;
}

double SiteSystem::total_rate() const {
  if (patch_mode_) return patch_total_;
  if (nonzero_sites_ == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = size(); i > 0; i -= i & (~i + 1)) total += tree_[i];
  return std::max(total, 0.0);
}

void SiteSystem::set_state(std::size_t site, StateIndex to) {
  if (site >= size()) throw InvalidInput("site index out of range");
  if (to >= model_.state_count()) throw InvalidInput("state index out of range");
  const StateIndex from = states_[site];
  if (from == to) return;
  const std::size_t k = model_.state_count();
  const std::size_t n = size();
  states_[site] = to;
  --counts_[from];
  ++counts_[to];

  if (patch_mode_) {
    auto& src = members_[patch_of_[site] * k + from];
    const std::size_t moved = src.back();
    src[slot_[site]] = moved;
    slot_[moved] = slot_[site];
    src.pop_back();
    auto& dst = members_[patch_of_[site] * k + to];
    slot_[site] = dst.size();
    dst.push_back(site);
    recompute_patch_rates();
    return;
  }

  const auto& keys = model_.field_keys();
  bool all_sites = false;
  if (++touch_stamp_ == 0) {
    std::fill(touched_.begin(), touched_.end(), 0);
    touch_stamp_ = 1;
  }
  touched_list_.clear();
  auto touch = [&](std::size_t i) {
    if (touched_[i] != touch_stamp_) {
      touched_[i] = touch_stamp_;
      touched_list_.push_back(i);
    }
  };
  touch(site);
  for (std::size_t key = 0; key < keys.size(); ++key) {
    const auto psi = keys[key].depends_on;
    if (psi != from && psi != to) continue;
    auto& f = fields_[key];
    const std::size_t s = key_shape_[key];
    if (counts_[psi] == 0) {
      std::fill(f.begin(), f.end(), 0.0);
      all_sites = true;
      continue;
    }
    const double delta = (psi == to ? 1.0 : -1.0) * key_amplitude_[key] / static_cast<double>(n);
    switch (row_mode_[s]) {
      case RowMode::constant: {
        const double d = delta * shapes_[s].sup_norm();
        if (d != 0.0) {
          for (auto& v : f) v += d;
          all_sites = true;
        }
        break;
      }
      case RowMode::dense: {
        const double* row = dense_[s].data() + site * n;
        for (std::size_t i = 0; i < n; ++i) f[i] += delta * row[i];
        all_sites = true;
        break;
      }
      case RowMode::sparse:
        for (auto e = sparse_offsets_[s][site]; e < sparse_offsets_[s][site + 1]; ++e) {
          const auto i = sparse_index_[s][e];
          f[i] += delta * sparse_weight_[s][e];
          touch(i);
        }
        break;
      case RowMode::on_demand:
        for (std::size_t i = 0; i < n; ++i)
          f[i] += (psi == to ? 1.0 : -1.0) * kernel_weight(key, i, site) / static_cast<double>(n);
        all_sites = true;
        break;
    }
  }
  if (all_sites) {
    for (std::size_t i = 0; i < n; ++i) {
      site_rate_[i] = site_total_rate(i);
      if (!std::isfinite(site_rate_[i])) throw NumericAbort("non-finite transition rate");
    }
    rebuild_tree();
  } else {
    for (auto i : touched_list_) update_site_rate(i);
  }
}

StepOutcome SiteSystem::step(double horizon) {
  StepOutcome out;
  const double total = total_rate();
  if (!std::isfinite(total)) throw NumericAbort("non-finite total event rate");
  if (total <= 0.0) {
    if (std::isfinite(horizon) && horizon > time_) time_ = horizon;
    out.kind = StepOutcome::Kind::absorbed;
    return out;
  }
  const double dt = -std::log(uniform_open0(rng_)) / total;
  if (time_ + dt > horizon) {
    time_ = horizon;
    out.kind = StepOutcome::Kind::horizon;
    return out;
  }

  std::size_t site = 0;
  double site_rate = 0.0;
  if (patch_mode_) {
    double target = uniform01(rng_) * total;
    std::size_t group = 0, last = 0;
    bool chosen = false;
    for (std::size_t g = 0; g < group_rate_.size(); ++g) {
      const double w = group_rate_[g] * static_cast<double>(members_[g].size());
      if (w <= 0.0) continue;
      last = g;
      if (target < w) {
        group = g;
        chosen = true;
        break;
      }
      target -= w;
    }
    if (!chosen) group = last;
    const auto& m = members_[group];
    auto idx = static_cast<std::size_t>(uniform01(rng_) * static_cast<double>(m.size()));
    site = m[std::min(idx, m.size() - 1)];
    site_rate = group_rate_[group];
  } else {
    for (int attempt = 0;; ++attempt) {
      site = find_site(uniform01(rng_) * total);
      if (site_rate_[site] > 0.0) break;
      if (attempt == 2) {
        // accumulated round-off: rebuild and fall back to the last active site
        rebuild_tree();
        site = size() - 1;
        while (site > 0 && site_rate_[site] <= 0.0) --site;
        break;
      }
    }
    site_rate = site_rate_[site];
  }

  const StateIndex from = states_[site];
  StateIndex to = from;
  double target = uniform01(rng_) * site_rate;
  for (auto t : model_.outgoing(from)) {
    const auto key = model_.field_of(t);
    const double r = model_.transitions()[t].rate(key ? field(*key, site) : 0.0);
    if (r <= 0.0) continue;
    to = model_.transitions()[t].to;
    if (target < r) break;
    target -= r;
  }
  if (to == from) throw NumericAbort("event selection found no active transition");

  time_ += dt;
  set_state(site, to);
  ++event_count_;
  if (!patch_mode_ && ++since_refresh_ >= options_.refresh_interval) refresh();
  out.kind = StepOutcome::Kind::event;
  out.event = Event{time_, site, from, to};
  return out;
}

// ---------------------------------------------------------------------------

SiteSystem init_state(const ModelSpec& model, std::size_t n, std::uint64_t seed, std::uint64_t stream,
                      const Options& options) {
  if (n == 0) throw InvalidInput("init_state needs N >= 1");
  Rng rng = make_stream(seed, stream);
  auto positions = sample_sites(model.measure(), n, rng);
  std::vector<StateIndex> states(n, 0);
  const auto& law = model.initial_law();
  if (law.sampling == InitialSampling::iid) {
    for (std::size_t i = 0; i < n; ++i) states[i] = draw_categorical(law.at(positions[i]), rng);
  } else {
    std::vector<std::vector<std::size_t>> regions(law.region_count());
    for (std::size_t i = 0; i < n; ++i) regions[law.region(positions[i])].push_back(i);
    for (auto& sites : regions) {
      if (sites.empty()) continue;
      const auto quota = apportion(law.at(positions[sites.front()]), sites.size());
      std::vector<StateIndex> pool;
      for (std::size_t s = 0; s < quota.size(); ++s) pool.insert(pool.end(), quota[s], s);
      shuffle(pool, rng);
      for (std::size_t k = 0; k < sites.size(); ++k) states[sites[k]] = pool[k];
    }
  }
  return SiteSystem(model, std::move(positions), std::move(states), std::move(rng), options);
}

std::vector<std::pair<StateIndex, double>> transition_rates(const SiteSystem& sys, std::size_t site) {
  return sys.transition_rates(site);
}

StepOutcome step(SiteSystem& sys) { return sys.step(); }

Result run(SiteSystem& sys, double t_end, std::span<const double> snapshot_times, const Options& options) {
  const double t0 = sys.time();
  if (!std::isfinite(t_end) || t_end < t0) throw InvalidInput("t_end must be finite and not before the current time");
  for (std::size_t k = 0; k < snapshot_times.size(); ++k) {
    const double s = snapshot_times[k];
    if (!(s >= t0 && s <= t_end)) throw InvalidInput("snapshot time outside [t_start, t_end]");
    if (k && s < snapshot_times[k - 1]) throw InvalidInput("snapshot times must be sorted");
  }
  Result res;
  auto& tr = res.trajectory;
  tr.state_count = sys.model().state_count();
  tr.positions = sys.positions();
  tr.initial_states = sys.states();
  tr.events_recorded = options.record_events;
  tr.t_start = t0;
  tr.t_end = t_end;

  const std::size_t first_event = sys.event_count();
  double last_event = t0;
  bool absorbed = false;
  auto advance = [&](double horizon) {
    while (!absorbed) {
      if (sys.event_count() - first_event >= options.max_events) {
        std::ostringstream os;
        os << "event cap of " << options.max_events << " reached at t=" << sys.time() << " before t_end=" << t_end;
        throw SimulationTruncated(os.str(), sys.time(), sys.event_count() - first_event);
      }
      const auto out = sys.step(horizon);
      if (out.kind == StepOutcome::Kind::horizon) return;
      if (out.kind == StepOutcome::Kind::absorbed) {
        absorbed = true;
        tr.absorbed = true;
        tr.absorption_time = last_event;
        return;
      }
      last_event = out.event.t;
      if (options.record_events) tr.events.push_back(out.event);
    }
  };
  for (double s : snapshot_times) {
    advance(s);
    res.snapshots.push_back(Snapshot{s, sys.states()});
  }
  advance(t_end);
  tr.event_count = sys.event_count() - first_event;
  tr.final_states = sys.states();
  return res;
}

Result simulate(const ModelSpec& model, std::size_t n, double t_end, std::uint64_t seed,
                std::span<const double> snapshot_times, const Options& options, std::uint64_t stream) {
  if (!(t_end >= 0.0)) throw InvalidInput("t_end must be nonnegative");
  auto sys = init_state(model, n, seed, stream, options);
  return run(sys, t_end, snapshot_times, options);
}

OccupancySeries occupancy(const Trajectory& traj, std::span<const double> times,
                          std::span<const double> bin_edges) {
  if (!traj.events_recorded && traj.event_count > 0)
    throw InvalidInput("occupancy needs a trajectory with recorded events");
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (!(times[k] >= traj.t_start && times[k] <= traj.t_end))
      throw InvalidInput("occupancy time outside the trajectory");
    if (k && times[k] < times[k - 1]) throw InvalidInput("occupancy times must be sorted");
  }
  for (std::size_t k = 1; k < bin_edges.size(); ++k)
    if (!(bin_edges[k] > bin_edges[k - 1])) throw InvalidInput("bin edges must increase");
  if (bin_edges.size() == 1) throw InvalidInput("binning needs at least two edges");

  OccupancySeries out;
  out.times.assign(times.begin(), times.end());
  out.bin_edges.assign(bin_edges.begin(), bin_edges.end());
  out.state_count = traj.state_count;
  const std::size_t nb = out.bins();
  const std::size_t k = traj.state_count;
  const std::size_t n = traj.initial_states.size();

  constexpr auto kOutside = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> bin_of(n, 0);
  if (!bin_edges.empty()) {
    for (std::size_t i = 0; i < n; ++i) {
      const double x = traj.positions[i];
      if (x < bin_edges.front() || x > bin_edges.back()) {
        bin_of[i] = kOutside;
        continue;
      }
      auto it = std::upper_bound(bin_edges.begin(), bin_edges.end(), x);
      bin_of[i] = std::min<std::size_t>(static_cast<std::size_t>(it - bin_edges.begin()) - 1, nb - 1);
    }
  }
  out.bin_counts.assign(nb, 0);
  std::vector<std::size_t> counts(nb * k, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (bin_of[i] == kOutside) continue;
    ++out.bin_counts[bin_of[i]];
    ++counts[bin_of[i] * k + traj.initial_states[i]];
  }
  out.fractions.assign(times.size() * nb * k, std::numeric_limits<double>::quiet_NaN());
  std::size_t e = 0;
  for (std::size_t ti = 0; ti < times.size(); ++ti) {
    while (e < traj.events.size() && traj.events[e].t <= times[ti]) {
      const auto& ev = traj.events[e++];
      if (bin_of[ev.site] == kOutside) continue;
      --counts[bin_of[ev.site] * k + ev.from];
      ++counts[bin_of[ev.site] * k + ev.to];
    }
    for (std::size_t b = 0; b < nb; ++b) {
      if (out.bin_counts[b] == 0) continue;
      for (std::size_t s = 0; s < k; ++s)
        out.fractions[(ti * nb + b) * k + s] =
            static_cast<double>(counts[b * k + s]) / static_cast<double>(out.bin_counts[b]);
    }
  }
  return out;
}

std::vector<double> state_fractions(std::span<const StateIndex> states, std::size_t state_count) {
  std::vector<double> out(state_count, 0.0);
  if (states.empty()) return out;
  for (auto s : states) out.at(s) += 1.0;
  for (auto& v : out) v /= static_cast<double>(states.size());
  return out;
}

}  // namespace vegdyn::ssa
