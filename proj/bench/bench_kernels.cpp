// GKE right-hand side: OpenMP kernel against the serial reference, and the
// SSA event loop on dense vs truncated kernel rows.

#include <benchmark/benchmark.h>
#include <omp.h>

#include "vegdyn/gke.hpp"
#include "vegdyn/rng.hpp"
#include "vegdyn/ssa.hpp"

using namespace vegdyn;

namespace {

ModelSpec ring_model(double sigma) {
  ModelConfig c;
  c.family = Family::gf;
  c.domain = Domain::ring(5.0);
  c.sigma = sigma;
  c.jbar = 1.1;
  c.initial.background = {{"G", 0.5}, {"F", 0.5}};
  return build_model(c);
}

gke::ProbabilityField field(std::size_t nodes) {
  Rng rng = make_stream(1);
  gke::ProbabilityField p;
  p.states = 2;
  for (std::size_t i = 0; i < nodes; ++i) {
    const double u = uniform01(rng);
    p.values.push_back(1 - u);
    p.values.push_back(u);
  }
  return p;
}

void BM_RhsParallel(benchmark::State& st) {
  const ModelSpec m = ring_model(0.05);
  const auto nodes = static_cast<std::size_t>(st.range(0));
  omp_set_num_threads(static_cast<int>(st.range(1)));
  const gke::Solver s(m, gke::make_grid(m.measure(), nodes, gke::Boundary::periodic));
  const auto p = field(nodes);
  std::vector<double> out(p.values.size());
  for (auto _ : st) {
    s.rhs(p, out);
    benchmark::DoNotOptimize(out.data());
  }
  st.counters["threads"] = static_cast<double>(st.range(1));
}

void BM_RhsReference(benchmark::State& st) {
  const ModelSpec m = ring_model(0.05);
  const auto nodes = static_cast<std::size_t>(st.range(0));
  const gke::Solver s(m, gke::make_grid(m.measure(), nodes, gke::Boundary::periodic));
  const auto p = field(nodes);
  for (auto _ : st) benchmark::DoNotOptimize(s.rhs_reference(p));
}

void BM_SsaEvents(benchmark::State& st) {
  const ModelSpec m = ring_model(0.05);
  ssa::Options o;
  o.record_events = false;
  if (st.range(1) > 0) o.cutoff_sigmas = static_cast<double>(st.range(1));
  std::size_t events = 0;
  for (auto _ : st) {
    const auto r = ssa::simulate(m, static_cast<std::size_t>(st.range(0)), 5.0, 1, {}, o);
    events += r.trajectory.event_count;
  }
  st.counters["events/s"] = benchmark::Counter(static_cast<double>(events), benchmark::Counter::kIsRate);
}

}  // namespace

BENCHMARK(BM_RhsReference)->Arg(200)->Arg(800)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_RhsParallel)
    ->ArgsProduct({{200, 800}, {1, 2, 4}})
    ->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_SsaEvents)->ArgsProduct({{1000, 4000}, {0, 6}})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
