#include <benchmark/benchmark.h>

#include <cmath>

#include "qlbayes/estimators.hpp"
#include "qlbayes/models.hpp"
#include "qlbayes/qla.hpp"
#include "qlbayes/simulator.hpp"

namespace {

using namespace qlbayes;

simulator::ObservationSet make_path(long n) {
  const auto model = models::builtin_model("OU");
  const double h = std::pow(static_cast<double>(n), -0.6);
  return simulator::simulate_observations(model, model.default_truth,
                                          simulator::PathConfig(n, h, 10, 42));
}

void BM_Simulate(benchmark::State& state) {
  const auto model = models::builtin_model("OU");
  const long n = state.range(0);
  const double h = std::pow(static_cast<double>(n), -0.6);
  for (auto _ : state) {
    auto obs = simulator::simulate_observations(model, model.default_truth,
                                                simulator::PathConfig(n, h, 10, 42));
    benchmark::DoNotOptimize(obs.data.data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_Simulate)->Arg(2000)->Arg(8000);

void BM_Contrast(benchmark::State& state) {
  const auto model = models::builtin_model("OU");
  const auto obs = make_path(state.range(0));
  const auto& t = model.default_truth;
  for (auto _ : state) {
    benchmark::DoNotOptimize(qla::contrast(model, obs, t.theta1, t.theta2));
  }
  state.SetItemsProcessed(state.iterations() * obs.n);
}
BENCHMARK(BM_Contrast)->Arg(2000)->Arg(8000);

void BM_ContrastDerivatives(benchmark::State& state) {
  const auto model = models::builtin_model("OU");
  const auto obs = make_path(state.range(0));
  const auto& t = model.default_truth;
  for (auto _ : state) {
    auto d = qla::contrast_with_derivatives(model, obs, t.theta1, t.theta2);
    benchmark::DoNotOptimize(d.value);
  }
  state.SetItemsProcessed(state.iterations() * obs.n);
}
BENCHMARK(BM_ContrastDerivatives)->Arg(2000)->Arg(8000);

void BM_StageTable(benchmark::State& state) {
  const auto model = models::builtin_model("OU");
  const auto obs = make_path(2000);
  const auto scaling = qla::Scaling::from(obs.n, obs.h);
  const auto prior = estimators::PriorDensity::uniform();
  const auto grid = estimators::QuadratureGrid::tensor(
      model.theta1_box, static_cast<int>(state.range(0)));
  const models::Vec pilot = model.default_truth.theta2;
  for (auto _ : state) {
    auto t = estimators::build_stage_table(model, obs, 1, pilot, prior, grid,
                                           scaling);
    benchmark::DoNotOptimize(t.mass.data());
  }
  state.SetItemsProcessed(state.iterations() * grid.total() * obs.n);
}
BENCHMARK(BM_StageTable)->Arg(101)->Arg(401);

void BM_Qmle(benchmark::State& state) {
  const auto model = models::builtin_model("OU");
  const auto obs = make_path(state.range(0));
  const auto scaling = qla::Scaling::from(obs.n, obs.h);
  for (auto _ : state) {
    auto q = estimators::qmle(model, obs, scaling);
    benchmark::DoNotOptimize(q.theta1.data());
  }
}
BENCHMARK(BM_Qmle)->Arg(2000)->Arg(8000);

}  // namespace

BENCHMARK_MAIN();
