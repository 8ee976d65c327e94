#include <benchmark/benchmark.h>

#include "ib/env.hpp"
#include "ib/model.hpp"
#include "ib/rng.hpp"
#include "ib/swarm.hpp"

namespace {

using namespace ib;

void BM_EnvStep(benchmark::State& state) {
  EnvState st = reset(50.0, 1, 1.0);
  ActionDelta a(0.3, -0.2, 0.1);
  for (auto _ : state) {
    auto [next, obs, r] = step(st, a);
    st = next;
    benchmark::DoNotOptimize(r);
  }
}
BENCHMARK(BM_EnvStep);

void BM_SwarmSphere(benchmark::State& state) {
  const int dim = 12;
  swarm::Box box = swarm::Box::uniform(dim, -5.0, 5.0);
  swarm::SwarmConfig cfg;
  cfg.n_particles = 30;
  cfg.n_iterations = 20;
  swarm::FitnessFunction f = [](const Eigen::VectorXd& x) {
    return -x.squaredNorm();
  };
  std::uint64_t seed = 1;
  for (auto _ : state) {
    auto res = swarm::pso_maximize(f, dim, box, cfg, seed++);
    benchmark::DoNotOptimize(res.best_fitness);
  }
}
BENCHMARK(BM_SwarmSphere);

void BM_ModelRollout(benchmark::State& state) {
  CounterRng rng(7);
  model::SystemModel m;
  auto init = [&](model::Predictor& p, model::Target t, model::InputMode mode,
                  int horizon, int hidden) {
    p.target = t;
    p.mode = mode;
    p.horizon = horizon;
    p.hidden_dim = hidden;
    int in = p.input_dim();
    p.w_in = Eigen::MatrixXd::NullaryExpr(
        hidden, in, [&] { return rng.uniform(-0.2, 0.2); });
    p.w_rec = Eigen::MatrixXd::NullaryExpr(
        hidden, hidden, [&] { return rng.uniform(-0.2, 0.2); });
    p.b_h = Eigen::VectorXd::Zero(hidden);
    p.w_out = Eigen::VectorXd::NullaryExpr(
        hidden, [&] { return rng.uniform(-0.2, 0.2); });
    p.in_mean = Eigen::VectorXd::Zero(in);
    p.in_std = Eigen::VectorXd::Ones(in);
  };
  init(m.consumption, model::Target::kConsumption,
       model::InputMode::kNoSelfInput, 30, 30);
  init(m.fatigue, model::Target::kFatigue, model::InputMode::kSelfInput, 10,
       10);

  model::HistoryWindow hist;
  EnvState st = reset(50.0, 3, 1.0);
  hist.push_back(observe(st));
  for (int t = 0; t < 31; ++t) {
    auto [next, obs, r] = step(st, ActionDelta(0, 0, 0));
    st = next;
    hist.push_back(obs);
  }
  Eigen::VectorXd actions = Eigen::VectorXd::Constant(150, 0.1);
  for (auto _ : state) {
    double ret = model::rollout_return(m, hist, actions, 0.97);
    benchmark::DoNotOptimize(ret);
  }
}
BENCHMARK(BM_ModelRollout);

}  // namespace

int main(int argc, char** argv) {
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
