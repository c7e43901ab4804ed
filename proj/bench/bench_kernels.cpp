// Serial reference kernels against their OpenMP counterparts. Arg 0 selects
// the serial path, 1 the parallel one.

#include <benchmark/benchmark.h>

#include <random>

#include "tomharvest/config.hpp"

using namespace tomharvest;

namespace {

Exec exec_of(const benchmark::State& state) { return state.range(0) == 0 ? Exec::kSerial : Exec::kParallel; }

void BM_MechanismSweep(benchmark::State& state) {
  const mechanism::MechanismParams p;
  for (auto _ : state) {
    auto sweep = mechanism::sweep_positions(p, p.theta_min_deg, p.theta_max_deg, 0.01, mechanism::Branch::kElbowUp,
                                            exec_of(state));
    benchmark::DoNotOptimize(sweep.data());
  }
  state.SetItemsProcessed(state.iterations() * mechanism::sweep_count(p.theta_min_deg, p.theta_max_deg, 0.01));
}

void BM_EvaluateSwarm(benchmark::State& state) {
  const auto cfg = config::load_run_config(std::filesystem::path(TOMHARVEST_SOURCE_DIR) / "config" / "default.json");
  const arm::JointVector& s = *cfg.plan_start;
  const arm::JointVector& g = *cfg.plan_goal;
  const int dim = cfg.pso.waypoints_per_particle * cfg.chain.dof();
  Eigen::MatrixXd particles(dim, cfg.pso.swarm_size);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (Eigen::Index i = 0; i < particles.size(); ++i) particles.data()[i] = u(rng);
  for (auto _ : state) {
    auto scores = planner::evaluate_swarm(particles, s, g, cfg.chain, cfg.scene, cfg.pso, exec_of(state));
    benchmark::DoNotOptimize(scores.data());
  }
  state.SetItemsProcessed(state.iterations() * cfg.pso.swarm_size);
}

void BM_MonteCarlo(benchmark::State& state) {
  harvest::PickCycleConfig cfg;
  harvest::CyclePlan plan;
  plan.pedicel = Eigen::Vector3d(0.4, 0.1, 0.5);
  plan.nominal_cut_center = plan.pedicel - cfg.cut_trigger_distance * plan.approach_dir;
  for (auto _ : state) {
    auto run = harvest::monte_carlo(plan, cfg, 20000, exec_of(state));
    benchmark::DoNotOptimize(run.summary.success_rate);
  }
  state.SetItemsProcessed(state.iterations() * 20000);
}

}  // namespace

BENCHMARK(BM_MechanismSweep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EvaluateSwarm)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MonteCarlo)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
