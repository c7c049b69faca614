// Microbenchmarks for the hot paths: tape recording, input gradients, the
// value/policy minibatch gradients, advantage estimation, rollout collection
// and one full training iteration. Run `hjbppo_bench` to size experiments
// for the machine at hand.

#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

#include "hjbppo/environment.hpp"
#include "hjbppo/losses.hpp"
#include "hjbppo/networks.hpp"
#include "hjbppo/rng.hpp"
#include "hjbppo/rollout.hpp"
#include "hjbppo/scalar_tape.hpp"
#include "hjbppo/trainer.hpp"

namespace {

using namespace hjbppo;

std::vector<int> hidden_from_arg(std::int64_t width) {
  return {static_cast<int>(width), static_cast<int>(width)};
}

struct Batch {
  std::unique_ptr<envs::Environment> env;
  nets::GaussianPolicy policy;
  nets::ValueNetwork value;
  rollout::RolloutBuffer buffer;
  std::vector<double> f_hat;
  std::vector<int> rows;

  Batch(int hidden_width, int horizon) {
    env = envs::make_environment("lqr");
    const std::vector<int> hidden = hidden_from_arg(hidden_width);
    policy = nets::GaussianPolicy(2, 1, hidden);
    value = nets::ValueNetwork(2, hidden);
    RngStream init(1);
    policy.init(init);
    value.init(init);
    RngStream action_rng(2), env_rng(3);
    rollout::CollectorState cs;
    buffer = rollout::collect(*env, policy, value, horizon, action_rng,
                              env_rng, cs);
    f_hat = buffer.dynamics_estimates();
    rows.resize(64);
    std::iota(rows.begin(), rows.end(), 0);
  }
};

void BM_ValueForward(benchmark::State& state) {
  Batch b(static_cast<int>(state.range(0)), 64);
  const auto x = b.buffer.state(0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(b.value.forward(x));
  }
}
BENCHMARK(BM_ValueForward)->Arg(16)->Arg(32)->Arg(64);

void BM_ValueInputGradient(benchmark::State& state) {
  Batch b(static_cast<int>(state.range(0)), 64);
  const auto x = b.buffer.state(0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(b.value.input_gradient(x));
  }
}
BENCHMARK(BM_ValueInputGradient)->Arg(16)->Arg(32)->Arg(64);

// One 64-row value minibatch: Bellman + continuous-time residual gradient
// through the nested forward-over-reverse sweep.
void BM_ValueObjectiveGradient(benchmark::State& state) {
  Batch b(static_cast<int>(state.range(0)), 64);
  ad::ScalarTape tape;
  losses::ValueObjectiveConfig cfg;
  cfg.gamma = 0.99;
  cfg.dt = b.buffer.dt;
  cfg.reward_rate_scale = 1.0 / b.buffer.dt;
  cfg.lambda_hjb = 1e-3;
  std::vector<double> grad(b.value.param_count());
  for (auto _ : state) {
    benchmark::DoNotOptimize(losses::value_objective_gradient(
        b.value, tape, b.buffer, b.f_hat, b.rows, cfg, grad));
  }
}
BENCHMARK(BM_ValueObjectiveGradient)->Arg(16)->Arg(32)->Arg(64);

// Same minibatch with the residual term disabled (plain ppo value update).
void BM_ValueObjectiveGradientBellmanOnly(benchmark::State& state) {
  Batch b(static_cast<int>(state.range(0)), 64);
  ad::ScalarTape tape;
  losses::ValueObjectiveConfig cfg;
  cfg.gamma = 0.99;
  cfg.dt = b.buffer.dt;
  cfg.reward_rate_scale = 1.0 / b.buffer.dt;
  cfg.lambda_hjb = 0.0;
  std::vector<double> grad(b.value.param_count());
  for (auto _ : state) {
    benchmark::DoNotOptimize(losses::value_objective_gradient(
        b.value, tape, b.buffer, b.f_hat, b.rows, cfg, grad));
  }
}
BENCHMARK(BM_ValueObjectiveGradientBellmanOnly)->Arg(16)->Arg(32)->Arg(64);

void BM_PolicyObjectiveGradient(benchmark::State& state) {
  Batch b(static_cast<int>(state.range(0)), 64);
  ad::ScalarTape tape;
  std::vector<double> adv(64);
  RngStream rng(5);
  for (double& a : adv) a = rng.normal();
  std::vector<double> grad(b.policy.param_count());
  for (auto _ : state) {
    benchmark::DoNotOptimize(losses::policy_objective_gradient(
        b.policy, tape, b.buffer, b.rows, adv, 0.2, grad));
  }
}
BENCHMARK(BM_PolicyObjectiveGradient)->Arg(16)->Arg(32)->Arg(64);

void BM_ComputeGae(benchmark::State& state) {
  Batch b(16, 2048);
  for (auto _ : state) {
    benchmark::DoNotOptimize(rollout::compute_gae(b.buffer, 0.99, 0.95));
  }
}
BENCHMARK(BM_ComputeGae);

void BM_Collect2048(benchmark::State& state) {
  auto env = envs::make_environment("lqr");
  const std::vector<int> hidden = hidden_from_arg(state.range(0));
  nets::GaussianPolicy policy(2, 1, hidden);
  nets::ValueNetwork value(2, hidden);
  RngStream init(1);
  policy.init(init);
  value.init(init);
  RngStream action_rng(2), env_rng(3);
  rollout::CollectorState cs;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        rollout::collect(*env, policy, value, 2048, action_rng, env_rng, cs));
    cs.finished.clear();
  }
}
BENCHMARK(BM_Collect2048)->Arg(16)->Arg(32);

// One full training iteration (2048 steps collected + 10 epochs of
// minibatch updates) with the residual term active.
void BM_TrainerIteration(benchmark::State& state) {
  train::TrainerConfig c;
  c.algorithm = train::Algorithm::kHjbppo;
  c.env_name = "lqr";
  c.hp.hidden = hidden_from_arg(state.range(0));
  c.hp.lambda_hjb = 1e-3;
  c.total_timesteps = 1;  // iterate() is driven manually
  train::TrainingRun run(c);
  for (auto _ : state) {
    benchmark::DoNotOptimize(run.iterate());
  }
}
BENCHMARK(BM_TrainerIteration)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
