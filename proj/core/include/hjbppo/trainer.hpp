#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hjbppo/adam.hpp"
#include "hjbppo/environment.hpp"
#include "hjbppo/losses.hpp"
#include "hjbppo/metrics.hpp"
#include "hjbppo/networks.hpp"
#include "hjbppo/rng.hpp"
#include "hjbppo/rollout.hpp"
#include "hjbppo/scalar_tape.hpp"

namespace hjbppo::train {

enum class Algorithm { kPpo, kHjbppo };

std::string algorithm_name(Algorithm a);
std::optional<Algorithm> parse_algorithm(const std::string& name);

// When to fold the continuous-time residual term into the value update.
// kMinibatch (default): per minibatch, on the same rows as the Bellman term.
// kEpisodePooled (ablation): minibatches carry the Bellman term only, and
// each epoch ends with one extra descent step on the residual term pooled
// over every eligible row of the buffer.
enum class HjbGranularity { kMinibatch, kEpisodePooled };

struct Hyperparameters {
  int horizon = 2048;
  double learning_rate = 3e-4;  // one Adam stepsize for both networks
  int num_epochs = 10;
  int minibatch_size = 64;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_epsilon = 0.2;
  double lambda_hjb = 1e-4;
  double max_grad_norm = 0.5;
  std::vector<int> hidden = {64, 64};
  HjbGranularity hjb_granularity = HjbGranularity::kMinibatch;
  bool detach_value_input_grad = false;
  // Re-balances lambda each iteration to 0.5 * MSE_bellman / MSE_residual
  // (pre-update, full buffer), so both loss terms carry similar weight.
  bool lambda_auto_balance = false;
};

struct TrainerConfig {
  Algorithm algorithm = Algorithm::kPpo;
  std::string env_name;
  envs::EnvOverrides env_overrides;
  Hyperparameters hp;
  std::uint64_t seed = 0;
  std::uint64_t total_timesteps = 100000;
  int metrics_window = 50;
  // Checkpoint every N iterations (0 = final checkpoint only). Artifacts are
  // written only when out_dir is non-empty.
  int checkpoint_interval = 0;
  std::filesystem::path out_dir;
};

// One training run of Algorithm 1. Construction resets networks, optimizer
// states and RNG streams deterministically from the seed; iterate() performs
// collect -> GAE -> epochs of minibatched policy ascent and value descent.
// PPO runs the identical code with the residual weight forced to zero.
class TrainingRun {
 public:
  explicit TrainingRun(TrainerConfig config);

  // Runs iterations until total_timesteps env steps are collected, writing
  // artifacts (CSV, SVG, checkpoints) into out_dir if set. The optional
  // callback observes each iteration record (for progress printing). Returns
  // the final iteration count.
  int run(const std::function<void(const metrics::IterationRecord&)>&
              on_iteration = {});

  // One full Algorithm-1 iteration; exposed for tests.
  metrics::IterationRecord iterate();

  void save_checkpoint(const std::filesystem::path& path) const;
  static TrainingRun load_checkpoint(const std::filesystem::path& path);

  // Re-exports metrics CSV/SVG into out_dir (no-op without out_dir).
  void export_artifacts() const;

  const TrainerConfig& config() const { return config_; }
  const envs::Environment& environment() const { return *env_; }
  const nets::GaussianPolicy& policy() const { return policy_; }
  const nets::ValueNetwork& value_network() const { return value_; }
  const metrics::MetricsSink& sink() const { return sink_; }
  const rollout::CollectorState& collector() const { return collector_; }
  std::uint64_t timestep() const { return collector_.total_steps; }
  int iteration() const { return iteration_; }
  double last_lambda_effective() const { return last_lambda_effective_; }

 private:
  struct RestoreTag {};
  TrainingRun(TrainerConfig config, RestoreTag);

  void init_fresh();
  double resolve_lambda(const losses::ValueLossReport& pre,
                        metrics::IterationRecord& rec) const;
  void drain_finished_episodes();

  TrainerConfig config_;
  std::unique_ptr<envs::Environment> env_;
  nets::GaussianPolicy policy_;
  nets::ValueNetwork value_;
  std::vector<double> policy_params_;
  std::vector<double> value_params_;
  opt::Adam policy_adam_;
  opt::Adam value_adam_;
  RngStream env_rng_;
  RngStream action_rng_;
  RngStream shuffle_rng_;
  rollout::CollectorState collector_;
  metrics::MetricsSink sink_;
  int iteration_ = 0;
  double last_lambda_effective_ = 0.0;
  ad::ScalarTape policy_tape_;
  ad::ScalarTape value_tape_;
};

struct EvalReport {
  int episodes = 0;
  double mean_reward = 0.0;
  double std_reward = 0.0;  // population std over episodes
  double mean_length = 0.0;
};

// Deterministic evaluation: runs full episodes with the policy mode (no
// exploration noise); episode starts draw from env_rng.
EvalReport evaluate_policy(const envs::Environment& env,
                           const nets::GaussianPolicy& policy, int episodes,
                           RngStream& env_rng);

}  // namespace hjbppo::train
