#include "hjbppo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "hjbppo/errors.hpp"

namespace hjbppo::train {

namespace {

constexpr const char* kCheckpointMagic = "hjbppo-checkpoint";
constexpr std::uint32_t kCheckpointVersion = 1;

void fisher_yates(std::vector<int>& idx, RngStream& rng) {
  for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i) {
    const double u = rng.uniform();
    int j = static_cast<int>(u * (i + 1));
    if (j > i) j = i;
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
}

void write_optional_f64(io::BinaryWriter& w, const std::optional<double>& v) {
  w.u32(v.has_value() ? 1u : 0u);
  w.f64(v.value_or(0.0));
}

std::optional<double> read_optional_f64(io::BinaryReader& r) {
  const bool has = r.u32() != 0;
  const double v = r.f64();
  return has ? std::optional<double>(v) : std::nullopt;
}

void write_optional_i32(io::BinaryWriter& w, const std::optional<int>& v) {
  w.u32(v.has_value() ? 1u : 0u);
  w.i32(v.value_or(0));
}

std::optional<int> read_optional_i32(io::BinaryReader& r) {
  const bool has = r.u32() != 0;
  const int v = r.i32();
  return has ? std::optional<int>(v) : std::nullopt;
}

void serialize_config(io::BinaryWriter& w, const TrainerConfig& c) {
  w.u32(static_cast<std::uint32_t>(c.algorithm));
  w.str(c.env_name);
  write_optional_f64(w, c.env_overrides.dt);
  write_optional_i32(w, c.env_overrides.max_episode_steps);
  write_optional_f64(w, c.env_overrides.init_radius);
  write_optional_f64(w, c.env_overrides.gamma);
  w.u32(c.env_overrides.integrator.has_value() ? 1u : 0u);
  w.u32(static_cast<std::uint32_t>(
      c.env_overrides.integrator.value_or(envs::Integrator::kExplicitEuler)));
  w.i32(c.hp.horizon);
  w.f64(c.hp.learning_rate);
  w.i32(c.hp.num_epochs);
  w.i32(c.hp.minibatch_size);
  w.f64(c.hp.gamma);
  w.f64(c.hp.gae_lambda);
  w.f64(c.hp.clip_epsilon);
  w.f64(c.hp.lambda_hjb);
  w.f64(c.hp.max_grad_norm);
  w.i32_vec(c.hp.hidden);
  w.u32(static_cast<std::uint32_t>(c.hp.hjb_granularity));
  w.u32(c.hp.detach_value_input_grad ? 1u : 0u);
  w.u32(c.hp.lambda_auto_balance ? 1u : 0u);
  w.u64(c.seed);
  w.u64(c.total_timesteps);
  w.i32(c.metrics_window);
  w.i32(c.checkpoint_interval);
  w.str(c.out_dir.string());
}

TrainerConfig deserialize_config(io::BinaryReader& r) {
  TrainerConfig c;
  c.algorithm = static_cast<Algorithm>(r.u32());
  c.env_name = r.str();
  c.env_overrides.dt = read_optional_f64(r);
  c.env_overrides.max_episode_steps = read_optional_i32(r);
  c.env_overrides.init_radius = read_optional_f64(r);
  c.env_overrides.gamma = read_optional_f64(r);
  const bool has_integrator = r.u32() != 0;
  const auto integrator = static_cast<envs::Integrator>(r.u32());
  if (has_integrator) c.env_overrides.integrator = integrator;
  c.hp.horizon = r.i32();
  c.hp.learning_rate = r.f64();
  c.hp.num_epochs = r.i32();
  c.hp.minibatch_size = r.i32();
  c.hp.gamma = r.f64();
  c.hp.gae_lambda = r.f64();
  c.hp.clip_epsilon = r.f64();
  c.hp.lambda_hjb = r.f64();
  c.hp.max_grad_norm = r.f64();
  c.hp.hidden = r.i32_vec();
  c.hp.hjb_granularity = static_cast<HjbGranularity>(r.u32());
  c.hp.detach_value_input_grad = r.u32() != 0;
  c.hp.lambda_auto_balance = r.u32() != 0;
  c.seed = r.u64();
  c.total_timesteps = r.u64();
  c.metrics_window = r.i32();
  c.checkpoint_interval = r.i32();
  c.out_dir = r.str();
  return c;
}

void validate(const TrainerConfig& c) {
  std::vector<std::string> errors;
  if (c.hp.horizon <= 0) errors.push_back("horizon must be positive");
  if (c.hp.minibatch_size <= 0 || c.hp.minibatch_size > c.hp.horizon) {
    errors.push_back("minibatch_size must be in [1, horizon]");
  }
  if (c.hp.num_epochs <= 0) errors.push_back("num_epochs must be positive");
  if (!(c.hp.gamma > 0.0 && c.hp.gamma < 1.0)) {
    errors.push_back("gamma must be in (0, 1)");
  }
  if (!(c.hp.gae_lambda >= 0.0 && c.hp.gae_lambda <= 1.0)) {
    errors.push_back("gae_lambda must be in [0, 1]");
  }
  if (!(c.hp.clip_epsilon > 0.0)) errors.push_back("clip_epsilon must be positive");
  if (!(c.hp.lambda_hjb >= 0.0)) errors.push_back("lambda_hjb must be >= 0");
  if (!(c.hp.learning_rate > 0.0)) errors.push_back("learning_rate must be positive");
  if (!(c.hp.max_grad_norm > 0.0)) errors.push_back("max_grad_norm must be positive");
  if (c.hp.hidden.empty()) errors.push_back("hidden layer list must be non-empty");
  for (int h : c.hp.hidden) {
    if (h <= 0) errors.push_back("hidden layer sizes must be positive");
  }
  if (c.total_timesteps == 0) errors.push_back("total_timesteps must be positive");
  if (c.metrics_window <= 0) errors.push_back("metrics window must be positive");
  if (c.checkpoint_interval < 0) errors.push_back("checkpoint_interval must be >= 0");
  if (!errors.empty()) {
    std::string joined = "invalid trainer configuration:";
    for (const std::string& e : errors) joined += "\n  - " + e;
    throw ConfigError(joined);
  }
}

}  // namespace

std::string algorithm_name(Algorithm a) {
  return a == Algorithm::kPpo ? "ppo" : "hjbppo";
}

std::optional<Algorithm> parse_algorithm(const std::string& name) {
  if (name == "ppo") return Algorithm::kPpo;
  if (name == "hjbppo") return Algorithm::kHjbppo;
  return std::nullopt;
}

TrainingRun::TrainingRun(TrainerConfig config)
    : TrainingRun(std::move(config), RestoreTag{}) {
  init_fresh();
}

TrainingRun::TrainingRun(TrainerConfig config, RestoreTag)
    : config_(std::move(config)),
      env_rng_(0),
      action_rng_(0),
      shuffle_rng_(0),
      sink_(config_.metrics_window) {
  validate(config_);
  envs::EnvOverrides overrides = config_.env_overrides;
  overrides.gamma = config_.hp.gamma;  // one discount for env and trainer
  env_ = envs::make_environment(config_.env_name, overrides);
  const envs::EnvironmentSpec& spec = env_->spec();
  policy_ = nets::GaussianPolicy(spec.state_dim, spec.action_dim,
                                 config_.hp.hidden);
  value_ = nets::ValueNetwork(spec.state_dim, config_.hp.hidden);
  policy_adam_ = opt::Adam(policy_.param_count());
  value_adam_ = opt::Adam(value_.param_count());
}

void TrainingRun::init_fresh() {
  RngStream root(config_.seed);
  env_rng_ = root.spawn(1);
  action_rng_ = root.spawn(2);
  RngStream policy_init = root.spawn(3);
  RngStream value_init = root.spawn(4);
  shuffle_rng_ = root.spawn(5);
  policy_.init(policy_init);
  value_.init(value_init);
  policy_params_ = policy_.parameters_flat();
  value_params_ = value_.parameters_flat();
}

double TrainingRun::resolve_lambda(const losses::ValueLossReport& pre,
                                   metrics::IterationRecord& rec) const {
  double lambda = 0.0;
  if (config_.algorithm == Algorithm::kHjbppo) {
    lambda = config_.hp.lambda_hjb;
    if (config_.hp.lambda_auto_balance) {
      lambda = 0.5 * pre.bellman / std::max(pre.hjb, 1e-12);
      lambda = std::clamp(lambda, 0.0, 1e3);
    }
    // Early-training guard: an untrained V can make the residual explode;
    // scale the weight down by the overflow ratio for this iteration only.
    if (pre.hjb > 1e6) lambda *= 1e6 / pre.hjb;
  }
  rec.lambda_hjb_effective = lambda;
  return lambda;
}

void TrainingRun::drain_finished_episodes() {
  const envs::EnvironmentSpec& spec = env_->spec();
  for (const rollout::FinishedEpisode& ep : collector_.finished) {
    const losses::ValueLossReport diag = losses::evaluate_value_losses(
        value_, ep.states, ep.rewards, ep.next_states, ep.dones, ep.truncateds,
        spec.state_dim, config_.hp.gamma, spec.dt, spec.reward_rate_scale());
    metrics::EpisodeRecord rec;
    rec.episode = ep.index;
    rec.timestep = ep.end_timestep;
    rec.reward = ep.total_reward;
    rec.length = ep.length;
    rec.hjb_loss = diag.hjb;
    rec.bellman_loss = diag.bellman;
    sink_.record_episode(rec);
  }
  collector_.finished.clear();
}

metrics::IterationRecord TrainingRun::iterate() {
  const Hyperparameters& hp = config_.hp;
  const envs::EnvironmentSpec& spec = env_->spec();
  metrics::IterationRecord rec;
  rec.iteration = ++iteration_;

  rollout::RolloutBuffer buf = rollout::collect(
      *env_, policy_, value_, hp.horizon, action_rng_, env_rng_, collector_);
  rec.timestep = collector_.total_steps;
  rec.episodes_finished = static_cast<int>(collector_.finished.size());
  drain_finished_episodes();

  rollout::AdvantageEstimate gae =
      rollout::compute_gae(buf, hp.gamma, hp.gae_lambda);
  const std::vector<double> f_hat = buf.dynamics_estimates();

  const losses::ValueLossReport pre = losses::evaluate_value_losses(
      value_, buf.states, buf.rewards, buf.next_states, buf.dones,
      buf.truncateds, buf.state_dim, hp.gamma, buf.dt,
      spec.reward_rate_scale());
  rec.bellman_mse = pre.bellman;
  rec.hjb_mse = pre.hjb;
  const double lambda_eff = resolve_lambda(pre, rec);
  last_lambda_effective_ = lambda_eff;

  losses::ValueObjectiveConfig vcfg;
  vcfg.gamma = hp.gamma;
  vcfg.dt = buf.dt;
  vcfg.reward_rate_scale = spec.reward_rate_scale();
  vcfg.detach_value_input_grad = hp.detach_value_input_grad;
  vcfg.bellman_weight = 0.5;
  const bool pooled = hp.hjb_granularity == HjbGranularity::kEpisodePooled;
  vcfg.lambda_hjb = pooled ? 0.0 : lambda_eff;

  std::vector<int> pooled_rows;
  if (pooled && lambda_eff > 0.0) {
    for (int t = 0; t < buf.horizon; ++t) {
      if (!buf.boundary(t)) pooled_rows.push_back(t);
    }
  }

  std::vector<int> idx(hp.horizon);
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<int> rows;
  std::vector<double> mb_adv;
  std::vector<double> pgrad(policy_.param_count());
  std::vector<double> vgrad(value_.param_count());

  int n_updates = 0;
  double acc_surrogate = 0.0, acc_clip = 0.0, acc_ratio = 0.0, acc_kl = 0.0;
  double acc_vtotal = 0.0, acc_pnorm = 0.0, acc_vnorm = 0.0;

  for (int epoch = 0; epoch < hp.num_epochs; ++epoch) {
    fisher_yates(idx, shuffle_rng_);
    for (int start = 0; start < hp.horizon; start += hp.minibatch_size) {
      const int stop = std::min(start + hp.minibatch_size, hp.horizon);
      rows.assign(idx.begin() + start, idx.begin() + stop);

      mb_adv.resize(rows.size());
      for (std::size_t j = 0; j < rows.size(); ++j) {
        mb_adv[j] = gae.advantages[static_cast<std::size_t>(rows[j])];
      }
      rollout::normalize_advantages(mb_adv);

      const losses::PolicyObjectiveReport prep =
          losses::policy_objective_gradient(policy_, policy_tape_, buf, rows,
                                            mb_adv, hp.clip_epsilon, pgrad);
      if (!std::isfinite(prep.surrogate)) {
        std::ostringstream msg;
        msg << "non-finite policy objective at iteration " << iteration_
            << " (mean ratio " << prep.mean_ratio << ")";
        throw DivergenceError(msg.str());
      }
      acc_pnorm += opt::clip_global_norm(pgrad, hp.max_grad_norm);
      policy_adam_.step(policy_params_, pgrad, hp.learning_rate, +1.0);
      policy_.set_parameters(policy_params_);

      const losses::ValueObjectiveReport vrep =
          losses::value_objective_gradient(value_, value_tape_, buf, f_hat,
                                           rows, vcfg, vgrad);
      if (!std::isfinite(vrep.total)) {
        std::ostringstream msg;
        msg << "non-finite value objective at iteration " << iteration_
            << " (bellman " << vrep.bellman << ", residual " << vrep.hjb
            << ")";
        throw DivergenceError(msg.str());
      }
      acc_vnorm += opt::clip_global_norm(vgrad, hp.max_grad_norm);
      value_adam_.step(value_params_, vgrad, hp.learning_rate, -1.0);
      value_.set_parameters(value_params_);

      acc_surrogate += prep.surrogate;
      acc_clip += prep.clip_fraction;
      acc_ratio += prep.mean_ratio;
      acc_kl += prep.approx_kl;
      acc_vtotal += vrep.total;
      ++n_updates;
    }

    if (!pooled_rows.empty()) {
      // Ablation: one residual-only descent step per epoch, pooled over the
      // whole buffer's eligible rows.
      losses::ValueObjectiveConfig pooled_cfg = vcfg;
      pooled_cfg.lambda_hjb = lambda_eff;
      pooled_cfg.bellman_weight = 0.0;
      const losses::ValueObjectiveReport vrep = losses::value_objective_gradient(
          value_, value_tape_, buf, f_hat, pooled_rows, pooled_cfg, vgrad);
      if (!std::isfinite(vrep.total)) {
        throw DivergenceError("non-finite pooled residual objective at iteration " +
                              std::to_string(iteration_));
      }
      opt::clip_global_norm(vgrad, hp.max_grad_norm);
      value_adam_.step(value_params_, vgrad, hp.learning_rate, -1.0);
      value_.set_parameters(value_params_);
    }
  }

  if (n_updates > 0) {
    const double inv = 1.0 / n_updates;
    rec.policy_objective = acc_surrogate * inv;
    rec.clip_fraction = acc_clip * inv;
    rec.mean_ratio = acc_ratio * inv;
    rec.approx_kl = acc_kl * inv;
    rec.value_total = acc_vtotal * inv;
    rec.policy_grad_norm = acc_pnorm * inv;
    rec.value_grad_norm = acc_vnorm * inv;
  }
  sink_.record_iteration(rec);
  return rec;
}

int TrainingRun::run(
    const std::function<void(const metrics::IterationRecord&)>& on_iteration) {
  const bool artifacts = !config_.out_dir.empty();
  if (artifacts) std::filesystem::create_directories(config_.out_dir);
  while (collector_.total_steps < config_.total_timesteps) {
    const metrics::IterationRecord rec = iterate();
    if (on_iteration) on_iteration(rec);
    if (artifacts && config_.checkpoint_interval > 0 &&
        iteration_ % config_.checkpoint_interval == 0) {
      save_checkpoint(config_.out_dir /
                      ("checkpoint_iter" + std::to_string(iteration_) + ".bin"));
    }
  }
  if (artifacts) {
    save_checkpoint(config_.out_dir / "checkpoint_final.bin");
    export_artifacts();
  }
  return iteration_;
}

void TrainingRun::export_artifacts() const {
  if (config_.out_dir.empty()) return;
  std::filesystem::create_directories(config_.out_dir);
  sink_.export_csv(config_.out_dir / "metrics.csv");
  sink_.export_iterations_csv(config_.out_dir / "iterations.csv");
  metrics::export_run_charts(sink_, config_.out_dir,
                             algorithm_name(config_.algorithm) + " on " +
                                 config_.env_name);
}

void TrainingRun::save_checkpoint(const std::filesystem::path& path) const {
  io::BinaryWriter w;
  w.str(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  serialize_config(w, config_);
  w.f64_vec(policy_params_);
  w.f64_vec(value_params_);
  policy_adam_.serialize(w);
  value_adam_.serialize(w);
  w.str(env_rng_.serialize());
  w.str(action_rng_.serialize());
  w.str(shuffle_rng_.serialize());
  collector_.serialize(w);
  sink_.serialize(w);
  w.i32(iteration_);
  w.f64(last_lambda_effective_);
  w.save(path);
}

TrainingRun TrainingRun::load_checkpoint(const std::filesystem::path& path) {
  io::BinaryReader r = io::BinaryReader::load(path);
  if (r.str() != kCheckpointMagic) {
    throw ConfigError("not a checkpoint file: " + path.string());
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw ConfigError("unsupported checkpoint version " +
                      std::to_string(version));
  }
  TrainerConfig config = deserialize_config(r);
  TrainingRun run(std::move(config), RestoreTag{});
  run.policy_params_ = r.f64_vec();
  run.value_params_ = r.f64_vec();
  run.policy_.set_parameters(run.policy_params_);
  run.value_.set_parameters(run.value_params_);
  run.policy_adam_.deserialize(r);
  run.value_adam_.deserialize(r);
  run.env_rng_.deserialize(r.str());
  run.action_rng_.deserialize(r.str());
  run.shuffle_rng_.deserialize(r.str());
  run.collector_.deserialize(r);
  run.sink_.deserialize(r);
  run.iteration_ = r.i32();
  run.last_lambda_effective_ = r.f64();
  return run;
}

EvalReport evaluate_policy(const envs::Environment& env,
                           const nets::GaussianPolicy& policy, int episodes,
                           RngStream& env_rng) {
  if (episodes <= 0) throw std::invalid_argument("evaluate_policy: episodes must be positive");
  const envs::EnvironmentSpec& spec = env.spec();
  EvalReport rep;
  rep.episodes = episodes;
  std::vector<double> rewards(episodes, 0.0);
  std::vector<double> action(spec.action_dim);
  double total_len = 0.0;
  for (int e = 0; e < episodes; ++e) {
    std::vector<double> x = env.reset(env_rng);
    int steps = 0;
    while (true) {
      policy.mode(x, action);
      envs::StepResult sr = env.step(x, action);
      rewards[e] += sr.reward;
      ++steps;
      if (sr.done || (spec.max_episode_steps > 0 &&
                      steps >= spec.max_episode_steps)) {
        break;
      }
      x = std::move(sr.next_state);
    }
    total_len += steps;
  }
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= episodes;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= episodes;
  rep.mean_reward = mean;
  rep.std_reward = std::sqrt(var);
  rep.mean_length = total_len / episodes;
  return rep;
}

}  // namespace hjbppo::train
