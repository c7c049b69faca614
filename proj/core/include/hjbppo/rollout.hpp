#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hjbppo/checkpoint.hpp"
#include "hjbppo/environment.hpp"
#include "hjbppo/networks.hpp"
#include "hjbppo/rng.hpp"

namespace hjbppo::rollout {

// Fixed-horizon on-policy storage. All per-step quantities are recorded at
// collection time under the pre-update networks: log_probs_old and values_old
// are the frozen references PPO ratios and GAE deltas need. next_states[t]
// always holds the true successor of states[t] (pre-reset), so dynamics
// estimates and bootstraps stay valid across episode boundaries.
struct RolloutBuffer {
  int horizon = 0;
  int state_dim = 0;
  int action_dim = 0;
  double dt = 0.0;

  std::vector<double> states;       // horizon x state_dim
  std::vector<double> actions;      // horizon x action_dim
  std::vector<double> rewards;      // horizon
  std::vector<double> next_states;  // horizon x state_dim
  std::vector<std::uint8_t> dones;        // true termination at step t
  std::vector<std::uint8_t> truncateds;   // horizon cut at step t
  std::vector<double> log_probs_old;      // log pi_old(a_t | s_t)
  std::vector<double> values_old;         // V_old(s_t)
  std::vector<double> values_next_old;    // V_old(next_states[t])

  std::span<const double> state(int t) const {
    return {states.data() + static_cast<std::size_t>(t) * state_dim,
            static_cast<std::size_t>(state_dim)};
  }
  std::span<const double> action(int t) const {
    return {actions.data() + static_cast<std::size_t>(t) * action_dim,
            static_cast<std::size_t>(action_dim)};
  }
  std::span<const double> next_state(int t) const {
    return {next_states.data() + static_cast<std::size_t>(t) * state_dim,
            static_cast<std::size_t>(state_dim)};
  }
  bool boundary(int t) const { return dones[t] != 0 || truncateds[t] != 0; }

  // (next_states[t] - states[t]) / dt, flattened horizon x state_dim.
  std::vector<double> dynamics_estimates() const;
};

// One completed episode with its transitions, kept so per-episode losses can
// be evaluated at episode end with whatever value network is then current.
struct FinishedEpisode {
  int index = 0;                 // 0-based global episode counter
  std::uint64_t end_timestep = 0;  // global env steps when it finished
  double total_reward = 0.0;
  int length = 0;
  std::vector<double> states;
  std::vector<double> actions;
  std::vector<double> rewards;
  std::vector<double> next_states;
  std::vector<std::uint8_t> dones;
  std::vector<std::uint8_t> truncateds;
};

// Mutable collection state that persists across iterations (episodes span
// buffer boundaries) and serializes into checkpoints for bit-exact resume.
struct CollectorState {
  bool initialized = false;
  std::vector<double> current_state;
  int episode_steps = 0;
  std::uint64_t total_steps = 0;
  int episodes_finished = 0;
  FinishedEpisode partial;                // accumulating episode
  std::vector<FinishedEpisode> finished;  // drained by the trainer

  void serialize(io::BinaryWriter& w) const;
  void deserialize(io::BinaryReader& r);
};

// Runs the policy for exactly `horizon` env steps with auto-reset, appending
// any episodes that finish to cs.finished. Action noise comes from
// action_rng, reset randomness from env_rng; the two streams are independent.
RolloutBuffer collect(const envs::Environment& env,
                      const nets::GaussianPolicy& policy,
                      const nets::ValueNetwork& value, int horizon,
                      RngStream& action_rng, RngStream& env_rng,
                      CollectorState& cs);

struct AdvantageEstimate {
  std::vector<double> advantages;
  std::vector<double> td_residuals;  // delta_t
};

// Generalized advantage estimation over the buffer:
//   delta_t = r_t + gamma * V_old(s_{t+1}) * (done_t ? 0 : 1) - V_old(s_t)
//   A_t     = sum_{n=t}^{end(t)} (gamma * lambda)^{n-t} delta_n
// where end(t) is the last index of the episode containing t: the recursion
// resets at done AND truncated boundaries, while the bootstrap inside delta
// is zeroed at done only (a truncated successor is still worth V(s_{t+1})).
AdvantageEstimate compute_gae(const RolloutBuffer& buffer, double gamma,
                              double lambda);

// In-place shift-and-scale to mean 0, population std 1. If the population
// std is below 1e-8 the batch only gets centered.
void normalize_advantages(std::span<double> advantages);

}  // namespace hjbppo::rollout
