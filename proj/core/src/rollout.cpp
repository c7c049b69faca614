#include "hjbppo/rollout.hpp"

#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace hjbppo::rollout {

namespace {

void append_span(std::vector<double>& dst, std::span<const double> src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

void write_episode(io::BinaryWriter& w, const FinishedEpisode& ep) {
  w.i32(ep.index);
  w.u64(ep.end_timestep);
  w.f64(ep.total_reward);
  w.i32(ep.length);
  w.f64_vec(ep.states);
  w.f64_vec(ep.actions);
  w.f64_vec(ep.rewards);
  w.f64_vec(ep.next_states);
  w.u8_vec(ep.dones);
  w.u8_vec(ep.truncateds);
}

FinishedEpisode read_episode(io::BinaryReader& r) {
  FinishedEpisode ep;
  ep.index = r.i32();
  ep.end_timestep = r.u64();
  ep.total_reward = r.f64();
  ep.length = r.i32();
  ep.states = r.f64_vec();
  ep.actions = r.f64_vec();
  ep.rewards = r.f64_vec();
  ep.next_states = r.f64_vec();
  ep.dones = r.u8_vec();
  ep.truncateds = r.u8_vec();
  return ep;
}

}  // namespace

std::vector<double> RolloutBuffer::dynamics_estimates() const {
  std::vector<double> out(states.size());
  const double inv_dt = 1.0 / dt;
  for (std::size_t i = 0; i < states.size(); ++i) {
    out[i] = (next_states[i] - states[i]) * inv_dt;
  }
  return out;
}

void CollectorState::serialize(io::BinaryWriter& w) const {
  w.u32(initialized ? 1u : 0u);
  w.f64_vec(current_state);
  w.i32(episode_steps);
  w.u64(total_steps);
  w.i32(episodes_finished);
  write_episode(w, partial);
  w.u32(static_cast<std::uint32_t>(finished.size()));
  for (const FinishedEpisode& ep : finished) write_episode(w, ep);
}

void CollectorState::deserialize(io::BinaryReader& r) {
  initialized = r.u32() != 0;
  current_state = r.f64_vec();
  episode_steps = r.i32();
  total_steps = r.u64();
  episodes_finished = r.i32();
  partial = read_episode(r);
  finished.clear();
  const std::uint32_t n = r.u32();
  finished.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) finished.push_back(read_episode(r));
}

RolloutBuffer collect(const envs::Environment& env,
                      const nets::GaussianPolicy& policy,
                      const nets::ValueNetwork& value, int horizon,
                      RngStream& action_rng, RngStream& env_rng,
                      CollectorState& cs) {
  const envs::EnvironmentSpec& spec = env.spec();
  if (horizon <= 0) throw std::invalid_argument("collect: horizon must be positive");

  RolloutBuffer buf;
  buf.horizon = horizon;
  buf.state_dim = spec.state_dim;
  buf.action_dim = spec.action_dim;
  buf.dt = spec.dt;
  buf.states.reserve(static_cast<std::size_t>(horizon) * spec.state_dim);
  buf.actions.reserve(static_cast<std::size_t>(horizon) * spec.action_dim);
  buf.rewards.reserve(horizon);
  buf.next_states.reserve(static_cast<std::size_t>(horizon) * spec.state_dim);
  buf.dones.reserve(horizon);
  buf.truncateds.reserve(horizon);
  buf.log_probs_old.reserve(horizon);
  buf.values_old.reserve(horizon);
  buf.values_next_old.reserve(horizon);

  if (!cs.initialized) {
    cs.current_state = env.reset(env_rng);
    cs.episode_steps = 0;
    cs.partial = FinishedEpisode{};
    cs.initialized = true;
  }

  std::vector<double> action(spec.action_dim);
  for (int t = 0; t < horizon; ++t) {
    const std::vector<double>& x = cs.current_state;
    policy.sample(x, action_rng, action);
    const double log_prob = policy.log_prob(x, action);
    const double v = value.forward(x);

    envs::StepResult sr = env.step(x, action);
    ++cs.episode_steps;
    const bool truncated =
        !sr.done && spec.max_episode_steps > 0 &&
        cs.episode_steps >= spec.max_episode_steps;
    const double v_next = value.forward(sr.next_state);

    append_span(buf.states, x);
    append_span(buf.actions, action);
    buf.rewards.push_back(sr.reward);
    append_span(buf.next_states, sr.next_state);
    buf.dones.push_back(sr.done ? 1 : 0);
    buf.truncateds.push_back(truncated ? 1 : 0);
    buf.log_probs_old.push_back(log_prob);
    buf.values_old.push_back(v);
    buf.values_next_old.push_back(v_next);

    append_span(cs.partial.states, x);
    append_span(cs.partial.actions, action);
    cs.partial.rewards.push_back(sr.reward);
    append_span(cs.partial.next_states, sr.next_state);
    cs.partial.dones.push_back(sr.done ? 1 : 0);
    cs.partial.truncateds.push_back(truncated ? 1 : 0);
    cs.partial.total_reward += sr.reward;
    ++cs.partial.length;
    ++cs.total_steps;

    if (sr.done || truncated) {
      cs.partial.index = cs.episodes_finished++;
      cs.partial.end_timestep = cs.total_steps;
      cs.finished.push_back(std::move(cs.partial));
      cs.partial = FinishedEpisode{};
      cs.current_state = env.reset(env_rng);
      cs.episode_steps = 0;
    } else {
      cs.current_state = std::move(sr.next_state);
    }
  }
  return buf;
}

AdvantageEstimate compute_gae(const RolloutBuffer& buffer, double gamma,
                              double lambda) {
  const int n = buffer.horizon;
  AdvantageEstimate est;
  est.advantages.resize(n);
  est.td_residuals.resize(n);
  double carry = 0.0;  // A_{t+1}, already zeroed across episode boundaries
  for (int t = n - 1; t >= 0; --t) {
    const double bootstrap = buffer.dones[t] ? 0.0 : buffer.values_next_old[t];
    const double delta =
        buffer.rewards[t] + gamma * bootstrap - buffer.values_old[t];
    const double tail = buffer.boundary(t) ? 0.0 : carry;
    const double adv = delta + gamma * lambda * tail;
    est.td_residuals[t] = delta;
    est.advantages[t] = adv;
    carry = adv;
  }
  return est;
}

void normalize_advantages(std::span<double> advantages) {
  if (advantages.empty()) return;
  const double n = static_cast<double>(advantages.size());
  double mean = 0.0;
  for (double a : advantages) mean += a;
  mean /= n;
  double var = 0.0;
  for (double a : advantages) {
    const double d = a - mean;
    var += d * d;
  }
  var /= n;
  const double std = std::sqrt(var);
  if (std < 1e-8) {
    for (double& a : advantages) a -= mean;
    return;
  }
  const double inv = 1.0 / std;
  for (double& a : advantages) a = (a - mean) * inv;
}

}  // namespace hjbppo::rollout
