#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <cmath>
#include <cstring>
#include <vector>

#include "hjbppo/checkpoint.hpp"
#include "hjbppo/environment.hpp"
#include "hjbppo/networks.hpp"
#include "hjbppo/rng.hpp"
#include "hjbppo/rollout.hpp"

using hjbppo::RngStream;
using hjbppo::envs::EnvOverrides;
using hjbppo::envs::make_environment;
using hjbppo::nets::GaussianPolicy;
using hjbppo::nets::ValueNetwork;
using hjbppo::rollout::AdvantageEstimate;
using hjbppo::rollout::collect;
using hjbppo::rollout::CollectorState;
using hjbppo::rollout::compute_gae;
using hjbppo::rollout::FinishedEpisode;
using hjbppo::rollout::normalize_advantages;
using hjbppo::rollout::RolloutBuffer;

namespace {

constexpr std::array<int, 1> kTinyHidden{8};

struct Actors {
  GaussianPolicy policy;
  ValueNetwork value;
  Actors(int state_dim, int action_dim, std::uint64_t seed)
      : policy(state_dim, action_dim, kTinyHidden),
        value(state_dim, kTinyHidden) {
    RngStream init(seed);
    policy.init(init);
    value.init(init);
  }
};

bool buffers_equal(const RolloutBuffer& a, const RolloutBuffer& b) {
  return a.horizon == b.horizon && a.states == b.states &&
         a.actions == b.actions && a.rewards == b.rewards &&
         a.next_states == b.next_states && a.dones == b.dones &&
         a.truncateds == b.truncateds && a.log_probs_old == b.log_probs_old &&
         a.values_old == b.values_old && a.values_next_old == b.values_next_old;
}

bool episodes_equal(const FinishedEpisode& a, const FinishedEpisode& b) {
  return a.index == b.index && a.end_timestep == b.end_timestep &&
         a.total_reward == b.total_reward && a.length == b.length &&
         a.states == b.states && a.actions == b.actions &&
         a.rewards == b.rewards && a.next_states == b.next_states &&
         a.dones == b.dones && a.truncateds == b.truncateds;
}

// Brute-force advantage: the explicit double sum with the same delta
// definition the recursion uses.
std::vector<double> brute_force_gae(const RolloutBuffer& buf, double gamma,
                                    double lambda) {
  const int n = buf.horizon;
  std::vector<double> delta(n);
  for (int t = 0; t < n; ++t) {
    const double bootstrap = buf.dones[t] ? 0.0 : buf.values_next_old[t];
    delta[t] = buf.rewards[t] + gamma * bootstrap - buf.values_old[t];
  }
  std::vector<double> adv(n);
  for (int t = 0; t < n; ++t) {
    double acc = 0.0;
    double w = 1.0;
    for (int k = t; k < n; ++k) {
      acc += w * delta[k];
      if (buf.boundary(k)) break;
      w *= gamma * lambda;
    }
    adv[t] = acc;
  }
  return adv;
}

RolloutBuffer random_buffer(RngStream& rng, int horizon) {
  RolloutBuffer buf;
  buf.horizon = horizon;
  buf.state_dim = 1;
  buf.action_dim = 1;
  buf.dt = 0.05;
  for (int t = 0; t < horizon; ++t) {
    buf.states.push_back(rng.uniform(-1.0, 1.0));
    buf.actions.push_back(rng.uniform(-1.0, 1.0));
    buf.rewards.push_back(rng.uniform(-1.0, 1.0));
    buf.next_states.push_back(rng.uniform(-1.0, 1.0));
    const double coin = rng.uniform();
    const bool done = coin < 0.1;
    const bool truncated = !done && coin < 0.2;
    buf.dones.push_back(done ? 1 : 0);
    buf.truncateds.push_back(truncated ? 1 : 0);
    buf.log_probs_old.push_back(rng.uniform(-2.0, 0.0));
    buf.values_old.push_back(rng.uniform(-1.0, 1.0));
    buf.values_next_old.push_back(rng.uniform(-1.0, 1.0));
  }
  return buf;
}

}  // namespace

TEST_CASE("collect fills every column and truncates at the episode cap") {
  EnvOverrides overrides;
  overrides.max_episode_steps = 5;
  const auto env = make_environment("lqr", overrides);
  Actors actors(2, 1, 1);
  RngStream action_rng(2);
  RngStream env_rng(3);
  CollectorState cs;
  const RolloutBuffer buf =
      collect(*env, actors.policy, actors.value, 12, action_rng, env_rng, cs);

  CHECK(buf.horizon == 12);
  CHECK(buf.states.size() == 24);
  CHECK(buf.actions.size() == 12);
  CHECK(buf.rewards.size() == 12);
  CHECK(buf.next_states.size() == 24);
  CHECK(buf.dones.size() == 12);
  CHECK(buf.truncateds.size() == 12);
  CHECK(buf.log_probs_old.size() == 12);
  CHECK(buf.values_old.size() == 12);
  CHECK(buf.values_next_old.size() == 12);

  for (int t = 0; t < 12; ++t) {
    CHECK(buf.dones[t] == 0);  // the LQR family never terminates
    CHECK(buf.truncateds[t] == ((t == 4 || t == 9) ? 1 : 0));
  }

  CHECK(cs.total_steps == 12);
  CHECK(cs.episodes_finished == 2);
  REQUIRE(cs.finished.size() == 2);
  CHECK(cs.finished[0].index == 0);
  CHECK(cs.finished[0].length == 5);
  CHECK(cs.finished[0].end_timestep == 5);
  CHECK(cs.finished[1].index == 1);
  CHECK(cs.finished[1].length == 5);
  CHECK(cs.finished[1].end_timestep == 10);
  CHECK(cs.partial.length == 2);

  double total = 0.0;
  for (int t = 0; t < 5; ++t) total += buf.rewards[t];
  CHECK(cs.finished[0].total_reward == doctest::Approx(total).epsilon(1e-15));
}

TEST_CASE("stored references match a direct recompute bit-for-bit") {
  const auto env = make_environment("pendulum");
  Actors actors(2, 1, 4);
  RngStream action_rng(5);
  RngStream env_rng(6);
  CollectorState cs;
  const RolloutBuffer buf =
      collect(*env, actors.policy, actors.value, 32, action_rng, env_rng, cs);
  for (int t = 0; t < buf.horizon; ++t) {
    const double v = actors.value.forward(buf.state(t));
    const double vn = actors.value.forward(buf.next_state(t));
    const double lp = actors.policy.log_prob(buf.state(t), buf.action(t));
    CHECK(std::memcmp(&v, &buf.values_old[t], sizeof(double)) == 0);
    CHECK(std::memcmp(&vn, &buf.values_next_old[t], sizeof(double)) == 0);
    CHECK(std::memcmp(&lp, &buf.log_probs_old[t], sizeof(double)) == 0);
  }
}

TEST_CASE("next_states are the true successors and chain between rows") {
  EnvOverrides overrides;
  overrides.max_episode_steps = 7;
  const auto env = make_environment("lqr", overrides);
  Actors actors(2, 1, 8);
  RngStream action_rng(9);
  RngStream env_rng(10);
  CollectorState cs;
  const RolloutBuffer buf =
      collect(*env, actors.policy, actors.value, 20, action_rng, env_rng, cs);
  for (int t = 0; t < buf.horizon; ++t) {
    const auto sr = env->step(buf.state(t), buf.action(t));
    const auto stored = buf.next_state(t);
    for (int i = 0; i < 2; ++i) CHECK(sr.next_state[i] == stored[i]);
    if (t + 1 < buf.horizon && !buf.boundary(t)) {
      const auto next_row = buf.state(t + 1);
      for (int i = 0; i < 2; ++i) CHECK(stored[i] == next_row[i]);
    }
  }
  const std::vector<double> f = buf.dynamics_estimates();
  for (std::size_t i = 0; i < f.size(); ++i) {
    CHECK(f[i] ==
          doctest::Approx((buf.next_states[i] - buf.states[i]) / buf.dt)
              .epsilon(1e-15));
  }
}

TEST_CASE("an episode spanning two buffers is finished with all its rows") {
  EnvOverrides overrides;
  overrides.max_episode_steps = 5;
  const auto env = make_environment("lqr", overrides);
  Actors actors(2, 1, 21);
  RngStream action_rng(22);
  RngStream env_rng(23);
  CollectorState cs;
  const RolloutBuffer first =
      collect(*env, actors.policy, actors.value, 3, action_rng, env_rng, cs);
  CHECK(cs.finished.empty());
  CHECK(cs.partial.length == 3);
  const RolloutBuffer second =
      collect(*env, actors.policy, actors.value, 3, action_rng, env_rng, cs);
  REQUIRE(cs.finished.size() == 1);
  const FinishedEpisode& ep = cs.finished[0];
  CHECK(ep.length == 5);
  CHECK(ep.end_timestep == 5);
  CHECK(cs.partial.length == 1);
  // The episode's rows are the first buffer's three plus the second's first
  // two, in order.
  std::vector<double> expect_rewards(first.rewards.begin(), first.rewards.end());
  expect_rewards.push_back(second.rewards[0]);
  expect_rewards.push_back(second.rewards[1]);
  CHECK(ep.rewards == expect_rewards);
  CHECK(ep.truncateds == std::vector<std::uint8_t>{0, 0, 0, 0, 1});
}

TEST_CASE("collection is deterministic in its streams") {
  const auto env = make_environment("pendulum");
  Actors actors(2, 1, 30);
  CollectorState cs_a;
  CollectorState cs_b;
  RngStream aa(31), ae(32), ba(31), be(32);
  const RolloutBuffer a =
      collect(*env, actors.policy, actors.value, 40, aa, ae, cs_a);
  const RolloutBuffer b =
      collect(*env, actors.policy, actors.value, 40, ba, be, cs_b);
  CHECK(buffers_equal(a, b));
}

TEST_CASE("collector state round-trips through the binary format mid-episode") {
  EnvOverrides overrides;
  overrides.max_episode_steps = 6;
  const auto env = make_environment("lqr", overrides);
  Actors actors(2, 1, 40);
  RngStream action_rng(41);
  RngStream env_rng(42);
  CollectorState cs;
  (void)collect(*env, actors.policy, actors.value, 10, action_rng, env_rng, cs);

  hjbppo::io::BinaryWriter w;
  cs.serialize(w);
  hjbppo::io::BinaryReader r(w.bytes());
  CollectorState restored;
  restored.deserialize(r);
  CHECK(r.exhausted());

  CHECK(restored.initialized == cs.initialized);
  CHECK(restored.current_state == cs.current_state);
  CHECK(restored.episode_steps == cs.episode_steps);
  CHECK(restored.total_steps == cs.total_steps);
  CHECK(restored.episodes_finished == cs.episodes_finished);
  CHECK(episodes_equal(restored.partial, cs.partial));
  REQUIRE(restored.finished.size() == cs.finished.size());
  for (std::size_t i = 0; i < cs.finished.size(); ++i) {
    CHECK(episodes_equal(restored.finished[i], cs.finished[i]));
  }

  // Continuing from the restored state reproduces the original continuation.
  RngStream cont_a(0);
  cont_a.deserialize(action_rng.serialize());
  RngStream cont_e(0);
  cont_e.deserialize(env_rng.serialize());
  const RolloutBuffer orig =
      collect(*env, actors.policy, actors.value, 10, action_rng, env_rng, cs);
  const RolloutBuffer resumed =
      collect(*env, actors.policy, actors.value, 10, cont_a, cont_e, restored);
  CHECK(buffers_equal(orig, resumed));
  CHECK(restored.total_steps == cs.total_steps);
}

TEST_CASE("a two-step advantage by hand") {
  RolloutBuffer buf;
  buf.horizon = 2;
  buf.state_dim = 1;
  buf.action_dim = 1;
  buf.dt = 0.05;
  buf.states = {0.0, 0.0};
  buf.actions = {0.0, 0.0};
  buf.rewards = {1.0, 2.0};
  buf.next_states = {0.0, 0.0};
  buf.dones = {0, 0};
  buf.truncateds = {0, 0};
  buf.log_probs_old = {0.0, 0.0};
  buf.values_old = {0.0, 0.0};
  buf.values_next_old = {0.0, 0.0};
  const AdvantageEstimate est = compute_gae(buf, 0.99, 0.95);
  CHECK(est.td_residuals[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(est.td_residuals[1] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(est.advantages[1] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(est.advantages[0] ==
        doctest::Approx(1.0 + 0.99 * 0.95 * 2.0).epsilon(1e-15));
}

TEST_CASE("termination zeroes the bootstrap, truncation keeps it") {
  RolloutBuffer buf;
  buf.horizon = 2;
  buf.state_dim = 1;
  buf.action_dim = 1;
  buf.dt = 0.05;
  buf.states = {0.0, 0.0};
  buf.actions = {0.0, 0.0};
  buf.rewards = {0.5, -0.25};
  buf.next_states = {0.0, 0.0};
  buf.log_probs_old = {0.0, 0.0};
  buf.values_old = {0.3, -0.1};
  buf.values_next_old = {0.8, 0.4};
  const double gamma = 0.99;

  buf.dones = {1, 0};
  buf.truncateds = {0, 0};
  AdvantageEstimate done_est = compute_gae(buf, gamma, 0.95);
  CHECK(done_est.td_residuals[0] ==
        doctest::Approx(0.5 - 0.3).epsilon(1e-15));  // no bootstrap
  CHECK(done_est.advantages[0] == done_est.td_residuals[0]);  // recursion cut

  buf.dones = {0, 0};
  buf.truncateds = {1, 0};
  AdvantageEstimate trunc_est = compute_gae(buf, gamma, 0.95);
  CHECK(trunc_est.td_residuals[0] ==
        doctest::Approx(0.5 + gamma * 0.8 - 0.3).epsilon(1e-15));  // kept
  CHECK(trunc_est.advantages[0] == trunc_est.td_residuals[0]);  // still cut
}

TEST_CASE("recursion equals the explicit double sum on random buffers") {
  RngStream rng(515253);
  for (int trial = 0; trial < 100; ++trial) {
    const RolloutBuffer buf = random_buffer(rng, 64);
    const double gamma = 0.9 + 0.099 * rng.uniform();
    const double lambda = rng.uniform();
    const AdvantageEstimate est = compute_gae(buf, gamma, lambda);
    const std::vector<double> brute = brute_force_gae(buf, gamma, lambda);
    for (int t = 0; t < 64; ++t) {
      CHECK(std::abs(est.advantages[t] - brute[t]) <= 1e-12);
    }
  }
}

TEST_CASE("advantage normalization hits mean zero and unit population std") {
  std::vector<double> a{1.0, 2.0, 3.0};
  normalize_advantages(a);
  const double s = std::sqrt(2.0 / 3.0);
  CHECK(a[0] == doctest::Approx(-1.0 / s).epsilon(1e-14));
  CHECK(a[1] == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(a[2] == doctest::Approx(1.0 / s).epsilon(1e-14));

  std::vector<double> flat{5.0, 5.0, 5.0};
  normalize_advantages(flat);
  CHECK(flat == std::vector<double>{0.0, 0.0, 0.0});

  std::vector<double> empty;
  normalize_advantages(empty);  // must not crash
  CHECK(empty.empty());
}
