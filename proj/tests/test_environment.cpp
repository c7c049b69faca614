#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "hjbppo/environment.hpp"
#include "hjbppo/rng.hpp"

using hjbppo::RngStream;
using hjbppo::envs::EnvOverrides;
using hjbppo::envs::Environment;
using hjbppo::envs::environment_names;
using hjbppo::envs::Integrator;
using hjbppo::envs::LqrEnvironment;
using hjbppo::envs::make_environment;
using hjbppo::envs::PendulumEnvironment;
using hjbppo::envs::StepResult;

TEST_CASE("the factory knows exactly the advertised names") {
  const auto names = environment_names();
  REQUIRE(names.size() == 3);
  for (const auto& name : names) {
    CHECK(make_environment(name) != nullptr);
  }
  CHECK_THROWS_AS(make_environment("cartpole"), std::invalid_argument);
}

TEST_CASE("default specs carry the documented shapes and conventions") {
  const auto lqr = make_environment("lqr");
  CHECK(lqr->spec().state_dim == 2);
  CHECK(lqr->spec().action_dim == 1);
  CHECK(lqr->spec().action_low == std::vector<double>{-15.0});
  CHECK(lqr->spec().action_high == std::vector<double>{15.0});
  CHECK(lqr->spec().dt == 0.05);
  CHECK(lqr->spec().gamma == 0.99);
  CHECK(lqr->spec().max_episode_steps == 200);
  CHECK(lqr->spec().reward_dt_scaled);
  CHECK(lqr->spec().reward_rate_scale() == doctest::Approx(20.0));

  const auto pm = make_environment("point_mass");
  CHECK(pm->spec().state_dim == 4);
  CHECK(pm->spec().action_dim == 2);
  CHECK(pm->spec().reward_dt_scaled);

  const auto pend = make_environment("pendulum");
  CHECK(pend->spec().state_dim == 2);
  CHECK(pend->spec().action_dim == 1);
  CHECK(pend->spec().action_low == std::vector<double>{-2.0});
  CHECK_FALSE(pend->spec().reward_dt_scaled);
  CHECK(pend->spec().reward_rate_scale() == 1.0);
}

TEST_CASE("one explicit-Euler step of the double integrator by hand") {
  const auto env = make_environment("lqr");
  const std::array<double, 2> x{1.0, -0.5};
  const std::array<double, 1> u{0.3};
  const StepResult r = env->step(x, u);
  // xdot = (v, u) = (-0.5, 0.3); next = x + dt * xdot
  CHECK(r.next_state[0] == doctest::Approx(1.0 + 0.05 * -0.5).epsilon(1e-15));
  CHECK(r.next_state[1] == doctest::Approx(-0.5 + 0.05 * 0.3).epsilon(1e-15));
  // reward = -(x'Qx + u'Ru u) * dt
  const double rate = -(1.0 * 1.0 + 0.1 * 0.25 + 0.05 * 0.09);
  CHECK(r.reward == doctest::Approx(rate * 0.05).epsilon(1e-15));
  CHECK_FALSE(r.done);
  CHECK_FALSE(r.truncated);
}

TEST_CASE("actions are clipped before dynamics and reward") {
  const auto env = make_environment("lqr");
  const std::array<double, 2> x{0.0, 0.0};
  const std::array<double, 1> huge{100.0};
  const std::array<double, 1> at_bound{15.0};
  const StepResult rh = env->step(x, huge);
  const StepResult rb = env->step(x, at_bound);
  CHECK(rh.next_state == rb.next_state);
  CHECK(rh.reward == rb.reward);
}

TEST_CASE("finite-difference of an explicit-Euler step recovers the dynamics") {
  for (const char* name : {"lqr", "point_mass", "pendulum"}) {
    const auto env = make_environment(name);
    RngStream rng(17);
    const int n = env->spec().state_dim;
    const int m = env->spec().action_dim;
    std::vector<double> x(n);
    std::vector<double> u(m);
    for (double& v : x) v = rng.uniform(-1.0, 1.0);
    for (double& v : u) v = rng.uniform(-1.0, 1.0);
    std::vector<double> xdot(n);
    env->dynamics(x, u, xdot);
    const StepResult r = env->step(x, u);
    for (int i = 0; i < n; ++i) {
      const double fd = (r.next_state[i] - x[i]) / env->spec().dt;
      CHECK(fd == doctest::Approx(xdot[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("one pendulum step by hand, explicit and semi-implicit") {
  const double theta = 0.5, theta_dot = -0.2, torque = 0.7, dt = 0.05;
  const double accel =
      3.0 * PendulumEnvironment::kGravity / (2.0 * PendulumEnvironment::kLength) *
          std::sin(theta) +
      3.0 / (PendulumEnvironment::kMass * PendulumEnvironment::kLength *
             PendulumEnvironment::kLength) *
          torque -
      PendulumEnvironment::kDamping * theta_dot;
  const std::array<double, 2> x{theta, theta_dot};
  const std::array<double, 1> u{torque};

  const auto explicit_env = make_environment("pendulum");
  const StepResult re = explicit_env->step(x, u);
  CHECK(re.next_state[0] == doctest::Approx(theta + dt * theta_dot).epsilon(1e-15));
  CHECK(re.next_state[1] == doctest::Approx(theta_dot + dt * accel).epsilon(1e-15));

  EnvOverrides overrides;
  overrides.integrator = Integrator::kSemiImplicitEuler;
  const auto semi_env = make_environment("pendulum", overrides);
  const StepResult rs = semi_env->step(x, u);
  const double new_vel = theta_dot + dt * accel;
  CHECK(rs.next_state[1] == doctest::Approx(new_vel).epsilon(1e-15));
  CHECK(rs.next_state[0] == doctest::Approx(theta + dt * new_vel).epsilon(1e-15));

  const double expect_reward = -(2.0 * (1.0 - std::cos(theta)) +
                                 0.1 * theta_dot * theta_dot +
                                 0.001 * torque * torque);
  CHECK(re.reward == doctest::Approx(expect_reward).epsilon(1e-15));
  CHECK(rs.reward == re.reward);
}

TEST_CASE("point mass is two decoupled double integrators") {
  const auto env = make_environment("point_mass");
  const std::array<double, 4> x{1.0, -2.0, 0.5, 0.25};
  const std::array<double, 2> u{0.3, -0.6};
  std::vector<double> xdot(4);
  env->dynamics(x, u, xdot);
  CHECK(xdot[0] == 0.5);
  CHECK(xdot[1] == 0.25);
  CHECK(xdot[2] == 0.3);
  CHECK(xdot[3] == -0.6);
}

TEST_CASE("steps are pure functions of their arguments") {
  const auto env = make_environment("pendulum");
  const std::array<double, 2> x{2.2, -1.7};
  const std::array<double, 1> u{1.1};
  const StepResult a = env->step(x, u);
  (void)env->step(std::array<double, 2>{0.1, 0.2}, std::array<double, 1>{0.0});
  const StepResult b = env->step(x, u);
  CHECK(a.next_state == b.next_state);
  CHECK(a.reward == b.reward);
}

TEST_CASE("neither family terminates on its own") {
  for (const char* name : {"lqr", "pendulum"}) {
    const auto env = make_environment(name);
    RngStream rng(3);
    std::vector<double> x = env->reset(rng);
    std::vector<double> u(env->spec().action_dim, 1.5);
    for (int t = 0; t < 500; ++t) {
      StepResult r = env->step(x, u);
      CHECK_FALSE(r.done);
      CHECK_FALSE(r.truncated);
      x = std::move(r.next_state);
    }
  }
}

TEST_CASE("resets respect the initial radius") {
  EnvOverrides overrides;
  overrides.init_radius = 0.25;
  const auto lqr = make_environment("lqr", overrides);
  const auto pend = make_environment("pendulum", overrides);
  RngStream rng(19);
  for (int i = 0; i < 200; ++i) {
    const auto xl = lqr->reset(rng);
    CHECK(std::abs(xl[0]) <= 0.25);
    CHECK(std::abs(xl[1]) <= 0.25);
    const auto xp = pend->reset(rng);
    CHECK(std::abs(xp[0]) <= 0.25 * std::numbers::pi);
    CHECK(std::abs(xp[1]) <= 0.25);
  }

  EnvOverrides zero;
  zero.init_radius = 0.0;
  const auto pinned = make_environment("lqr", zero);
  const auto x0 = pinned->reset(rng);
  CHECK(x0 == std::vector<double>{0.0, 0.0});
}

TEST_CASE("resets are a pure function of the stream state") {
  const auto env = make_environment("lqr");
  RngStream a(29);
  RngStream b(29);
  for (int i = 0; i < 10; ++i) {
    CHECK(env->reset(a) == env->reset(b));
  }
}

TEST_CASE("overrides reach the spec and invalid ones are rejected") {
  EnvOverrides o;
  o.dt = 0.01;
  o.max_episode_steps = 55;
  o.gamma = 0.95;
  const auto env = make_environment("lqr", o);
  CHECK(env->spec().dt == 0.01);
  CHECK(env->spec().max_episode_steps == 55);
  CHECK(env->spec().gamma == 0.95);
  CHECK(env->spec().reward_rate_scale() == doctest::Approx(100.0));

  EnvOverrides bad_dt;
  bad_dt.dt = 0.0;
  CHECK_THROWS_AS(make_environment("lqr", bad_dt), std::invalid_argument);
  EnvOverrides bad_steps;
  bad_steps.max_episode_steps = -1;
  CHECK_THROWS_AS(make_environment("lqr", bad_steps), std::invalid_argument);
  EnvOverrides bad_gamma;
  bad_gamma.gamma = 1.5;
  CHECK_THROWS_AS(make_environment("lqr", bad_gamma), std::invalid_argument);
  EnvOverrides bad_radius;
  bad_radius.init_radius = -2.0;
  CHECK_THROWS_AS(make_environment("lqr", bad_radius), std::invalid_argument);
}

TEST_CASE("the lqr environment exposes its analytic problem") {
  const auto env = make_environment("lqr");
  const auto* lqr = dynamic_cast<const LqrEnvironment*>(env.get());
  REQUIRE(lqr != nullptr);
  CHECK(lqr->problem().state_dim() == 2);
  CHECK(lqr->problem().action_dim() == 1);
  CHECK(lqr->problem().A(0, 1) == 1.0);
  CHECK(lqr->problem().Ru(0, 0) == 0.05);
  lqr->problem().validate();
}
