#include "hjbppo/environment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace hjbppo::envs {

void Environment::clip_action(std::span<const double> action,
                              std::span<double> out) const {
  for (int k = 0; k < spec_.action_dim; ++k) {
    out[k] = std::clamp(action[k], spec_.action_low[k], spec_.action_high[k]);
  }
}

StepResult Environment::step(std::span<const double> state,
                             std::span<const double> action) const {
  if (static_cast<int>(state.size()) != spec_.state_dim ||
      static_cast<int>(action.size()) != spec_.action_dim) {
    throw std::invalid_argument("Environment::step: dimension mismatch");
  }
  std::vector<double> u(spec_.action_dim);
  clip_action(action, u);

  StepResult result;
  result.reward = reward(state, u);

  std::vector<double> xdot(spec_.state_dim);
  dynamics_clipped(state, u, xdot);

  result.next_state.assign(state.begin(), state.end());
  if (spec_.integrator == Integrator::kExplicitEuler) {
    for (int i = 0; i < spec_.state_dim; ++i) {
      result.next_state[i] += spec_.dt * xdot[i];
    }
  } else {
    // velocities first, then positions with the updated velocities
    std::vector<bool> is_position(spec_.state_dim, false);
    const auto pairs = velocity_pairs();
    for (const auto& [pos, vel] : pairs) is_position[pos] = true;
    for (int i = 0; i < spec_.state_dim; ++i) {
      if (!is_position[i]) result.next_state[i] += spec_.dt * xdot[i];
    }
    for (const auto& [pos, vel] : pairs) {
      result.next_state[pos] += spec_.dt * result.next_state[vel];
    }
  }

  result.done = terminal(result.next_state);
  return result;
}

void Environment::dynamics(std::span<const double> state,
                           std::span<const double> action,
                           std::span<double> xdot) const {
  std::vector<double> u(spec_.action_dim);
  clip_action(action, u);
  dynamics_clipped(state, u, xdot);
}

// -- LQR family -- //

LqrEnvironment::LqrEnvironment(EnvironmentSpec spec, LqrProblem problem,
                               double init_radius)
    : Environment(std::move(spec)),
      problem_(std::move(problem)),
      init_radius_(init_radius) {
  problem_.validate();
  if (problem_.state_dim() != spec_.state_dim ||
      problem_.action_dim() != spec_.action_dim) {
    throw std::invalid_argument("LqrEnvironment: spec/problem dimension mismatch");
  }
}

std::vector<double> LqrEnvironment::reset(RngStream& rng) const {
  std::vector<double> x(spec_.state_dim);
  for (double& xi : x) xi = rng.uniform(-init_radius_, init_radius_);
  return x;
}

void LqrEnvironment::dynamics_clipped(std::span<const double> state,
                                      std::span<const double> u,
                                      std::span<double> xdot) const {
  const int n = spec_.state_dim;
  const int m = spec_.action_dim;
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int j = 0; j < n; ++j) acc += problem_.A(i, j) * state[j];
    for (int k = 0; k < m; ++k) acc += problem_.B(i, k) * u[k];
    xdot[i] = acc;
  }
}

double LqrEnvironment::reward(std::span<const double> state,
                              std::span<const double> u) const {
  const int n = spec_.state_dim;
  const int m = spec_.action_dim;
  double cost = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) cost += state[i] * problem_.Q(i, j) * state[j];
  }
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) cost += u[i] * problem_.Ru(i, j) * u[j];
  }
  return -cost * spec_.dt;
}

std::vector<std::pair<int, int>> LqrEnvironment::velocity_pairs() const {
  if (spec_.name == "point_mass") return {{0, 2}, {1, 3}};
  return {{0, 1}};
}

// -- pendulum swing-up -- //

PendulumEnvironment::PendulumEnvironment(EnvironmentSpec spec,
                                         double init_radius)
    : Environment(std::move(spec)), init_radius_(init_radius) {}

std::vector<double> PendulumEnvironment::reset(RngStream& rng) const {
  const double pi = std::numbers::pi;
  return {rng.uniform(-pi, pi) * init_radius_,
          rng.uniform(-1.0, 1.0) * init_radius_};
}

void PendulumEnvironment::dynamics_clipped(std::span<const double> state,
                                           std::span<const double> u,
                                           std::span<double> xdot) const {
  const double theta = state[0];
  const double theta_dot = state[1];
  xdot[0] = theta_dot;
  xdot[1] = 3.0 * kGravity / (2.0 * kLength) * std::sin(theta) +
            3.0 / (kMass * kLength * kLength) * u[0] - kDamping * theta_dot;
}

double PendulumEnvironment::reward(std::span<const double> state,
                                   std::span<const double> u) const {
  const double theta = state[0];
  const double theta_dot = state[1];
  return -(2.0 * (1.0 - std::cos(theta)) + 0.1 * theta_dot * theta_dot +
           0.001 * u[0] * u[0]);
}

std::vector<std::pair<int, int>> PendulumEnvironment::velocity_pairs() const {
  return {{0, 1}};
}

// -- factory -- //

namespace {

EnvironmentSpec base_spec(const std::string& name, int state_dim,
                          int action_dim, double action_bound,
                          bool reward_dt_scaled) {
  EnvironmentSpec spec;
  spec.name = name;
  spec.state_dim = state_dim;
  spec.action_dim = action_dim;
  spec.action_low.assign(action_dim, -action_bound);
  spec.action_high.assign(action_dim, action_bound);
  spec.dt = 0.05;
  spec.gamma = 0.99;
  spec.max_episode_steps = 200;
  spec.reward_dt_scaled = reward_dt_scaled;
  return spec;
}

void apply_overrides(EnvironmentSpec& spec, const EnvOverrides& o) {
  if (o.dt) {
    if (*o.dt <= 0.0) throw std::invalid_argument("environment dt must be > 0");
    spec.dt = *o.dt;
  }
  if (o.max_episode_steps) {
    if (*o.max_episode_steps <= 0) {
      throw std::invalid_argument("environment max_episode_steps must be > 0");
    }
    spec.max_episode_steps = *o.max_episode_steps;
  }
  if (o.gamma) {
    if (!(*o.gamma > 0.0 && *o.gamma < 1.0)) {
      throw std::invalid_argument("environment gamma must be in (0, 1)");
    }
    spec.gamma = *o.gamma;
  }
  if (o.integrator) spec.integrator = *o.integrator;
}

}  // namespace

std::unique_ptr<Environment> make_environment(const std::string& name,
                                              const EnvOverrides& overrides) {
  const double init_radius = overrides.init_radius.value_or(1.0);
  if (init_radius < 0.0) {
    throw std::invalid_argument("environment init_radius must be >= 0");
  }
  if (name == "lqr") {
    EnvironmentSpec spec = base_spec(name, 2, 1, 15.0, true);
    apply_overrides(spec, overrides);
    LqrProblem prob;
    prob.A = Eigen::MatrixXd{{0.0, 1.0}, {0.0, 0.0}};
    prob.B = Eigen::MatrixXd{{0.0}, {1.0}};
    prob.Q = Eigen::MatrixXd{{1.0, 0.0}, {0.0, 0.1}};
    prob.Ru = Eigen::MatrixXd{{0.05}};
    return std::make_unique<LqrEnvironment>(std::move(spec), std::move(prob),
                                            init_radius);
  }
  if (name == "point_mass") {
    EnvironmentSpec spec = base_spec(name, 4, 2, 15.0, true);
    apply_overrides(spec, overrides);
    LqrProblem prob;
    prob.A = Eigen::MatrixXd::Zero(4, 4);
    prob.A(0, 2) = 1.0;
    prob.A(1, 3) = 1.0;
    prob.B = Eigen::MatrixXd::Zero(4, 2);
    prob.B(2, 0) = 1.0;
    prob.B(3, 1) = 1.0;
    prob.Q = Eigen::Vector4d(1.0, 1.0, 0.1, 0.1).asDiagonal();
    prob.Ru = Eigen::Vector2d(0.05, 0.05).asDiagonal();
    return std::make_unique<LqrEnvironment>(std::move(spec), std::move(prob),
                                            init_radius);
  }
  if (name == "pendulum") {
    EnvironmentSpec spec = base_spec(name, 2, 1, 2.0, false);
    apply_overrides(spec, overrides);
    return std::make_unique<PendulumEnvironment>(std::move(spec), init_radius);
  }
  throw std::invalid_argument("unknown environment: " + name);
}

std::vector<std::string> environment_names() {
  return {"lqr", "point_mass", "pendulum"};
}

}  // namespace hjbppo::envs
