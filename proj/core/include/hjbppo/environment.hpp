#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hjbppo/lqr.hpp"
#include "hjbppo/rng.hpp"

namespace hjbppo::envs {

enum class Integrator {
  kExplicitEuler,      // next = state + dt * f(state, u)
  kSemiImplicitEuler,  // velocities first, positions with updated velocities
};

struct EnvironmentSpec {
  std::string name;
  int state_dim = 0;
  int action_dim = 0;
  std::vector<double> action_low;
  std::vector<double> action_high;
  double dt = 0.0;
  double gamma = 0.99;
  int max_episode_steps = 0;
  // True when stored rewards are reward-rate * dt. The HJB residual needs
  // rates, so such rewards are divided by dt before entering it; per-step
  // conventions (pendulum) pass through unchanged.
  bool reward_dt_scaled = false;
  Integrator integrator = Integrator::kExplicitEuler;

  double reward_rate_scale() const { return reward_dt_scaled ? 1.0 / dt : 1.0; }
};

struct StepResult {
  std::vector<double> next_state;
  double reward = 0.0;
  bool done = false;       // true termination (bootstrap must be zeroed)
  bool truncated = false;  // horizon cut; set by the collector, not here
};

// Continuous-time control problem advanced by an explicit integrator. step()
// is stateless: it clips the action to the bounds, evaluates the reward at
// (state, clipped action), and integrates one dt. Horizon accounting
// (truncation) belongs to the rollout collector.
class Environment {
 public:
  virtual ~Environment() = default;

  const EnvironmentSpec& spec() const { return spec_; }

  virtual std::vector<double> reset(RngStream& rng) const = 0;
  StepResult step(std::span<const double> state,
                  std::span<const double> action) const;
  // Exact continuous-time derivative f(x, clip(u)); with the explicit Euler
  // integrator, (next - state) / dt reproduces this exactly.
  void dynamics(std::span<const double> state, std::span<const double> action,
                std::span<double> xdot) const;

 protected:
  explicit Environment(EnvironmentSpec spec) : spec_(std::move(spec)) {}

  virtual void dynamics_clipped(std::span<const double> state,
                                std::span<const double> u,
                                std::span<double> xdot) const = 0;
  virtual double reward(std::span<const double> state,
                        std::span<const double> u) const = 0;
  virtual bool terminal(std::span<const double> next_state) const {
    return false;
  }
  // (position index, velocity index) pairs for the semi-implicit integrator;
  // coordinates not listed integrate explicitly.
  virtual std::vector<std::pair<int, int>> velocity_pairs() const { return {}; }

  void clip_action(std::span<const double> action, std::span<double> out) const;

  EnvironmentSpec spec_;
};

// Discounted LQR with explicit Euler discretization; reward = rate * dt.
// Covers both the 2-state double integrator ("lqr") and the 4-state planar
// point mass ("point_mass"), which is two decoupled double integrators.
class LqrEnvironment : public Environment {
 public:
  LqrEnvironment(EnvironmentSpec spec, LqrProblem problem, double init_radius);

  const LqrProblem& problem() const { return problem_; }
  double init_radius() const { return init_radius_; }

  std::vector<double> reset(RngStream& rng) const override;

 protected:
  void dynamics_clipped(std::span<const double> state,
                        std::span<const double> u,
                        std::span<double> xdot) const override;
  double reward(std::span<const double> state,
                std::span<const double> u) const override;
  std::vector<std::pair<int, int>> velocity_pairs() const override;

 private:
  LqrProblem problem_;
  double init_radius_;
};

// Torque-limited pendulum swing-up. State (theta, thetadot) with theta = 0
// upright and theta left unwrapped: the reward is periodic in theta, and
// wrapping would put a discontinuity into (x_{t+1} - x_t)/dt. Mild linear
// damping keeps the reachable set bounded. Per-step (not dt-scaled) reward.
class PendulumEnvironment : public Environment {
 public:
  explicit PendulumEnvironment(EnvironmentSpec spec, double init_radius);

  std::vector<double> reset(RngStream& rng) const override;

  static constexpr double kGravity = 9.81;
  static constexpr double kMass = 1.0;
  static constexpr double kLength = 1.0;
  static constexpr double kDamping = 0.1;

 protected:
  void dynamics_clipped(std::span<const double> state,
                        std::span<const double> u,
                        std::span<double> xdot) const override;
  double reward(std::span<const double> state,
                std::span<const double> u) const override;
  std::vector<std::pair<int, int>> velocity_pairs() const override;

 private:
  double init_radius_;
};

struct EnvOverrides {
  std::optional<double> dt;
  std::optional<int> max_episode_steps;
  std::optional<double> init_radius;
  std::optional<double> gamma;
  std::optional<Integrator> integrator;
};

// Known names: "lqr", "point_mass", "pendulum".
std::unique_ptr<Environment> make_environment(const std::string& name,
                                              const EnvOverrides& overrides = {});
std::vector<std::string> environment_names();

}  // namespace hjbppo::envs
