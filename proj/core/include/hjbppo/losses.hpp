#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hjbppo/networks.hpp"
#include "hjbppo/rollout.hpp"
#include "hjbppo/scalar_tape.hpp"

namespace hjbppo::losses {

// Single source of truth for the continuous-time consistency residual of a
// value function at one transition:
//   r = V(x) * log(gamma) + reward_rate + grad_V . f_hat
// where f_hat is the finite-difference dynamics estimate (x' - x) / dt and
// reward_rate is the instantaneous reward rate (stored reward divided by dt
// when the environment accrues reward per unit time).
double hjb_residual(double v, std::span<const double> grad_v,
                    double reward_rate, std::span<const double> f_hat,
                    double log_gamma);

// One-step Bellman self-consistency residual:
//   b = V(x) - (reward + gamma * V(x') * (done ? 0 : 1))
double bellman_residual(double v, double v_next, double reward, double gamma,
                        bool done);

// Mean-squared residuals of a value network over a batch of transitions.
// The Bellman term averages over every row; the continuous-time term skips
// rows whose transition crosses an episode boundary (done or truncated),
// where (x' - x) / dt is not a dynamics sample.
struct ValueLossReport {
  double bellman = 0.0;
  double hjb = 0.0;
  int bellman_rows = 0;
  int hjb_rows = 0;
};

ValueLossReport evaluate_value_losses(
    const nets::ValueNetwork& value, std::span<const double> states,
    std::span<const double> rewards, std::span<const double> next_states,
    std::span<const std::uint8_t> dones,
    std::span<const std::uint8_t> truncateds, int state_dim, double gamma,
    double dt, double reward_rate_scale);

// Plain clipped-surrogate helpers (objective value only).
double ppo_clip_objective(std::span<const double> ratios,
                          std::span<const double> advantages,
                          double clip_epsilon);
double clip_fraction(std::span<const double> ratios, double clip_epsilon);

// --- training-time objectives with parameter gradients --- //

struct ValueObjectiveConfig {
  double gamma = 0.99;
  double dt = 0.05;
  double reward_rate_scale = 1.0;
  double lambda_hjb = 0.0;  // effective weight for this minibatch
  // Weight on the Bellman term; 0.5 is the standard combination, 0 turns the
  // objective into a residual-only step (episode-pooled ablation).
  double bellman_weight = 0.5;
  // When set, the input-gradient of V inside the residual is treated as a
  // constant of the parameters: the residual value is unchanged but the
  // second-order pathway contributes nothing to the parameter gradient.
  bool detach_value_input_grad = false;
};

struct ValueObjectiveReport {
  double bellman = 0.0;  // mean squared Bellman residual over the rows
  double hjb = 0.0;      // mean squared consistency residual over kept rows
  double total = 0.0;    // 0.5 * bellman + lambda_hjb * hjb
  int hjb_rows = 0;
};

// Value objective J = 0.5 * MSE_bellman + lambda * MSE_residual over the given
// buffer rows, with d J / d phi written to grad_out (size = param count).
// The Bellman term differentiates through both V(x) and V(x'); the residual
// term differentiates through V and, unless detached, through grad_x V via the
// tape's forward-over-reverse sweep. f_hat spans the whole buffer
// (horizon x state_dim), as produced by RolloutBuffer::dynamics_estimates().
ValueObjectiveReport value_objective_gradient(
    const nets::ValueNetwork& value, ad::ScalarTape& tape,
    const rollout::RolloutBuffer& buffer, std::span<const double> f_hat,
    std::span<const int> rows, const ValueObjectiveConfig& cfg,
    std::span<double> grad_out);

struct PolicyObjectiveReport {
  double surrogate = 0.0;      // the clipped objective (to ascend)
  double clip_fraction = 0.0;  // share of rows with |ratio - 1| > eps
  double mean_ratio = 0.0;
  double approx_kl = 0.0;      // mean(log_prob_old - log_prob_new)
};

// Clipped-surrogate objective over the given rows and its parameter gradient
// (of the objective itself, i.e. ascend by adding). advantages is
// minibatch-local: advantages[j] belongs to rows[j].
PolicyObjectiveReport policy_objective_gradient(
    const nets::GaussianPolicy& policy, ad::ScalarTape& tape,
    const rollout::RolloutBuffer& buffer, std::span<const int> rows,
    std::span<const double> advantages, double clip_epsilon,
    std::span<double> grad_out);

}  // namespace hjbppo::losses
