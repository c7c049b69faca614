#include "hjbppo/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>

namespace hjbppo::losses {

double hjb_residual(double v, std::span<const double> grad_v,
                    double reward_rate, std::span<const double> f_hat,
                    double log_gamma) {
  double acc = v * log_gamma + reward_rate;
  for (std::size_t k = 0; k < grad_v.size(); ++k) acc += grad_v[k] * f_hat[k];
  return acc;
}

double bellman_residual(double v, double v_next, double reward, double gamma,
                        bool done) {
  const double bootstrap = done ? 0.0 : v_next;
  return v - (reward + gamma * bootstrap);
}

ValueLossReport evaluate_value_losses(
    const nets::ValueNetwork& value, std::span<const double> states,
    std::span<const double> rewards, std::span<const double> next_states,
    std::span<const std::uint8_t> dones,
    std::span<const std::uint8_t> truncateds, int state_dim, double gamma,
    double dt, double reward_rate_scale) {
  const int n = static_cast<int>(rewards.size());
  const double log_gamma = std::log(gamma);
  ValueLossReport rep;
  std::vector<double> f_hat(state_dim);
  double sum_b = 0.0, sum_h = 0.0;
  for (int t = 0; t < n; ++t) {
    const std::span<const double> x =
        states.subspan(static_cast<std::size_t>(t) * state_dim, state_dim);
    const std::span<const double> xn =
        next_states.subspan(static_cast<std::size_t>(t) * state_dim, state_dim);
    const bool done = dones[t] != 0;
    const bool boundary = done || truncateds[t] != 0;

    const ad::DualGradient vg = value.input_gradient(x);
    const double v_next = value.forward(xn);
    const double b =
        bellman_residual(vg.value, v_next, rewards[t], gamma, done);
    sum_b += b * b;
    ++rep.bellman_rows;

    if (!boundary) {
      for (int k = 0; k < state_dim; ++k) f_hat[k] = (xn[k] - x[k]) / dt;
      const double r = hjb_residual(vg.value, vg.input_grad,
                                    rewards[t] * reward_rate_scale, f_hat,
                                    log_gamma);
      sum_h += r * r;
      ++rep.hjb_rows;
    }
  }
  if (rep.bellman_rows > 0) rep.bellman = sum_b / rep.bellman_rows;
  if (rep.hjb_rows > 0) rep.hjb = sum_h / rep.hjb_rows;
  return rep;
}

double ppo_clip_objective(std::span<const double> ratios,
                          std::span<const double> advantages,
                          double clip_epsilon) {
  if (ratios.size() != advantages.size()) {
    throw std::invalid_argument("ppo_clip_objective: size mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const double rho = ratios[i];
    const double clipped =
        std::clamp(rho, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
    acc += std::min(rho * advantages[i], clipped * advantages[i]);
  }
  return ratios.empty() ? 0.0 : acc / static_cast<double>(ratios.size());
}

double clip_fraction(std::span<const double> ratios, double clip_epsilon) {
  if (ratios.empty()) return 0.0;
  int clipped = 0;
  for (double rho : ratios) {
    if (std::abs(rho - 1.0) > clip_epsilon) ++clipped;
  }
  return static_cast<double>(clipped) / static_cast<double>(ratios.size());
}

ValueObjectiveReport value_objective_gradient(
    const nets::ValueNetwork& value, ad::ScalarTape& tape,
    const rollout::RolloutBuffer& buffer, std::span<const double> f_hat,
    std::span<const int> rows, const ValueObjectiveConfig& cfg,
    std::span<double> grad_out) {
  const int n_rows = static_cast<int>(rows.size());
  const int state_dim = buffer.state_dim;
  const int param_count = value.param_count();
  if (static_cast<int>(grad_out.size()) != param_count) {
    throw std::invalid_argument("value_objective_gradient: grad size mismatch");
  }
  if (n_rows == 0) throw std::invalid_argument("value_objective_gradient: empty minibatch");
  const double log_gamma = std::log(cfg.gamma);
  const bool want_hjb = cfg.lambda_hjb != 0.0;

  tape.clear();
  const ad::NodeId params_start = value.register_params(tape);

  struct Row {
    ad::NodeId x_start = 0;
    ad::NodeId v_node = 0;
    ad::NodeId v_next_node = 0;
    double bellman_res = 0.0;
    double hjb_res = 0.0;
    bool keep_hjb = false;
  };
  std::vector<Row> recs(n_rows);

  int hjb_rows = 0;
  for (int j = 0; j < n_rows; ++j) {
    const int t = rows[j];
    Row& rec = recs[j];
    rec.x_start = tape.input_range(buffer.state(t));
    rec.v_node = value.record(tape, params_start, rec.x_start);
    const ad::NodeId xn_start = tape.input_range(buffer.next_state(t));
    rec.v_next_node = value.record(tape, params_start, xn_start);

    const double v = tape.value(rec.v_node);
    const double v_next = tape.value(rec.v_next_node);
    const bool done = buffer.dones[t] != 0;
    rec.bellman_res =
        bellman_residual(v, v_next, buffer.rewards[t], cfg.gamma, done);
    rec.keep_hjb = want_hjb && !buffer.boundary(t);
    if (rec.keep_hjb) ++hjb_rows;
  }

  ValueObjectiveReport rep;
  rep.hjb_rows = hjb_rows;
  double sum_b = 0.0;
  for (const Row& rec : recs) sum_b += rec.bellman_res * rec.bellman_res;
  rep.bellman = sum_b / n_rows;

  std::vector<ad::ScalarTape::OutputSeed> seeds;
  seeds.reserve(static_cast<std::size_t>(n_rows) * 2);
  std::vector<ad::ScalarTape::TangentSeed> tangent_seeds;
  const double inv_nu = 1.0 / n_rows;
  // d(w * MSE_b)/d b_i = 2 w b_i / n; the default w = 0.5 reduces u_coef to
  // exactly 1/n.
  const double u_coef = 2.0 * cfg.bellman_weight * inv_nu;

  if (hjb_rows > 0) {
    // The residual needs grad_x V per kept row; seed the forward tangent with
    // f_hat on that row's state leaves so tangent(v_node) = grad_x V . f_hat.
    const double inv_nf = 1.0 / hjb_rows;
    tangent_seeds.reserve(static_cast<std::size_t>(hjb_rows) * state_dim);
    double sum_h = 0.0;
    for (int j = 0; j < n_rows; ++j) {
      Row& rec = recs[j];
      if (!rec.keep_hjb) continue;
      const int t = rows[j];
      const std::span<const double> fh =
          f_hat.subspan(static_cast<std::size_t>(t) * state_dim, state_dim);
      const ad::DualGradient vg = value.input_gradient(buffer.state(t));
      rec.hjb_res = hjb_residual(vg.value, vg.input_grad,
                                 buffer.rewards[t] * cfg.reward_rate_scale, fh,
                                 log_gamma);
      sum_h += rec.hjb_res * rec.hjb_res;
      if (!cfg.detach_value_input_grad) {
        for (int k = 0; k < state_dim; ++k) {
          tangent_seeds.push_back(
              {static_cast<ad::NodeId>(rec.x_start + k), fh[k]});
        }
      }
    }
    rep.hjb = sum_h * inv_nf;
    rep.total = cfg.bellman_weight * rep.bellman + cfg.lambda_hjb * rep.hjb;

    for (int j = 0; j < n_rows; ++j) {
      const Row& rec = recs[j];
      // d(lambda * MSE_f)/dV(x) enters via the direct V log(gamma) term; the
      // grad_x V pathway rides on the tangent adjoint.
      const double hjb_coef = rec.keep_hjb ? 2.0 * cfg.lambda_hjb *
                                                 rec.hjb_res * inv_nf
                                           : 0.0;
      const double alpha = rec.bellman_res * u_coef + hjb_coef * log_gamma;
      const double tangent_adj =
          (rec.keep_hjb && !cfg.detach_value_input_grad) ? hjb_coef : 0.0;
      seeds.push_back({rec.v_node, alpha, tangent_adj});
      const double beta = -cfg.gamma * rec.bellman_res * u_coef;
      if (buffer.dones[rows[j]] == 0) {
        seeds.push_back({rec.v_next_node, beta, 0.0});
      }
    }
  } else {
    rep.total = cfg.bellman_weight * rep.bellman;
    for (int j = 0; j < n_rows; ++j) {
      const Row& rec = recs[j];
      seeds.push_back({rec.v_node, rec.bellman_res * u_coef, 0.0});
      if (buffer.dones[rows[j]] == 0) {
        seeds.push_back(
            {rec.v_next_node, -cfg.gamma * rec.bellman_res * u_coef, 0.0});
      }
    }
  }

  std::vector<ad::NodeId> wrt(param_count);
  std::iota(wrt.begin(), wrt.end(), params_start);
  if (tangent_seeds.empty()) {
    tape.weighted_gradient(seeds, wrt, grad_out);
  } else {
    tape.nested_gradient(seeds, tangent_seeds, wrt, grad_out);
  }
  return rep;
}

PolicyObjectiveReport policy_objective_gradient(
    const nets::GaussianPolicy& policy, ad::ScalarTape& tape,
    const rollout::RolloutBuffer& buffer, std::span<const int> rows,
    std::span<const double> advantages, double clip_epsilon,
    std::span<double> grad_out) {
  const int n_rows = static_cast<int>(rows.size());
  const int param_count = policy.param_count();
  if (static_cast<int>(grad_out.size()) != param_count) {
    throw std::invalid_argument("policy_objective_gradient: grad size mismatch");
  }
  if (rows.size() != advantages.size()) {
    throw std::invalid_argument("policy_objective_gradient: advantage/row size mismatch");
  }
  if (n_rows == 0) throw std::invalid_argument("policy_objective_gradient: empty minibatch");

  tape.clear();
  const ad::NodeId params_start = policy.register_params(tape);

  PolicyObjectiveReport rep;
  std::vector<ad::ScalarTape::OutputSeed> seeds;
  seeds.reserve(n_rows);
  const double inv_n = 1.0 / n_rows;
  int clipped = 0;
  double sum_obj = 0.0, sum_ratio = 0.0, sum_kl = 0.0;

  for (int j = 0; j < n_rows; ++j) {
    const int t = rows[j];
    const ad::NodeId x_start = tape.input_range(buffer.state(t));
    const ad::NodeId lp_node =
        policy.record_log_prob(tape, params_start, x_start, buffer.action(t));
    const double lp = tape.value(lp_node);
    const double rho = std::exp(lp - buffer.log_probs_old[t]);
    const double adv = advantages[j];
    const double unclipped = rho * adv;
    const double clipped_term =
        std::clamp(rho, 1.0 - clip_epsilon, 1.0 + clip_epsilon) * adv;
    sum_obj += std::min(unclipped, clipped_term);
    sum_ratio += rho;
    sum_kl += buffer.log_probs_old[t] - lp;
    if (std::abs(rho - 1.0) > clip_epsilon) ++clipped;
    // min() follows the unclipped branch on ties; in the clipped branch the
    // ratio sits outside the band, where clamp has zero slope.
    const double coef = unclipped <= clipped_term ? adv : 0.0;
    seeds.push_back({lp_node, coef * rho * inv_n, 0.0});
  }

  rep.surrogate = sum_obj * inv_n;
  rep.clip_fraction = static_cast<double>(clipped) * inv_n;
  rep.mean_ratio = sum_ratio * inv_n;
  rep.approx_kl = sum_kl * inv_n;

  std::vector<ad::NodeId> wrt(param_count);
  std::iota(wrt.begin(), wrt.end(), params_start);
  tape.weighted_gradient(seeds, wrt, grad_out);
  return rep;
}

}  // namespace hjbppo::losses
