#include "hjbppo/networks.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace hjbppo::nets {

int MlpLayout::param_count() const {
  int n = 0;
  for (int l = 0; l < num_layers(); ++l) {
    n += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
  }
  return n;
}

int MlpLayout::weight_offset(int layer) const {
  int off = 0;
  for (int l = 0; l < layer; ++l) {
    off += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
  }
  return off;
}

int MlpLayout::bias_offset(int layer) const {
  return weight_offset(layer) + layer_sizes[layer] * layer_sizes[layer + 1];
}

Mlp::Mlp(int input_dim, std::span<const int> hidden, int output_dim) {
  if (input_dim <= 0 || output_dim <= 0) {
    throw std::invalid_argument("Mlp: dimensions must be positive");
  }
  layout_.layer_sizes.push_back(input_dim);
  for (int h : hidden) {
    if (h <= 0) throw std::invalid_argument("Mlp: hidden sizes must be positive");
    layout_.layer_sizes.push_back(h);
  }
  layout_.layer_sizes.push_back(output_dim);
  params_.assign(layout_.param_count(), 0.0);
  int widest = 0;
  for (int s : layout_.layer_sizes) widest = std::max(widest, s);
  act_a_.resize(widest);
  act_b_.resize(widest);
}

void Mlp::set_parameters(std::span<const double> values) {
  if (values.size() != params_.size()) {
    throw std::invalid_argument("Mlp: parameter vector size mismatch");
  }
  std::copy(values.begin(), values.end(), params_.begin());
}

void Mlp::init(RngStream& rng) {
  for (int l = 0; l < layout_.num_layers(); ++l) {
    const int fan_in = layout_.layer_sizes[l];
    const int fan_out = layout_.layer_sizes[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    double* w = params_.data() + layout_.weight_offset(l);
    for (int i = 0; i < fan_in * fan_out; ++i) {
      w[i] = rng.uniform(-bound, bound);
    }
    double* b = params_.data() + layout_.bias_offset(l);
    for (int i = 0; i < fan_out; ++i) b[i] = 0.0;
  }
}

// The accumulation order here (bias first, then ascending fan-in index) is
// the contract shared with ScalarTape::affine; keep the two in lockstep.
void Mlp::forward(std::span<const double> x, std::span<double> out) const {
  const int L = layout_.num_layers();
  const double* cur = x.data();
  for (int l = 0; l < L; ++l) {
    const int fan_in = layout_.layer_sizes[l];
    const int fan_out = layout_.layer_sizes[l + 1];
    const double* w = params_.data() + layout_.weight_offset(l);
    const double* b = params_.data() + layout_.bias_offset(l);
    double* dst = (l % 2 == 0) ? act_a_.data() : act_b_.data();
    for (int r = 0; r < fan_out; ++r) {
      double acc = b[r];
      const double* wr = w + static_cast<std::size_t>(r) * fan_in;
      for (int i = 0; i < fan_in; ++i) acc += wr[i] * cur[i];
      dst[r] = (l + 1 < L) ? std::tanh(acc) : acc;
    }
    cur = dst;
  }
  for (int r = 0; r < layout_.layer_sizes[L]; ++r) out[r] = cur[r];
}

ad::DualGradient Mlp::input_gradient(std::span<const double> x,
                                     int output_index) const {
  const int L = layout_.num_layers();
  if (output_index < 0 || output_index >= output_dim()) {
    throw std::invalid_argument("Mlp: output index out of range");
  }
  // forward, caching every layer's activation
  cache_.assign(0, 0.0);
  std::vector<std::size_t> offs(L + 1);
  std::size_t total = 0;
  for (int l = 0; l <= L; ++l) {
    offs[l] = total;
    total += layout_.layer_sizes[l];
  }
  cache_.resize(total);
  for (int i = 0; i < layout_.layer_sizes[0]; ++i) cache_[i] = x[i];
  for (int l = 0; l < L; ++l) {
    const int fan_in = layout_.layer_sizes[l];
    const int fan_out = layout_.layer_sizes[l + 1];
    const double* w = params_.data() + layout_.weight_offset(l);
    const double* b = params_.data() + layout_.bias_offset(l);
    const double* cur = cache_.data() + offs[l];
    double* dst = cache_.data() + offs[l + 1];
    for (int r = 0; r < fan_out; ++r) {
      double acc = b[r];
      const double* wr = w + static_cast<std::size_t>(r) * fan_in;
      for (int i = 0; i < fan_in; ++i) acc += wr[i] * cur[i];
      dst[r] = (l + 1 < L) ? std::tanh(acc) : acc;
    }
  }

  ad::DualGradient result;
  result.value = cache_[offs[L] + output_index];

  // backward: delta over activations, tanh' = 1 - y^2 on cached outputs
  std::vector<double>& delta = act_a_;
  std::vector<double>& delta_prev = act_b_;
  std::fill(delta.begin(), delta.end(), 0.0);
  delta[output_index] = 1.0;
  for (int l = L - 1; l >= 0; --l) {
    const int fan_in = layout_.layer_sizes[l];
    const int fan_out = layout_.layer_sizes[l + 1];
    const double* w = params_.data() + layout_.weight_offset(l);
    const double* y = cache_.data() + offs[l + 1];
    if (l + 1 < L) {
      for (int r = 0; r < fan_out; ++r) delta[r] *= (1.0 - y[r] * y[r]);
    }
    std::fill(delta_prev.begin(), delta_prev.begin() + fan_in, 0.0);
    for (int r = 0; r < fan_out; ++r) {
      const double dr = delta[r];
      if (dr == 0.0) continue;
      const double* wr = w + static_cast<std::size_t>(r) * fan_in;
      for (int i = 0; i < fan_in; ++i) delta_prev[i] += dr * wr[i];
    }
    std::swap(delta, delta_prev);
  }
  result.input_grad.assign(delta.begin(), delta.begin() + layout_.layer_sizes[0]);
  return result;
}

ad::NodeId Mlp::register_params(ad::ScalarTape& tape) const {
  return tape.input_range(params_);
}

ad::NodeId Mlp::record(ad::ScalarTape& tape, ad::NodeId params_start,
                       ad::NodeId x_start) const {
  const int L = layout_.num_layers();
  ad::NodeId cur = x_start;
  for (int l = 0; l < L; ++l) {
    const int fan_in = layout_.layer_sizes[l];
    const int fan_out = layout_.layer_sizes[l + 1];
    const ad::NodeId w0 = params_start + layout_.weight_offset(l);
    const ad::NodeId b0 = params_start + layout_.bias_offset(l);
    ad::NodeId lin0 = 0;
    for (int r = 0; r < fan_out; ++r) {
      ad::NodeId n = tape.affine(w0 + static_cast<ad::NodeId>(r) * fan_in, cur,
                                 static_cast<std::uint32_t>(fan_in), b0 + r);
      if (r == 0) lin0 = n;
    }
    if (l + 1 < L) {
      ad::NodeId act0 = 0;
      for (int r = 0; r < fan_out; ++r) {
        ad::NodeId n = tape.tanh(lin0 + r);
        if (r == 0) act0 = n;
      }
      cur = act0;
    } else {
      cur = lin0;
    }
  }
  return cur;
}

ValueNetwork::ValueNetwork(int state_dim, std::span<const int> hidden)
    : mlp_(state_dim, hidden, 1) {}

double ValueNetwork::forward(std::span<const double> x) const {
  double out;
  mlp_.forward(x, {&out, 1});
  return out;
}

ad::DualGradient ValueNetwork::input_gradient(std::span<const double> x) const {
  return mlp_.input_gradient(x, 0);
}

GaussianPolicy::GaussianPolicy(int state_dim, int action_dim,
                               std::span<const int> hidden)
    : mean_(state_dim, hidden, action_dim), log_std_(action_dim, 0.0) {
  scratch_mean_.resize(action_dim);
}

std::vector<double> GaussianPolicy::parameters_flat() const {
  std::vector<double> flat(mean_.parameters().begin(), mean_.parameters().end());
  flat.insert(flat.end(), log_std_.begin(), log_std_.end());
  return flat;
}

void GaussianPolicy::set_parameters(std::span<const double> values) {
  if (static_cast<int>(values.size()) != param_count()) {
    throw std::invalid_argument("GaussianPolicy: parameter vector size mismatch");
  }
  mean_.set_parameters(values.subspan(0, mean_.param_count()));
  std::copy(values.begin() + mean_.param_count(), values.end(), log_std_.begin());
}

void GaussianPolicy::set_log_std(std::span<const double> values) {
  if (values.size() != log_std_.size()) {
    throw std::invalid_argument("GaussianPolicy: log_std size mismatch");
  }
  std::copy(values.begin(), values.end(), log_std_.begin());
}

void GaussianPolicy::init(RngStream& rng) {
  mean_.init(rng);
  std::fill(log_std_.begin(), log_std_.end(), 0.0);
}

void GaussianPolicy::mean(std::span<const double> x,
                          std::span<double> out) const {
  mean_.forward(x, out);
}

void GaussianPolicy::sample(std::span<const double> x, RngStream& rng,
                            std::span<double> action_out) const {
  mean_.forward(x, action_out);
  for (int k = 0; k < action_dim(); ++k) {
    action_out[k] += std::exp(log_std_[k]) * rng.normal();
  }
}

double GaussianPolicy::log_prob(std::span<const double> x,
                                std::span<const double> action) const {
  const int d = action_dim();
  mean_.forward(x, scratch_mean_);
  // Same term order as record_log_prob: bias, then the d squared-residual
  // terms, then the d log-std terms.
  double acc = -0.5 * d * std::log(2.0 * std::numbers::pi);
  for (int k = 0; k < d; ++k) {
    const double diff = -1.0 * scratch_mean_[k] + action[k];
    const double term = (diff * diff) * std::exp(-2.0 * log_std_[k]);
    acc += -0.5 * term;
  }
  for (int k = 0; k < d; ++k) {
    acc += -1.0 * log_std_[k];
  }
  return acc;
}

ad::NodeId GaussianPolicy::register_params(ad::ScalarTape& tape) const {
  ad::NodeId start = mean_.register_params(tape);
  tape.input_range(log_std_);
  return start;
}

ad::NodeId GaussianPolicy::record_log_prob(ad::ScalarTape& tape,
                                           ad::NodeId params_start,
                                           ad::NodeId x_start,
                                           std::span<const double> action) const {
  const int d = action_dim();
  const ad::NodeId mu0 = mean_.record(tape, params_start, x_start);
  const ad::NodeId ls0 = params_start + mean_.param_count();
  std::vector<ad::NodeId> ids;
  std::vector<double> coeffs;
  ids.reserve(2 * d);
  coeffs.reserve(2 * d);
  for (int k = 0; k < d; ++k) {
    ad::NodeId diff = tape.scale_add(mu0 + k, -1.0, action[k]);
    ad::NodeId sq = tape.square(diff);
    ad::NodeId prec = tape.exp(tape.scale_add(ls0 + k, -2.0, 0.0));
    ids.push_back(tape.mul(sq, prec));
    coeffs.push_back(-0.5);
  }
  for (int k = 0; k < d; ++k) {
    ids.push_back(ls0 + k);
    coeffs.push_back(-1.0);
  }
  return tape.lin_comb(ids, coeffs,
                       -0.5 * d * std::log(2.0 * std::numbers::pi));
}

}  // namespace hjbppo::nets
