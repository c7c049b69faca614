#pragma once

#include <span>
#include <vector>

#include "hjbppo/rng.hpp"
#include "hjbppo/scalar_tape.hpp"

namespace hjbppo::nets {

// Flat parameter storage for a fully connected net: per layer, the weight
// matrix row-major (each row = one output unit's fan-in, contiguous) followed
// by the bias vector. Contiguous rows are what let tape recording address
// weights as affine ranges.
struct MlpLayout {
  std::vector<int> layer_sizes;  // {in, hidden..., out}

  int num_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }
  int param_count() const;
  // Offset of layer l's weights / biases in the flat vector.
  int weight_offset(int layer) const;
  int bias_offset(int layer) const;
};

// Multilayer perceptron with tanh hidden activations and a linear output
// layer, on flat 64-bit parameters. The tape recording and the plain forward
// use identical accumulation order, so both produce bit-identical values for
// the same parameters.
class Mlp {
 public:
  Mlp() = default;
  Mlp(int input_dim, std::span<const int> hidden, int output_dim);

  const MlpLayout& layout() const { return layout_; }
  int input_dim() const { return layout_.layer_sizes.front(); }
  int output_dim() const { return layout_.layer_sizes.back(); }
  int param_count() const { return static_cast<int>(params_.size()); }

  std::span<const double> parameters() const { return params_; }
  void set_parameters(std::span<const double> values);
  std::span<double> mutable_parameters() { return params_; }

  // Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases.
  void init(RngStream& rng);

  void forward(std::span<const double> x, std::span<double> out) const;

  // Value and exact d out[output_index] / d x via layer backprop.
  ad::DualGradient input_gradient(std::span<const double> x,
                                  int output_index = 0) const;

  // Registers the flat parameter vector as consecutive tape inputs.
  ad::NodeId register_params(ad::ScalarTape& tape) const;
  // Records the forward pass; x must already sit on the tape as a contiguous
  // input range of input_dim leaves. Returns the id of the first output node;
  // outputs are consecutive.
  ad::NodeId record(ad::ScalarTape& tape, ad::NodeId params_start,
                    ad::NodeId x_start) const;

 private:
  MlpLayout layout_;
  std::vector<double> params_;
  // scratch for forward/backprop, sized to the widest layer
  mutable std::vector<double> act_a_, act_b_, cache_;
};

// Scalar V(x): tanh MLP, two hidden layers of 64 by default, linear scalar
// output.
class ValueNetwork {
 public:
  ValueNetwork() = default;
  explicit ValueNetwork(int state_dim, std::span<const int> hidden = kDefaultHidden);

  int state_dim() const { return mlp_.input_dim(); }
  int param_count() const { return mlp_.param_count(); }
  const MlpLayout& layout() const { return mlp_.layout(); }
  std::span<const double> parameters() const { return mlp_.parameters(); }
  std::vector<double> parameters_flat() const {
    auto p = mlp_.parameters();
    return {p.begin(), p.end()};
  }
  void set_parameters(std::span<const double> v) { mlp_.set_parameters(v); }
  void init(RngStream& rng) { mlp_.init(rng); }

  double forward(std::span<const double> x) const;
  // V(x) and exact grad_x V(x).
  ad::DualGradient input_gradient(std::span<const double> x) const;

  ad::NodeId register_params(ad::ScalarTape& tape) const {
    return mlp_.register_params(tape);
  }
  ad::NodeId record(ad::ScalarTape& tape, ad::NodeId params_start,
                    ad::NodeId x_start) const {
    return mlp_.record(tape, params_start, x_start);
  }

  static constexpr int kDefaultHiddenArr[2] = {64, 64};
  static constexpr std::span<const int> kDefaultHidden{kDefaultHiddenArr};

 private:
  Mlp mlp_;
};

// Diagonal Gaussian policy: tanh MLP for the mean, state-independent
// learnable log-std. Flat parameter vector = mean-net params followed by
// action_dim log-std entries.
class GaussianPolicy {
 public:
  GaussianPolicy() = default;
  GaussianPolicy(int state_dim, int action_dim,
                 std::span<const int> hidden = ValueNetwork::kDefaultHidden);

  int state_dim() const { return mean_.input_dim(); }
  int action_dim() const { return mean_.output_dim(); }
  int param_count() const { return mean_.param_count() + action_dim(); }
  const MlpLayout& mean_layout() const { return mean_.layout(); }

  std::vector<double> parameters_flat() const;
  void set_parameters(std::span<const double> values);
  std::span<const double> log_std() const { return log_std_; }
  void set_log_std(std::span<const double> values);

  // Mean net: uniform scaled by 1/sqrt(fan_in), zero bias; log-std zero.
  void init(RngStream& rng);

  void mean(std::span<const double> x, std::span<double> out) const;
  // Deterministic action (the mean).
  void mode(std::span<const double> x, std::span<double> out) const {
    mean(x, out);
  }
  // action = mean + exp(log_std) * z, z ~ N(0, I) from rng.
  void sample(std::span<const double> x, RngStream& rng,
              std::span<double> action_out) const;
  // Diagonal Gaussian log density of action at state x. Bit-identical to the
  // tape recording for unchanged parameters, so fresh/stored ratios start at
  // exactly 1.
  double log_prob(std::span<const double> x,
                  std::span<const double> action) const;

  ad::NodeId register_params(ad::ScalarTape& tape) const;
  // Records log pi(action | x); x on tape as a contiguous input range,
  // params registered via register_params. Returns the log-prob node.
  ad::NodeId record_log_prob(ad::ScalarTape& tape, ad::NodeId params_start,
                             ad::NodeId x_start,
                             std::span<const double> action) const;

 private:
  Mlp mean_;
  std::vector<double> log_std_;
  mutable std::vector<double> scratch_mean_;
};

}  // namespace hjbppo::nets
