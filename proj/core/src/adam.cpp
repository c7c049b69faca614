#include "hjbppo/adam.hpp"

#include <cmath>
#include <cstddef>
#include <stdexcept>

#include "hjbppo/errors.hpp"

namespace hjbppo::opt {

Adam::Adam(int dim, double beta1, double beta2, double epsilon)
    : beta1_(beta1), beta2_(beta2), epsilon_(epsilon), m_(dim, 0.0),
      v_(dim, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad,
                double learning_rate, double sign) {
  const std::size_t n = m_.size();
  if (params.size() != n || grad.size() != n) {
    throw std::invalid_argument("Adam::step: dimension mismatch");
  }
  for (double g : grad) {
    if (!std::isfinite(g)) {
      throw DivergenceError("non-finite gradient entry in optimizer step");
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
    const double m_hat = m_[i] / bc1;
    const double v_hat = v_[i] / bc2;
    params[i] += sign * learning_rate * m_hat / (std::sqrt(v_hat) + epsilon_);
  }
}

void Adam::serialize(io::BinaryWriter& w) const {
  w.f64(beta1_);
  w.f64(beta2_);
  w.f64(epsilon_);
  w.u64(static_cast<std::uint64_t>(t_));
  w.f64_vec(m_);
  w.f64_vec(v_);
}

void Adam::deserialize(io::BinaryReader& r) {
  beta1_ = r.f64();
  beta2_ = r.f64();
  epsilon_ = r.f64();
  t_ = static_cast<long long>(r.u64());
  m_ = r.f64_vec();
  v_ = r.f64_vec();
}

bool Adam::operator==(const Adam& other) const {
  return beta1_ == other.beta1_ && beta2_ == other.beta2_ &&
         epsilon_ == other.epsilon_ && t_ == other.t_ && m_ == other.m_ &&
         v_ == other.v_;
}

double global_norm(std::span<const double> grad) {
  double acc = 0.0;
  for (double g : grad) acc += g * g;
  return std::sqrt(acc);
}

double clip_global_norm(std::span<double> grad, double max_norm) {
  const double norm = global_norm(grad);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (double& g : grad) g *= scale;
  }
  return norm;
}

}  // namespace hjbppo::opt
