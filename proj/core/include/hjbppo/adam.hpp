#pragma once

#include <span>
#include <vector>

#include "hjbppo/checkpoint.hpp"

namespace hjbppo::opt {

// Adam with bias correction. step() applies `params += sign * lr * update`,
// so ascent (sign = +1) and descent (sign = -1) share one code path.
class Adam {
 public:
  Adam() = default;
  explicit Adam(int dim, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-8);

  int dim() const { return static_cast<int>(m_.size()); }
  long long steps_taken() const { return t_; }

  // Throws DivergenceError if grad contains a non-finite entry; moments and
  // parameters are left untouched in that case.
  void step(std::span<double> params, std::span<const double> grad,
            double learning_rate, double sign);

  void serialize(io::BinaryWriter& w) const;
  void deserialize(io::BinaryReader& r);

  bool operator==(const Adam& other) const;

 private:
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double epsilon_ = 1e-8;
  long long t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

// Euclidean norm of the full gradient vector.
double global_norm(std::span<const double> grad);

// Scales grad in place so its global norm is at most max_norm. Returns the
// pre-clip norm.
double clip_global_norm(std::span<double> grad, double max_norm);

}  // namespace hjbppo::opt
