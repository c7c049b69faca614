#include "hjbppo/scalar_tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hjbppo::ad {

NodeId ScalarTape::push(const Node& node, double value) {
  nodes_.push_back(node);
  values_.push_back(value);
  return static_cast<NodeId>(nodes_.size() - 1);
}

void ScalarTape::check_operand(NodeId id) const {
  if (id >= nodes_.size()) {
    throw std::invalid_argument("ScalarTape: operand id out of range");
  }
}

void ScalarTape::check_range(NodeId start, std::uint32_t len) const {
  if (len == 0) {
    throw std::invalid_argument("ScalarTape: empty operand range");
  }
  if (start >= nodes_.size() || start + static_cast<std::size_t>(len) > nodes_.size()) {
    throw std::invalid_argument("ScalarTape: operand range out of bounds");
  }
}

NodeId ScalarTape::input(double value) {
  return push({.op = Op::kInput}, value);
}

NodeId ScalarTape::input_range(std::span<const double> values) {
  NodeId start = static_cast<NodeId>(nodes_.size());
  for (double v : values) input(v);
  return start;
}

NodeId ScalarTape::constant(double value) {
  return push({.op = Op::kConstant}, value);
}

NodeId ScalarTape::add(NodeId a, NodeId b) {
  check_operand(a);
  check_operand(b);
  return push({.op = Op::kAdd, .a = a, .b = b}, values_[a] + values_[b]);
}

NodeId ScalarTape::sub(NodeId a, NodeId b) {
  check_operand(a);
  check_operand(b);
  return push({.op = Op::kSub, .a = a, .b = b}, values_[a] - values_[b]);
}

NodeId ScalarTape::mul(NodeId a, NodeId b) {
  check_operand(a);
  check_operand(b);
  return push({.op = Op::kMul, .a = a, .b = b}, values_[a] * values_[b]);
}

NodeId ScalarTape::neg(NodeId a) {
  check_operand(a);
  return push({.op = Op::kNeg, .a = a}, -values_[a]);
}

NodeId ScalarTape::square(NodeId a) {
  check_operand(a);
  return push({.op = Op::kSquare, .a = a}, values_[a] * values_[a]);
}

NodeId ScalarTape::tanh(NodeId a) {
  check_operand(a);
  return push({.op = Op::kTanh, .a = a}, std::tanh(values_[a]));
}

NodeId ScalarTape::exp(NodeId a) {
  check_operand(a);
  return push({.op = Op::kExp, .a = a}, std::exp(values_[a]));
}

NodeId ScalarTape::log(NodeId a) {
  check_operand(a);
  return push({.op = Op::kLog, .a = a}, std::log(values_[a]));
}

NodeId ScalarTape::scale_add(NodeId a, double c0, double c1) {
  check_operand(a);
  return push({.op = Op::kScaleAdd, .a = a, .c0 = c0, .c1 = c1},
              c0 * values_[a] + c1);
}

NodeId ScalarTape::affine(NodeId w_start, NodeId x_start, std::uint32_t len,
                          NodeId bias) {
  check_range(w_start, len);
  check_range(x_start, len);
  check_operand(bias);
  double acc = values_[bias];
  for (std::uint32_t i = 0; i < len; ++i) {
    acc += values_[w_start + i] * values_[x_start + i];
  }
  return push({.op = Op::kAffine, .a = w_start, .b = x_start, .d = bias, .len = len},
              acc);
}

NodeId ScalarTape::dot(std::span<const NodeId> xs, std::span<const NodeId> ys) {
  if (xs.size() != ys.size() || xs.empty()) {
    throw std::invalid_argument("ScalarTape: dot operand size mismatch");
  }
  for (NodeId id : xs) check_operand(id);
  for (NodeId id : ys) check_operand(id);
  NodeId pool = static_cast<NodeId>(pool_ids_.size());
  pool_ids_.insert(pool_ids_.end(), xs.begin(), xs.end());
  pool_ids_.insert(pool_ids_.end(), ys.begin(), ys.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    acc += values_[xs[i]] * values_[ys[i]];
  }
  return push({.op = Op::kDot, .a = pool, .len = static_cast<std::uint32_t>(xs.size())},
              acc);
}

NodeId ScalarTape::lin_comb(std::span<const NodeId> ids,
                            std::span<const double> coeffs, double bias) {
  if (ids.size() != coeffs.size() || ids.empty()) {
    throw std::invalid_argument("ScalarTape: lin_comb operand size mismatch");
  }
  for (NodeId id : ids) check_operand(id);
  NodeId id_pool = static_cast<NodeId>(pool_ids_.size());
  pool_ids_.insert(pool_ids_.end(), ids.begin(), ids.end());
  NodeId coeff_pool = static_cast<NodeId>(pool_coeffs_.size());
  pool_coeffs_.insert(pool_coeffs_.end(), coeffs.begin(), coeffs.end());
  double acc = bias;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    acc += coeffs[i] * values_[ids[i]];
  }
  return push({.op = Op::kLinComb,
               .a = id_pool,
               .b = coeff_pool,
               .len = static_cast<std::uint32_t>(ids.size()),
               .c0 = bias},
              acc);
}

std::vector<double> ScalarTape::replay_values() const {
  std::vector<double> v(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    switch (n.op) {
      case Op::kInput:
      case Op::kConstant:
        v[i] = values_[i];
        break;
      case Op::kAdd:
        v[i] = v[n.a] + v[n.b];
        break;
      case Op::kSub:
        v[i] = v[n.a] - v[n.b];
        break;
      case Op::kMul:
        v[i] = v[n.a] * v[n.b];
        break;
      case Op::kNeg:
        v[i] = -v[n.a];
        break;
      case Op::kSquare:
        v[i] = v[n.a] * v[n.a];
        break;
      case Op::kTanh:
        v[i] = std::tanh(v[n.a]);
        break;
      case Op::kExp:
        v[i] = std::exp(v[n.a]);
        break;
      case Op::kLog:
        v[i] = std::log(v[n.a]);
        break;
      case Op::kScaleAdd:
        v[i] = n.c0 * v[n.a] + n.c1;
        break;
      case Op::kAffine: {
        double acc = v[n.d];
        for (std::uint32_t k = 0; k < n.len; ++k) {
          acc += v[n.a + k] * v[n.b + k];
        }
        v[i] = acc;
        break;
      }
      case Op::kDot: {
        double acc = 0.0;
        for (std::uint32_t k = 0; k < n.len; ++k) {
          acc += v[pool_ids_[n.a + k]] * v[pool_ids_[n.a + n.len + k]];
        }
        v[i] = acc;
        break;
      }
      case Op::kLinComb: {
        double acc = n.c0;
        for (std::uint32_t k = 0; k < n.len; ++k) {
          acc += pool_coeffs_[n.b + k] * v[pool_ids_[n.a + k]];
        }
        v[i] = acc;
        break;
      }
    }
  }
  return v;
}

void ScalarTape::propagate_tangents(std::span<const TangentSeed> seeds) {
  tangents_.assign(nodes_.size(), 0.0);
  for (const TangentSeed& s : seeds) {
    check_operand(s.node);
    const Op op = nodes_[s.node].op;
    if (op != Op::kInput) {
      throw std::invalid_argument(
          "ScalarTape: tangent seeds must sit on input leaves");
    }
    tangents_[s.node] = s.tangent;
  }
  std::vector<double>& t = tangents_;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    switch (n.op) {
      case Op::kInput:
      case Op::kConstant:
        break;  // seeded or zero
      case Op::kAdd:
        t[i] = t[n.a] + t[n.b];
        break;
      case Op::kSub:
        t[i] = t[n.a] - t[n.b];
        break;
      case Op::kMul:
        t[i] = t[n.a] * values_[n.b] + values_[n.a] * t[n.b];
        break;
      case Op::kNeg:
        t[i] = -t[n.a];
        break;
      case Op::kSquare:
        t[i] = 2.0 * values_[n.a] * t[n.a];
        break;
      case Op::kTanh: {
        double y = values_[i];
        t[i] = (1.0 - y * y) * t[n.a];
        break;
      }
      case Op::kExp:
        t[i] = values_[i] * t[n.a];
        break;
      case Op::kLog:
        t[i] = t[n.a] / values_[n.a];
        break;
      case Op::kScaleAdd:
        t[i] = n.c0 * t[n.a];
        break;
      case Op::kAffine: {
        double acc = t[n.d];
        for (std::uint32_t k = 0; k < n.len; ++k) {
          acc += t[n.a + k] * values_[n.b + k] + values_[n.a + k] * t[n.b + k];
        }
        t[i] = acc;
        break;
      }
      case Op::kDot: {
        double acc = 0.0;
        for (std::uint32_t k = 0; k < n.len; ++k) {
          NodeId x = pool_ids_[n.a + k];
          NodeId y = pool_ids_[n.a + n.len + k];
          acc += t[x] * values_[y] + values_[x] * t[y];
        }
        t[i] = acc;
        break;
      }
      case Op::kLinComb: {
        double acc = 0.0;
        for (std::uint32_t k = 0; k < n.len; ++k) {
          acc += pool_coeffs_[n.b + k] * t[pool_ids_[n.a + k]];
        }
        t[i] = acc;
        break;
      }
    }
  }
}

template <bool WithTangent>
void ScalarTape::sweep(std::span<const OutputSeed> seeds, NodeId frontier,
                       std::span<const NodeId> wrt, std::span<double> out,
                       std::vector<double>& adj_v,
                       std::vector<double>& adj_t) const {
  if (seeds.empty()) {
    throw std::invalid_argument("ScalarTape: sweep needs at least one output seed");
  }
  NodeId top = 0;
  for (const OutputSeed& s : seeds) {
    check_operand(s.node);
    if (s.node < frontier) {
      throw std::invalid_argument("ScalarTape: output seed below sweep frontier");
    }
    top = std::max(top, s.node);
  }
  for (NodeId id : wrt) {
    check_operand(id);
    if (id < frontier) {
      throw std::invalid_argument("ScalarTape: wrt id below sweep frontier");
    }
  }
  const std::size_t span_len = static_cast<std::size_t>(top) - frontier + 1;
  adj_v.assign(span_len, 0.0);
  if constexpr (WithTangent) {
    adj_t.assign(span_len, 0.0);
  }
  for (const OutputSeed& s : seeds) {
    adj_v[s.node - frontier] += s.value_adjoint;
    if constexpr (WithTangent) {
      adj_t[s.node - frontier] += s.tangent_adjoint;
    }
  }

  const std::vector<double>& val = values_;
  const std::vector<double>& tan = tangents_;
  // Walk from the topmost seeded node down to the frontier. Contributions to
  // nodes below the frontier are dropped by the guards.
  for (NodeId id = top + 1; id-- > frontier;) {
    const double lv = adj_v[id - frontier];
    double lt = 0.0;
    if constexpr (WithTangent) {
      lt = adj_t[id - frontier];
      if (lv == 0.0 && lt == 0.0) continue;
    } else {
      if (lv == 0.0) continue;
    }
    const Node& n = nodes_[id];
    auto acc = [&](NodeId target, double dv, double dt) {
      if (target < frontier) return;
      adj_v[target - frontier] += dv;
      if constexpr (WithTangent) {
        adj_t[target - frontier] += dt;
      }
    };
    switch (n.op) {
      case Op::kInput:
      case Op::kConstant:
        break;
      case Op::kAdd:
        acc(n.a, lv, lt);
        acc(n.b, lv, lt);
        break;
      case Op::kSub:
        acc(n.a, lv, lt);
        acc(n.b, -lv, -lt);
        break;
      case Op::kMul:
        if constexpr (WithTangent) {
          acc(n.a, lv * val[n.b] + lt * tan[n.b], lt * val[n.b]);
          acc(n.b, lv * val[n.a] + lt * tan[n.a], lt * val[n.a]);
        } else {
          acc(n.a, lv * val[n.b], 0.0);
          acc(n.b, lv * val[n.a], 0.0);
        }
        break;
      case Op::kNeg:
        acc(n.a, -lv, -lt);
        break;
      case Op::kSquare:
        if constexpr (WithTangent) {
          acc(n.a, 2.0 * (lv * val[n.a] + lt * tan[n.a]), lt * 2.0 * val[n.a]);
        } else {
          acc(n.a, 2.0 * lv * val[n.a], 0.0);
        }
        break;
      case Op::kTanh: {
        const double y = val[id];
        const double u = 1.0 - y * y;
        if constexpr (WithTangent) {
          acc(n.a, lv * u - lt * 2.0 * y * u * tan[n.a], lt * u);
        } else {
          acc(n.a, lv * u, 0.0);
        }
        break;
      }
      case Op::kExp: {
        const double y = val[id];
        if constexpr (WithTangent) {
          acc(n.a, lv * y + lt * y * tan[n.a], lt * y);
        } else {
          acc(n.a, lv * y, 0.0);
        }
        break;
      }
      case Op::kLog: {
        const double x = val[n.a];
        if constexpr (WithTangent) {
          acc(n.a, lv / x - lt * tan[n.a] / (x * x), lt / x);
        } else {
          acc(n.a, lv / x, 0.0);
        }
        break;
      }
      case Op::kScaleAdd:
        acc(n.a, lv * n.c0, lt * n.c0);
        break;
      case Op::kAffine: {
        acc(n.d, lv, lt);
        for (std::uint32_t k = 0; k < n.len; ++k) {
          const NodeId w = n.a + k;
          const NodeId x = n.b + k;
          if constexpr (WithTangent) {
            acc(w, lv * val[x] + lt * tan[x], lt * val[x]);
            acc(x, lv * val[w] + lt * tan[w], lt * val[w]);
          } else {
            acc(w, lv * val[x], 0.0);
            acc(x, lv * val[w], 0.0);
          }
        }
        break;
      }
      case Op::kDot: {
        for (std::uint32_t k = 0; k < n.len; ++k) {
          const NodeId x = pool_ids_[n.a + k];
          const NodeId y = pool_ids_[n.a + n.len + k];
          if constexpr (WithTangent) {
            acc(x, lv * val[y] + lt * tan[y], lt * val[y]);
            acc(y, lv * val[x] + lt * tan[x], lt * val[x]);
          } else {
            acc(x, lv * val[y], 0.0);
            acc(y, lv * val[x], 0.0);
          }
        }
        break;
      }
      case Op::kLinComb: {
        for (std::uint32_t k = 0; k < n.len; ++k) {
          const double c = pool_coeffs_[n.b + k];
          acc(pool_ids_[n.a + k], lv * c, lt * c);
        }
        break;
      }
    }
  }

  for (std::size_t i = 0; i < wrt.size(); ++i) {
    out[i] = adj_v[wrt[i] - frontier];
  }
}

void ScalarTape::gradient(NodeId output, std::span<const NodeId> wrt,
                          std::span<double> out) const {
  if (out.size() != wrt.size()) {
    throw std::invalid_argument("ScalarTape: gradient output size mismatch");
  }
  const OutputSeed seed{output, 1.0, 0.0};
  sweep<false>({&seed, 1}, 0, wrt, out, scratch_v_, scratch_t_);
}

std::vector<double> ScalarTape::gradient(NodeId output,
                                         std::span<const NodeId> wrt) const {
  std::vector<double> out(wrt.size());
  gradient(output, wrt, out);
  return out;
}

void ScalarTape::gradient_within(NodeId frontier, NodeId output,
                                 std::span<const NodeId> wrt,
                                 std::span<double> out) const {
  if (out.size() != wrt.size()) {
    throw std::invalid_argument("ScalarTape: gradient output size mismatch");
  }
  const OutputSeed seed{output, 1.0, 0.0};
  sweep<false>({&seed, 1}, frontier, wrt, out, scratch_v_, scratch_t_);
}

void ScalarTape::weighted_gradient(std::span<const OutputSeed> seeds,
                                   std::span<const NodeId> wrt,
                                   std::span<double> out) const {
  if (out.size() != wrt.size()) {
    throw std::invalid_argument("ScalarTape: gradient output size mismatch");
  }
  sweep<false>(seeds, 0, wrt, out, scratch_v_, scratch_t_);
}

void ScalarTape::nested_gradient(std::span<const OutputSeed> output_seeds,
                                 std::span<const TangentSeed> tangent_seeds,
                                 std::span<const NodeId> wrt,
                                 std::span<double> out) {
  if (out.size() != wrt.size()) {
    throw std::invalid_argument("ScalarTape: gradient output size mismatch");
  }
  propagate_tangents(tangent_seeds);
  sweep<true>(output_seeds, 0, wrt, out, scratch_v_, scratch_t_);
}

void ScalarTape::clear() {
  nodes_.clear();
  values_.clear();
  tangents_.clear();
  pool_ids_.clear();
  pool_coeffs_.clear();
}

}  // namespace hjbppo::ad
