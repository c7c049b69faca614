#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace hjbppo::ad {

using NodeId = std::uint32_t;

// Value plus exact input-gradient of a scalar function at one point.
struct DualGradient {
  double value = 0.0;
  std::vector<double> input_grad;
};

// Reverse-mode autodiff over 64-bit scalars with one supported level of
// nesting. Recording is eager: every builder call appends a node and computes
// its value immediately, so values can be read back while the expression is
// still being built.
//
// First-order gradients come from a plain reverse sweep (gradient()).
//
// The nested level is forward-over-reverse rather than tape-of-tape: a forward
// sweep propagates a caller-seeded tangent direction (a directional derivative
// in input space) through every node, then one reverse sweep propagates
// (value, tangent) adjoint pairs using analytic second partials of each
// primitive. At a leaf, the value component of the pair is exactly
// d/dleaf [ sum_i value_adjoint_i * node_i + tangent_adjoint_i * D_seed node_i ],
// i.e. the parameter gradient of a scalar that mixes recorded values with
// first-order input-gradients. That is all a residual loss built from V and
// grad_x V needs; a second nesting level is rejected by the expression
// wrapper (see nested_loss.hpp).
//
// Tapes are single-threaded during construction; all sweeps are deterministic
// (fixed iteration order, no parallel reductions). A completed tape is safe to
// read from multiple threads as long as nobody records or runs the nested
// sweep (which stores tangents inline).
class ScalarTape {
 public:
  ScalarTape() = default;

  // --- recording --- //

  // Differentiable leaf.
  NodeId input(double value);
  // Registers n consecutive differentiable leaves; returns the first id.
  // The contiguity is what lets affine() address weight rows as ranges.
  NodeId input_range(std::span<const double> values);
  // Non-differentiable leaf.
  NodeId constant(double value);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId neg(NodeId a);
  NodeId square(NodeId a);
  NodeId tanh(NodeId a);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  // c0 * a + c1 with literal coefficients.
  NodeId scale_add(NodeId a, double c0, double c1);
  // bias + sum_i node[w_start + i] * node[x_start + i] over two contiguous
  // id ranges. This is the workhorse for MLP layers: one node per output unit.
  NodeId affine(NodeId w_start, NodeId x_start, std::uint32_t len, NodeId bias);
  // sum_i xs[i] * ys[i], arbitrary (non-contiguous) ids.
  NodeId dot(std::span<const NodeId> xs, std::span<const NodeId> ys);
  // bias + sum_i coeffs[i] * ids[i] with literal coefficients.
  NodeId lin_comb(std::span<const NodeId> ids, std::span<const double> coeffs,
                  double bias);

  // --- reading --- //

  double value(NodeId id) const { return values_[id]; }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

  // Recomputes every node value from the leaves in recording order. Returns
  // the replayed values; bit-identical to value() for a healthy tape.
  std::vector<double> replay_values() const;

  // --- first-order reverse sweep --- //

  // d value(output) / d value(wrt[i]) for each i. Exact.
  void gradient(NodeId output, std::span<const NodeId> wrt,
                std::span<double> out) const;
  std::vector<double> gradient(NodeId output,
                               std::span<const NodeId> wrt) const;

  // Same, but only nodes with id >= frontier participate; every wrt id must
  // be >= frontier. Adjoint flow into nodes below the frontier is dropped.
  // Used to sweep one sample's subgraph out of a batch tape without paying
  // for the whole tape.
  void gradient_within(NodeId frontier, NodeId output,
                       std::span<const NodeId> wrt,
                       std::span<double> out) const;

  struct OutputSeed;
  // Gradient of sum_s s.value_adjoint * value(s.node) in one reverse sweep
  // (tangent_adjoint ignored). The batched form of gradient(): one sweep per
  // minibatch instead of one per sample.
  void weighted_gradient(std::span<const OutputSeed> seeds,
                         std::span<const NodeId> wrt,
                         std::span<double> out) const;

  // --- nested (forward-over-reverse) sweep --- //

  struct OutputSeed {
    NodeId node;
    double value_adjoint;    // weight on node's value
    double tangent_adjoint;  // weight on node's forward tangent
  };
  struct TangentSeed {
    NodeId node;
    double tangent;
  };

  // Computes, for each wrt id w,
  //   d/dw [ sum_s s.value_adjoint * value(s.node)
  //            + s.tangent_adjoint * tangent(s.node) ]
  // where tangent(.) is the forward-mode directional derivative seeded by
  // tangent_seeds on leaf nodes (all other leaves have tangent zero).
  // Non-const because the forward tangent sweep is stored inline.
  void nested_gradient(std::span<const OutputSeed> output_seeds,
                       std::span<const TangentSeed> tangent_seeds,
                       std::span<const NodeId> wrt, std::span<double> out);

  // --- lifecycle --- //

  // Drops all nodes but keeps capacity; cheap per-minibatch reuse.
  void clear();

  // Tapes that hold the outer expression of a NestedExpression are marked so
  // a second nesting level can be detected and rejected.
  void mark_nested_expression() { nested_expression_ = true; }
  bool is_nested_expression() const { return nested_expression_; }

 private:
  enum class Op : std::uint8_t {
    kInput,
    kConstant,
    kAdd,
    kSub,
    kMul,
    kNeg,
    kSquare,
    kTanh,
    kExp,
    kLog,
    kScaleAdd,
    kAffine,
    kDot,
    kLinComb,
  };

  struct Node {
    Op op;
    NodeId a = 0;        // operand / weight-range start / id-pool offset
    NodeId b = 0;        // operand / input-range start / coeff-pool offset
    NodeId d = 0;        // affine bias id
    std::uint32_t len = 0;
    double c0 = 0.0;     // scale_add scale / lin_comb bias
    double c1 = 0.0;     // scale_add shift
  };

  NodeId push(const Node& node, double value);
  void check_operand(NodeId id) const;
  void check_range(NodeId start, std::uint32_t len) const;

  template <bool WithTangent>
  void sweep(std::span<const OutputSeed> seeds, NodeId frontier,
             std::span<const NodeId> wrt, std::span<double> out,
             std::vector<double>& adj_v, std::vector<double>& adj_t) const;

  void propagate_tangents(std::span<const TangentSeed> seeds);

  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::vector<double> tangents_;
  std::vector<NodeId> pool_ids_;
  std::vector<double> pool_coeffs_;
  bool nested_expression_ = false;

  // scratch buffers reused across sweeps
  mutable std::vector<double> scratch_v_;
  mutable std::vector<double> scratch_t_;
};

}  // namespace hjbppo::ad
