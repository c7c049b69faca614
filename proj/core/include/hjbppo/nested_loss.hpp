#pragma once

#include <span>
#include <vector>

#include "hjbppo/scalar_tape.hpp"

namespace hjbppo::ad {

// Builds and differentiates a scalar loss that consumes both the values and
// the exact input-gradients of functions recorded on an inner tape.
//
// Usage: record f(params, x) per sample on the inner tape, register each
// output here (add_evaluation computes the sample's input-gradient and
// exposes it, together with the value, as leaves of an outer expression
// tape), combine the leaves into a scalar with expression(), then call
// param_gradient. The result is the exact d loss / d params, including flow
// through the input-gradient terms, computed with one forward tangent sweep
// plus one dual reverse sweep over the inner tape (forward-over-reverse; no
// second tape of backward-pass operations is ever built).
//
// Exactly one nesting level is supported: constructing a NestedLoss on top of
// another's expression tape throws.
class NestedLoss {
 public:
  explicit NestedLoss(ScalarTape& inner);

  // The outer tape on which the loss is assembled from evaluation leaves
  // and constants.
  ScalarTape& expression() { return outer_; }

  struct Evaluation {
    NodeId value_leaf;                // outer-tape leaf carrying f's value
    std::vector<NodeId> grad_leaves;  // outer-tape leaves carrying df/dx_k
  };

  // Registers one recorded scalar output. grad_wrt names the inner input
  // leaves whose gradient components the loss consumes; they must be owned
  // exclusively by this evaluation's subgraph (no leaf may be shared between
  // evaluations that take gradients, or the fused tangent sweep would mix
  // directions).
  Evaluation add_evaluation(NodeId inner_output,
                            std::span<const NodeId> grad_wrt);

  // d value(loss) / d value(params[i]) on the inner tape. With
  // input_grads_constant the grad leaves are treated as frozen numbers
  // (stop-gradient through grad_x f); otherwise differentiation flows through
  // them.
  std::vector<double> param_gradient(NodeId loss,
                                     std::span<const NodeId> params,
                                     bool input_grads_constant = false);

 private:
  struct Record {
    NodeId output;
    std::vector<NodeId> wrt;
    Evaluation leaves;
  };

  ScalarTape* inner_;
  ScalarTape outer_;
  std::vector<Record> records_;
  std::vector<NodeId> claimed_leaves_;
};

}  // namespace hjbppo::ad
