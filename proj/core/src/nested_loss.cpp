#include "hjbppo/nested_loss.hpp"

#include <algorithm>
#include <stdexcept>

namespace hjbppo::ad {

NestedLoss::NestedLoss(ScalarTape& inner) : inner_(&inner) {
  if (inner.is_nested_expression()) {
    throw std::logic_error(
        "NestedLoss: a second nesting level was requested; only one level of "
        "gradient-of-gradient is supported");
  }
  outer_.mark_nested_expression();
}

NestedLoss::Evaluation NestedLoss::add_evaluation(
    NodeId inner_output, std::span<const NodeId> grad_wrt) {
  for (NodeId id : grad_wrt) {
    if (std::find(claimed_leaves_.begin(), claimed_leaves_.end(), id) !=
        claimed_leaves_.end()) {
      throw std::invalid_argument(
          "NestedLoss: grad_wrt leaf already claimed by another evaluation");
    }
  }
  claimed_leaves_.insert(claimed_leaves_.end(), grad_wrt.begin(),
                         grad_wrt.end());

  Record rec;
  rec.output = inner_output;
  rec.wrt.assign(grad_wrt.begin(), grad_wrt.end());
  rec.leaves.value_leaf = outer_.input(inner_->value(inner_output));
  if (!grad_wrt.empty()) {
    NodeId frontier = *std::min_element(grad_wrt.begin(), grad_wrt.end());
    std::vector<double> g(grad_wrt.size());
    inner_->gradient_within(frontier, inner_output, grad_wrt, g);
    rec.leaves.grad_leaves.reserve(g.size());
    for (double gk : g) {
      rec.leaves.grad_leaves.push_back(outer_.input(gk));
    }
  }
  records_.push_back(rec);
  return records_.back().leaves;
}

std::vector<double> NestedLoss::param_gradient(NodeId loss,
                                               std::span<const NodeId> params,
                                               bool input_grads_constant) {
  // Outer partials: one reverse sweep over the (small) expression tape gives
  // d loss / d value_leaf and d loss / d grad_leaf for every evaluation.
  std::vector<NodeId> leaf_ids;
  for (const Record& rec : records_) {
    leaf_ids.push_back(rec.leaves.value_leaf);
    leaf_ids.insert(leaf_ids.end(), rec.leaves.grad_leaves.begin(),
                    rec.leaves.grad_leaves.end());
  }
  std::vector<double> partials = outer_.gradient(loss, leaf_ids);

  std::vector<ScalarTape::OutputSeed> seeds;
  std::vector<ScalarTape::TangentSeed> tangents;
  std::size_t cursor = 0;
  for (const Record& rec : records_) {
    const double alpha = partials[cursor++];
    double tangent_weight = 0.0;
    for (std::size_t k = 0; k < rec.leaves.grad_leaves.size(); ++k) {
      const double w = partials[cursor++];
      if (!input_grads_constant && w != 0.0) {
        tangents.push_back({rec.wrt[k], w});
        tangent_weight = 1.0;
      }
    }
    seeds.push_back({rec.output, alpha, tangent_weight});
  }

  std::vector<double> out(params.size());
  if (tangents.empty()) {
    inner_->weighted_gradient(seeds, params, out);
  } else {
    inner_->nested_gradient(seeds, tangents, params, out);
  }
  return out;
}

}  // namespace hjbppo::ad
