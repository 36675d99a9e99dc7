#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tbseg/ops.hpp"
#include "tbseg/param_set.hpp"
#include "tbseg/rng.hpp"
#include "tbseg/tensor.hpp"

namespace tbseg {

// Reverse-mode tape over the fixed layer vocabulary. Creation order is the
// topological order; backward() walks the nodes in reverse and accumulates
// gradients. One tape records one forward pass.
class Tape {
 public:
  using NodeId = int;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  NodeId input(Tensor value);
  NodeId param(const std::string& name, const Tensor& value);

  // kernel size read from the weight shape; stride 1, padding k/2
  NodeId conv2d(NodeId x, NodeId weight, NodeId bias);
  NodeId relu(NodeId x);
  NodeId maxpool2x2(NodeId x);
  NodeId upsample_nearest2x(NodeId x);
  // Running statistics are updated in place in train mode (momentum > 0).
  NodeId batchnorm(NodeId x, NodeId gamma, NodeId beta, Tensor* running_mean, Tensor* running_var,
                   bool train_mode, float momentum, float eps);
  // Identity (returns x) when inactive or p == 0.
  NodeId dropout(NodeId x, float p, Rng& rng, bool active);
  NodeId softmax_channels(NodeId x);
  NodeId concat_channels(NodeId a, NodeId b);

  // Combined cross-entropy + soft-Dice scalar loss on logits (see loss.hpp).
  NodeId ce_dice_loss(NodeId logits, const ByteImage& labels);

  const Tensor& value(NodeId id) const;
  // Valid after backward(); zeros if the node did not influence the root.
  const Tensor& grad(NodeId id) const;

  // Reverse sweep from a scalar root. Throws if called before any forward
  // was recorded, if the root is not scalar, or if a non-finite gradient
  // appears.
  void backward(NodeId root);

  // Gradients keyed by parameter name, shape-compatible with `params`.
  // Entries never registered on this tape get zero tensors.
  ParamSet param_grads(const ParamSet& params) const;

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&)> backprop;  // empty for leaves
  };

  NodeId push(Tensor value, std::function<void(Tape&)> backprop);
  Node& node(NodeId id);
  const Node& node(NodeId id) const;

  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, NodeId>> param_nodes_;
  bool backward_done_ = false;
};

}  // namespace tbseg
