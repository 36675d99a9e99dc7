#include "tbseg/tape.hpp"

#include <memory>
#include <stdexcept>

#include "tbseg/loss.hpp"

namespace tbseg {

Tape::NodeId Tape::push(Tensor value, std::function<void(Tape&)> backprop) {
  nodes_.push_back(Node{std::move(value), Tensor(), std::move(backprop)});
  return static_cast<NodeId>(nodes_.size() - 1);
}

Tape::Node& Tape::node(NodeId id) {
  if (id < 0 || static_cast<size_t>(id) >= nodes_.size()) {
    throw std::out_of_range("invalid tape node id");
  }
  return nodes_[static_cast<size_t>(id)];
}

const Tape::Node& Tape::node(NodeId id) const {
  if (id < 0 || static_cast<size_t>(id) >= nodes_.size()) {
    throw std::out_of_range("invalid tape node id");
  }
  return nodes_[static_cast<size_t>(id)];
}

Tape::NodeId Tape::input(Tensor value) { return push(std::move(value), {}); }

Tape::NodeId Tape::param(const std::string& name, const Tensor& value) {
  NodeId id = push(value, {});
  param_nodes_.emplace_back(name, id);
  return id;
}

Tape::NodeId Tape::conv2d(NodeId x, NodeId weight, NodeId bias) {
  Tensor out = ops::conv2d_forward(node(x).value, node(weight).value, node(bias).value);
  NodeId id = push(std::move(out), {});
  node(id).backprop = [x, weight, bias, id](Tape& t) {
    Tensor gi, gw, gb;
    ops::conv2d_backward(t.node(x).value, t.node(weight).value, t.node(id).grad, gi, gw, gb);
    for (size_t i = 0; i < gi.size(); ++i) t.node(x).grad[i] += gi[i];
    for (size_t i = 0; i < gw.size(); ++i) t.node(weight).grad[i] += gw[i];
    for (size_t i = 0; i < gb.size(); ++i) t.node(bias).grad[i] += gb[i];
  };
  return id;
}

Tape::NodeId Tape::relu(NodeId x) {
  Tensor out = ops::relu_forward(node(x).value);
  NodeId id = push(std::move(out), {});
  node(id).backprop = [x, id](Tape& t) {
    Tensor gi;
    ops::relu_backward(t.node(x).value, t.node(id).grad, gi);
    for (size_t i = 0; i < gi.size(); ++i) t.node(x).grad[i] += gi[i];
  };
  return id;
}

Tape::NodeId Tape::maxpool2x2(NodeId x) {
  auto argmax = std::make_shared<std::vector<uint32_t>>();
  Tensor out = ops::maxpool2x2_forward(node(x).value, *argmax);
  NodeId id = push(std::move(out), {});
  node(id).backprop = [x, id, argmax](Tape& t) {
    Tensor gi;
    ops::maxpool2x2_backward(*argmax, t.node(id).grad, gi);
    for (size_t i = 0; i < gi.size(); ++i) t.node(x).grad[i] += gi[i];
  };
  return id;
}

Tape::NodeId Tape::upsample_nearest2x(NodeId x) {
  Tensor out = ops::upsample_nearest2x_forward(node(x).value);
  NodeId id = push(std::move(out), {});
  node(id).backprop = [x, id](Tape& t) {
    Tensor gi;
    ops::upsample_nearest2x_backward(t.node(id).grad, gi);
    for (size_t i = 0; i < gi.size(); ++i) t.node(x).grad[i] += gi[i];
  };
  return id;
}

Tape::NodeId Tape::batchnorm(NodeId x, NodeId gamma, NodeId beta, Tensor* running_mean,
                             Tensor* running_var, bool train_mode, float momentum, float eps) {
  auto ctx = std::make_shared<ops::BatchNormContext>();
  Tensor out = ops::batchnorm_forward(node(x).value, node(gamma).value, node(beta).value,
                                      *running_mean, *running_var, train_mode, momentum, eps, *ctx);
  NodeId id = push(std::move(out), {});
  node(id).backprop = [x, gamma, beta, id, ctx](Tape& t) {
    Tensor gi, gg, gb;
    ops::batchnorm_backward(t.node(x).value, t.node(gamma).value, *ctx, t.node(id).grad, gi, gg,
                            gb);
    for (size_t i = 0; i < gi.size(); ++i) t.node(x).grad[i] += gi[i];
    for (size_t i = 0; i < gg.size(); ++i) t.node(gamma).grad[i] += gg[i];
    for (size_t i = 0; i < gb.size(); ++i) t.node(beta).grad[i] += gb[i];
  };
  return id;
}

Tape::NodeId Tape::dropout(NodeId x, float p, Rng& rng, bool active) {
  if (!active || p == 0.0f) return x;
  auto mask = std::make_shared<std::vector<float>>();
  Tensor out = ops::dropout_forward(node(x).value, p, rng, *mask);
  NodeId id = push(std::move(out), {});
  node(id).backprop = [x, id, mask](Tape& t) {
    Tensor gi;
    ops::dropout_backward(*mask, t.node(id).grad, gi);
    for (size_t i = 0; i < gi.size(); ++i) t.node(x).grad[i] += gi[i];
  };
  return id;
}

Tape::NodeId Tape::softmax_channels(NodeId x) {
  Tensor out = ops::softmax_channels_forward(node(x).value);
  NodeId id = push(std::move(out), {});
  node(id).backprop = [x, id](Tape& t) {
    Tensor gi;
    ops::softmax_channels_backward(t.node(id).value, t.node(id).grad, gi);
    for (size_t i = 0; i < gi.size(); ++i) t.node(x).grad[i] += gi[i];
  };
  return id;
}

Tape::NodeId Tape::concat_channels(NodeId a, NodeId b) {
  Tensor out = ops::concat_channels_forward(node(a).value, node(b).value);
  const size_t ca = node(a).value.extent(1);
  NodeId id = push(std::move(out), {});
  node(id).backprop = [a, b, id, ca](Tape& t) {
    Tensor ga, gb;
    ops::concat_channels_backward(ca, t.node(id).grad, ga, gb);
    for (size_t i = 0; i < ga.size(); ++i) t.node(a).grad[i] += ga[i];
    for (size_t i = 0; i < gb.size(); ++i) t.node(b).grad[i] += gb[i];
  };
  return id;
}

Tape::NodeId Tape::ce_dice_loss(NodeId logits, const ByteImage& labels) {
  auto ctx = std::make_shared<CeDiceContext>();
  const float loss = ce_dice_forward(node(logits).value, labels, *ctx);
  NodeId id = push(Tensor({1}, {loss}), {});
  node(id).backprop = [logits, id, ctx](Tape& t) {
    const float upstream = t.node(id).grad[0];
    Tensor gl = ce_dice_backward(*ctx);
    for (size_t i = 0; i < gl.size(); ++i) t.node(logits).grad[i] += upstream * gl[i];
  };
  return id;
}

const Tensor& Tape::value(NodeId id) const { return node(id).value; }

const Tensor& Tape::grad(NodeId id) const {
  if (!backward_done_) throw std::logic_error("grad() before backward()");
  return node(id).grad;
}

void Tape::backward(NodeId root) {
  if (nodes_.empty()) throw std::logic_error("backward() before any forward pass was recorded");
  const Node& r = node(root);
  if (r.value.size() != 1) {
    throw std::invalid_argument("backward root must be scalar, got " + r.value.shape_str());
  }
  for (Node& nd : nodes_) nd.grad = Tensor::zeros_like(nd.value);
  node(root).grad[0] = 1.0f;
  for (NodeId id = root; id >= 0; --id) {
    if (nodes_[static_cast<size_t>(id)].backprop) {
      nodes_[static_cast<size_t>(id)].backprop(*this);
    }
  }
  backward_done_ = true;
  for (const auto& [name, id] : param_nodes_) {
    if (!node(id).grad.all_finite()) {
      throw std::runtime_error("non-finite gradient for parameter " + name);
    }
  }
}

ParamSet Tape::param_grads(const ParamSet& params) const {
  if (!backward_done_) throw std::logic_error("param_grads() before backward()");
  ParamSet grads;
  for (const auto& [name, value] : params) {
    grads.insert(name, Tensor(value.shape()));
  }
  for (const auto& [name, id] : param_nodes_) {
    if (!grads.contains(name)) continue;
    Tensor& dst = grads.at(name);
    const Tensor& src = node(id).grad;
    for (size_t i = 0; i < src.size(); ++i) dst[i] = src[i];
  }
  return grads;
}

}  // namespace tbseg
