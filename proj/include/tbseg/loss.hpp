#pragma once

#include <vector>

#include "tbseg/tensor.hpp"

namespace tbseg {

// Context saved by the combined loss forward pass for the backward pass.
struct CeDiceContext {
  Tensor probs;       // softmax of the logits, (N, C, H, W)
  ByteImage labels;   // (N, H, W)
  double ce = 0.0;          // mean cross-entropy in nats
  double dice_loss = 0.0;   // 1 - mean foreground soft-Dice
  std::vector<double> inter;  // per foreground class, batch-pooled
  std::vector<double> psum;
  std::vector<double> gsum;
};

// Equal-weight cross-entropy + soft-Dice on logits (N, C, H, W) against
// integer labels (N, H, W) in [0, C). Cross-entropy is averaged over all
// voxels; the soft-Dice term pools over the batch and averages the
// foreground classes (1..C-1), smoothed with kSoftDiceEps.
inline constexpr double kSoftDiceEps = 1e-5;

float ce_dice_forward(const Tensor& logits, const ByteImage& labels, CeDiceContext& ctx);

// d(loss)/d(logits) for the recorded forward pass.
Tensor ce_dice_backward(const CeDiceContext& ctx);

}  // namespace tbseg
