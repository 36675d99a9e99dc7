#pragma once

#include "tbseg/param_set.hpp"

namespace tbseg {

// One SGD-with-momentum step, in place. The frozen update rule per entry:
//
//   g_total = g + weight_decay * w
//   v      <- momentum * v - lr * g_total
//   w      <- w + v                          (plain)
//   w      <- w + momentum * v - lr * g_total (nesterov lookahead)
//
// Batch-norm running statistics (ParamSet::is_bn_buffer) pass through
// untouched; their grads are zero and weight decay must not erode them.
// All three sets must be shape-compatible; lr must be >= 0.
void sgd_momentum_step(ParamSet& params, const ParamSet& grads, ParamSet& velocity, float lr,
                       float momentum, float weight_decay, bool nesterov);

// Zero-filled velocity matching `params`.
ParamSet make_velocity(const ParamSet& params);

}  // namespace tbseg
