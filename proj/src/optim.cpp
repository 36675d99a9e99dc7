#include "tbseg/optim.hpp"

#include <stdexcept>

namespace tbseg {

ParamSet make_velocity(const ParamSet& params) {
  ParamSet v;
  for (const auto& [name, t] : params) v.insert(name, Tensor(t.shape()));
  return v;
}

void sgd_momentum_step(ParamSet& params, const ParamSet& grads, ParamSet& velocity, float lr,
                       float momentum, float weight_decay, bool nesterov) {
  if (lr < 0.0f) throw std::invalid_argument("learning rate must be >= 0");
  if (!params.shape_compatible(grads) || !params.shape_compatible(velocity)) {
    throw std::invalid_argument("sgd step: params, grads and velocity must be shape-compatible");
  }
  auto p_it = params.begin();
  auto g_it = grads.begin();
  auto v_it = velocity.begin();
  for (; p_it != params.end(); ++p_it, ++g_it, ++v_it) {
    if (ParamSet::is_bn_buffer(p_it->first)) continue;
    Tensor& w = p_it->second;
    const Tensor& g = g_it->second;
    Tensor& v = v_it->second;
    for (size_t i = 0; i < w.size(); ++i) {
      const float g_total = g[i] + weight_decay * w[i];
      v[i] = momentum * v[i] - lr * g_total;
      if (nesterov) {
        w[i] += momentum * v[i] - lr * g_total;
      } else {
        w[i] += v[i];
      }
    }
  }
}

}  // namespace tbseg
