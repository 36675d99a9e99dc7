#include "tbseg/loss.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "tbseg/ops.hpp"

namespace tbseg {

float ce_dice_forward(const Tensor& logits, const ByteImage& labels, CeDiceContext& ctx) {
  if (logits.rank() != 4) {
    throw std::invalid_argument("loss expects logits (N,C,H,W), got " + logits.shape_str());
  }
  const size_t n = logits.extent(0), c = logits.extent(1);
  const size_t h = logits.extent(2), w = logits.extent(3);
  if (labels.rank() != 3 || labels.extent(0) != n || labels.extent(1) != h ||
      labels.extent(2) != w) {
    throw std::invalid_argument("label map shape does not match logits");
  }
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= c) {
      throw std::invalid_argument("label value " + std::to_string(labels[i]) +
                                  " out of range [0," + std::to_string(c) + ")");
    }
  }

  ctx.probs = ops::softmax_channels_forward(logits);
  ctx.labels = labels;

  const size_t plane = h * w;
  const size_t nvox = n * plane;

  double ce = 0.0;
  for (size_t in_idx = 0; in_idx < n; ++in_idx) {
    const float* p = ctx.probs.data() + in_idx * c * plane;
    const uint8_t* lab = labels.data() + in_idx * plane;
    for (size_t i = 0; i < plane; ++i) {
      // softmax output is strictly positive, but clamp against underflow
      const float pv = std::max(p[lab[i] * plane + i], 1e-12f);
      ce -= std::log(static_cast<double>(pv));
    }
  }
  ce /= static_cast<double>(nvox);

  const size_t fg = c - 1;
  ctx.inter.assign(fg, 0.0);
  ctx.psum.assign(fg, 0.0);
  ctx.gsum.assign(fg, 0.0);
  for (size_t in_idx = 0; in_idx < n; ++in_idx) {
    const float* p = ctx.probs.data() + in_idx * c * plane;
    const uint8_t* lab = labels.data() + in_idx * plane;
    for (size_t k = 1; k < c; ++k) {
      const float* pk = p + k * plane;
      double inter = 0.0, psum = 0.0, gsum = 0.0;
      for (size_t i = 0; i < plane; ++i) {
        psum += pk[i];
        if (lab[i] == k) {
          inter += pk[i];
          gsum += 1.0;
        }
      }
      ctx.inter[k - 1] += inter;
      ctx.psum[k - 1] += psum;
      ctx.gsum[k - 1] += gsum;
    }
  }
  double dice_sum = 0.0;
  for (size_t k = 0; k < fg; ++k) {
    dice_sum += (2.0 * ctx.inter[k] + kSoftDiceEps) / (ctx.psum[k] + ctx.gsum[k] + kSoftDiceEps);
  }
  ctx.ce = ce;
  ctx.dice_loss = 1.0 - dice_sum / static_cast<double>(fg);

  const float loss = static_cast<float>(ctx.ce + ctx.dice_loss);
  if (!std::isfinite(loss)) throw std::runtime_error("non-finite training loss");
  return loss;
}

Tensor ce_dice_backward(const CeDiceContext& ctx) {
  const size_t n = ctx.probs.extent(0), c = ctx.probs.extent(1);
  const size_t h = ctx.probs.extent(2), w = ctx.probs.extent(3);
  const size_t plane = h * w;
  const size_t nvox = n * plane;
  const size_t fg = c - 1;

  // d(dice term)/d(prob_k), constant pieces per class
  std::vector<double> denom(fg), numer(fg);
  for (size_t k = 0; k < fg; ++k) {
    denom[k] = ctx.psum[k] + ctx.gsum[k] + kSoftDiceEps;
    numer[k] = 2.0 * ctx.inter[k] + kSoftDiceEps;
  }

  Tensor grad({n, c, h, w});
  const double inv_nvox = 1.0 / static_cast<double>(nvox);
  const double inv_fg = 1.0 / static_cast<double>(fg);
  std::vector<double> q(c);
  for (size_t in_idx = 0; in_idx < n; ++in_idx) {
    const float* p = ctx.probs.data() + in_idx * c * plane;
    const uint8_t* lab = ctx.labels.data() + in_idx * plane;
    float* g = grad.data() + in_idx * c * plane;
    for (size_t i = 0; i < plane; ++i) {
      // q_k = d(dice term)/d(prob_k) at this voxel
      double qdotp = 0.0;
      for (size_t k = 0; k < c; ++k) {
        if (k == 0) {
          q[k] = 0.0;
        } else {
          const size_t f = k - 1;
          const double gk = lab[i] == k ? 1.0 : 0.0;
          const double dd = (2.0 * gk * denom[f] - numer[f]) / (denom[f] * denom[f]);
          q[k] = -inv_fg * dd;
        }
        qdotp += q[k] * p[k * plane + i];
      }
      for (size_t k = 0; k < c; ++k) {
        const double pv = p[k * plane + i];
        const double onehot = lab[i] == k ? 1.0 : 0.0;
        const double d_ce = (pv - onehot) * inv_nvox;
        const double d_dice = pv * (q[k] - qdotp);
        g[k * plane + i] = static_cast<float>(d_ce + d_dice);
      }
    }
  }
  return grad;
}

}  // namespace tbseg
