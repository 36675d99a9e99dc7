#include "tbseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace tbseg::ops {

namespace {

void require_4d(const Tensor& t, const char* what) {
  if (t.rank() != 4) {
    throw std::invalid_argument(std::string(what) + " must be 4D (N,C,H,W), got " + t.shape_str());
  }
}

struct Dims4 {
  size_t n, c, h, w;
};

Dims4 dims(const Tensor& t) { return {t.extent(0), t.extent(1), t.extent(2), t.extent(3)}; }

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_4d(input, "conv input");
  require_4d(weight, "conv weight");
  const auto [n, cin, h, w] = dims(input);
  const size_t cout = weight.extent(0);
  const size_t k = weight.extent(2);
  if (weight.extent(1) != cin || weight.extent(3) != k || (k != 1 && k != 3)) {
    throw std::invalid_argument("conv weight " + weight.shape_str() + " incompatible with input " +
                                input.shape_str());
  }
  if (bias.rank() != 1 || bias.extent(0) != cout) {
    throw std::invalid_argument("conv bias must have shape (Cout)");
  }
  const long pad = static_cast<long>(k / 2);
  Tensor out({n, cout, h, w});

  const size_t in_plane = h * w;
  const size_t out_plane = h * w;
  for (size_t in_idx = 0; in_idx < n; ++in_idx) {
    for (size_t co = 0; co < cout; ++co) {
      float* out_p = out.data() + (in_idx * cout + co) * out_plane;
      const float bv = bias[co];
      for (size_t i = 0; i < out_plane; ++i) out_p[i] = bv;
      for (size_t ci = 0; ci < cin; ++ci) {
        const float* in_p = input.data() + (in_idx * cin + ci) * in_plane;
        const float* w_p = weight.data() + (co * cin + ci) * k * k;
        for (size_t ky = 0; ky < k; ++ky) {
          for (size_t kx = 0; kx < k; ++kx) {
            const float wv = w_p[ky * k + kx];
            const long dy = static_cast<long>(ky) - pad;
            const long dx = static_cast<long>(kx) - pad;
            const size_t y0 = static_cast<size_t>(std::max<long>(0, -dy));
            const size_t y1 = static_cast<size_t>(
                std::min<long>(static_cast<long>(h), static_cast<long>(h) - dy));
            const size_t x0 = static_cast<size_t>(std::max<long>(0, -dx));
            const size_t x1 = static_cast<size_t>(
                std::min<long>(static_cast<long>(w), static_cast<long>(w) - dx));
            for (size_t y = y0; y < y1; ++y) {
              float* orow = out_p + y * w;
              const float* irow = in_p + (y + dy) * w + dx;
              for (size_t x = x0; x < x1; ++x) orow[x] += wv * irow[x];
            }
          }
        }
      }
    }
  }
  require_finite(out, "conv2d");
  return out;
}

void conv2d_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out,
                     Tensor& grad_input, Tensor& grad_weight, Tensor& grad_bias) {
  const auto [n, cin, h, w] = dims(input);
  const size_t cout = weight.extent(0);
  const size_t k = weight.extent(2);
  const long pad = static_cast<long>(k / 2);
  grad_input = Tensor(input.shape());
  grad_weight = Tensor(weight.shape());
  grad_bias = Tensor({cout});

  const size_t plane = h * w;
  for (size_t in_idx = 0; in_idx < n; ++in_idx) {
    for (size_t co = 0; co < cout; ++co) {
      const float* go_p = grad_out.data() + (in_idx * cout + co) * plane;
      double bsum = 0.0;
      for (size_t i = 0; i < plane; ++i) bsum += go_p[i];
      grad_bias[co] += static_cast<float>(bsum);
      for (size_t ci = 0; ci < cin; ++ci) {
        const float* in_p = input.data() + (in_idx * cin + ci) * plane;
        float* gi_p = grad_input.data() + (in_idx * cin + ci) * plane;
        const float* w_p = weight.data() + (co * cin + ci) * k * k;
        float* gw_p = grad_weight.data() + (co * cin + ci) * k * k;
        for (size_t ky = 0; ky < k; ++ky) {
          for (size_t kx = 0; kx < k; ++kx) {
            const float wv = w_p[ky * k + kx];
            const long dy = static_cast<long>(ky) - pad;
            const long dx = static_cast<long>(kx) - pad;
            const size_t y0 = static_cast<size_t>(std::max<long>(0, -dy));
            const size_t y1 = static_cast<size_t>(
                std::min<long>(static_cast<long>(h), static_cast<long>(h) - dy));
            const size_t x0 = static_cast<size_t>(std::max<long>(0, -dx));
            const size_t x1 = static_cast<size_t>(
                std::min<long>(static_cast<long>(w), static_cast<long>(w) - dx));
            float wsum = 0.0f;
            for (size_t y = y0; y < y1; ++y) {
              const float* gorow = go_p + y * w;
              const float* irow = in_p + (y + dy) * w + dx;
              float* girow = gi_p + (y + dy) * w + dx;
              float acc = 0.0f;
              for (size_t x = x0; x < x1; ++x) {
                acc += gorow[x] * irow[x];
                girow[x] += wv * gorow[x];
              }
              wsum += acc;
            }
            gw_p[ky * k + kx] += wsum;
          }
        }
      }
    }
  }
}

Tensor relu_forward(const Tensor& input) {
  Tensor out(input.shape());
  const float* in_p = input.data();
  float* out_p = out.data();
  for (size_t i = 0; i < input.size(); ++i) out_p[i] = in_p[i] > 0.0f ? in_p[i] : 0.0f;
  require_finite(out, "relu");
  return out;
}

void relu_backward(const Tensor& input, const Tensor& grad_out, Tensor& grad_input) {
  grad_input = Tensor(input.shape());
  const float* in_p = input.data();
  const float* go_p = grad_out.data();
  float* gi_p = grad_input.data();
  for (size_t i = 0; i < input.size(); ++i) gi_p[i] = in_p[i] > 0.0f ? go_p[i] : 0.0f;
}

Tensor maxpool2x2_forward(const Tensor& input, std::vector<uint32_t>& argmax) {
  require_4d(input, "maxpool input");
  const auto [n, c, h, w] = dims(input);
  if (h % 2 != 0 || w % 2 != 0) {
    throw std::invalid_argument("maxpool2x2 needs even spatial extents, got " + input.shape_str());
  }
  const size_t ho = h / 2, wo = w / 2;
  Tensor out({n, c, ho, wo});
  argmax.assign(out.size(), 0);
  const size_t planes = n * c;
  for (size_t p = 0; p < planes; ++p) {
    const float* in_p = input.data() + p * h * w;
    float* out_p = out.data() + p * ho * wo;
    uint32_t* am_p = argmax.data() + p * ho * wo;
    for (size_t y = 0; y < ho; ++y) {
      for (size_t x = 0; x < wo; ++x) {
        const size_t base = (2 * y) * w + 2 * x;
        const size_t cand[4] = {base, base + 1, base + w, base + w + 1};
        size_t best = cand[0];
        float bv = in_p[cand[0]];
        for (int j = 1; j < 4; ++j) {
          if (in_p[cand[j]] > bv) {
            bv = in_p[cand[j]];
            best = cand[j];
          }
        }
        out_p[y * wo + x] = bv;
        am_p[y * wo + x] = static_cast<uint32_t>(best);
      }
    }
  }
  require_finite(out, "maxpool2x2");
  return out;
}

void maxpool2x2_backward(const std::vector<uint32_t>& argmax, const Tensor& grad_out,
                         Tensor& grad_input) {
  const auto [n, c, ho, wo] = dims(grad_out);
  grad_input = Tensor({n, c, ho * 2, wo * 2});
  const size_t planes = n * c;
  const size_t out_plane = ho * wo;
  const size_t in_plane = out_plane * 4;
  for (size_t p = 0; p < planes; ++p) {
    const float* go_p = grad_out.data() + p * out_plane;
    const uint32_t* am_p = argmax.data() + p * out_plane;
    float* gi_p = grad_input.data() + p * in_plane;
    for (size_t i = 0; i < out_plane; ++i) gi_p[am_p[i]] += go_p[i];
  }
}

Tensor upsample_nearest2x_forward(const Tensor& input) {
  require_4d(input, "upsample input");
  const auto [n, c, h, w] = dims(input);
  Tensor out({n, c, h * 2, w * 2});
  const size_t planes = n * c;
  for (size_t p = 0; p < planes; ++p) {
    const float* in_p = input.data() + p * h * w;
    float* out_p = out.data() + p * h * w * 4;
    for (size_t y = 0; y < h; ++y) {
      float* r0 = out_p + (2 * y) * (2 * w);
      float* r1 = r0 + 2 * w;
      const float* irow = in_p + y * w;
      for (size_t x = 0; x < w; ++x) {
        const float v = irow[x];
        r0[2 * x] = v;
        r0[2 * x + 1] = v;
        r1[2 * x] = v;
        r1[2 * x + 1] = v;
      }
    }
  }
  return out;
}

void upsample_nearest2x_backward(const Tensor& grad_out, Tensor& grad_input) {
  const auto [n, c, ho, wo] = dims(grad_out);
  const size_t h = ho / 2, w = wo / 2;
  grad_input = Tensor({n, c, h, w});
  const size_t planes = n * c;
  for (size_t p = 0; p < planes; ++p) {
    const float* go_p = grad_out.data() + p * ho * wo;
    float* gi_p = grad_input.data() + p * h * w;
    for (size_t y = 0; y < h; ++y) {
      const float* r0 = go_p + (2 * y) * wo;
      const float* r1 = r0 + wo;
      float* grow = gi_p + y * w;
      for (size_t x = 0; x < w; ++x) {
        grow[x] = (r0[2 * x] + r0[2 * x + 1]) + (r1[2 * x] + r1[2 * x + 1]);
      }
    }
  }
}

Tensor batchnorm_forward(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                         Tensor& running_mean, Tensor& running_var, bool train_mode,
                         float momentum, float eps, BatchNormContext& ctx) {
  require_4d(input, "batchnorm input");
  const auto [n, c, h, w] = dims(input);
  if (gamma.size() != c || beta.size() != c || running_mean.size() != c ||
      running_var.size() != c) {
    throw std::invalid_argument("batchnorm parameter extents do not match channel count");
  }
  Tensor out(input.shape());
  ctx.mean.assign(c, 0.0f);
  ctx.inv_std.assign(c, 0.0f);
  ctx.train_mode = train_mode;
  const size_t plane = h * w;
  const size_t m = n * plane;  // reduction count per channel

  for (size_t ch = 0; ch < c; ++ch) {
    float mean, inv_std;
    if (train_mode) {
      double sum = 0.0;
      for (size_t in_idx = 0; in_idx < n; ++in_idx) {
        const float* p = input.data() + (in_idx * c + ch) * plane;
        for (size_t i = 0; i < plane; ++i) sum += p[i];
      }
      mean = static_cast<float>(sum / static_cast<double>(m));
      double sq = 0.0;
      for (size_t in_idx = 0; in_idx < n; ++in_idx) {
        const float* p = input.data() + (in_idx * c + ch) * plane;
        for (size_t i = 0; i < plane; ++i) {
          const double d = static_cast<double>(p[i]) - mean;
          sq += d * d;
        }
      }
      const double var_biased = sq / static_cast<double>(m);
      inv_std = static_cast<float>(1.0 / std::sqrt(var_biased + eps));
      if (momentum > 0.0f) {
        const double var_unbiased = m > 1 ? sq / static_cast<double>(m - 1) : var_biased;
        running_mean[ch] = (1.0f - momentum) * running_mean[ch] + momentum * mean;
        const float rv =
            (1.0f - momentum) * running_var[ch] + momentum * static_cast<float>(var_unbiased);
        running_var[ch] = std::max(rv, eps);
      }
    } else {
      mean = running_mean[ch];
      inv_std = 1.0f / std::sqrt(running_var[ch] + eps);
    }
    ctx.mean[ch] = mean;
    ctx.inv_std[ch] = inv_std;
    const float g = gamma[ch], b = beta[ch];
    for (size_t in_idx = 0; in_idx < n; ++in_idx) {
      const float* p = input.data() + (in_idx * c + ch) * plane;
      float* o = out.data() + (in_idx * c + ch) * plane;
      for (size_t i = 0; i < plane; ++i) o[i] = g * (p[i] - mean) * inv_std + b;
    }
  }
  require_finite(out, "batchnorm");
  return out;
}

void batchnorm_backward(const Tensor& input, const Tensor& gamma, const BatchNormContext& ctx,
                        const Tensor& grad_out, Tensor& grad_input, Tensor& grad_gamma,
                        Tensor& grad_beta) {
  const auto [n, c, h, w] = dims(input);
  grad_input = Tensor(input.shape());
  grad_gamma = Tensor({c});
  grad_beta = Tensor({c});
  const size_t plane = h * w;
  const double m = static_cast<double>(n * plane);

  for (size_t ch = 0; ch < c; ++ch) {
    const float mean = ctx.mean[ch];
    const float inv_std = ctx.inv_std[ch];
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (size_t in_idx = 0; in_idx < n; ++in_idx) {
      const float* x = input.data() + (in_idx * c + ch) * plane;
      const float* dy = grad_out.data() + (in_idx * c + ch) * plane;
      for (size_t i = 0; i < plane; ++i) {
        const float xhat = (x[i] - mean) * inv_std;
        sum_dy += dy[i];
        sum_dy_xhat += static_cast<double>(dy[i]) * xhat;
      }
    }
    grad_beta[ch] = static_cast<float>(sum_dy);
    grad_gamma[ch] = static_cast<float>(sum_dy_xhat);
    const float g = gamma[ch];
    if (ctx.train_mode) {
      const float mean_dy = static_cast<float>(sum_dy / m);
      const float mean_dy_xhat = static_cast<float>(sum_dy_xhat / m);
      for (size_t in_idx = 0; in_idx < n; ++in_idx) {
        const float* x = input.data() + (in_idx * c + ch) * plane;
        const float* dy = grad_out.data() + (in_idx * c + ch) * plane;
        float* dx = grad_input.data() + (in_idx * c + ch) * plane;
        for (size_t i = 0; i < plane; ++i) {
          const float xhat = (x[i] - mean) * inv_std;
          dx[i] = g * inv_std * (dy[i] - mean_dy - xhat * mean_dy_xhat);
        }
      }
    } else {
      // Eval mode is an affine map; statistics do not depend on the batch.
      const float scale = g * inv_std;
      for (size_t in_idx = 0; in_idx < n; ++in_idx) {
        const float* dy = grad_out.data() + (in_idx * c + ch) * plane;
        float* dx = grad_input.data() + (in_idx * c + ch) * plane;
        for (size_t i = 0; i < plane; ++i) dx[i] = scale * dy[i];
      }
    }
  }
}

Tensor dropout_forward(const Tensor& input, float p, Rng& rng, std::vector<float>& mask) {
  if (p < 0.0f || p >= 1.0f) {
    throw std::invalid_argument("dropout probability must be in [0,1), got " + std::to_string(p));
  }
  if (p == 0.0f) {
    mask.clear();  // identity; no randomness consumed
    return input;
  }
  Tensor out(input.shape());
  mask.assign(input.size(), 0.0f);
  const float keep_scale = 1.0f / (1.0f - p);
  const float* in_p = input.data();
  float* out_p = out.data();
  for (size_t i = 0; i < input.size(); ++i) {
    const float m = rng.uniform() >= p ? keep_scale : 0.0f;
    mask[i] = m;
    out_p[i] = in_p[i] * m;
  }
  require_finite(out, "dropout");
  return out;
}

void dropout_backward(const std::vector<float>& mask, const Tensor& grad_out, Tensor& grad_input) {
  grad_input = Tensor(grad_out.shape());
  const float* go_p = grad_out.data();
  float* gi_p = grad_input.data();
  if (mask.empty()) {  // p == 0 identity
    std::memcpy(gi_p, go_p, grad_out.size() * sizeof(float));
    return;
  }
  for (size_t i = 0; i < grad_out.size(); ++i) gi_p[i] = go_p[i] * mask[i];
}

Tensor softmax_channels_forward(const Tensor& input) {
  require_4d(input, "softmax input");
  const auto [n, c, h, w] = dims(input);
  Tensor out(input.shape());
  const size_t plane = h * w;
  for (size_t in_idx = 0; in_idx < n; ++in_idx) {
    const float* base_in = input.data() + in_idx * c * plane;
    float* base_out = out.data() + in_idx * c * plane;
    for (size_t i = 0; i < plane; ++i) {
      float mx = base_in[i];
      for (size_t ch = 1; ch < c; ++ch) mx = std::max(mx, base_in[ch * plane + i]);
      float denom = 0.0f;
      for (size_t ch = 0; ch < c; ++ch) {
        const float e = std::exp(base_in[ch * plane + i] - mx);
        base_out[ch * plane + i] = e;
        denom += e;
      }
      const float inv = 1.0f / denom;
      for (size_t ch = 0; ch < c; ++ch) base_out[ch * plane + i] *= inv;
    }
  }
  require_finite(out, "softmax");
  return out;
}

void softmax_channels_backward(const Tensor& output, const Tensor& grad_out, Tensor& grad_input) {
  const auto [n, c, h, w] = dims(output);
  grad_input = Tensor(output.shape());
  const size_t plane = h * w;
  for (size_t in_idx = 0; in_idx < n; ++in_idx) {
    const float* p = output.data() + in_idx * c * plane;
    const float* dy = grad_out.data() + in_idx * c * plane;
    float* dx = grad_input.data() + in_idx * c * plane;
    for (size_t i = 0; i < plane; ++i) {
      float dot = 0.0f;
      for (size_t ch = 0; ch < c; ++ch) dot += dy[ch * plane + i] * p[ch * plane + i];
      for (size_t ch = 0; ch < c; ++ch) {
        dx[ch * plane + i] = p[ch * plane + i] * (dy[ch * plane + i] - dot);
      }
    }
  }
}

Tensor concat_channels_forward(const Tensor& a, const Tensor& b) {
  require_4d(a, "concat input");
  require_4d(b, "concat input");
  const auto [na, ca, ha, wa] = dims(a);
  const auto [nb, cb, hb, wb] = dims(b);
  if (na != nb || ha != hb || wa != wb) {
    throw std::invalid_argument("concat inputs differ outside the channel dim: " + a.shape_str() +
                                " vs " + b.shape_str());
  }
  Tensor out({na, ca + cb, ha, wa});
  const size_t plane = ha * wa;
  for (size_t in_idx = 0; in_idx < na; ++in_idx) {
    std::memcpy(out.data() + in_idx * (ca + cb) * plane, a.data() + in_idx * ca * plane,
                ca * plane * sizeof(float));
    std::memcpy(out.data() + (in_idx * (ca + cb) + ca) * plane, b.data() + in_idx * cb * plane,
                cb * plane * sizeof(float));
  }
  return out;
}

void concat_channels_backward(size_t channels_a, const Tensor& grad_out, Tensor& grad_a,
                              Tensor& grad_b) {
  const auto [n, c, h, w] = dims(grad_out);
  const size_t cb = c - channels_a;
  grad_a = Tensor({n, channels_a, h, w});
  grad_b = Tensor({n, cb, h, w});
  const size_t plane = h * w;
  for (size_t in_idx = 0; in_idx < n; ++in_idx) {
    std::memcpy(grad_a.data() + in_idx * channels_a * plane, grad_out.data() + in_idx * c * plane,
                channels_a * plane * sizeof(float));
    std::memcpy(grad_b.data() + in_idx * cb * plane,
                grad_out.data() + (in_idx * c + channels_a) * plane, cb * plane * sizeof(float));
  }
}

}  // namespace tbseg::ops
